#include "permkron/report.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <sstream>

namespace permkron {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    out = v;
    return true;
}

bool parse_f64(const std::string& s, double& out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end != s.c_str() + s.size()) return false;
    out = v;
    return true;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace

Result<std::string> report_to_csv(const RunReport& report) {
    std::ostringstream os;
    os << kReportCsvHeader << '\n';
    for (const ReportRecord& r : report.records) {
        if (r.tensor.find_first_of(",\r\n") != std::string::npos)
            return make_error(ErrorKind::validation, "tensor name '" + r.tensor + "' cannot appear in CSV");
        os << r.tensor << ',' << r.m << ',' << r.n << ',' << r.m1 << ',' << r.n1 << ',' << r.m2 << ','
           << r.n2 << ',' << r.rank << ',' << (r.perm ? 1 : 0) << ',' << fmt_double(r.abs_residual) << ','
           << fmt_double(r.rel_residual) << ',' << r.params_before << ',' << r.params_after << ','
           << r.iters << ',' << fmt_double(r.seconds) << '\n';
    }
    return os.str();
}

Result<RunReport> report_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) return make_error(ErrorKind::format, "empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kReportCsvHeader) return make_error(ErrorKind::format, "unexpected CSV header: " + line);

    RunReport report;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split(line, ',');
        if (cells.size() != 15)
            return make_error(ErrorKind::format,
                              "CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                  " fields, expected 15");
        ReportRecord r;
        r.tensor = cells[0];
        std::uint64_t m, n, m1, n1, m2, n2, rank, perm, pb, pa, iters;
        if (!parse_u64(cells[1], m) || !parse_u64(cells[2], n) || !parse_u64(cells[3], m1) ||
            !parse_u64(cells[4], n1) || !parse_u64(cells[5], m2) || !parse_u64(cells[6], n2) ||
            !parse_u64(cells[7], rank) || !parse_u64(cells[8], perm) || !parse_u64(cells[11], pb) ||
            !parse_u64(cells[12], pa) || !parse_u64(cells[13], iters) ||
            !parse_f64(cells[9], r.abs_residual) || !parse_f64(cells[10], r.rel_residual) ||
            !parse_f64(cells[14], r.seconds) || perm > 1)
            return make_error(ErrorKind::format, "CSV line " + std::to_string(lineno) + " does not parse");
        r.m = m;
        r.n = n;
        r.m1 = m1;
        r.n1 = n1;
        r.m2 = m2;
        r.n2 = n2;
        r.rank = rank;
        r.perm = perm == 1;
        r.params_before = pb;
        r.params_after = pa;
        r.iters = iters;
        report.records.push_back(std::move(r));
    }
    return report;
}

namespace {

TensorEntry perm_to_entry(std::string name, const PermutationVec& p) {
    TensorEntry e;
    e.name = std::move(name);
    e.dtype = DType::f64;
    e.dims = {p.size()};
    e.data.reserve(p.size());
    for (std::size_t v : p.map) e.data.push_back(static_cast<double>(v));
    return e;
}

Result<PermutationVec> entry_to_perm(const TensorEntry& e, std::size_t expected_len) {
    if (e.dims.size() != 1)
        return make_error(ErrorKind::validation, "tensor '" + e.name + "' is not a vector");
    if (e.data.size() != expected_len)
        return make_error(ErrorKind::validation, "permutation '" + e.name + "' has length " +
                                                     std::to_string(e.data.size()) + ", expected " +
                                                     std::to_string(expected_len));
    PermutationVec p;
    p.map.resize(expected_len);
    std::vector<bool> seen(expected_len, false);
    for (std::size_t i = 0; i < expected_len; ++i) {
        const double v = e.data[i];
        const std::size_t idx = static_cast<std::size_t>(v);
        if (v < 0.0 || v != static_cast<double>(idx) || idx >= expected_len || seen[idx])
            return make_error(ErrorKind::validation, "permutation '" + e.name + "' is not a valid permutation");
        seen[idx] = true;
        p.map[i] = idx;
    }
    return p;
}

}  // namespace

Result<void> append_decomposition(NamedTensorFile& file, const std::string& tensor,
                                  const PermutedKronDecomposition& d) {
    for (std::size_t i = 0; i < d.factors.terms.size(); ++i) {
        const KronFactorPair& term = d.factors.terms[i];
        auto a = file.add(matrix_to_entry(tensor + ".A." + std::to_string(i), term.a));
        if (!a) return a.error();
        auto b = file.add(matrix_to_entry(tensor + ".B." + std::to_string(i), term.b));
        if (!b) return b.error();
    }
    if (d.use_permutations) {
        auto p = file.add(perm_to_entry(tensor + ".P", d.p));
        if (!p) return p.error();
        auto c = file.add(perm_to_entry(tensor + ".C", d.c));
        if (!c) return c.error();
    }
    return {};
}

Result<PermutedKronDecomposition> extract_decomposition(const NamedTensorFile& file, const std::string& tensor) {
    PermutedKronDecomposition d;
    for (std::size_t i = 0;; ++i) {
        const TensorEntry* ea = file.find(tensor + ".A." + std::to_string(i));
        const TensorEntry* eb = file.find(tensor + ".B." + std::to_string(i));
        if (!ea && !eb) break;
        if (!ea || !eb)
            return make_error(ErrorKind::validation,
                              "tensor '" + tensor + "' term " + std::to_string(i) + " misses its A or B half");
        auto a = entry_to_matrix(*ea);
        if (!a) return a.error();
        auto b = entry_to_matrix(*eb);
        if (!b) return b.error();
        if (!d.factors.terms.empty()) {
            const KronFactorPair& first = d.factors.terms.front();
            if (a.value().rows != first.a.rows || a.value().cols != first.a.cols ||
                b.value().rows != first.b.rows || b.value().cols != first.b.cols)
                return make_error(ErrorKind::validation,
                                  "tensor '" + tensor + "' has inconsistent factor shapes");
        }
        d.factors.terms.push_back({std::move(a.value()), std::move(b.value())});
    }
    if (d.factors.terms.empty())
        return make_error(ErrorKind::reference, "no factors found for tensor '" + tensor + "'");

    const KronFactorPair& first = d.factors.terms.front();
    d.factors.shape = KronShape{first.a.rows, first.a.cols, first.b.rows, first.b.cols};
    d.m = d.factors.shape.rows();
    d.n = d.factors.shape.cols();

    const TensorEntry* ep = file.find(tensor + ".P");
    const TensorEntry* ec = file.find(tensor + ".C");
    if (static_cast<bool>(ep) != static_cast<bool>(ec))
        return make_error(ErrorKind::validation, "tensor '" + tensor + "' has only one of .P and .C");
    if (ep) {
        auto p = entry_to_perm(*ep, d.m);
        if (!p) return p.error();
        auto c = entry_to_perm(*ec, d.n);
        if (!c) return c.error();
        d.p = std::move(p.value());
        d.c = std::move(c.value());
        d.use_permutations = true;
    } else {
        d.p = PermutationVec::identity(d.m);
        d.c = PermutationVec::identity(d.n);
        d.use_permutations = false;
    }
    return d;
}

std::vector<std::string> decomposition_names(const NamedTensorFile& file) {
    std::vector<std::string> names;
    const std::string marker = ".A.0";
    for (const TensorEntry& e : file.entries) {
        if (e.name.size() <= marker.size()) continue;
        if (e.name.compare(e.name.size() - marker.size(), marker.size(), marker) != 0) continue;
        names.push_back(e.name.substr(0, e.name.size() - marker.size()));
    }
    return names;
}

std::string format_sidecar(const std::vector<ReportRecord>& records) {
    std::ostringstream os;
    os << "# decomposition metadata; also parses as a plan for the original file\n";
    for (const ReportRecord& r : records) {
        os << "tensor=" << r.tensor << " a=" << r.m1 << 'x' << r.n1 << " b=" << r.m2 << 'x' << r.n2
           << " rank=" << r.rank << " perm=" << (r.perm ? "on" : "off") << " iters=" << r.iters
           << " m=" << r.m << " n=" << r.n << " abs_residual=" << fmt_double(r.abs_residual)
           << " rel_residual=" << fmt_double(r.rel_residual) << " seconds=" << fmt_double(r.seconds) << '\n';
    }
    return os.str();
}

Result<std::vector<ReportRecord>> parse_sidecar(const std::string& text) {
    std::vector<ReportRecord> records;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string token;
        ReportRecord r;
        bool any = false;
        while (ls >> token) {
            const std::size_t eq = token.find('=');
            if (eq == std::string::npos)
                return make_error(ErrorKind::format,
                                  "sidecar line " + std::to_string(lineno) + ": token '" + token +
                                      "' is not key=value");
            const std::string key = token.substr(0, eq);
            const std::string val = token.substr(eq + 1);
            any = true;
            bool ok = true;
            std::uint64_t u = 0;
            if (key == "tensor") {
                r.tensor = val;
            } else if (key == "a" || key == "b") {
                const std::size_t x = val.find('x');
                std::uint64_t r1 = 0, c1 = 0;
                ok = x != std::string::npos && parse_u64(val.substr(0, x), r1) &&
                     parse_u64(val.substr(x + 1), c1);
                if (ok && key == "a") {
                    r.m1 = r1;
                    r.n1 = c1;
                } else if (ok) {
                    r.m2 = r1;
                    r.n2 = c1;
                }
            } else if (key == "rank") {
                ok = parse_u64(val, u);
                r.rank = u;
            } else if (key == "perm") {
                ok = val == "on" || val == "off";
                r.perm = val == "on";
            } else if (key == "iters") {
                ok = parse_u64(val, u);
                r.iters = u;
            } else if (key == "m") {
                ok = parse_u64(val, u);
                r.m = u;
            } else if (key == "n") {
                ok = parse_u64(val, u);
                r.n = u;
            } else if (key == "abs_residual") {
                ok = parse_f64(val, r.abs_residual);
            } else if (key == "rel_residual") {
                ok = parse_f64(val, r.rel_residual);
            } else if (key == "seconds") {
                ok = parse_f64(val, r.seconds);
            }
            // Unknown keys are skipped, mirroring the plan parser.
            if (!ok)
                return make_error(ErrorKind::format, "sidecar line " + std::to_string(lineno) +
                                                         ": bad value for key '" + key + "'");
        }
        if (!any) continue;
        if (r.tensor.empty())
            return make_error(ErrorKind::format,
                              "sidecar line " + std::to_string(lineno) + " misses the tensor key");
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace permkron
