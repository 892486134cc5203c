#include "permkron/tensor_store.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace permkron {

namespace {

constexpr char kMagic[4] = {'P', 'K', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

// All on-disk integers are little-endian. Serialization goes through
// byte-by-byte shifts so the writer is endian-agnostic.
template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
bool get_le(const std::string& in, std::size_t& pos, T& v) {
    if (pos + sizeof(T) > in.size()) return false;
    v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    return true;
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_le(out, bits);
}

void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_le(out, bits);
}

}  // namespace

std::uint64_t TensorEntry::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return n;
}

const TensorEntry* NamedTensorFile::find(const std::string& name) const {
    for (const TensorEntry& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

Result<void> NamedTensorFile::add(TensorEntry entry) {
    if (find(entry.name) != nullptr)
        return make_error(ErrorKind::validation, "duplicate tensor name: " + entry.name);
    entries.push_back(std::move(entry));
    return {};
}

Result<NamedTensorFile> load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error(ErrorKind::io, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();

    std::size_t pos = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        return make_error(ErrorKind::format, "bad magic in " + path);
    pos = 4;
    std::uint32_t version = 0;
    if (!get_le(bytes, pos, version)) return make_error(ErrorKind::format, "truncated header in " + path);
    if (version != kVersion)
        return make_error(ErrorKind::format, "unsupported version " + std::to_string(version) + " in " + path);
    std::uint64_t count = 0;
    if (!get_le(bytes, pos, count)) return make_error(ErrorKind::format, "truncated header in " + path);

    NamedTensorFile file;
    std::set<std::string> names;
    for (std::uint64_t t = 0; t < count; ++t) {
        TensorEntry e;
        std::uint32_t name_len = 0;
        if (!get_le(bytes, pos, name_len)) return make_error(ErrorKind::corruption, "truncated tensor header");
        if (pos + name_len > bytes.size()) return make_error(ErrorKind::corruption, "truncated tensor name");
        e.name.assign(bytes, pos, name_len);
        pos += name_len;
        if (!names.insert(e.name).second)
            return make_error(ErrorKind::validation, "duplicate tensor name: " + e.name);

        std::uint8_t dtype = 0, ndim = 0;
        if (!get_le(bytes, pos, dtype) || !get_le(bytes, pos, ndim))
            return make_error(ErrorKind::corruption, "truncated tensor header for " + e.name);
        if (dtype != 1 && dtype != 2)
            return make_error(ErrorKind::format, "unknown dtype code " + std::to_string(dtype) + " for " + e.name);
        e.dtype = static_cast<DType>(dtype);

        std::uint64_t elems = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            std::uint64_t dim = 0;
            if (!get_le(bytes, pos, dim)) return make_error(ErrorKind::corruption, "truncated dims for " + e.name);
            if (dim == 0) return make_error(ErrorKind::validation, "zero dimension in " + e.name);
            e.dims.push_back(dim);
            elems *= dim;
        }

        const std::size_t width = e.dtype == DType::f32 ? 4 : 8;
        if (pos + elems * width > bytes.size())
            return make_error(ErrorKind::corruption, "truncated payload for " + e.name);
        e.data.resize(elems);
        for (std::uint64_t i = 0; i < elems; ++i) {
            if (e.dtype == DType::f32) {
                std::uint32_t bits = 0;
                get_le(bytes, pos, bits);
                float f;
                std::memcpy(&f, &bits, 4);
                e.data[i] = static_cast<double>(f);
            } else {
                std::uint64_t bits = 0;
                get_le(bytes, pos, bits);
                std::memcpy(&e.data[i], &bits, 8);
            }
        }
        file.entries.push_back(std::move(e));
    }
    if (pos != bytes.size()) return make_error(ErrorKind::corruption, "trailing bytes in " + path);
    return file;
}

Result<void> save_tensors(const NamedTensorFile& tensors, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_le(out, kVersion);
    put_le(out, static_cast<std::uint64_t>(tensors.entries.size()));
    for (const TensorEntry& e : tensors.entries) {
        put_le(out, static_cast<std::uint32_t>(e.name.size()));
        out.append(e.name);
        put_le(out, static_cast<std::uint8_t>(e.dtype));
        put_le(out, static_cast<std::uint8_t>(e.dims.size()));
        for (std::uint64_t d : e.dims) put_le(out, d);
        for (double v : e.data) {
            if (e.dtype == DType::f32)
                put_f32(out, static_cast<float>(v));
            else
                put_f64(out, v);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) return make_error(ErrorKind::io, "cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) return make_error(ErrorKind::io, "write failed for " + path);
    return {};
}

TensorEntry matrix_to_entry(std::string name, const DenseMatrix& m, DType dtype) {
    TensorEntry e;
    e.name = std::move(name);
    e.dtype = dtype;
    e.dims = {m.rows, m.cols};
    e.data = m.data;
    return e;
}

Result<DenseMatrix> entry_to_matrix(const TensorEntry& e) {
    if (e.dims.size() != 2)
        return make_error(ErrorKind::shape, "tensor " + e.name + " is not 2-D");
    DenseMatrix m(static_cast<std::size_t>(e.dims[0]), static_cast<std::size_t>(e.dims[1]));
    m.data = e.data;
    if (!all_finite(m))
        return make_error(ErrorKind::numerical, "tensor " + e.name + " has non-finite entries");
    return m;
}

TensorManifest manifest_of(const NamedTensorFile& tensors) {
    TensorManifest m;
    for (const TensorEntry& e : tensors.entries)
        if (e.dims.size() == 2)
            m[e.name] = {static_cast<std::size_t>(e.dims[0]), static_cast<std::size_t>(e.dims[1])};
    return m;
}

namespace {

bool parse_size(const std::string& s, std::size_t& out) {
    if (s.empty()) return false;
    std::size_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    out = v;
    return true;
}

bool parse_pair(const std::string& s, std::size_t& a, std::size_t& b) {
    const std::size_t x = s.find('x');
    if (x == std::string::npos) return false;
    return parse_size(s.substr(0, x), a) && parse_size(s.substr(x + 1), b);
}

}  // namespace

Result<CompressionPlan> parse_plan(const std::string& text, const TensorManifest& manifest) {
    CompressionPlan plan;
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string field;
        PlanEntry e;
        bool have_tensor = false, have_a = false, have_b = false;
        while (fields >> field) {
            const std::size_t eq = field.find('=');
            if (eq == std::string::npos)
                return make_error(ErrorKind::validation,
                                  "plan line " + std::to_string(lineno) + ": expected key=value, got '" + field + "'");
            const std::string key = field.substr(0, eq);
            const std::string val = field.substr(eq + 1);
            if (key == "tensor") {
                e.tensor = val;
                have_tensor = true;
            } else if (key == "a") {
                if (!parse_pair(val, e.m1, e.n1))
                    return make_error(ErrorKind::validation,
                                      "plan line " + std::to_string(lineno) + ": bad a=<m1>x<n1>");
                have_a = true;
            } else if (key == "b") {
                if (!parse_pair(val, e.m2, e.n2))
                    return make_error(ErrorKind::validation,
                                      "plan line " + std::to_string(lineno) + ": bad b=<m2>x<n2>");
                have_b = true;
            } else if (key == "rank") {
                if (!parse_size(val, e.rank) || e.rank == 0)
                    return make_error(ErrorKind::validation, "plan line " + std::to_string(lineno) + ": bad rank");
            } else if (key == "perm") {
                if (val == "on")
                    e.use_permutations = true;
                else if (val == "off")
                    e.use_permutations = false;
                else
                    return make_error(ErrorKind::validation,
                                      "plan line " + std::to_string(lineno) + ": perm must be on|off");
            } else if (key == "iters") {
                if (!parse_size(val, e.max_alt_iters) || e.max_alt_iters == 0)
                    return make_error(ErrorKind::validation, "plan line " + std::to_string(lineno) + ": bad iters");
            }
            // Unknown keys are sidecar metadata; skip.
        }
        if (!have_tensor && !have_a && !have_b) continue;  // blank or comment-only line
        if (!have_tensor || !have_a || !have_b)
            return make_error(ErrorKind::validation,
                              "plan line " + std::to_string(lineno) + ": tensor=, a=, b= are required");

        const auto it = manifest.find(e.tensor);
        if (it == manifest.end())
            return make_error(ErrorKind::reference, "plan references unknown tensor '" + e.tensor + "'");
        const auto [rows, cols] = it->second;
        if (e.m1 * e.m2 != rows)
            return make_error(ErrorKind::shape, "tensor '" + e.tensor + "': m1*m2 = " + std::to_string(e.m1 * e.m2) +
                                                    " but tensor has " + std::to_string(rows) + " rows");
        if (e.n1 * e.n2 != cols)
            return make_error(ErrorKind::shape, "tensor '" + e.tensor + "': n1*n2 = " + std::to_string(e.n1 * e.n2) +
                                                    " but tensor has " + std::to_string(cols) + " cols");
        const std::size_t max_rank = std::min(e.m1 * e.n1, e.m2 * e.n2);
        if (e.rank > max_rank)
            return make_error(ErrorKind::validation, "tensor '" + e.tensor + "': rank " + std::to_string(e.rank) +
                                                         " exceeds min(m1*n1, m2*n2) = " + std::to_string(max_rank));
        plan.entries.push_back(std::move(e));
    }
    return plan;
}

std::string format_plan_entry(const PlanEntry& e) {
    std::ostringstream out;
    out << "tensor=" << e.tensor << " a=" << e.m1 << 'x' << e.n1 << " b=" << e.m2 << 'x' << e.n2
        << " rank=" << e.rank << " perm=" << (e.use_permutations ? "on" : "off") << " iters=" << e.max_alt_iters;
    return out.str();
}

}  // namespace permkron
