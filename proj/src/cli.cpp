#include "permkron/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "permkron/distill.hpp"
#include "permkron/optimizer.hpp"
#include "permkron/report.hpp"
#include "permkron/tensor_store.hpp"

namespace permkron::cli {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Result<std::string> read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error(ErrorKind::io, "cannot open '" + path + "' for reading");
    std::ostringstream os;
    os << in.rdbuf();
    if (in.bad()) return make_error(ErrorKind::io, "read failed for '" + path + "'");
    return os.str();
}

Result<void> write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) return make_error(ErrorKind::io, "cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out) return make_error(ErrorKind::io, "write failed for '" + path + "'");
    return {};
}

// Decomposition work shared by decompose and bench-perm. jobs workers pull
// plan indices from a counter; per-index seeds keep the result independent of
// the worker count.
template <typename Fn>
Result<void> parallel_for(std::size_t count, std::size_t jobs, const Fn& body) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            auto r = body(i);
            if (!r) return r;
        }
        return {};
    }
    std::vector<Result<void>> results(count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                results[i] = body(i);
            }
        });
    for (std::thread& t : pool) t.join();
    for (Result<void>& r : results)
        if (!r) return r;
    return {};
}

struct DecomposeArgs {
    std::string input;
    std::string output;
    std::string plan_path;
    std::string csv_path;
    std::uint64_t seed = 0;
    bool no_perm = false;
    std::int64_t rank_override = -1;
    std::int64_t iters_override = -1;
    std::size_t jobs = 1;
};

Result<void> apply_overrides(CompressionPlan& plan, const DecomposeArgs& a) {
    for (PlanEntry& e : plan.entries) {
        if (a.no_perm) e.use_permutations = false;
        if (a.iters_override >= 0) e.max_alt_iters = static_cast<std::size_t>(a.iters_override);
        if (a.rank_override >= 0) {
            const std::size_t r = static_cast<std::size_t>(a.rank_override);
            const std::size_t cap = std::min(e.m1 * e.n1, e.m2 * e.n2);
            if (r == 0 || r > cap)
                return make_error(ErrorKind::validation,
                                  "rank override " + std::to_string(r) + " is outside [1, " +
                                      std::to_string(cap) + "] for tensor '" + e.tensor + "'");
            e.rank = r;
        }
    }
    return {};
}

Result<void> cmd_decompose(const DecomposeArgs& a, std::ostream& out, std::ostream& err) {
    auto tensors = load_tensors(a.input);
    if (!tensors) return tensors.error();
    auto plan_text = read_text_file(a.plan_path);
    if (!plan_text) return plan_text.error();
    auto plan = parse_plan(plan_text.value(), manifest_of(tensors.value()));
    if (!plan) return plan.error();
    auto applied = apply_overrides(plan.value(), a);
    if (!applied) return applied;

    const std::vector<PlanEntry>& entries = plan.value().entries;
    std::vector<PermutedKronDecomposition> decs(entries.size());
    std::vector<ReportRecord> records(entries.size());

    auto one = [&](std::size_t i) -> Result<void> {
        const PlanEntry& e = entries[i];
        auto w = entry_to_matrix(*tensors.value().find(e.tensor));
        if (!w) return w.error();
        const DecomposeOptions opts =
            options_from_plan(KronShape{e.m1, e.n1, e.m2, e.n2}, e.rank, e.use_permutations, e.max_alt_iters);
        const auto t0 = std::chrono::steady_clock::now();
        auto res = decompose(w.value(), opts, Rng::mix(a.seed, i));
        if (!res) return res.error();
        const auto t1 = std::chrono::steady_clock::now();

        const double wnorm = frobenius_norm(w.value());
        ReportRecord& rec = records[i];
        rec.tensor = e.tensor;
        rec.m = w.value().rows;
        rec.n = w.value().cols;
        rec.m1 = e.m1;
        rec.n1 = e.n1;
        rec.m2 = e.m2;
        rec.n2 = e.n2;
        rec.rank = e.rank;
        rec.perm = e.use_permutations;
        rec.abs_residual = res.value().decomposition.residual;
        rec.rel_residual = wnorm > 0.0 ? rec.abs_residual / wnorm : 0.0;
        rec.params_before = static_cast<std::uint64_t>(rec.m) * rec.n;
        rec.params_after = parameter_count(res.value().decomposition);
        rec.iters = res.value().trace.records.size();
        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
        decs[i] = std::move(res.value().decomposition);
        return {};
    };
    auto ran = parallel_for(entries.size(), a.jobs, one);
    if (!ran) return ran;

    NamedTensorFile out_file;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto appended = append_decomposition(out_file, entries[i].tensor, decs[i]);
        if (!appended) return appended;
        err << "tensor " << entries[i].tensor << ": rel_residual=" << fmt_double(records[i].rel_residual)
            << " seconds=" << fmt_double(records[i].seconds) << '\n';
    }
    // Tensors the plan does not mention pass through unchanged.
    for (const TensorEntry& e : tensors.value().entries) {
        bool planned = false;
        for (const PlanEntry& p : entries)
            if (p.tensor == e.name) {
                planned = true;
                break;
            }
        if (!planned) {
            auto added = out_file.add(e);
            if (!added) return added;
        }
    }

    auto saved = save_tensors(out_file, a.output);
    if (!saved) return saved;
    auto meta = write_text_file(a.output + ".meta", format_sidecar(records));
    if (!meta) return meta;

    auto csv = report_to_csv(RunReport{records});
    if (!csv) return csv.error();
    if (a.csv_path.empty())
        out << csv.value();
    else {
        auto written = write_text_file(a.csv_path, csv.value());
        if (!written) return written;
    }
    return {};
}

struct BenchArgs {
    std::string input;
    std::string shape;
    std::string csv_path;
    std::size_t random_count = 0;
    std::uint64_t seed = 0;
    std::int64_t rank = 1;
    std::int64_t iters = 10;
    std::size_t jobs = 1;
};

Result<KronShape> parse_shape(const std::string& text) {
    std::vector<std::size_t> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t pos = text.find('x', start);
        const std::string cell = text.substr(start, pos == std::string::npos ? pos : pos - start);
        errno = 0;
        char* end = nullptr;
        const unsigned long long v = std::strtoull(cell.c_str(), &end, 10);
        if (cell.empty() || errno != 0 || end != cell.c_str() + cell.size() || v == 0)
            return make_error(ErrorKind::validation, "bad shape '" + text + "', expected m1xn1xm2xn2");
        parts.push_back(v);
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (parts.size() != 4)
        return make_error(ErrorKind::validation, "bad shape '" + text + "', expected m1xn1xm2xn2");
    return KronShape{parts[0], parts[1], parts[2], parts[3]};
}

Result<void> cmd_bench_perm(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    auto shape = parse_shape(a.shape);
    if (!shape) return shape.error();
    const KronShape ks = shape.value();
    const std::size_t rank_cap = ks.max_rank();
    if (a.rank < 1 || static_cast<std::size_t>(a.rank) > rank_cap)
        return make_error(ErrorKind::validation,
                          "rank must lie in [1, " + std::to_string(rank_cap) + "] for this shape");
    if (a.iters < 1) return make_error(ErrorKind::validation, "iters must be positive");

    std::vector<std::string> names;
    std::vector<DenseMatrix> mats;
    if (!a.input.empty()) {
        auto tensors = load_tensors(a.input);
        if (!tensors) return tensors.error();
        for (const TensorEntry& e : tensors.value().entries) {
            auto w = entry_to_matrix(e);
            if (!w) return w.error();
            if (w.value().rows != ks.rows() || w.value().cols != ks.cols())
                return make_error(ErrorKind::shape, "tensor '" + e.name + "' is " +
                                                        std::to_string(w.value().rows) + "x" +
                                                        std::to_string(w.value().cols) + ", shape needs " +
                                                        std::to_string(ks.rows()) + "x" +
                                                        std::to_string(ks.cols()));
            names.push_back(e.name);
            mats.push_back(std::move(w.value()));
        }
    } else {
        if (a.random_count == 0)
            return make_error(ErrorKind::validation, "give --input or a positive --random count");
        for (std::size_t i = 0; i < a.random_count; ++i) {
            Rng rng(Rng::mix(a.seed, 0x9e00 + i));
            names.push_back("random" + std::to_string(i));
            mats.push_back(random_matrix(ks.rows(), ks.cols(), rng));
        }
    }

    struct Row {
        double vanilla_abs = 0.0, vanilla_rel = 0.0, perm_abs = 0.0, perm_rel = 0.0;
    };
    std::vector<Row> rows(mats.size());
    auto one = [&](std::size_t i) -> Result<void> {
        DecomposeOptions opts = options_from_plan(ks, static_cast<std::size_t>(a.rank), true,
                                                  static_cast<std::size_t>(a.iters));
        auto with_perm = decompose(mats[i], opts, Rng::mix(a.seed, i));
        if (!with_perm) return with_perm.error();
        opts.use_permutations = false;
        auto vanilla = decompose(mats[i], opts, Rng::mix(a.seed, i));
        if (!vanilla) return vanilla.error();
        const double wnorm = frobenius_norm(mats[i]);
        Row& r = rows[i];
        r.perm_abs = with_perm.value().decomposition.residual;
        r.vanilla_abs = vanilla.value().decomposition.residual;
        r.perm_rel = wnorm > 0.0 ? r.perm_abs / wnorm : 0.0;
        r.vanilla_rel = wnorm > 0.0 ? r.vanilla_abs / wnorm : 0.0;
        return {};
    };
    auto ran = parallel_for(mats.size(), a.jobs, one);
    if (!ran) return ran;

    std::ostringstream csv;
    csv << "tensor,m,n,m1,n1,m2,n2,rank,vanilla_abs_residual,vanilla_rel_residual,perm_abs_residual,"
           "perm_rel_residual\n";
    std::size_t wins = 0;
    double vanilla_rel_sum = 0.0, perm_rel_sum = 0.0;
    for (std::size_t i = 0; i < mats.size(); ++i) {
        const Row& r = rows[i];
        csv << names[i] << ',' << ks.rows() << ',' << ks.cols() << ',' << ks.m1 << ',' << ks.n1 << ','
            << ks.m2 << ',' << ks.n2 << ',' << a.rank << ',' << fmt_double(r.vanilla_abs) << ','
            << fmt_double(r.vanilla_rel) << ',' << fmt_double(r.perm_abs) << ',' << fmt_double(r.perm_rel)
            << '\n';
        if (r.perm_abs <= r.vanilla_abs) ++wins;
        vanilla_rel_sum += r.vanilla_rel;
        perm_rel_sum += r.perm_rel;
    }
    if (!mats.empty())
        err << "permuted <= vanilla on " << wins << "/" << mats.size()
            << " tensors; mean rel residual vanilla=" << fmt_double(vanilla_rel_sum / mats.size())
            << " permuted=" << fmt_double(perm_rel_sum / mats.size()) << '\n';

    if (a.csv_path.empty())
        out << csv.str();
    else {
        auto written = write_text_file(a.csv_path, csv.str());
        if (!written) return written;
    }
    return {};
}

struct DemoArgs {
    std::uint64_t seed = 0;
    std::int64_t epochs = -1;
    bool no_perm = false;
    double lambda = 0.5;
    double temperature = 1.0;
    std::string checkpoint;
};

Result<void> cmd_distill_demo(const DemoArgs& a, std::ostream& out, std::ostream& err) {
    DemoOptions opts;
    opts.seed = a.seed;
    if (a.epochs >= 0) opts.distill_epochs = static_cast<std::size_t>(a.epochs);
    opts.use_permutations = !a.no_perm;
    opts.lambda = a.lambda;
    opts.temperature = a.temperature;
    opts.checkpoint_path = a.checkpoint;

    auto res = run_distill_demo(opts);
    if (!res) {
        if (res.error().kind == ErrorKind::training && !a.checkpoint.empty() &&
            std::filesystem::exists(a.checkpoint))
            return make_error(res.error().kind,
                              res.error().message + "; last good checkpoint: " + a.checkpoint);
        return res.error();
    }

    const DemoResult& r = res.value();
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        const DistillRecord& rec = r.log[i];
        err << "iteration " << rec.iteration << ": compressed " << r.compressed_layers[i]
            << " (rel_residual=" << fmt_double(r.rel_residuals[i]) << "), step=" << rec.step
            << " loss=" << fmt_double(rec.loss) << " accuracy=" << fmt_double(rec.accuracy)
            << " params=" << rec.param_count << '\n';
    }
    out << "teacher_accuracy=" << fmt_double(r.teacher_accuracy) << '\n'
        << "student_accuracy=" << fmt_double(r.student_accuracy) << '\n'
        << "accuracy_ratio="
        << fmt_double(r.teacher_accuracy > 0.0 ? r.student_accuracy / r.teacher_accuracy : 0.0) << '\n'
        << "teacher_params=" << r.teacher_params << '\n'
        << "student_params=" << r.student_params << '\n'
        << "compression_ratio="
        << fmt_double(r.student_params > 0 ? static_cast<double>(r.teacher_params) /
                                                 static_cast<double>(r.student_params)
                                           : 0.0)
        << '\n';
    return {};
}

struct ReportArgs {
    std::string input;
    std::string original;
};

Result<void> cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
    auto tensors = load_tensors(a.input);
    if (!tensors) return tensors.error();
    NamedTensorFile originals;
    if (!a.original.empty()) {
        auto loaded = load_tensors(a.original);
        if (!loaded) return loaded.error();
        originals = std::move(loaded.value());
    }

    std::uint64_t total_params = 0;
    std::uint64_t total_serialized = 0;
    for (const std::string& name : decomposition_names(tensors.value())) {
        auto dec = extract_decomposition(tensors.value(), name);
        if (!dec) return dec.error();
        const PermutedKronDecomposition& d = dec.value();

        std::uint64_t serialized = 0;
        for (std::size_t i = 0; i < d.factors.terms.size(); ++i) {
            serialized += tensors.value().find(name + ".A." + std::to_string(i))->element_count();
            serialized += tensors.value().find(name + ".B." + std::to_string(i))->element_count();
        }
        if (d.use_permutations) {
            serialized += tensors.value().find(name + ".P")->element_count();
            serialized += tensors.value().find(name + ".C")->element_count();
        }
        const std::uint64_t params = parameter_count(d);
        total_params += params;
        total_serialized += serialized;

        out << "tensor=" << name << " rank=" << d.factors.terms.size()
            << " perm=" << (d.use_permutations ? "on" : "off") << " params=" << params
            << " serialized_elements=" << serialized;
        if (!a.original.empty()) {
            const TensorEntry* orig = originals.find(name);
            if (!orig)
                return make_error(ErrorKind::reference,
                                  "tensor '" + name + "' not present in original file");
            auto w = entry_to_matrix(*orig);
            if (!w) return w.error();
            auto abs_err = objective(w.value(), d);
            if (!abs_err) return abs_err.error();
            const double wnorm = frobenius_norm(w.value());
            out << " abs_error=" << fmt_double(abs_err.value())
                << " rel_error=" << fmt_double(wnorm > 0.0 ? abs_err.value() / wnorm : 0.0);
        }
        out << '\n';
    }
    out << "total params=" << total_params << " serialized_elements=" << total_serialized << '\n';
    (void)err;
    return {};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Permutation-enhanced Kronecker compression toolkit"};
    app.require_subcommand(1);

    DecomposeArgs dec_args;
    CLI::App* dec = app.add_subcommand("decompose", "Factor tensors per a plan and write the compressed file");
    dec->add_option("-i,--input", dec_args.input, "input tensor file")->required();
    dec->add_option("-o,--output", dec_args.output, "output tensor file")->required();
    dec->add_option("--plan", dec_args.plan_path, "compression plan path")->required();
    dec->add_option("--seed", dec_args.seed, "random seed");
    dec->add_flag("--no-perm", dec_args.no_perm, "force permutations off for every entry");
    dec->add_option("--rank", dec_args.rank_override, "override rank for every entry");
    dec->add_option("--iters", dec_args.iters_override, "override alternation iterations for every entry");
    dec->add_option("--csv", dec_args.csv_path, "write the report CSV here instead of stdout");
    dec->add_option("--jobs", dec_args.jobs, "worker threads");

    BenchArgs bench_args;
    CLI::App* bench =
        app.add_subcommand("bench-perm", "Compare permuted against vanilla decomposition per tensor");
    bench->add_option("-i,--input", bench_args.input, "input tensor corpus");
    bench->add_option("--random", bench_args.random_count, "generate this many random tensors instead");
    bench->add_option("--shape", bench_args.shape, "kron split m1xn1xm2xn2")->required();
    bench->add_option("--seed", bench_args.seed, "random seed");
    bench->add_option("--rank", bench_args.rank, "kron rank");
    bench->add_option("--iters", bench_args.iters, "alternation iterations");
    bench->add_option("--csv", bench_args.csv_path, "write the comparison CSV here instead of stdout");
    bench->add_option("--jobs", bench_args.jobs, "worker threads");

    DemoArgs demo_args;
    CLI::App* demo = app.add_subcommand("distill-demo", "Train, compress and distill the bundled toy model");
    demo->add_option("--seed", demo_args.seed, "random seed");
    demo->add_option("--epochs", demo_args.epochs, "distillation epochs per compression iteration");
    demo->add_flag("--no-perm", demo_args.no_perm, "decompose without permutations");
    demo->add_option("--lambda", demo_args.lambda, "weight on the hard-label loss term");
    demo->add_option("--temperature", demo_args.temperature, "distillation temperature");
    demo->add_option("--checkpoint", demo_args.checkpoint, "student checkpoint path, written per iteration");

    ReportArgs report_args;
    CLI::App* report = app.add_subcommand("report", "Summarize a compressed tensor file");
    report->add_option("-i,--input", report_args.input, "compressed tensor file")->required();
    report->add_option("--original", report_args.original, "original tensor file for error columns");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    Result<void> res;
    if (dec->parsed())
        res = cmd_decompose(dec_args, out, err);
    else if (bench->parsed())
        res = cmd_bench_perm(bench_args, out, err);
    else if (demo->parsed())
        res = cmd_distill_demo(demo_args, out, err);
    else
        res = cmd_report(report_args, out, err);

    if (!res) {
        err << error_kind_name(res.error().kind) << " error: " << res.error().message << '\n';
        return error_exit_code(res.error().kind);
    }
    return 0;
}

}  // namespace permkron::cli
