#include "permkron/distill.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <set>

#include "permkron/optimizer.hpp"

namespace permkron {

namespace {

// Row-wise log-softmax of logits scaled by 1/tau; numerically stable.
DenseMatrix log_softmax_rows(const DenseMatrix& logits, double inv_tau) {
    DenseMatrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* row = &logits.data[i * logits.cols];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) mx = std::max(mx, row[j] * inv_tau);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(row[j] * inv_tau - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < logits.cols; ++j) out.data[i * out.cols + j] = row[j] * inv_tau - lse;
    }
    return out;
}

}  // namespace

Result<KDLossResult> kd_loss(const DenseMatrix& student_logits, const DenseMatrix& teacher_logits,
                             const std::vector<std::size_t>& labels, const KDConfig& cfg) {
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0)
        return make_error(ErrorKind::validation, "lambda must lie in [0, 1]");
    if (cfg.temperature <= 0.0) return make_error(ErrorKind::validation, "temperature must be positive");
    if (student_logits.rows != teacher_logits.rows || student_logits.cols != teacher_logits.cols)
        return make_error(ErrorKind::shape, "student and teacher logits must share a shape");
    if (labels.size() != student_logits.rows)
        return make_error(ErrorKind::shape, "label count does not match batch size");
    const std::size_t k = student_logits.rows;
    const std::size_t classes = student_logits.cols;
    for (std::size_t lbl : labels)
        if (lbl >= classes) return make_error(ErrorKind::validation, "label out of range");

    const double lam = cfg.lambda;
    const double tau = cfg.temperature;
    const double inv_k = k > 0 ? 1.0 / static_cast<double>(k) : 0.0;

    KDLossResult res;
    res.grad = DenseMatrix(k, classes);

    // Hard term: mean cross-entropy against the labels.
    const DenseMatrix lp_hard = log_softmax_rows(student_logits, 1.0);
    double hard = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        hard -= lp_hard.data[i * classes + labels[i]];
        for (std::size_t j = 0; j < classes; ++j) {
            const double p = std::exp(lp_hard.data[i * classes + j]);
            const double y = (j == labels[i]) ? 1.0 : 0.0;
            res.grad.data[i * classes + j] = lam * (p - y) * inv_k;
        }
    }
    hard *= inv_k;

    // Soft term: cross-entropy of softened student against softened teacher,
    // scaled by tau^2 so the gradient magnitude stays comparable across tau.
    const DenseMatrix lp_soft = log_softmax_rows(student_logits, 1.0 / tau);
    const DenseMatrix lq_soft = log_softmax_rows(teacher_logits, 1.0 / tau);
    double soft = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < classes; ++j) {
            const double q = std::exp(lq_soft.data[i * classes + j]);
            const double p = std::exp(lp_soft.data[i * classes + j]);
            soft -= q * lp_soft.data[i * classes + j];
            res.grad.data[i * classes + j] += (1.0 - lam) * tau * (p - q) * inv_k;
        }
    }
    soft *= inv_k;

    res.loss = lam * hard + (1.0 - lam) * tau * tau * soft;
    return res;
}

std::size_t ToyLayer::in_dim() const {
    if (const auto* d = std::get_if<DenseLinear>(&impl)) return d->w.cols;
    return std::get<CompressedLinear>(impl).in_dim();
}

std::size_t ToyLayer::out_dim() const {
    if (const auto* d = std::get_if<DenseLinear>(&impl)) return d->w.rows;
    return std::get<CompressedLinear>(impl).out_dim();
}

std::uint64_t ToyModel::parameter_total() const {
    std::uint64_t total = 0;
    for (const ToyLayer& layer : layers) {
        if (const auto* d = std::get_if<DenseLinear>(&layer.impl)) {
            total += static_cast<std::uint64_t>(d->w.rows) * d->w.cols;
            if (d->bias) total += d->bias->size();
        } else {
            const CompressedLinear& c = std::get<CompressedLinear>(layer.impl);
            total += parameter_count(c.dec);
            if (c.bias) total += c.bias->size();
        }
    }
    return total;
}

ToyModel make_dense_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    assert(dims.size() >= 2);
    ToyModel model;
    model.input_dim = dims.front();
    model.num_classes = dims.back();
    Rng rng(seed);
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        DenseLinear lin;
        lin.w = DenseMatrix(dims[k + 1], dims[k]);
        // He-style scale keeps ReLU activations in range at these widths.
        const double scale = std::sqrt(2.0 / static_cast<double>(dims[k]));
        for (double& v : lin.w.data) v = scale * rng.normal();
        lin.bias = std::vector<double>(dims[k + 1], 0.0);
        ToyLayer layer;
        layer.impl = std::move(lin);
        layer.relu = (k + 2 < dims.size());
        model.layers.push_back(std::move(layer));
    }
    return model;
}

Result<DenseMatrix> model_forward(const ToyModel& model, const DenseMatrix& x, ForwardCache* cache) {
    if (x.cols != model.input_dim)
        return make_error(ErrorKind::shape, "input width does not match model input dim");
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
    }
    DenseMatrix cur = x;
    for (const ToyLayer& layer : model.layers) {
        if (cache) cache->inputs.push_back(cur);
        DenseMatrix z;
        if (const auto* d = std::get_if<DenseLinear>(&layer.impl)) {
            z = matmul_bt(cur, d->w);
            if (d->bias)
                for (std::size_t i = 0; i < z.rows; ++i)
                    for (std::size_t j = 0; j < z.cols; ++j) z.data[i * z.cols + j] += (*d->bias)[j];
        } else {
            auto r = linear_forward(std::get<CompressedLinear>(layer.impl), cur);
            if (!r) return r.error();
            z = std::move(r.value());
        }
        if (cache) cache->preacts.push_back(z);
        if (layer.relu)
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
        cur = std::move(z);
    }
    return cur;
}

std::vector<std::span<double>> trainable_views(ToyModel& model) {
    std::vector<std::span<double>> views;
    for (ToyLayer& layer : model.layers) {
        if (auto* d = std::get_if<DenseLinear>(&layer.impl)) {
            views.emplace_back(d->w.data);
            if (d->bias) views.emplace_back(*d->bias);
        } else {
            CompressedLinear& c = std::get<CompressedLinear>(layer.impl);
            for (KronFactorPair& term : c.dec.factors.terms) {
                views.emplace_back(term.a.data);
                views.emplace_back(term.b.data);
            }
            if (c.bias) views.emplace_back(*c.bias);
        }
    }
    return views;
}

Result<std::vector<std::vector<double>>> model_backward(const ToyModel& model, const ForwardCache& cache,
                                                        const DenseMatrix& dlogits) {
    assert(cache.inputs.size() == model.layers.size());
    std::vector<std::vector<std::vector<double>>> per_layer(model.layers.size());

    DenseMatrix up = dlogits;
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const ToyLayer& layer = model.layers[li];
        if (layer.relu) {
            const DenseMatrix& z = cache.preacts[li];
            for (std::size_t i = 0; i < up.data.size(); ++i)
                if (z.data[i] <= 0.0) up.data[i] = 0.0;
        }
        const DenseMatrix& input = cache.inputs[li];
        std::vector<std::vector<double>>& grads = per_layer[li];
        if (const auto* d = std::get_if<DenseLinear>(&layer.impl)) {
            // z = x * w^T + b: dw = up^T * x, db = column sums, dx = up * w.
            DenseMatrix dw = matmul(transpose(up), input);
            grads.push_back(std::move(dw.data));
            if (d->bias) {
                std::vector<double> db(d->bias->size(), 0.0);
                for (std::size_t i = 0; i < up.rows; ++i)
                    for (std::size_t j = 0; j < up.cols; ++j) db[j] += up.data[i * up.cols + j];
                grads.push_back(std::move(db));
            }
            up = matmul(up, d->w);
        } else {
            const CompressedLinear& c = std::get<CompressedLinear>(layer.impl);
            auto bg = linear_backward(c, input, up);
            if (!bg) return bg.error();
            LinearGradients& lg = bg.value();
            for (std::size_t t = 0; t < lg.d_a.size(); ++t) {
                grads.push_back(std::move(lg.d_a[t].data));
                grads.push_back(std::move(lg.d_b[t].data));
            }
            if (c.bias) grads.push_back(std::move(lg.d_bias));
            up = std::move(lg.d_input);
        }
    }

    std::vector<std::vector<double>> flat;
    for (std::vector<std::vector<double>>& grads : per_layer)
        for (std::vector<double>& g : grads) flat.push_back(std::move(g));
    return flat;
}

AdamWState make_adamw_state(const std::vector<std::span<double>>& params) {
    AdamWState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const std::span<double>& p : params) {
        state.m.emplace_back(p.size(), 0.0);
        state.v.emplace_back(p.size(), 0.0);
    }
    return state;
}

void adamw_step(std::vector<std::span<double>>& params, const std::vector<std::vector<double>>& grads,
                AdamWState& state, const KDConfig& cfg) {
    assert(params.size() == grads.size() && params.size() == state.m.size());
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < params.size(); ++p) {
        std::span<double> theta = params[p];
        const std::vector<double>& g = grads[p];
        std::vector<double>& m = state.m[p];
        std::vector<double>& v = state.v[p];
        assert(theta.size() == g.size());
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.epsilon) + cfg.weight_decay * theta[i]);
        }
    }
}

SyntheticDataset make_blobs(std::size_t dim, std::size_t classes, std::size_t train_n, std::size_t test_n,
                            double separation, std::uint64_t seed) {
    SyntheticDataset ds;
    ds.dim = dim;
    ds.classes = classes;
    Rng rng(seed);
    DenseMatrix means(classes, dim);
    for (double& v : means.data) v = separation * rng.normal();

    auto fill = [&](DenseMatrix& x, std::vector<std::size_t>& y, std::size_t n) {
        x = DenseMatrix(n, dim);
        y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t cls = i % classes;
            y[i] = cls;
            for (std::size_t j = 0; j < dim; ++j)
                x.data[i * dim + j] = means.data[cls * dim + j] + rng.normal();
        }
    };
    fill(ds.train_x, ds.train_y, train_n);
    fill(ds.test_x, ds.test_y, test_n);
    return ds;
}

double accuracy(const ToyModel& model, const DenseMatrix& x, const std::vector<std::size_t>& labels) {
    auto logits = model_forward(model, x);
    if (!logits) return 0.0;
    const DenseMatrix& l = logits.value();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < l.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < l.cols; ++j)
            if (l.data[i * l.cols + j] > l.data[i * l.cols + best]) best = j;
        if (best == labels[i]) ++hits;
    }
    return l.rows > 0 ? static_cast<double>(hits) / static_cast<double>(l.rows) : 0.0;
}

Result<double> train_step(ToyModel& student, const DenseMatrix& batch_x, const std::vector<std::size_t>& batch_y,
                          const ToyModel* teacher, const KDConfig& cfg, AdamWState& state) {
    ForwardCache cache;
    auto logits = model_forward(student, batch_x, &cache);
    if (!logits) return logits.error();

    KDConfig effective = cfg;
    DenseMatrix teacher_logits;
    if (teacher) {
        auto t = model_forward(*teacher, batch_x);
        if (!t) return t.error();
        teacher_logits = std::move(t.value());
    } else {
        effective.lambda = 1.0;  // hard labels only
        teacher_logits = logits.value();
    }

    auto loss = kd_loss(logits.value(), teacher_logits, batch_y, effective);
    if (!loss) return loss.error();
    if (!std::isfinite(loss.value().loss))
        return make_error(ErrorKind::training,
                          "non-finite loss at optimizer step " + std::to_string(state.t + 1));

    auto grads = model_backward(student, cache, loss.value().grad);
    if (!grads) return grads.error();
    auto views = trainable_views(student);
    adamw_step(views, grads.value(), state, cfg);
    return loss.value().loss;
}

Result<double> run_training(ToyModel& student, const ToyModel* teacher, const DenseMatrix& x,
                            const std::vector<std::size_t>& y, const KDConfig& cfg, std::size_t epochs,
                            AdamWState& state, Rng& shuffle_rng) {
    const std::size_t n = x.rows;
    const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
    double epoch_loss = 0.0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t count = std::min(bs, n - start);
            DenseMatrix bx(count, x.cols);
            std::vector<std::size_t> by(count);
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t src = order[start + i];
                by[i] = y[src];
                for (std::size_t j = 0; j < x.cols; ++j) bx.data[i * x.cols + j] = x.data[src * x.cols + j];
            }
            auto loss = train_step(student, bx, by, teacher, cfg, state);
            if (!loss) return loss.error();
            epoch_loss += loss.value();
            ++batches;
        }
        if (batches > 0) epoch_loss /= static_cast<double>(batches);
    }
    return epoch_loss;
}

NamedTensorFile model_to_tensors(const ToyModel& model) {
    NamedTensorFile file;
    auto perm_entry = [](std::string name, const PermutationVec& p) {
        TensorEntry e;
        e.name = std::move(name);
        e.dtype = DType::f64;
        e.dims = {p.size()};
        e.data.reserve(p.size());
        for (std::size_t v : p.map) e.data.push_back(static_cast<double>(v));
        return e;
    };
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const std::string base = "layer" + std::to_string(li);
        const ToyLayer& layer = model.layers[li];
        if (const auto* d = std::get_if<DenseLinear>(&layer.impl)) {
            file.entries.push_back(matrix_to_entry(base + ".weight", d->w));
            if (d->bias) {
                TensorEntry e;
                e.name = base + ".bias";
                e.dims = {d->bias->size()};
                e.data = *d->bias;
                file.entries.push_back(std::move(e));
            }
        } else {
            const CompressedLinear& c = std::get<CompressedLinear>(layer.impl);
            for (std::size_t t = 0; t < c.dec.factors.terms.size(); ++t) {
                file.entries.push_back(
                    matrix_to_entry(base + ".A." + std::to_string(t), c.dec.factors.terms[t].a));
                file.entries.push_back(
                    matrix_to_entry(base + ".B." + std::to_string(t), c.dec.factors.terms[t].b));
            }
            if (c.dec.use_permutations) {
                file.entries.push_back(perm_entry(base + ".P", c.dec.p));
                file.entries.push_back(perm_entry(base + ".C", c.dec.c));
            }
            if (c.bias) {
                TensorEntry e;
                e.name = base + ".bias";
                e.dims = {c.bias->size()};
                e.data = *c.bias;
                file.entries.push_back(std::move(e));
            }
        }
    }
    return file;
}

Result<DistillOutcome> iterative_compress_distill(const ToyModel& teacher, const CompressionPlan& plan,
                                                  const std::vector<std::vector<std::size_t>>& schedule,
                                                  const SyntheticDataset& data, const KDConfig& cfg,
                                                  const IterationHook& on_iteration) {
    DistillOutcome out;
    out.student = teacher;

    std::set<std::size_t> scheduled;
    for (const std::vector<std::size_t>& subset : schedule) {
        for (std::size_t id : subset) {
            if (id >= teacher.layers.size())
                return make_error(ErrorKind::validation, "schedule references layer " + std::to_string(id) +
                                                             " but model has " +
                                                             std::to_string(teacher.layers.size()));
            if (teacher.layers[id].compressed() || !scheduled.insert(id).second)
                return make_error(ErrorKind::validation,
                                  "layer " + std::to_string(id) + " is already compressed");
        }
    }

    Rng shuffle_rng(Rng::mix(cfg.seed, 0xd157));
    std::size_t cumulative_steps = 0;
    const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
    const std::size_t batches_per_epoch = (data.train_x.rows + bs - 1) / bs;

    for (std::size_t it = 0; it < schedule.size(); ++it) {
        for (std::size_t id : schedule[it]) {
            const std::string tensor_name = "layer" + std::to_string(id) + ".weight";
            const PlanEntry* entry = nullptr;
            for (const PlanEntry& e : plan.entries)
                if (e.tensor == tensor_name) {
                    entry = &e;
                    break;
                }
            if (!entry) return make_error(ErrorKind::reference, "no plan entry for " + tensor_name);
            const auto* dense = std::get_if<DenseLinear>(&out.student.layers[id].impl);
            assert(dense);  // schedule validation rules out compressed layers

            const KronShape shape{entry->m1, entry->n1, entry->m2, entry->n2};
            const DecomposeOptions opts =
                options_from_plan(shape, entry->rank, entry->use_permutations, entry->max_alt_iters);
            auto dec = decompose(dense->w, opts, Rng::mix(cfg.seed, 500 + id));
            if (!dec) return dec.error();

            const double wnorm = frobenius_norm(dense->w);
            out.abs_residuals.push_back(dec.value().decomposition.residual);
            out.rel_residuals.push_back(wnorm > 0.0 ? dec.value().decomposition.residual / wnorm : 0.0);
            out.compressed_layers.push_back(tensor_name);

            std::optional<std::vector<double>> bias = dense->bias;
            out.student.layers[id].impl =
                CompressedLinear::from_decomposition(std::move(dec.value().decomposition), std::move(bias));
        }

        // Fresh optimizer state: compression changed the parameter vector.
        auto views = trainable_views(out.student);
        AdamWState state = make_adamw_state(views);
        auto loss =
            run_training(out.student, &teacher, data.train_x, data.train_y, cfg, cfg.epochs, state, shuffle_rng);
        if (!loss) return loss.error();
        cumulative_steps += cfg.epochs * batches_per_epoch;

        DistillRecord rec;
        rec.iteration = it + 1;
        rec.step = cumulative_steps;
        rec.loss = loss.value();
        rec.accuracy = accuracy(out.student, data.test_x, data.test_y);
        rec.param_count = out.student.parameter_total();
        out.log.push_back(rec);

        if (on_iteration) {
            auto hook = on_iteration(out.student, it + 1);
            if (!hook) return hook.error();
        }
    }
    return out;
}

namespace {

// n = f1 * f2 with f1 the largest divisor not exceeding sqrt(n).
std::pair<std::size_t, std::size_t> balanced_split(std::size_t n) {
    std::size_t best = 1;
    for (std::size_t f = 1; f * f <= n; ++f)
        if (n % f == 0) best = f;
    return {best, n / best};
}

}  // namespace

Result<DemoResult> run_distill_demo(const DemoOptions& opts) {
    if (opts.dim == 0 || opts.classes == 0 || opts.train_n == 0 || opts.test_n == 0)
        return make_error(ErrorKind::validation, "dataset dimensions must be positive");

    const SyntheticDataset data = make_blobs(opts.dim, opts.classes, opts.train_n, opts.test_n,
                                             opts.separation, Rng::mix(opts.seed, 0xb10b));

    ToyModel teacher = make_dense_mlp({opts.dim, 64, 64, opts.classes}, Rng::mix(opts.seed, 0x7ea));

    KDConfig teach_cfg;
    teach_cfg.learning_rate = opts.learning_rate;
    teach_cfg.batch_size = opts.batch_size;
    teach_cfg.seed = opts.seed;
    {
        auto views = trainable_views(teacher);
        AdamWState state = make_adamw_state(views);
        Rng rng(Rng::mix(opts.seed, 0x7ea1));
        auto loss = run_training(teacher, nullptr, data.train_x, data.train_y, teach_cfg,
                                 opts.teacher_epochs, state, rng);
        if (!loss) return loss.error();
    }

    DemoResult res;
    res.teacher_accuracy = accuracy(teacher, data.test_x, data.test_y);
    res.teacher_params = teacher.parameter_total();

    // Hidden layers only; the classifier head stays dense.
    CompressionPlan plan;
    std::vector<std::vector<std::size_t>> schedule;
    for (std::size_t id = 0; id + 1 < teacher.layers.size(); ++id) {
        const DenseLinear& lin = std::get<DenseLinear>(teacher.layers[id].impl);
        const auto [m1, m2] = balanced_split(lin.w.rows);
        const auto [n1, n2] = balanced_split(lin.w.cols);
        PlanEntry e;
        e.tensor = "layer" + std::to_string(id) + ".weight";
        e.m1 = m1;
        e.n1 = n1;
        e.m2 = m2;
        e.n2 = n2;
        e.rank = 1;
        e.use_permutations = opts.use_permutations;
        e.max_alt_iters = 10;
        plan.entries.push_back(e);
        schedule.push_back({id});
    }

    KDConfig distill_cfg;
    distill_cfg.lambda = opts.lambda;
    distill_cfg.temperature = opts.temperature;
    distill_cfg.epochs = opts.distill_epochs;
    distill_cfg.learning_rate = opts.learning_rate;
    distill_cfg.batch_size = opts.batch_size;
    distill_cfg.seed = opts.seed;

    IterationHook hook;
    if (!opts.checkpoint_path.empty()) {
        hook = [&opts](const ToyModel& student, std::size_t) -> Result<void> {
            return save_tensors(model_to_tensors(student), opts.checkpoint_path);
        };
    }

    auto out = iterative_compress_distill(teacher, plan, schedule, data, distill_cfg, hook);
    if (!out) return out.error();

    DistillOutcome& o = out.value();
    res.student_accuracy = o.log.empty() ? res.teacher_accuracy : o.log.back().accuracy;
    res.student_params = o.student.parameter_total();
    res.log = std::move(o.log);
    res.compressed_layers = std::move(o.compressed_layers);
    res.abs_residuals = std::move(o.abs_residuals);
    res.rel_residuals = std::move(o.rel_residuals);
    return res;
}

}  // namespace permkron
