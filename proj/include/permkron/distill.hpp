#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "permkron/errors.hpp"
#include "permkron/layers.hpp"
#include "permkron/matrix.hpp"
#include "permkron/tensor_store.hpp"

namespace permkron {

struct KDConfig {
    double lambda = 0.5;       // weight on the hard-label term
    double temperature = 1.0;  // softening; the tau^2 factor keeps soft-gradient magnitude comparable
    std::size_t epochs = 8;    // distillation epochs per compression iteration
    double learning_rate = 3e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
};

struct KDLossResult {
    double loss = 0.0;
    DenseMatrix grad;  // d loss / d student logits, mean reduction over the batch
};

// loss = lambda * CE(softmax(S), labels)
//      + (1 - lambda) * tau^2 * CE(softmax(S/tau) against softmax(T/tau)).
// At tau = 1 the tau^2 factor is 1, i.e. the plain soft cross-entropy.
Result<KDLossResult> kd_loss(const DenseMatrix& student_logits, const DenseMatrix& teacher_logits,
                             const std::vector<std::size_t>& labels, const KDConfig& cfg);

struct DenseLinear {
    DenseMatrix w;  // out x in
    std::optional<std::vector<double>> bias;
};

struct ToyLayer {
    std::variant<DenseLinear, CompressedLinear> impl;
    bool relu = false;  // applied after the affine map

    bool compressed() const { return std::holds_alternative<CompressedLinear>(impl); }
    std::size_t in_dim() const;
    std::size_t out_dim() const;
};

// Small dense/compressed MLP classifier; the last layer emits logits.
struct ToyModel {
    std::vector<ToyLayer> layers;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;

    std::uint64_t parameter_total() const;
};

// dims = {input, hidden..., classes}; ReLU between all but the last layer.
ToyModel make_dense_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed);

struct ForwardCache {
    std::vector<DenseMatrix> inputs;   // input to each layer
    std::vector<DenseMatrix> preacts;  // affine output before ReLU
};

Result<DenseMatrix> model_forward(const ToyModel& model, const DenseMatrix& x, ForwardCache* cache = nullptr);

// Canonical parameter order: per layer, dense {w, bias?}; compressed
// {a_0, b_0, a_1, b_1, ..., bias?}. Gradients from model_backward align with
// this order.
std::vector<std::span<double>> trainable_views(ToyModel& model);
Result<std::vector<std::vector<double>>> model_backward(const ToyModel& model, const ForwardCache& cache,
                                                        const DenseMatrix& dlogits);

struct AdamWState {
    std::size_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

AdamWState make_adamw_state(const std::vector<std::span<double>>& params);
// Decoupled weight decay, bias-corrected moments; decay applies to every
// trainable parameter.
void adamw_step(std::vector<std::span<double>>& params, const std::vector<std::vector<double>>& grads,
                AdamWState& state, const KDConfig& cfg);

// Seeded Gaussian blobs; regeneration from the same arguments is bitwise
// identical.
struct SyntheticDataset {
    DenseMatrix train_x;
    std::vector<std::size_t> train_y;
    DenseMatrix test_x;
    std::vector<std::size_t> test_y;
    std::size_t dim = 0;
    std::size_t classes = 0;
};

SyntheticDataset make_blobs(std::size_t dim, std::size_t classes, std::size_t train_n, std::size_t test_n,
                            double separation, std::uint64_t seed);

double accuracy(const ToyModel& model, const DenseMatrix& x, const std::vector<std::size_t>& labels);

// One AdamW update against the teacher's logits (teacher == nullptr trains on
// hard labels only, i.e. lambda forced to 1). Returns the batch loss.
Result<double> train_step(ToyModel& student, const DenseMatrix& batch_x, const std::vector<std::size_t>& batch_y,
                          const ToyModel* teacher, const KDConfig& cfg, AdamWState& state);

// Shuffled mini-batch epochs over the whole training split; returns the mean
// loss of the final epoch.
Result<double> run_training(ToyModel& student, const ToyModel* teacher, const DenseMatrix& x,
                            const std::vector<std::size_t>& y, const KDConfig& cfg, std::size_t epochs,
                            AdamWState& state, Rng& shuffle_rng);

struct DistillRecord {
    std::size_t iteration = 0;   // compression iteration
    std::size_t step = 0;        // cumulative optimizer steps
    double loss = 0.0;           // mean loss of the iteration's final epoch
    double accuracy = 0.0;       // test accuracy after the iteration
    std::uint64_t param_count = 0;
};

struct DistillOutcome {
    ToyModel student;
    std::vector<DistillRecord> log;
    // Per compressed layer, in compression order.
    std::vector<std::string> compressed_layers;
    std::vector<double> abs_residuals;
    std::vector<double> rel_residuals;
};

// Called with the student after each completed compression iteration, e.g.
// to write a checkpoint; a returned error aborts the run.
using IterationHook = std::function<Result<void>(const ToyModel&, std::size_t iteration)>;

// Algorithm: per schedule subset, decompose those layers' weights, swap in
// compressed replacements, then distill against the frozen teacher for
// cfg.epochs. Layers never scheduled stay bit-identical when epochs == 0.
// Plan entries are matched by layer<k>.weight (the serialized tensor name).
Result<DistillOutcome> iterative_compress_distill(const ToyModel& teacher, const CompressionPlan& plan,
                                                  const std::vector<std::vector<std::size_t>>& schedule,
                                                  const SyntheticDataset& data, const KDConfig& cfg,
                                                  const IterationHook& on_iteration = {});

// Model weights as named tensors (layer<k>.weight/.bias for dense layers,
// layer<k>.A.<i>/.B.<i>/.P/.C/.bias for compressed ones).
NamedTensorFile model_to_tensors(const ToyModel& model);

struct DemoOptions {
    std::uint64_t seed = 0;
    std::size_t teacher_epochs = 6;
    std::size_t distill_epochs = 8;
    bool use_permutations = true;
    double lambda = 0.5;
    double temperature = 1.0;
    double learning_rate = 3e-3;
    std::size_t batch_size = 128;
    // Blob geometry; defaults keep the teacher near-perfect so the ratio
    // threshold measures distillation recovery, not task noise.
    std::size_t dim = 64;
    std::size_t classes = 8;
    std::size_t train_n = 4096;
    std::size_t test_n = 1024;
    double separation = 1.0;
    std::string checkpoint_path;  // written after each compression iteration when non-empty
};

struct DemoResult {
    double teacher_accuracy = 0.0;
    double student_accuracy = 0.0;
    std::uint64_t teacher_params = 0;
    std::uint64_t student_params = 0;
    std::vector<DistillRecord> log;
    std::vector<std::string> compressed_layers;
    std::vector<double> abs_residuals;
    std::vector<double> rel_residuals;
};

// The full desk-scale experiment: train a dense 64-64-64-8 teacher on seeded
// blobs, compress the two hidden layers one iteration at a time (8x8 kron
// splits, rank 1), distill after each. Single code path for the CLI and the
// acceptance suite so reproducibility claims cover both.
Result<DemoResult> run_distill_demo(const DemoOptions& opts);

}  // namespace permkron
