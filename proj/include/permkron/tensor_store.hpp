#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "permkron/errors.hpp"
#include "permkron/matrix.hpp"

namespace permkron {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

// One named tensor. Payloads are widened to f64 on load; `dtype` remembers the
// storage width so a save round-trips byte-identically.
struct TensorEntry {
    std::string name;
    DType dtype = DType::f64;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    std::uint64_t element_count() const;
};

struct NamedTensorFile {
    std::vector<TensorEntry> entries;

    const TensorEntry* find(const std::string& name) const;
    Result<void> add(TensorEntry entry);  // rejects duplicate names
};

Result<NamedTensorFile> load_tensors(const std::string& path);
Result<void> save_tensors(const NamedTensorFile& tensors, const std::string& path);

TensorEntry matrix_to_entry(std::string name, const DenseMatrix& m, DType dtype = DType::f64);
Result<DenseMatrix> entry_to_matrix(const TensorEntry& e);

// Per-tensor compression directives.
struct PlanEntry {
    std::string tensor;
    std::size_t m1 = 0, n1 = 0, m2 = 0, n2 = 0;
    std::size_t rank = 1;
    bool use_permutations = true;
    std::size_t max_alt_iters = 10;
};

struct CompressionPlan {
    std::vector<PlanEntry> entries;
};

// name -> (rows, cols); what parse_plan validates shapes against.
using TensorManifest = std::map<std::string, std::pair<std::size_t, std::size_t>>;

TensorManifest manifest_of(const NamedTensorFile& tensors);

// Grammar: one record per line,
//   tensor=<name> a=<m1>x<n1> b=<m2>x<n2> rank=<r> perm=<on|off> iters=<k>
// `#` starts a comment, blank lines are skipped, unknown keys are ignored
// (sidecar metadata reuses this grammar with extra keys).
Result<CompressionPlan> parse_plan(const std::string& text, const TensorManifest& manifest);

std::string format_plan_entry(const PlanEntry& e);

}  // namespace permkron
