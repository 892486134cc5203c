#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "permkron/errors.hpp"
#include "permkron/optimizer.hpp"
#include "permkron/tensor_store.hpp"

namespace permkron {

struct ReportRecord {
    std::string tensor;
    std::size_t m = 0, n = 0;           // original shape
    std::size_t m1 = 0, n1 = 0, m2 = 0, n2 = 0;
    std::size_t rank = 0;
    bool perm = false;
    double abs_residual = 0.0;
    double rel_residual = 0.0;          // abs / ||W||_F, 0 for a zero matrix
    std::uint64_t params_before = 0;
    std::uint64_t params_after = 0;
    std::size_t iters = 0;              // alternation iterations recorded
    double seconds = 0.0;               // wall time of the decomposition
};

struct RunReport {
    std::vector<ReportRecord> records;
};

inline constexpr const char* kReportCsvHeader =
    "tensor,m,n,m1,n1,m2,n2,rank,perm,abs_residual,rel_residual,params_before,params_after,iters,seconds";

// Reals print with enough digits that parsing the CSV back reproduces the
// exact double values. Names may not contain commas or line breaks.
Result<std::string> report_to_csv(const RunReport& report);
Result<RunReport> report_from_csv(const std::string& text);

// Factors and permutations of one decomposition as named tensors:
// <t>.A.<i>, <t>.B.<i>, plus <t>.P and <t>.C when permutations are on.
Result<void> append_decomposition(NamedTensorFile& file, const std::string& tensor,
                                  const PermutedKronDecomposition& d);
Result<PermutedKronDecomposition> extract_decomposition(const NamedTensorFile& file, const std::string& tensor);

// Base names (<t> above) present in a compressed file, in first-seen order.
std::vector<std::string> decomposition_names(const NamedTensorFile& file);

// Sidecar metadata reuses the plan grammar with extra keys
// (m, n, abs_residual, rel_residual, seconds); parse_plan skips those, so a
// sidecar doubles as a plan for the file it describes.
std::string format_sidecar(const std::vector<ReportRecord>& records);
Result<std::vector<ReportRecord>> parse_sidecar(const std::string& text);

}  // namespace permkron
