#pragma once

#include <optional>
#include <span>

#include "nang/tensor.hpp"

namespace nang {

// Top-k ranking metrics over one node's attribute scores against binary
// truth. Ties are broken by ascending dimension index. Nodes whose truth is
// all-zero cannot be scored and yield nullopt (callers skip them in averages).

std::optional<double> recall_at_k(std::span<const double> scores, std::span<const double> truth,
                                  int k);

std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const double> truth,
                                int k);

// Mean Recall@k over the rows of a score matrix against row-aligned binary
// truth; rows with all-zero truth are skipped (0.0 if every row is skipped).
double mean_recall_at_k(const Tensor& scores, const Tensor& truth, int k);

// Square root of the biased MMD^2 statistic with an RBF kernel. The kernel
// bandwidth is the median pairwise distance over the pooled sample (falls
// back to 1.0 when all pooled points coincide). Needs >= 2 rows per side.
double mmd_rbf(const Tensor& sample_a, const Tensor& sample_b);

} // namespace nang
