#include "nang/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "nang/errors.hpp"

namespace nang {

namespace {

// Indices of the k highest scores, ties resolved toward the lower index.
std::vector<int> top_k_indices(std::span<const double> scores, int k) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(k);
    return idx;
}

std::size_t validate_ranking_args(std::span<const double> scores, std::span<const double> truth,
                                  int k) {
    if (scores.size() != truth.size())
        throw ShapeError("ranking metric: scores and truth lengths differ");
    if (k < 1 || static_cast<std::size_t>(k) > scores.size())
        throw InvalidArgument("ranking metric: k = " + std::to_string(k) +
                              " outside [1, " + std::to_string(scores.size()) + "]");
    std::size_t nnz = 0;
    for (double t : truth) {
        if (t != 0.0 && t != 1.0)
            throw InvalidArgument("ranking metric: truth must be binary");
        if (t != 0.0) ++nnz;
    }
    return nnz;
}

} // namespace

std::optional<double> recall_at_k(std::span<const double> scores, std::span<const double> truth,
                                  int k) {
    const std::size_t nnz = validate_ranking_args(scores, truth, k);
    if (nnz == 0) return std::nullopt;
    std::size_t hits = 0;
    for (int i : top_k_indices(scores, k))
        if (truth[i] != 0.0) ++hits;
    return static_cast<double>(hits) / static_cast<double>(nnz);
}

std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const double> truth,
                                int k) {
    const std::size_t nnz = validate_ranking_args(scores, truth, k);
    if (nnz == 0) return std::nullopt;
    double dcg = 0.0;
    const auto ranked = top_k_indices(scores, k);
    for (std::size_t pos = 0; pos < ranked.size(); ++pos)
        if (truth[ranked[pos]] != 0.0) dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    double idcg = 0.0;
    const std::size_t ideal = std::min<std::size_t>(k, nnz);
    for (std::size_t pos = 0; pos < ideal; ++pos)
        idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
    return dcg / idcg;
}

double mean_recall_at_k(const Tensor& scores, const Tensor& truth, int k) {
    if (scores.rows() != truth.rows() || scores.cols() != truth.cols())
        throw ShapeError("mean_recall_at_k: scores and truth shapes differ");
    const std::size_t cols = scores.cols();
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        std::span<const double> s{scores.values().data() + i * cols, cols};
        std::span<const double> t{truth.values().data() + i * cols, cols};
        if (auto r = recall_at_k(s, t, k)) {
            total += *r;
            ++counted;
        }
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double mmd_rbf(const Tensor& sample_a, const Tensor& sample_b) {
    const std::size_t n = sample_a.rows(), m = sample_b.rows();
    if (n < 2 || m < 2) throw InvalidArgument("mmd_rbf: need at least 2 rows per sample");
    if (sample_a.cols() != sample_b.cols())
        throw ShapeError("mmd_rbf: sample dimensions differ");
    const std::size_t d = sample_a.cols();
    const std::size_t p = n + m;

    // Pool rows, then compute the full squared-distance matrix once.
    std::vector<const double*> rows(p);
    for (std::size_t i = 0; i < n; ++i) rows[i] = sample_a.values().data() + i * d;
    for (std::size_t j = 0; j < m; ++j) rows[n + j] = sample_b.values().data() + j * d;

    std::vector<double> sq_dist(p * p, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                double diff = rows[i][c] - rows[j][c];
                s += diff * diff;
            }
            sq_dist[i * p + j] = s;
            sq_dist[j * p + i] = s;
        }

    // Median heuristic: bandwidth = median pairwise distance of the pooled
    // sample, i.e. sigma^2 = median of the squared distances.
    std::vector<double> off_diag;
    off_diag.reserve(p * (p - 1) / 2);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) off_diag.push_back(sq_dist[i * p + j]);
    auto mid = off_diag.begin() + off_diag.size() / 2;
    std::nth_element(off_diag.begin(), mid, off_diag.end());
    double sigma_sq = *mid;
    if (sigma_sq <= 0.0) sigma_sq = 1.0; // all pooled points coincide

    auto kernel_mean = [&](std::size_t row0, std::size_t rows_count, std::size_t col0,
                           std::size_t cols_count) {
        double total = 0.0;
        for (std::size_t i = 0; i < rows_count; ++i)
            for (std::size_t j = 0; j < cols_count; ++j)
                total += std::exp(-sq_dist[(row0 + i) * p + (col0 + j)] / (2.0 * sigma_sq));
        return total / (static_cast<double>(rows_count) * static_cast<double>(cols_count));
    };

    double mmd_sq = kernel_mean(0, n, 0, n) + kernel_mean(n, m, n, m) - 2.0 * kernel_mean(0, n, n, m);
    return std::sqrt(std::max(mmd_sq, 0.0));
}

} // namespace nang
