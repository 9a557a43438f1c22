#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nang/errors.hpp"
#include "nang/rng.hpp"

namespace nang {

// Reverse-mode automatic differentiation over dense 2-D double tensors,
// plus the sparse adjacency operand used by graph convolutions. A Tensor is
// a cheap shared handle onto a tape node; operations build the tape and
// backward() replays it in reverse topological order.

namespace detail {
struct TensorNode;
} // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
    static Tensor from_values(std::size_t rows, std::size_t cols, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const;
    std::size_t cols() const;
    std::size_t size() const;
    bool requires_grad() const;
    std::uint64_t node_id() const;

    double operator()(std::size_t i, std::size_t j) const;
    double item() const; // scalar tensors only

    std::span<const double> values() const;
    // Direct write access to the value buffer (optimizer updates, tests).
    std::vector<double>& mutable_values();

    // Gradient buffer; empty span when the tensor does not carry gradient.
    std::span<const double> grad() const;
    void zero_grad();

    // Populates gradients on every requires-grad ancestor. The tensor must be
    // scalar. Gradients accumulate; callers zero parameter grads between steps.
    void backward() const;

    // Same values, cut off from the tape, never accumulates gradient.
    Tensor detach() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op_output(std::size_t, std::size_t, std::vector<double>,
                                 std::vector<std::shared_ptr<detail::TensorNode>>,
                                 std::function<void(detail::TensorNode&)>);
};

namespace detail {
struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<double> grad; // sized like values iff requires_grad
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Pushes this node's grad into its parents' grad buffers.
    std::function<void(TensorNode&)> backward_fn;
};
} // namespace detail

// Static sparse operand in sorted COO form. Values never receive gradient;
// adjacency structure is data, not a parameter.
struct SparseEntry {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

class SparseMatrix {
public:
    SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<SparseEntry> entries,
                 bool symmetric = false);

    static SparseMatrix identity(std::size_t n);

    std::size_t rows() const { return n_rows_; }
    std::size_t cols() const { return n_cols_; }
    std::size_t nnz() const { return entries_.size(); }
    bool symmetric() const { return symmetric_; }
    std::span<const SparseEntry> entries() const { return entries_; }

    // Dense copy (no gradient); used for loss targets and test oracles.
    Tensor to_dense() const;

    // Induced square submatrix on the given node ids, in their given order.
    SparseMatrix submatrix(std::span<const int> ids) const;

private:
    std::size_t n_rows_;
    std::size_t n_cols_;
    std::vector<SparseEntry> entries_;
    bool symmetric_;
};

enum class Activation { relu, sigmoid };

// --- differentiable operations ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor spmm(const SparseMatrix& s, const Tensor& d);

// Elementwise; b may also be a 1 x cols row vector broadcast over rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
Tensor vexp(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor activate(const Tensor& x, Activation kind);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Inverted dropout: zero with probability p, scale survivors by 1/(1-p) at
// train time; identity when training is off. Backward reuses the mask.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// Rows of x at the given ids, in order; duplicate ids accumulate gradient.
Tensor row_gather(const Tensor& x, std::span<const int> ids);

// Mean over elements of -[w*y*log(sigmoid(l)) + (1-y)*log(1-sigmoid(l))],
// computed in the log-sum-exp form; logits are clipped to +/-30 so the
// perfect-fit limit stays finite. Targets must be 0/1.
Tensor weighted_bce_with_logits(const Tensor& logits, const Tensor& targets, double pos_weight);
// Same, restricted to elements where mask is nonzero (mask is constant data).
Tensor weighted_bce_with_logits_masked(const Tensor& logits, const Tensor& targets,
                                       std::span<const double> mask, double pos_weight);

Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Mean over rows of -log softmax(logits)[row, label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Mean over rows of 0.5 * sum_d (mu^2 + exp(logvar) - 1 - logvar):
// KL(N(mu, sigma^2) || N(0, I)) for a diagonal Gaussian posterior.
Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar);

// --- initialization and sampling ----------------------------------------

// Uniform in +/- sqrt(6 / (fan_in + fan_out)).
Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad = true);
// I.i.d. standard normal entries, no gradient.
Tensor sample_gaussian(std::size_t rows, std::size_t cols, Rng& rng);

// --- optimizer ------------------------------------------------------------

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    long step_count = 0;
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One Adam update with bias correction; throws TrainingDiverged on a
// non-finite gradient. Moment buffers are allocated on first use.
void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state);

// Convenience wrapper stepping a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Tensor> params, double learning_rate);
    void step();
    void zero_grad();
    long step_count() const;

private:
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
};

} // namespace nang
