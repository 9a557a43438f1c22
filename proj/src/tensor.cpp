#include "nang/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <unordered_set>

namespace nang {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

std::atomic<std::uint64_t> g_next_node_id{1};

std::shared_ptr<detail::TensorNode> make_node(std::size_t rows, std::size_t cols,
                                              std::vector<double> values, bool requires_grad) {
    auto node = std::make_shared<detail::TensorNode>();
    node->rows = rows;
    node->cols = cols;
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    if (requires_grad) node->grad.assign(node->values.size(), 0.0);
    return node;
}

double sigmoid_stable(double x) {
    if (x > 36.0) x = 36.0;
    if (x < -36.0) x = -36.0;
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
double softplus(double x) {
    if (x > 30.0) return x + std::exp(-x);
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw InvalidArgument(std::string(op) + ": undefined tensor operand");
}

} // namespace

Tensor make_op_output(std::size_t rows, std::size_t cols, std::vector<double> values,
                      std::vector<std::shared_ptr<detail::TensorNode>> parents,
                      std::function<void(detail::TensorNode&)> backward_fn) {
    bool needs_grad = false;
    for (const auto& p : parents)
        if (p->requires_grad) needs_grad = true;
    auto node = make_node(rows, cols, std::move(values), needs_grad);
    if (needs_grad) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(node);
}

// --- Tensor basics ---------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return Tensor(make_node(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
    return Tensor(make_node(rows, cols, std::vector<double>(rows * cols, value), requires_grad));
}

Tensor Tensor::from_values(std::size_t rows, std::size_t cols, std::vector<double> values,
                           bool requires_grad) {
    if (values.size() != rows * cols)
        throw ShapeError("from_values: " + std::to_string(values.size()) + " values for " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " tensor");
    return Tensor(make_node(rows, cols, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_node(1, 1, {value}, requires_grad));
}

std::size_t Tensor::rows() const { return node_ ? node_->rows : 0; }
std::size_t Tensor::cols() const { return node_ ? node_->cols : 0; }
std::size_t Tensor::size() const { return node_ ? node_->values.size() : 0; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
std::uint64_t Tensor::node_id() const { return node_ ? node_->id : 0; }

double Tensor::operator()(std::size_t i, std::size_t j) const {
    return node_->values[i * node_->cols + j];
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor is not scalar");
    return node_->values[0];
}

std::span<const double> Tensor::values() const {
    if (!node_) return {};
    return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
    require_defined(*this, "mutable_values");
    return node_->values;
}

std::span<const double> Tensor::grad() const {
    if (!node_ || !node_->requires_grad) return {};
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_ && node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    require_defined(*this, "detach");
    return Tensor(make_node(node_->rows, node_->cols, node_->values, false));
}

void Tensor::backward() const {
    require_defined(*this, "backward");
    if (size() != 1) throw InvalidArgument("backward: loss must be scalar");
    if (!node_->requires_grad) return; // constant loss, nothing reachable

    // Post-order DFS, then replay in reverse.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> visited;
    std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            detail::TensorNode* child = node->parents[next_child++].get();
            if (child->requires_grad && visited.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

// --- SparseMatrix ----------------------------------------------------------

SparseMatrix::SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<SparseEntry> entries,
                           bool symmetric)
    : n_rows_(n_rows), n_cols_(n_cols), entries_(std::move(entries)), symmetric_(symmetric) {
    for (const auto& e : entries_) {
        if (e.row < 0 || static_cast<std::size_t>(e.row) >= n_rows_ || e.col < 0 ||
            static_cast<std::size_t>(e.col) >= n_cols_)
            throw DataError("sparse entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                            ") outside " + std::to_string(n_rows_) + "x" + std::to_string(n_cols_));
        if (!std::isfinite(e.value))
            throw DataError("sparse entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                            ") has non-finite value");
    }
    std::sort(entries_.begin(), entries_.end(), [](const SparseEntry& a, const SparseEntry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        if (entries_[i].row == entries_[i - 1].row && entries_[i].col == entries_[i - 1].col)
            throw DataError("duplicate sparse entry (" + std::to_string(entries_[i].row) + "," +
                            std::to_string(entries_[i].col) + ")");
    }
    if (symmetric_) {
        if (n_rows_ != n_cols_) throw DataError("symmetric sparse matrix must be square");
        for (const auto& e : entries_) {
            SparseEntry probe{e.col, e.row, 0.0};
            auto it = std::lower_bound(entries_.begin(), entries_.end(), probe,
                                       [](const SparseEntry& a, const SparseEntry& b) {
                                           return a.row != b.row ? a.row < b.row : a.col < b.col;
                                       });
            if (it == entries_.end() || it->row != e.col || it->col != e.row || it->value != e.value)
                throw DataError("matrix flagged symmetric but entry (" + std::to_string(e.row) +
                                "," + std::to_string(e.col) + ") has no mirror");
        }
    }
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
    std::vector<SparseEntry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        entries.push_back({static_cast<int>(i), static_cast<int>(i), 1.0});
    return SparseMatrix(n, n, std::move(entries), true);
}

Tensor SparseMatrix::to_dense() const {
    std::vector<double> values(n_rows_ * n_cols_, 0.0);
    for (const auto& e : entries_) values[static_cast<std::size_t>(e.row) * n_cols_ + e.col] = e.value;
    return Tensor::from_values(n_rows_, n_cols_, std::move(values));
}

SparseMatrix SparseMatrix::submatrix(std::span<const int> ids) const {
    if (n_rows_ != n_cols_) throw InvalidArgument("submatrix: matrix must be square");
    std::vector<int> local(n_rows_, -1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= n_rows_)
            throw InvalidArgument("submatrix: id " + std::to_string(id) + " out of range");
        if (local[id] != -1) throw InvalidArgument("submatrix: duplicate id " + std::to_string(id));
        local[id] = static_cast<int>(i);
    }
    std::vector<SparseEntry> entries;
    for (const auto& e : entries_) {
        if (local[e.row] != -1 && local[e.col] != -1)
            entries.push_back({local[e.row], local[e.col], e.value});
    }
    return SparseMatrix(ids.size(), ids.size(), std::move(entries), symmetric_);
}

// --- matrix products -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n);
    {
        ECMap ma(a.values().data(), m, k);
        ECMap mb(b.values().data(), k, n);
        EMap mc(out.data(), m, n);
        mc.noalias() = ma * mb;
    }
    auto pa = a.node(), pb = b.node();
    return make_op_output(m, n, std::move(out), {pa, pb}, [m, k, n](detail::TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        ECMap g(self.grad.data(), m, n);
        if (pa->requires_grad) {
            ECMap mb(pb->values.data(), k, n);
            EMap ga(pa->grad.data(), m, k);
            ga.noalias() += g * mb.transpose();
        }
        if (pb->requires_grad) {
            ECMap ma(pa->values.data(), m, k);
            EMap gb(pb->grad.data(), k, n);
            gb.noalias() += ma.transpose() * g;
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul_nt");
    require_defined(b, "matmul_nt");
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: inner dimensions disagree (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.cols()) + ")");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    std::vector<double> out(m * n);
    {
        ECMap ma(a.values().data(), m, k);
        ECMap mb(b.values().data(), n, k);
        EMap mc(out.data(), m, n);
        mc.noalias() = ma * mb.transpose();
    }
    auto pa = a.node(), pb = b.node();
    return make_op_output(m, n, std::move(out), {pa, pb}, [m, k, n](detail::TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        ECMap g(self.grad.data(), m, n);
        if (pa->requires_grad) {
            ECMap mb(pb->values.data(), n, k);
            EMap ga(pa->grad.data(), m, k);
            ga.noalias() += g * mb;
        }
        if (pb->requires_grad) {
            ECMap ma(pa->values.data(), m, k);
            EMap gb(pb->grad.data(), n, k);
            gb.noalias() += g.transpose() * ma;
        }
    });
}

Tensor spmm(const SparseMatrix& s, const Tensor& d) {
    require_defined(d, "spmm");
    if (s.cols() != d.rows())
        throw ShapeError("spmm: inner dimensions disagree (" + std::to_string(s.cols()) + " vs " +
                         std::to_string(d.rows()) + ")");
    const std::size_t n = d.cols();
    std::vector<double> out(s.rows() * n, 0.0);
    const auto dv = d.values();
    for (const auto& e : s.entries()) {
        const double* src = dv.data() + static_cast<std::size_t>(e.col) * n;
        double* dst = out.data() + static_cast<std::size_t>(e.row) * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += e.value * src[j];
    }
    // Entries are copied into the closure: the sparse operand is constant data
    // and gradient flows to the dense side only.
    std::vector<SparseEntry> entries(s.entries().begin(), s.entries().end());
    return make_op_output(s.rows(), n, std::move(out), {d.node()},
                          [entries = std::move(entries), n](detail::TensorNode& self) {
                              auto& pd = self.parents[0];
                              if (!pd->requires_grad) return;
                              for (const auto& e : entries) {
                                  const double* g = self.grad.data() + static_cast<std::size_t>(e.row) * n;
                                  double* dst = pd->grad.data() + static_cast<std::size_t>(e.col) * n;
                                  for (std::size_t j = 0; j < n; ++j) dst[j] += e.value * g[j];
                              }
                          });
}

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined(a, "add");
    require_defined(b, "add");
    const bool broadcast = b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
    if (!broadcast) require_same_shape(a, b, "add");
    const std::size_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.values().begin(), a.values().end());
    const auto bv = b.values();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bv[broadcast ? j : i * cols + j];
    return make_op_output(rows, cols, std::move(out), {a.node(), b.node()},
                          [rows, cols, broadcast](detail::TensorNode& self) {
                              auto& pa = self.parents[0];
                              auto& pb = self.parents[1];
                              if (pa->requires_grad)
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      pa->grad[i] += self.grad[i];
                              if (pb->requires_grad) {
                                  if (broadcast) {
                                      for (std::size_t i = 0; i < rows; ++i)
                                          for (std::size_t j = 0; j < cols; ++j)
                                              pb->grad[j] += self.grad[i * cols + j];
                                  } else {
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          pb->grad[i] += self.grad[i];
                                  }
                              }
                          });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_defined(a, "sub");
    require_defined(b, "sub");
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return make_op_output(a.rows(), a.cols(), std::move(out), {a.node(), b.node()},
                          [](detail::TensorNode& self) {
                              auto& pa = self.parents[0];
                              auto& pb = self.parents[1];
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                  if (pa->requires_grad) pa->grad[i] += self.grad[i];
                                  if (pb->requires_grad) pb->grad[i] -= self.grad[i];
                              }
                          });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_defined(a, "hadamard");
    require_defined(b, "hadamard");
    require_same_shape(a, b, "hadamard");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_op_output(a.rows(), a.cols(), std::move(out), {a.node(), b.node()},
                          [](detail::TensorNode& self) {
                              auto& pa = self.parents[0];
                              auto& pb = self.parents[1];
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                  if (pa->requires_grad) pa->grad[i] += self.grad[i] * pb->values[i];
                                  if (pb->requires_grad) pb->grad[i] += self.grad[i] * pa->values[i];
                              }
                          });
}

Tensor scale(const Tensor& a, double k) {
    require_defined(a, "scale");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * a.values()[i];
    return make_op_output(a.rows(), a.cols(), std::move(out), {a.node()},
                          [k](detail::TensorNode& self) {
                              auto& pa = self.parents[0];
                              if (!pa->requires_grad) return;
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pa->grad[i] += k * self.grad[i];
                          });
}

Tensor vexp(const Tensor& a) {
    require_defined(a, "vexp");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
    return make_op_output(a.rows(), a.cols(), std::move(out), {a.node()},
                          [](detail::TensorNode& self) {
                              auto& pa = self.parents[0];
                              if (!pa->requires_grad) return;
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  pa->grad[i] += self.grad[i] * self.values[i];
                          });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    require_defined(a, "clamp");
    if (!(lo <= hi)) throw InvalidArgument("clamp: lo must not exceed hi");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.values()[i], lo, hi);
    return make_op_output(a.rows(), a.cols(), std::move(out), {a.node()},
                          [lo, hi](detail::TensorNode& self) {
                              auto& pa = self.parents[0];
                              if (!pa->requires_grad) return;
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                  double v = pa->values[i];
                                  if (v >= lo && v <= hi) pa->grad[i] += self.grad[i];
                              }
                          });
}

Tensor activate(const Tensor& x, Activation kind) {
    return kind == Activation::relu ? relu(x) : sigmoid(x);
}

Tensor relu(const Tensor& x) {
    require_defined(x, "relu");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    return make_op_output(x.rows(), x.cols(), std::move(out), {x.node()},
                          [](detail::TensorNode& self) {
                              auto& px = self.parents[0];
                              if (!px->requires_grad) return;
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  if (px->values[i] > 0.0) px->grad[i] += self.grad[i];
                          });
}

Tensor sigmoid(const Tensor& x) {
    require_defined(x, "sigmoid");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_stable(x.values()[i]);
    return make_op_output(x.rows(), x.cols(), std::move(out), {x.node()},
                          [](detail::TensorNode& self) {
                              auto& px = self.parents[0];
                              if (!px->requires_grad) return;
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                  double s = self.values[i];
                                  px->grad[i] += self.grad[i] * s * (1.0 - s);
                              }
                          });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    require_defined(x, "dropout");
    if (p < 0.0 || p >= 1.0)
        throw InvalidArgument("dropout: probability must lie in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
    return make_op_output(x.rows(), x.cols(), std::move(out), {x.node()},
                          [mask = std::move(mask)](detail::TensorNode& self) {
                              auto& px = self.parents[0];
                              if (!px->requires_grad) return;
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  px->grad[i] += self.grad[i] * mask[i];
                          });
}

Tensor row_gather(const Tensor& x, std::span<const int> ids) {
    require_defined(x, "row_gather");
    const std::size_t cols = x.cols();
    std::vector<double> out(ids.size() * cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= x.rows())
            throw InvalidArgument("row_gather: row id " + std::to_string(id) + " out of range");
        std::copy_n(x.values().data() + static_cast<std::size_t>(id) * cols, cols,
                    out.data() + i * cols);
    }
    std::vector<int> ids_copy(ids.begin(), ids.end());
    return make_op_output(ids.size(), cols, std::move(out), {x.node()},
                          [ids = std::move(ids_copy), cols](detail::TensorNode& self) {
                              auto& px = self.parents[0];
                              if (!px->requires_grad) return;
                              for (std::size_t i = 0; i < ids.size(); ++i) {
                                  double* dst = px->grad.data() + static_cast<std::size_t>(ids[i]) * cols;
                                  const double* g = self.grad.data() + i * cols;
                                  for (std::size_t j = 0; j < cols; ++j) dst[j] += g[j];
                              }
                          });
}

// --- losses -----------------------------------------------------------------

namespace {

constexpr double kBceLogitClip = 30.0;

Tensor bce_impl(const Tensor& logits, const Tensor& targets, std::span<const double> mask,
                double pos_weight) {
    require_defined(logits, "weighted_bce_with_logits");
    require_defined(targets, "weighted_bce_with_logits");
    require_same_shape(logits, targets, "weighted_bce_with_logits");
    if (pos_weight < 0.0) throw InvalidArgument("weighted_bce_with_logits: pos_weight must be >= 0");
    if (!mask.empty() && mask.size() != logits.size())
        throw ShapeError("weighted_bce_with_logits: mask size mismatch");

    const auto lv = logits.values();
    const auto tv = targets.values();
    double count = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        if (!mask.empty() && mask[i] == 0.0) continue;
        double y = tv[i];
        if (y != 0.0 && y != 1.0)
            throw InvalidArgument("weighted_bce_with_logits: targets must be 0 or 1");
        double l = std::clamp(lv[i], -kBceLogitClip, kBceLogitClip);
        total += pos_weight * y * softplus(-l) + (1.0 - y) * softplus(l);
        count += 1.0;
    }
    if (count == 0.0) throw InvalidArgument("weighted_bce_with_logits: no unmasked elements");

    std::vector<double> mask_copy(mask.begin(), mask.end());
    return make_op_output(
        1, 1, {total / count}, {logits.node(), targets.node()},
        [mask = std::move(mask_copy), pos_weight, count](detail::TensorNode& self) {
            auto& pl = self.parents[0];
            if (!pl->requires_grad) return; // targets are constant data
            const double g = self.grad[0] / count;
            for (std::size_t i = 0; i < pl->values.size(); ++i) {
                if (!mask.empty() && mask[i] == 0.0) continue;
                double raw = pl->values[i];
                if (raw < -kBceLogitClip || raw > kBceLogitClip) continue; // clipped flat
                double y = self.parents[1]->values[i];
                double s = sigmoid_stable(raw);
                pl->grad[i] += g * ((1.0 - y) * s - pos_weight * y * (1.0 - s));
            }
        });
}

} // namespace

Tensor weighted_bce_with_logits(const Tensor& logits, const Tensor& targets, double pos_weight) {
    return bce_impl(logits, targets, {}, pos_weight);
}

Tensor weighted_bce_with_logits_masked(const Tensor& logits, const Tensor& targets,
                                       std::span<const double> mask, double pos_weight) {
    return bce_impl(logits, targets, mask, pos_weight);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_defined(pred, "mse_loss");
    require_defined(target, "mse_loss");
    require_same_shape(pred, target, "mse_loss");
    const double n = static_cast<double>(pred.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred.values()[i] - target.values()[i];
        total += d * d;
    }
    return make_op_output(1, 1, {total / n}, {pred.node(), target.node()},
                          [n](detail::TensorNode& self) {
                              auto& pp = self.parents[0];
                              auto& pt = self.parents[1];
                              const double g = self.grad[0];
                              for (std::size_t i = 0; i < pp->values.size(); ++i) {
                                  double d = 2.0 * (pp->values[i] - pt->values[i]) / n;
                                  if (pp->requires_grad) pp->grad[i] += g * d;
                                  if (pt->requires_grad) pt->grad[i] -= g * d;
                              }
                          });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_defined(logits, "cross_entropy");
    if (labels.size() != logits.rows())
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    const std::size_t rows = logits.rows(), cols = logits.cols();
    const auto lv = logits.values();
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= cols)
            throw InvalidArgument("cross_entropy: label " + std::to_string(y) + " out of range");
        const double* row = lv.data() + i * cols;
        double mx = *std::max_element(row, row + cols);
        double lse = 0.0;
        for (std::size_t j = 0; j < cols; ++j) lse += std::exp(row[j] - mx);
        total += mx + std::log(lse) - row[y];
    }
    std::vector<int> labels_copy(labels.begin(), labels.end());
    return make_op_output(1, 1, {total / static_cast<double>(rows)}, {logits.node()},
                          [labels = std::move(labels_copy), rows, cols](detail::TensorNode& self) {
                              auto& pl = self.parents[0];
                              if (!pl->requires_grad) return;
                              const double g = self.grad[0] / static_cast<double>(rows);
                              for (std::size_t i = 0; i < rows; ++i) {
                                  const double* row = pl->values.data() + i * cols;
                                  double mx = *std::max_element(row, row + cols);
                                  double z = 0.0;
                                  for (std::size_t j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
                                  for (std::size_t j = 0; j < cols; ++j) {
                                      double p = std::exp(row[j] - mx) / z;
                                      double onehot = (static_cast<int>(j) == labels[i]) ? 1.0 : 0.0;
                                      pl->grad[i * cols + j] += g * (p - onehot);
                                  }
                              }
                          });
}

Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar) {
    require_defined(mu, "kl_standard_normal");
    require_defined(logvar, "kl_standard_normal");
    require_same_shape(mu, logvar, "kl_standard_normal");
    const double n_rows = static_cast<double>(mu.rows());
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        double m = mu.values()[i];
        double lv = logvar.values()[i];
        total += m * m + std::exp(lv) - 1.0 - lv;
    }
    return make_op_output(1, 1, {0.5 * total / n_rows}, {mu.node(), logvar.node()},
                          [n_rows](detail::TensorNode& self) {
                              auto& pm = self.parents[0];
                              auto& pv = self.parents[1];
                              const double g = self.grad[0] / n_rows;
                              for (std::size_t i = 0; i < pm->values.size(); ++i) {
                                  if (pm->requires_grad) pm->grad[i] += g * pm->values[i];
                                  if (pv->requires_grad)
                                      pv->grad[i] += g * 0.5 * (std::exp(pv->values[i]) - 1.0);
                              }
                          });
}

// --- initialization ---------------------------------------------------------

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad) {
    if (fan_in < 1 || fan_out < 1) throw InvalidArgument("glorot_init: fans must be >= 1");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> values(fan_in * fan_out);
    for (auto& v : values) v = rng.uniform(-limit, limit);
    return Tensor::from_values(fan_in, fan_out, std::move(values), requires_grad);
}

Tensor sample_gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> values(rows * cols);
    for (auto& v : values) v = rng.gaussian();
    return Tensor::from_values(rows, cols, std::move(values), false);
}

// --- Adam --------------------------------------------------------------------

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size())
        throw ShapeError("adam_step: parameter/gradient size mismatch");
    if (state.learning_rate <= 0.0) throw InvalidArgument("adam_step: learning rate must be > 0");
    if (state.first_moment.empty()) {
        state.first_moment.assign(params.size(), 0.0);
        state.second_moment.assign(params.size(), 0.0);
    }
    if (state.first_moment.size() != params.size())
        throw ShapeError("adam_step: moment buffers shaped unlike parameters");
    for (double g : grads)
        if (!std::isfinite(g)) throw TrainingDiverged("adam_step: non-finite gradient");

    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        double m_hat = state.first_moment[i] / bc1;
        double v_hat = state.second_moment[i] / bc2;
        params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

Adam::Adam(std::vector<Tensor> params, double learning_rate) : params_(std::move(params)) {
    if (learning_rate <= 0.0) throw InvalidArgument("Adam: learning rate must be > 0");
    for (const auto& p : params_)
        if (!p.requires_grad()) throw InvalidArgument("Adam: all parameters must require grad");
    states_.resize(params_.size());
    for (auto& s : states_) s.learning_rate = learning_rate;
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto g = params_[i].grad();
        adam_step(params_[i].mutable_values(), g, states_[i]);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

long Adam::step_count() const { return states_.empty() ? 0 : states_[0].step_count; }

} // namespace nang
