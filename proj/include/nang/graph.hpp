#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nang/rng.hpp"
#include "nang/tensor.hpp"

namespace nang {

// Undirected simple graph: symmetric binary adjacency with zero diagonal.
class Graph {
public:
    // Edges are undirected pairs; duplicates and orientation are normalized,
    // self loops are rejected.
    Graph(std::size_t node_count, const std::vector<std::pair<int, int>>& edges);

    std::size_t node_count() const { return n_; }
    std::size_t edge_count() const { return edge_count_; } // undirected
    const SparseMatrix& adjacency() const { return adjacency_; }
    std::span<const int> neighbors(int node) const;
    std::size_t degree(int node) const { return neighbors(node).size(); }

private:
    std::size_t n_;
    std::size_t edge_count_;
    SparseMatrix adjacency_;
    std::vector<int> neighbor_data_;
    std::vector<std::size_t> neighbor_offsets_;
};

enum class AttrKind { categorical, real_valued };

// Dense N x F attribute matrix. Categorical matrices are multi-hot {0,1};
// real-valued matrices only need finite entries.
class AttributeMatrix {
public:
    AttributeMatrix(std::size_t nodes, std::size_t dim, AttrKind kind,
                    std::vector<double> values);

    std::size_t nodes() const { return n_; }
    std::size_t dim() const { return f_; }
    AttrKind kind() const { return kind_; }
    double at(std::size_t node, std::size_t feature) const { return values_[node * f_ + feature]; }
    std::span<const double> row(std::size_t node) const {
        return {values_.data() + node * f_, f_};
    }
    std::span<const double> values() const { return values_; }

    Tensor to_tensor() const;
    Tensor rows_tensor(std::span<const int> ids) const;

private:
    std::size_t n_;
    std::size_t f_;
    AttrKind kind_;
    std::vector<double> values_;
};

// Disjoint partition of node ids into observed-train / observed-validation /
// unobserved-test; the union covers every node.
struct NodeSplit {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;

    void validate(std::size_t node_count) const;
    // True at observed (train or validation) node ids.
    std::vector<char> observed_mask(std::size_t node_count) const;
};

struct SplitRatios {
    double train = 0.40;
    double validation = 0.10;
    double test = 0.50;
};

struct DatasetBundle {
    Graph graph;
    AttributeMatrix attributes;
    std::optional<std::vector<int>> labels; // per-node class ids, dense from 0
    int num_classes = 0;                    // 0 when labels are absent
    NodeSplit split;
    std::string name;

    void validate() const;
};

// --- operations -------------------------------------------------------------

// Symmetric renormalization with self loops:
// A_hat = D^(-1/2) (A + I) D^(-1/2), D the degree matrix of A + I.
SparseMatrix normalize_adjacency(const Graph& g);

// Uniformly random partition with sizes floor(train*N) / floor(validation*N) /
// remainder; deterministic for a fixed rng state. Requires N >= 3.
NodeSplit split_nodes(std::size_t node_count, const SplitRatios& ratios, Rng& rng);

// (#zero entries) / (#one entries) over the given rows of a categorical
// matrix; clamped to 1.0 when there are no zeros.
double compute_pos_weight(const AttributeMatrix& attrs, std::span<const int> row_ids);

// Edge (i, j) iff counts(i, j) >= threshold and i != j; diagonal dropped.
Graph binarize_cooccurrence(const SparseMatrix& counts, double threshold = 10.0);

// Dataset directory format: `meta` (key/value header), `edges` ("i j" lines),
// `attrs` ("i f v" triplets), optional `labels` ("i c" lines) and `split`
// ("i train|valid|test" lines). UTF-8, whitespace separated, '#' comments.
// When `split` is missing the bundle is split with the given seed.
DatasetBundle load_dataset(const std::string& dir, std::uint64_t fallback_split_seed = 0);
void save_dataset(const DatasetBundle& bundle, const std::string& dir);

// Reads an "i f v" triplet file (a fragment of the attrs format) into a dense
// rows x dim matrix of the given kind.
AttributeMatrix load_attr_fragment(const std::string& path, std::size_t rows, std::size_t dim,
                                   AttrKind kind);

// Stochastic-block-model dataset with block-aligned attributes: each block
// owns attr_dim / blocks dimensions, set with probability `signal` inside the
// block and 1 - signal outside. Labels are block ids.
struct SynthSpec {
    int blocks = 3;
    int nodes_per_block = 60;
    double p_in = 0.2;
    double p_out = 0.02;
    int attr_dim = 30;
    double signal = 0.9;
};

DatasetBundle synth_dataset(const SynthSpec& spec, Rng& rng);

} // namespace nang
