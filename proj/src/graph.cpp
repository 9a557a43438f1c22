#include "nang/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nang/errors.hpp"

namespace nang {

namespace {

std::vector<SparseEntry> symmetric_entries(const std::set<std::pair<int, int>>& undirected) {
    std::vector<SparseEntry> entries;
    entries.reserve(undirected.size() * 2);
    for (auto [i, j] : undirected) {
        entries.push_back({i, j, 1.0});
        entries.push_back({j, i, 1.0});
    }
    return entries;
}

} // namespace

// --- Graph -------------------------------------------------------------------

Graph::Graph(std::size_t node_count, const std::vector<std::pair<int, int>>& edges)
    : n_(node_count),
      edge_count_(0),
      adjacency_(0, 0, {}) {
    std::set<std::pair<int, int>> undirected;
    for (auto [a, b] : edges) {
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_ ||
            static_cast<std::size_t>(b) >= n_)
            throw DataError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                            ") out of range for " + std::to_string(n_) + " nodes");
        if (a == b) throw DataError("self loop at node " + std::to_string(a));
        undirected.insert({std::min(a, b), std::max(a, b)});
    }
    edge_count_ = undirected.size();
    adjacency_ = SparseMatrix(n_, n_, symmetric_entries(undirected), true);

    std::vector<std::vector<int>> adj(n_);
    for (auto [i, j] : undirected) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    neighbor_offsets_.assign(n_ + 1, 0);
    for (std::size_t i = 0; i < n_; ++i) {
        std::sort(adj[i].begin(), adj[i].end());
        neighbor_offsets_[i + 1] = neighbor_offsets_[i] + adj[i].size();
    }
    neighbor_data_.reserve(neighbor_offsets_[n_]);
    for (const auto& list : adj) neighbor_data_.insert(neighbor_data_.end(), list.begin(), list.end());
}

std::span<const int> Graph::neighbors(int node) const {
    if (node < 0 || static_cast<std::size_t>(node) >= n_)
        throw InvalidArgument("neighbors: node " + std::to_string(node) + " out of range");
    return {neighbor_data_.data() + neighbor_offsets_[node],
            neighbor_offsets_[node + 1] - neighbor_offsets_[node]};
}

// --- AttributeMatrix ----------------------------------------------------------

AttributeMatrix::AttributeMatrix(std::size_t nodes, std::size_t dim, AttrKind kind,
                                 std::vector<double> values)
    : n_(nodes), f_(dim), kind_(kind), values_(std::move(values)) {
    if (values_.size() != n_ * f_)
        throw DataError("attribute matrix: " + std::to_string(values_.size()) + " values for " +
                        std::to_string(n_) + "x" + std::to_string(f_));
    for (std::size_t i = 0; i < values_.size(); ++i) {
        double v = values_[i];
        if (kind_ == AttrKind::categorical) {
            if (v != 0.0 && v != 1.0)
                throw DataError("categorical attribute value " + std::to_string(v) + " at node " +
                                std::to_string(i / f_) + ", dim " + std::to_string(i % f_) +
                                " is not 0/1");
        } else if (!std::isfinite(v)) {
            throw DataError("non-finite attribute value at node " + std::to_string(i / f_));
        }
    }
}

Tensor AttributeMatrix::to_tensor() const {
    return Tensor::from_values(n_, f_, std::vector<double>(values_.begin(), values_.end()));
}

Tensor AttributeMatrix::rows_tensor(std::span<const int> ids) const {
    std::vector<double> out(ids.size() * f_);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= n_)
            throw InvalidArgument("rows_tensor: node " + std::to_string(id) + " out of range");
        std::copy_n(values_.data() + static_cast<std::size_t>(id) * f_, f_, out.data() + i * f_);
    }
    return Tensor::from_values(ids.size(), f_, std::move(out));
}

// --- NodeSplit ------------------------------------------------------------------

void NodeSplit::validate(std::size_t node_count) const {
    std::vector<int> seen(node_count, 0);
    auto mark = [&](std::span<const int> part, const char* name) {
        for (int id : part) {
            if (id < 0 || static_cast<std::size_t>(id) >= node_count)
                throw DataError(std::string("split: ") + name + " id " + std::to_string(id) +
                                " out of range");
            if (seen[id]++)
                throw DataError("split: node " + std::to_string(id) + " assigned twice");
        }
    };
    mark(train, "train");
    mark(validation, "validation");
    mark(test, "test");
    if (train.size() + validation.size() + test.size() != node_count)
        throw DataError("split does not cover all nodes");
}

std::vector<char> NodeSplit::observed_mask(std::size_t node_count) const {
    std::vector<char> mask(node_count, 0);
    for (int id : train) mask[id] = 1;
    for (int id : validation) mask[id] = 1;
    return mask;
}

void DatasetBundle::validate() const {
    const std::size_t n = graph.node_count();
    if (attributes.nodes() != n)
        throw DataError("attribute matrix has " + std::to_string(attributes.nodes()) +
                        " rows for " + std::to_string(n) + " nodes");
    split.validate(n);
    if (labels) {
        if (labels->size() != n) throw DataError("label count does not equal node count");
        std::vector<char> present(static_cast<std::size_t>(num_classes), 0);
        for (int c : *labels) {
            if (c < 0 || c >= num_classes)
                throw DataError("label " + std::to_string(c) + " outside [0, " +
                                std::to_string(num_classes) + ")");
            present[c] = 1;
        }
        for (int c = 0; c < num_classes; ++c)
            if (!present[c]) throw DataError("class " + std::to_string(c) + " has no nodes");
    } else if (num_classes != 0) {
        throw DataError("num_classes set without labels");
    }
}

// --- adjacency normalization ------------------------------------------------------

SparseMatrix normalize_adjacency(const Graph& g) {
    const std::size_t n = g.node_count();
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i)
        inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(static_cast<int>(i)) + 1));

    std::vector<SparseEntry> entries;
    entries.reserve(g.adjacency().nnz() + n);
    for (const auto& e : g.adjacency().entries())
        entries.push_back({e.row, e.col, inv_sqrt_deg[e.row] * inv_sqrt_deg[e.col]});
    for (std::size_t i = 0; i < n; ++i) {
        int ii = static_cast<int>(i);
        entries.push_back({ii, ii, inv_sqrt_deg[i] * inv_sqrt_deg[i]});
    }
    return SparseMatrix(n, n, std::move(entries), true);
}

// --- node splitting -----------------------------------------------------------------

NodeSplit split_nodes(std::size_t node_count, const SplitRatios& ratios, Rng& rng) {
    if (node_count < 3) throw InvalidArgument("split_nodes: need at least 3 nodes");
    if (ratios.train <= 0.0 || ratios.validation <= 0.0 || ratios.test <= 0.0)
        throw InvalidArgument("split_nodes: all ratios must be positive");
    if (std::fabs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
        throw InvalidArgument("split_nodes: ratios must sum to 1");

    std::vector<int> ids(node_count);
    for (std::size_t i = 0; i < node_count; ++i) ids[i] = static_cast<int>(i);
    rng.shuffle(ids);

    const auto n_train = static_cast<std::size_t>(ratios.train * static_cast<double>(node_count));
    const auto n_valid =
        static_cast<std::size_t>(ratios.validation * static_cast<double>(node_count));

    NodeSplit split;
    split.train.assign(ids.begin(), ids.begin() + n_train);
    split.validation.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
    split.test.assign(ids.begin() + n_train + n_valid, ids.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    split.validate(node_count);
    return split;
}

// --- class-imbalance weight -----------------------------------------------------------

double compute_pos_weight(const AttributeMatrix& attrs, std::span<const int> row_ids) {
    if (attrs.kind() != AttrKind::categorical)
        throw InvalidArgument("compute_pos_weight: attributes must be categorical");
    std::size_t ones = 0, zeros = 0;
    for (int id : row_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= attrs.nodes())
            throw InvalidArgument("compute_pos_weight: node " + std::to_string(id) +
                                  " out of range");
        for (double v : attrs.row(static_cast<std::size_t>(id)))
            (v == 1.0 ? ones : zeros)++;
    }
    if (ones == 0) throw DataError("compute_pos_weight: training rows contain no nonzero entry");
    if (zeros == 0) return 1.0;
    return static_cast<double>(zeros) / static_cast<double>(ones);
}

// --- co-purchase binarization ------------------------------------------------------------

Graph binarize_cooccurrence(const SparseMatrix& counts, double threshold) {
    if (counts.rows() != counts.cols()) throw DataError("binarize_cooccurrence: counts not square");
    // Validate symmetry and non-negativity; the input may or may not carry the
    // symmetric flag, so check entry pairs directly.
    std::map<std::pair<int, int>, double> index;
    for (const auto& e : counts.entries()) {
        if (e.value < 0.0) throw DataError("binarize_cooccurrence: negative count");
        index[{e.row, e.col}] = e.value;
    }
    for (const auto& [key, value] : index) {
        auto mirror = index.find({key.second, key.first});
        if (mirror == index.end() || mirror->second != value)
            throw DataError("binarize_cooccurrence: counts matrix is not symmetric at (" +
                            std::to_string(key.first) + "," + std::to_string(key.second) + ")");
    }
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : counts.entries())
        if (e.row < e.col && e.value >= threshold) edges.push_back({e.row, e.col});
    return Graph(counts.rows(), edges);
}

// --- dataset files ---------------------------------------------------------------------------

namespace {

struct Line {
    std::vector<std::string> tokens;
    std::size_t number = 0;
};

std::vector<Line> read_token_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<Line> lines;
    std::string raw;
    std::size_t number = 0;
    while (std::getline(in, raw)) {
        ++number;
        std::istringstream ss(raw);
        Line line;
        line.number = number;
        std::string tok;
        while (ss >> tok) {
            if (tok[0] == '#') break;
            line.tokens.push_back(tok);
        }
        if (!line.tokens.empty()) lines.push_back(std::move(line));
    }
    return lines;
}

long parse_long(const std::string& tok, const std::string& path, std::size_t line) {
    try {
        std::size_t pos = 0;
        long v = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line) + ": expected integer, got '" + tok + "'");
    }
}

double parse_double(const std::string& tok, const std::string& path, std::size_t line) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line) + ": expected number, got '" + tok + "'");
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

AttributeMatrix load_attr_fragment(const std::string& path, std::size_t rows, std::size_t dim,
                                   AttrKind kind) {
    std::vector<double> values(rows * dim, 0.0);
    for (const auto& line : read_token_lines(path)) {
        if (line.tokens.size() != 3)
            throw DataError(path + ":" + std::to_string(line.number) +
                            ": expected 'node dim value' triplet");
        long i = parse_long(line.tokens[0], path, line.number);
        long f = parse_long(line.tokens[1], path, line.number);
        double v = parse_double(line.tokens[2], path, line.number);
        if (i < 0 || static_cast<std::size_t>(i) >= rows || f < 0 ||
            static_cast<std::size_t>(f) >= dim)
            throw DataError(path + ":" + std::to_string(line.number) + ": index out of range");
        values[static_cast<std::size_t>(i) * dim + static_cast<std::size_t>(f)] = v;
    }
    return AttributeMatrix(rows, dim, kind, std::move(values));
}

DatasetBundle load_dataset(const std::string& dir, std::uint64_t fallback_split_seed) {
    namespace fs = std::filesystem;
    const std::string meta_path = dir + "/meta";

    std::size_t n = 0, f = 0;
    int classes = 0;
    std::string name = fs::path(dir).filename().string();
    std::optional<AttrKind> kind;
    for (const auto& line : read_token_lines(meta_path)) {
        if (line.tokens.size() != 2)
            throw DataError(meta_path + ":" + std::to_string(line.number) +
                            ": expected 'key value'");
        const std::string& key = line.tokens[0];
        const std::string& value = line.tokens[1];
        if (key == "nodes") {
            n = static_cast<std::size_t>(parse_long(value, meta_path, line.number));
        } else if (key == "attr_dim") {
            f = static_cast<std::size_t>(parse_long(value, meta_path, line.number));
        } else if (key == "attr_kind") {
            if (value == "categorical") kind = AttrKind::categorical;
            else if (value == "real") kind = AttrKind::real_valued;
            else
                throw DataError(meta_path + ":" + std::to_string(line.number) +
                                ": attr_kind must be 'categorical' or 'real'");
        } else if (key == "classes") {
            classes = static_cast<int>(parse_long(value, meta_path, line.number));
        } else if (key == "name") {
            name = value;
        } else {
            throw DataError(meta_path + ":" + std::to_string(line.number) + ": unknown key '" +
                            key + "'");
        }
    }
    if (n == 0 || f == 0 || !kind)
        throw DataError(meta_path + ": header must set nodes, attr_dim and attr_kind");

    const std::string edges_path = dir + "/edges";
    std::vector<std::pair<int, int>> edges;
    if (fs::exists(edges_path)) {
        for (const auto& line : read_token_lines(edges_path)) {
            if (line.tokens.size() != 2)
                throw DataError(edges_path + ":" + std::to_string(line.number) +
                                ": expected 'i j' pair");
            edges.emplace_back(static_cast<int>(parse_long(line.tokens[0], edges_path, line.number)),
                               static_cast<int>(parse_long(line.tokens[1], edges_path, line.number)));
        }
    }

    AttributeMatrix attrs = load_attr_fragment(dir + "/attrs", n, f, *kind);

    std::optional<std::vector<int>> labels;
    const std::string labels_path = dir + "/labels";
    if (fs::exists(labels_path)) {
        std::vector<int> lab(n, -1);
        for (const auto& line : read_token_lines(labels_path)) {
            if (line.tokens.size() != 2)
                throw DataError(labels_path + ":" + std::to_string(line.number) +
                                ": expected 'node class' pair");
            long i = parse_long(line.tokens[0], labels_path, line.number);
            long c = parse_long(line.tokens[1], labels_path, line.number);
            if (i < 0 || static_cast<std::size_t>(i) >= n)
                throw DataError(labels_path + ":" + std::to_string(line.number) +
                                ": node out of range");
            lab[static_cast<std::size_t>(i)] = static_cast<int>(c);
        }
        for (std::size_t i = 0; i < n; ++i)
            if (lab[i] < 0)
                throw DataError(labels_path + ": node " + std::to_string(i) + " has no label");
        labels = std::move(lab);
    } else if (classes != 0) {
        throw DataError(meta_path + ": classes set but no labels file present");
    }

    NodeSplit split;
    const std::string split_path = dir + "/split";
    if (fs::exists(split_path)) {
        for (const auto& line : read_token_lines(split_path)) {
            if (line.tokens.size() != 2)
                throw DataError(split_path + ":" + std::to_string(line.number) +
                                ": expected 'node role' pair");
            long i = parse_long(line.tokens[0], split_path, line.number);
            const std::string& role = line.tokens[1];
            if (role == "train") split.train.push_back(static_cast<int>(i));
            else if (role == "valid") split.validation.push_back(static_cast<int>(i));
            else if (role == "test") split.test.push_back(static_cast<int>(i));
            else
                throw DataError(split_path + ":" + std::to_string(line.number) +
                                ": role must be train/valid/test");
        }
    } else {
        Rng rng(fallback_split_seed);
        split = split_nodes(n, SplitRatios{}, rng);
    }

    DatasetBundle bundle{Graph(n, edges), std::move(attrs), std::move(labels), classes,
                         std::move(split), std::move(name)};
    bundle.validate();
    return bundle;
}

void save_dataset(const DatasetBundle& bundle, const std::string& dir) {
    namespace fs = std::filesystem;
    bundle.validate();
    fs::create_directories(dir);

    {
        std::ofstream meta(dir + "/meta");
        meta << "name " << bundle.name << "\n";
        meta << "nodes " << bundle.graph.node_count() << "\n";
        meta << "attr_dim " << bundle.attributes.dim() << "\n";
        meta << "attr_kind "
             << (bundle.attributes.kind() == AttrKind::categorical ? "categorical" : "real")
             << "\n";
        if (bundle.labels) meta << "classes " << bundle.num_classes << "\n";
    }
    {
        std::ofstream edges(dir + "/edges");
        for (const auto& e : bundle.graph.adjacency().entries())
            if (e.row < e.col) edges << e.row << " " << e.col << "\n";
    }
    {
        std::ofstream attrs(dir + "/attrs");
        const std::size_t f = bundle.attributes.dim();
        for (std::size_t i = 0; i < bundle.attributes.nodes(); ++i)
            for (std::size_t j = 0; j < f; ++j) {
                double v = bundle.attributes.at(i, j);
                if (v != 0.0) attrs << i << " " << j << " " << format_double(v) << "\n";
            }
    }
    if (bundle.labels) {
        std::ofstream labels(dir + "/labels");
        for (std::size_t i = 0; i < bundle.labels->size(); ++i)
            labels << i << " " << (*bundle.labels)[i] << "\n";
    }
    {
        std::ofstream split(dir + "/split");
        for (int id : bundle.split.train) split << id << " train\n";
        for (int id : bundle.split.validation) split << id << " valid\n";
        for (int id : bundle.split.test) split << id << " test\n";
    }
}

// --- synthetic generator ------------------------------------------------------------------------

DatasetBundle synth_dataset(const SynthSpec& spec, Rng& rng) {
    if (spec.blocks < 1 || spec.nodes_per_block < 1)
        throw InvalidArgument("synth_dataset: blocks and nodes_per_block must be >= 1");
    if (!(0.0 <= spec.p_out && spec.p_out < spec.p_in && spec.p_in <= 1.0))
        throw InvalidArgument("synth_dataset: need 0 <= p_out < p_in <= 1");
    if (!(0.5 < spec.signal && spec.signal <= 1.0))
        throw InvalidArgument("synth_dataset: need 0.5 < signal <= 1");
    if (spec.attr_dim % spec.blocks != 0)
        throw InvalidArgument("synth_dataset: attr_dim must be divisible by blocks");

    const std::size_t n = static_cast<std::size_t>(spec.blocks) * spec.nodes_per_block;
    const int dims_per_block = spec.attr_dim / spec.blocks;

    std::vector<int> block(n);
    for (std::size_t i = 0; i < n; ++i) block[i] = static_cast<int>(i) / spec.nodes_per_block;

    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double p = block[i] == block[j] ? spec.p_in : spec.p_out;
            if (rng.bernoulli(p)) edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }

    std::vector<double> attr_values(n * spec.attr_dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < spec.attr_dim; ++d) {
            bool own = d / dims_per_block == block[i];
            double p = own ? spec.signal : 1.0 - spec.signal;
            if (rng.bernoulli(p)) attr_values[i * spec.attr_dim + d] = 1.0;
        }

    NodeSplit split = split_nodes(n, SplitRatios{}, rng);
    DatasetBundle bundle{Graph(n, edges),
                         AttributeMatrix(n, spec.attr_dim, AttrKind::categorical,
                                         std::move(attr_values)),
                         std::move(block), spec.blocks, std::move(split), "synthetic"};
    bundle.validate();
    return bundle;
}

} // namespace nang
