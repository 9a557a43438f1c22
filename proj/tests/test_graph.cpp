#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "nang/graph.hpp"

using namespace nang;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("nang_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Newman modularity of a node partition, computed directly from the adjacency.
double modularity(const Graph& g, const std::vector<int>& community) {
    const double two_m = 2.0 * static_cast<double>(g.edge_count());
    if (two_m == 0.0) return 0.0;
    const std::size_t n = g.node_count();
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (community[i] != community[j]) continue;
            double a_ij = 0.0;
            for (int nb : g.neighbors(static_cast<int>(i)))
                if (nb == static_cast<int>(j)) a_ij = 1.0;
            double expected = static_cast<double>(g.degree(static_cast<int>(i))) *
                              static_cast<double>(g.degree(static_cast<int>(j))) / two_m;
            q += a_ij - expected;
        }
    return q / two_m;
}

double dense_at(const SparseMatrix& m, int i, int j) {
    for (const auto& e : m.entries())
        if (e.row == i && e.col == j) return e.value;
    return 0.0;
}

DatasetBundle tiny_bundle() {
    Graph g(4, {{0, 1}, {1, 2}, {2, 3}});
    AttributeMatrix attrs(4, 3, AttrKind::categorical,
                          {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0});
    std::vector<int> labels = {0, 1, 1, 0};
    NodeSplit split{{0, 2}, {1}, {3}};
    return DatasetBundle{g, attrs, labels, 2, split, "tiny"};
}

} // namespace

TEST_SUITE("graph") {

TEST_CASE("graph construction validates and normalizes edges") {
    Graph g(3, {{0, 1}, {1, 0}, {1, 2}});
    CHECK(g.edge_count() == 2);
    CHECK(g.adjacency().nnz() == 4);
    CHECK(g.neighbors(1).size() == 2);
    CHECK_THROWS_AS(Graph(3, {{0, 0}}), DataError);
    CHECK_THROWS_AS(Graph(3, {{0, 5}}), DataError);
}

TEST_CASE("normalize_adjacency hand cases") {
    // Two isolated nodes: only self loops of degree 1.
    SparseMatrix iso = normalize_adjacency(Graph(2, {}));
    CHECK(dense_at(iso, 0, 0) == 1.0);
    CHECK(dense_at(iso, 1, 1) == 1.0);
    CHECK(dense_at(iso, 0, 1) == 0.0);

    // Single edge: both nodes have degree 2 after self loops.
    SparseMatrix pair = normalize_adjacency(Graph(2, {{0, 1}}));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(dense_at(pair, i, j) == doctest::Approx(0.5).epsilon(1e-15));

    // Triangle: every entry 1/3.
    SparseMatrix tri = normalize_adjacency(Graph(3, {{0, 1}, {1, 2}, {0, 2}}));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(dense_at(tri, i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("normalize_adjacency is symmetric with entries in (0,1]") {
    Rng rng(71);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 2 + rng.uniform_index(7);
        std::vector<std::pair<int, int>> edges;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (rng.bernoulli(0.4)) edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
        SparseMatrix norm = normalize_adjacency(Graph(n, edges));
        CHECK(norm.symmetric());
        for (const auto& e : norm.entries()) {
            CHECK(e.value > 0.0);
            CHECK(e.value <= 1.0);
            CHECK(dense_at(norm, e.col, e.row) == e.value);
        }
    }
}

TEST_CASE("normalize_adjacency rows sum to 1 on regular graphs") {
    // Cycle of 6 (degree 2 everywhere) and clique of 5 (degree 4 everywhere).
    Graph cycle(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}});
    std::vector<std::pair<int, int>> clique_edges;
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) clique_edges.push_back({i, j});
    Graph clique(5, clique_edges);
    for (const Graph* g : {&cycle, &clique}) {
        SparseMatrix norm = normalize_adjacency(*g);
        std::vector<double> row_sums(g->node_count(), 0.0);
        for (const auto& e : norm.entries()) row_sums[e.row] += e.value;
        for (double s : row_sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("split_nodes sizes and determinism") {
    Rng rng(5);
    NodeSplit s = split_nodes(10, SplitRatios{}, rng);
    CHECK(s.train.size() == 4);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 5);

    Rng r1(42), r2(42);
    NodeSplit a = split_nodes(50, SplitRatios{}, r1);
    NodeSplit b = split_nodes(50, SplitRatios{}, r2);
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    CHECK(a.test == b.test);

    CHECK_THROWS_AS(split_nodes(2, SplitRatios{}, rng), InvalidArgument);
    CHECK_THROWS_AS(split_nodes(10, SplitRatios{0.5, 0.2, 0.2}, rng), InvalidArgument);
}

TEST_CASE("split_nodes partitions the node set for every seed") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        std::size_t n = 3 + rng.uniform_index(40);
        NodeSplit s = split_nodes(n, SplitRatios{}, rng);
        std::set<int> all;
        all.insert(s.train.begin(), s.train.end());
        all.insert(s.validation.begin(), s.validation.end());
        all.insert(s.test.begin(), s.test.end());
        CHECK(all.size() == n); // disjoint and covering
        CHECK(s.train.size() + s.validation.size() + s.test.size() == n);
        CHECK(*all.begin() == 0);
        CHECK(*all.rbegin() == static_cast<int>(n) - 1);
    }
}

TEST_CASE("compute_pos_weight") {
    // 2 ones among 10 entries -> 8 / 2 = 4.
    AttributeMatrix attrs(2, 5, AttrKind::categorical, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0});
    std::vector<int> rows = {0, 1};
    CHECK(compute_pos_weight(attrs, rows) == 4.0);

    AttributeMatrix ones(2, 5, AttrKind::categorical, std::vector<double>(10, 1.0));
    CHECK(compute_pos_weight(ones, rows) == 1.0);

    AttributeMatrix half(2, 4, AttrKind::categorical, {1, 1, 0, 0, 0, 1, 1, 0});
    CHECK(compute_pos_weight(half, rows) == 1.0);

    // Row permutation leaves the counts unchanged.
    std::vector<int> permuted = {1, 0};
    CHECK(compute_pos_weight(attrs, permuted) == compute_pos_weight(attrs, rows));

    AttributeMatrix zeros(2, 5, AttrKind::categorical, std::vector<double>(10, 0.0));
    CHECK_THROWS_AS(compute_pos_weight(zeros, rows), DataError);

    AttributeMatrix real(2, 5, AttrKind::real_valued, std::vector<double>(10, 0.5));
    CHECK_THROWS_AS(compute_pos_weight(real, rows), InvalidArgument);
}

TEST_CASE("binarize_cooccurrence") {
    std::vector<SparseEntry> entries = {
        {0, 1, 10.0}, {1, 0, 10.0}, // at threshold: kept
        {1, 2, 9.0},  {2, 1, 9.0},  // below: dropped
        {0, 0, 100.0},              // diagonal: dropped
    };
    Graph g = binarize_cooccurrence(SparseMatrix(3, 3, entries), 10.0);
    CHECK(g.edge_count() == 1);
    CHECK(g.neighbors(0).size() == 1);
    CHECK(g.neighbors(0)[0] == 1);
    CHECK(g.neighbors(2).empty());

    std::vector<SparseEntry> asym = {{0, 1, 12.0}};
    CHECK_THROWS_AS(binarize_cooccurrence(SparseMatrix(3, 3, asym), 10.0), DataError);

    std::vector<SparseEntry> mismatched = {{0, 1, 12.0}, {1, 0, 11.0}};
    CHECK_THROWS_AS(binarize_cooccurrence(SparseMatrix(3, 3, mismatched), 10.0), DataError);
}

TEST_CASE("binarize_cooccurrence output is a valid graph") {
    Rng rng(91);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 3 + rng.uniform_index(6);
        std::vector<SparseEntry> entries;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j)
                if (rng.bernoulli(0.5)) {
                    double c = std::floor(rng.uniform(0.0, 20.0));
                    entries.push_back({static_cast<int>(i), static_cast<int>(j), c});
                    if (i != j) entries.push_back({static_cast<int>(j), static_cast<int>(i), c});
                }
        Graph g = binarize_cooccurrence(SparseMatrix(n, n, entries), 10.0);
        const auto& adj = g.adjacency();
        CHECK(adj.symmetric());
        for (const auto& e : adj.entries()) {
            CHECK(e.value == 1.0);
            CHECK(e.row != e.col);
        }
    }
}

TEST_CASE("dataset save and load round-trips bit-exactly") {
    DatasetBundle bundle = tiny_bundle();
    fs::path dir = fresh_dir("roundtrip");
    save_dataset(bundle, dir.string());
    DatasetBundle loaded = load_dataset(dir.string());

    CHECK(loaded.name == "tiny");
    CHECK(loaded.graph.node_count() == 4);
    CHECK(loaded.graph.edge_count() == 3);
    CHECK(loaded.attributes.kind() == AttrKind::categorical);
    for (std::size_t i = 0; i < bundle.attributes.values().size(); ++i)
        CHECK(loaded.attributes.values()[i] == bundle.attributes.values()[i]);
    CHECK(*loaded.labels == *bundle.labels);
    CHECK(loaded.num_classes == 2);
    CHECK(loaded.split.train == bundle.split.train);
    CHECK(loaded.split.validation == bundle.split.validation);
    CHECK(loaded.split.test == bundle.split.test);

    // Second write of the loaded bundle must produce identical files.
    fs::path dir2 = fresh_dir("roundtrip2");
    save_dataset(loaded, dir2.string());
    for (const char* file : {"meta", "edges", "attrs", "labels", "split"}) {
        std::ifstream a(dir / file), b(dir2 / file);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
}

TEST_CASE("real-valued attributes round-trip exactly") {
    Graph g(3, {{0, 1}});
    AttributeMatrix attrs(3, 2, AttrKind::real_valued,
                          {0.1234567890123456789, -3.75, 0.0, 1e-17, 2.5, -0.0});
    DatasetBundle bundle{g, attrs, std::nullopt, 0, NodeSplit{{0}, {1}, {2}}, "real"};
    fs::path dir = fresh_dir("realroundtrip");
    save_dataset(bundle, dir.string());
    DatasetBundle loaded = load_dataset(dir.string());
    for (std::size_t i = 0; i < attrs.values().size(); ++i)
        CHECK(loaded.attributes.values()[i] == attrs.values()[i]);
}

TEST_CASE("loader reports malformed files with location") {
    fs::path dir = fresh_dir("badattr");
    std::ofstream(dir / "meta") << "nodes 3\nattr_dim 2\nattr_kind categorical\n";
    std::ofstream(dir / "edges") << "0 1\n";
    std::ofstream(dir / "attrs") << "0 0 1\n1 1 2\n"; // value 2 invalid for categorical
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("not 0/1"), DataError);

    std::ofstream(dir / "attrs", std::ios::trunc) << "0 0 1\n1 zzz 1\n";
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("attrs:2"), DataError);

    std::ofstream(dir / "meta", std::ios::trunc) << "nodes 3\nbogus_key 2\n";
    CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("bogus_key"), DataError);
}

TEST_CASE("minimal fixture loads with a generated split") {
    fs::path dir = fresh_dir("fixture");
    std::ofstream(dir / "meta") << "# tiny fixture\nnodes 3\nattr_dim 2\nattr_kind categorical\n"
                                << "classes 2\n";
    std::ofstream(dir / "edges") << "0 1\n1 2\n";
    std::ofstream(dir / "attrs") << "0 0 1\n1 1 1\n2 0 1\n";
    std::ofstream(dir / "labels") << "0 0\n1 1\n2 0\n";
    DatasetBundle bundle = load_dataset(dir.string(), 7);
    CHECK(bundle.graph.node_count() == 3);
    CHECK(bundle.attributes.dim() == 2);
    CHECK(bundle.num_classes == 2);
    CHECK(bundle.split.train.size() == 1);
    CHECK(bundle.split.validation.size() == 0 + static_cast<std::size_t>(0.1 * 3));
    CHECK(bundle.split.test.size() == 3 - bundle.split.train.size() - bundle.split.validation.size());

    DatasetBundle again = load_dataset(dir.string(), 7);
    CHECK(bundle.split.train == again.split.train);
    CHECK(bundle.split.test == again.split.test);
}

TEST_CASE("synthetic generator structure") {
    Rng rng(11);
    SynthSpec cliques{2, 4, 1.0, 0.0, 8, 1.0};
    DatasetBundle bundle = synth_dataset(cliques, rng);
    CHECK(bundle.graph.node_count() == 8);
    // Two disjoint cliques: all within-block pairs present, no cross edges.
    CHECK(bundle.graph.edge_count() == 2 * 6);
    for (int i = 0; i < 8; ++i)
        for (int nb : bundle.graph.neighbors(i)) CHECK(i / 4 == nb / 4);

    // signal = 1.0: attributes are exactly the block indicator pattern.
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t d = 0; d < 8; ++d) {
            bool own = d / 4 == i / 4;
            CHECK(bundle.attributes.at(i, d) == (own ? 1.0 : 0.0));
        }
    CHECK((*bundle.labels)[0] == 0);
    CHECK((*bundle.labels)[7] == 1);

    CHECK_THROWS_AS(synth_dataset(SynthSpec{3, 4, 0.5, 0.1, 10, 0.9}, rng), InvalidArgument);
    CHECK_THROWS_AS(synth_dataset(SynthSpec{2, 4, 0.2, 0.5, 8, 0.9}, rng), InvalidArgument);
    CHECK_THROWS_AS(synth_dataset(SynthSpec{2, 4, 0.5, 0.1, 8, 0.4}, rng), InvalidArgument);
}

TEST_CASE("synthetic sbm has strong planted modularity") {
    Rng rng(2077);
    DatasetBundle bundle = synth_dataset(SynthSpec{3, 60, 0.2, 0.02, 30, 0.9}, rng);
    CHECK(modularity(bundle.graph, *bundle.labels) > 0.3);
}

TEST_CASE("cora statistics when user supplies the dataset") {
    const char* dir = std::getenv("NANG_CORA_DIR");
    if (dir == nullptr) return; // optional real-data check
    DatasetBundle cora = load_dataset(dir);
    CHECK(cora.graph.node_count() == 2708);
    CHECK(cora.graph.adjacency().nnz() == 10556);
    CHECK(cora.attributes.dim() == 1433);
    CHECK(cora.num_classes == 7);
}

} // TEST_SUITE
