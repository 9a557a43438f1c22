#include <doctest.h>

#include <cmath>
#include <vector>

#include "nang/tensor.hpp"
#include "testutil.hpp"

using namespace nang;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, bool requires_grad = true) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from_values(rows, cols, std::move(v), requires_grad);
}

} // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity and annihilation") {
    Tensor a = Tensor::from_values(2, 2, {1, 2, 3, 4});
    Tensor eye = Tensor::from_values(2, 2, {1, 0, 0, 1});
    Tensor c = matmul(a, eye);
    CHECK(c(0, 0) == 1.0);
    CHECK(c(0, 1) == 2.0);
    CHECK(c(1, 0) == 3.0);
    CHECK(c(1, 1) == 4.0);

    Tensor l = Tensor::from_values(2, 2, {1, 0, 0, 0});
    Tensor r = Tensor::from_values(2, 2, {0, 0, 0, 1});
    Tensor z = matmul(l, r);
    for (double v : z.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(matmul(a, Tensor::zeros(3, 2)), ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(7);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(4, 2, rng);
    Tensor t = random_tensor(3, 2, rng, false);
    auto loss = [&] { return mse_loss(matmul(a, b), t); };
    CHECK(testutil::max_grad_rel_err(loss, {a, b}) < 1e-4);
}

TEST_CASE("matmul_nt equals matmul with transposed operand") {
    Rng rng(11);
    Tensor a = random_tensor(3, 5, rng);
    Tensor b = random_tensor(4, 5, rng);
    Tensor c = matmul_nt(a, b);
    REQUIRE(c.rows() == 3);
    REQUIRE(c.cols() == 4);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double expect = 0.0;
            for (std::size_t k = 0; k < 5; ++k) expect += a(i, k) * b(j, k);
            CHECK(c(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    Tensor t = random_tensor(3, 4, rng, false);
    auto loss = [&] { return mse_loss(matmul_nt(a, b), t); };
    CHECK(testutil::max_grad_rel_err(loss, {a, b}) < 1e-4);
}

TEST_CASE("spmm identity, empty, and densify oracle") {
    Rng rng(3);
    Tensor x = random_tensor(4, 3, rng, false);
    Tensor via_identity = spmm(SparseMatrix::identity(4), x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(via_identity.values()[i] == x.values()[i]);

    SparseMatrix empty(4, 4, {});
    Tensor zeros = spmm(empty, x);
    for (double v : zeros.values()) CHECK(v == 0.0);

    // Random sparse times dense equals the densified product, exactly.
    for (int trial = 0; trial < 40; ++trial) {
        std::size_t n = 1 + rng.uniform_index(8);
        std::vector<SparseEntry> entries;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (rng.bernoulli(0.3))
                    entries.push_back({static_cast<int>(i), static_cast<int>(j),
                                       rng.uniform(-2.0, 2.0)});
        SparseMatrix s(n, n, std::move(entries));
        Tensor d = random_tensor(n, 1 + rng.uniform_index(4), rng, false);
        Tensor got = spmm(s, d);
        Tensor want = matmul(s.to_dense(), d);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.values()[i] == want.values()[i]);
    }

    CHECK_THROWS_AS(spmm(SparseMatrix::identity(3), x), ShapeError);
}

TEST_CASE("spmm backward flows to the dense operand") {
    Rng rng(13);
    std::vector<SparseEntry> entries = {{0, 1, 2.0}, {1, 0, -1.0}, {2, 2, 0.5}, {1, 2, 3.0}};
    SparseMatrix s(3, 3, std::move(entries));
    Tensor d = random_tensor(3, 2, rng);
    Tensor t = random_tensor(3, 2, rng, false);
    auto loss = [&] { return mse_loss(spmm(s, d), t); };
    CHECK(testutil::max_grad_rel_err(loss, {d}) < 1e-4);
}

TEST_CASE("activations") {
    Tensor x = Tensor::from_values(1, 3, {-1.0, 0.0, 2.0});
    Tensor r = activate(x, Activation::relu);
    CHECK(r.values()[0] == 0.0);
    CHECK(r.values()[1] == 0.0);
    CHECK(r.values()[2] == 2.0);

    Tensor s = activate(Tensor::scalar(0.0), Activation::sigmoid);
    CHECK(s.item() == doctest::Approx(0.5).epsilon(1e-15));

    // sigma'(0) = 0.25
    Tensor x0 = Tensor::scalar(0.0, true);
    Tensor y = sigmoid(x0);
    y.backward();
    CHECK(x0.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sigmoid stays strictly inside (0,1)") {
    Tensor x = Tensor::from_values(1, 6, {-1e9, -700.0, -36.5, 36.5, 700.0, 1e9});
    Tensor s = sigmoid(x);
    for (double v : s.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("dropout semantics") {
    Rng rng(17);
    Tensor x = random_tensor(5, 5, rng);

    Tensor same = dropout(x, 0.5, false, rng);
    CHECK(same.node_id() == x.node_id()); // identity, bit for bit

    Tensor p0 = dropout(x, 0.0, true, rng);
    CHECK(p0.node_id() == x.node_id());

    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), InvalidArgument);
    CHECK_THROWS_AS(dropout(x, -0.1, true, rng), InvalidArgument);

    // Inverted scaling keeps the mean near 1 on a large block of ones.
    Tensor ones = Tensor::full(100, 100, 1.0);
    Tensor dropped = dropout(ones, 0.5, true, rng);
    double mean = 0.0;
    for (double v : dropped.values()) mean += v;
    mean /= static_cast<double>(dropped.size());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.05));

    // Backward reuses the forward mask: zeroed positions get zero gradient,
    // surviving positions get the 1/(1-p) scale.
    Rng mask_rng(23);
    Tensor w = Tensor::full(4, 4, 1.0, true);
    Tensor d = dropout(w, 0.5, true, mask_rng);
    Tensor loss = mse_loss(d, Tensor::zeros(4, 4));
    loss.backward();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.values()[i] == 0.0)
            CHECK(w.grad()[i] == 0.0);
        else
            CHECK(w.grad()[i] != 0.0);
    }
}

TEST_CASE("weighted bce hand values") {
    Tensor zero_logit = Tensor::scalar(0.0);
    CHECK(weighted_bce_with_logits(zero_logit, Tensor::scalar(1.0), 1.0).item() ==
          doctest::Approx(0.6931471805599453).epsilon(1e-9));
    // Weight scales only the positive term.
    CHECK(weighted_bce_with_logits(zero_logit, Tensor::scalar(0.0), 5.0).item() ==
          doctest::Approx(0.6931471805599453).epsilon(1e-9));
    CHECK(weighted_bce_with_logits(zero_logit, Tensor::scalar(1.0), 3.0).item() ==
          doctest::Approx(2.0794415416798357).epsilon(1e-9));

    CHECK_THROWS_AS(weighted_bce_with_logits(Tensor::zeros(2, 2), Tensor::zeros(2, 3), 1.0),
                    ShapeError);
    CHECK_THROWS_AS(weighted_bce_with_logits(zero_logit, Tensor::scalar(0.5), 1.0),
                    InvalidArgument);
}

TEST_CASE("weighted bce is finite for all finite logits") {
    Tensor logits = Tensor::from_values(1, 4, {-1e308, -1000.0, 1000.0, 1e308});
    Tensor targets = Tensor::from_values(1, 4, {1.0, 0.0, 1.0, 0.0});
    double v = weighted_bce_with_logits(logits, targets, 7.0).item();
    CHECK(std::isfinite(v));
}

TEST_CASE("saturated correct logits drive bce below 1e-9") {
    Tensor logits = Tensor::from_values(1, 4, {40.0, 40.0, -40.0, -40.0});
    Tensor targets = Tensor::from_values(1, 4, {1.0, 1.0, 0.0, 0.0});
    CHECK(weighted_bce_with_logits(logits, targets, 3.0).item() < 1e-9);
}

TEST_CASE("weighted bce gradient matches finite differences") {
    Rng rng(29);
    Tensor logits = random_tensor(4, 5, rng);
    std::vector<double> t(20);
    for (auto& y : t) y = rng.bernoulli(0.3) ? 1.0 : 0.0;
    Tensor targets = Tensor::from_values(4, 5, std::move(t), false);
    auto loss = [&] { return weighted_bce_with_logits(logits, targets, 4.0); };
    CHECK(testutil::max_grad_rel_err(loss, {logits}) < 1e-4);

    std::vector<double> mask(20, 1.0);
    mask[3] = mask[7] = mask[12] = 0.0;
    auto masked = [&] { return weighted_bce_with_logits_masked(logits, targets, mask, 4.0); };
    CHECK(testutil::max_grad_rel_err(masked, {logits}) < 1e-4);
}

TEST_CASE("mse hand values and gradient") {
    Tensor p = Tensor::from_values(1, 2, {1.0, 2.0});
    CHECK(mse_loss(p, p).item() == 0.0);
    CHECK(mse_loss(p, Tensor::zeros(1, 2)).item() == doctest::Approx(2.5).epsilon(1e-15));

    Rng rng(31);
    Tensor pred = random_tensor(3, 4, rng);
    Tensor target = random_tensor(3, 4, rng, false);
    auto loss = [&] { return mse_loss(pred, target); };
    CHECK(testutil::max_grad_rel_err(loss, {pred}) < 1e-6);
}

TEST_CASE("backward on simple functions") {
    Tensor x = Tensor::scalar(3.0, true);
    Tensor sq = hadamard(x, x);
    sq.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

    Tensor a = Tensor::scalar(1.5, true);
    Tensor b = Tensor::scalar(-2.0, true);
    add(a, b).backward();
    CHECK(a.grad()[0] == 1.0);
    CHECK(b.grad()[0] == 1.0);

    Tensor m = Tensor::zeros(2, 2, true);
    CHECK_THROWS_AS(m.backward(), InvalidArgument);
}

TEST_CASE("unreachable parameters keep zero gradient") {
    Tensor used = Tensor::scalar(2.0, true);
    Tensor unused = Tensor::scalar(5.0, true);
    hadamard(used, used).backward();
    CHECK(used.grad()[0] != 0.0);
    CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("two-layer mlp with weighted bce passes finite differences") {
    Rng rng(37);
    Tensor x = random_tensor(4, 6, rng, false);
    Tensor w1 = glorot_init(6, 5, rng);
    Tensor b1 = Tensor::zeros(1, 5, true);
    Tensor w2 = glorot_init(5, 3, rng);
    Tensor b2 = Tensor::zeros(1, 3, true);
    std::vector<double> t(12);
    for (auto& y : t) y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Tensor targets = Tensor::from_values(4, 3, std::move(t), false);
    auto loss = [&] {
        Tensor h = relu(add(matmul(x, w1), b1));
        Tensor logits = add(matmul(h, w2), b2);
        return weighted_bce_with_logits(logits, targets, 2.5);
    };
    CHECK(testutil::max_grad_rel_err(loss, {w1, b1, w2, b2}) < 1e-4);
}

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(41);
    Tensor a = random_tensor(3, 3, rng);
    Tensor b = random_tensor(3, 3, rng);
    Tensor bias = random_tensor(1, 3, rng);
    Tensor target = random_tensor(3, 3, rng, false);

    auto check = [&](const std::function<Tensor()>& f, std::vector<Tensor> params) {
        CHECK(testutil::max_grad_rel_err(f, std::move(params)) < 1e-4);
    };
    check([&] { return mse_loss(add(a, b), target); }, {a, b});
    check([&] { return mse_loss(add(a, bias), target); }, {a, bias});
    check([&] { return mse_loss(sub(a, b), target); }, {a, b});
    check([&] { return mse_loss(hadamard(a, b), target); }, {a, b});
    check([&] { return mse_loss(scale(a, -2.5), target); }, {a});
    check([&] { return mse_loss(vexp(a), target); }, {a});
    check([&] { return mse_loss(clamp(a, -0.5, 0.5), target); }, {a});
    check([&] { return mse_loss(relu(a), target); }, {a});
    check([&] { return mse_loss(sigmoid(a), target); }, {a});

    std::vector<int> ids = {2, 0, 0, 1};
    Tensor gathered_target = random_tensor(4, 3, rng, false);
    check([&] { return mse_loss(row_gather(a, ids), gathered_target); }, {a});

    Tensor logits = random_tensor(4, 3, rng);
    std::vector<int> labels = {0, 2, 1, 2};
    check([&] { return cross_entropy(logits, labels); }, {logits});

    Tensor mu = random_tensor(3, 4, rng);
    Tensor logvar = random_tensor(3, 4, rng);
    check([&] { return kl_standard_normal(mu, logvar); }, {mu, logvar});

    // Dropout with a fixed mask (rng re-seeded per evaluation).
    auto dropped = [&] {
        Rng mask_rng(4242);
        return mse_loss(dropout(a, 0.4, true, mask_rng), target);
    };
    check(dropped, {a});
}

TEST_CASE("cross entropy value on a known case") {
    // Uniform logits over 4 classes -> -log(1/4).
    Tensor logits = Tensor::zeros(2, 4);
    std::vector<int> labels = {1, 3};
    CHECK(cross_entropy(logits, labels).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("kl against hand computations") {
    CHECK(kl_standard_normal(Tensor::zeros(1, 1), Tensor::zeros(1, 1)).item() == 0.0);
    // mu=1, sigma=1 (logvar=0), d=1: 0.5*(mu^2 + sigma^2 - 1 - log sigma^2) = 0.5
    CHECK(kl_standard_normal(Tensor::scalar(1.0), Tensor::scalar(0.0)).item() ==
          doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("adam steps") {
    AdamState st;
    st.learning_rate = 0.005;
    std::vector<double> params = {1.0, -2.0};
    std::vector<double> zero_grads = {0.0, 0.0};
    adam_step(params, zero_grads, st);
    CHECK(params[0] == 1.0);
    CHECK(params[1] == -2.0);
    CHECK(st.step_count == 1);

    AdamState st2;
    st2.learning_rate = 0.005;
    std::vector<double> theta = {0.0};
    std::vector<double> g = {1.0};
    adam_step(theta, g, st2);
    CHECK(theta[0] == doctest::Approx(-0.005).epsilon(1e-6));

    AdamState st3;
    st3.learning_rate = 0.005;
    std::vector<double> theta2 = {0.0};
    std::vector<double> gneg = {-1.0};
    adam_step(theta2, gneg, st3);
    CHECK(theta2[0] == doctest::Approx(0.005).epsilon(1e-6));

    std::vector<double> bad = {std::nan("")};
    CHECK_THROWS_AS(adam_step(theta, bad, st2), TrainingDiverged);
}

TEST_CASE("adam wrapper leaves params alone under zero gradients") {
    Rng rng(43);
    Tensor w = random_tensor(3, 3, rng);
    std::vector<double> before(w.values().begin(), w.values().end());
    Adam opt({w}, 0.01);
    opt.zero_grad();
    opt.step();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(w.values()[i] == before[i]);
    CHECK(opt.step_count() == 1);
}

TEST_CASE("glorot init") {
    Rng rng(47);
    Tensor w = glorot_init(3, 3, rng);
    for (double v : w.values()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }

    Rng r1(99), r2(99);
    Tensor a = glorot_init(10, 10, r1);
    Tensor b = glorot_init(10, 10, r2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);

    Rng r3(7);
    Tensor big = glorot_init(300, 300, r3);
    double mean = 0.0;
    for (double v : big.values()) mean += v;
    mean /= static_cast<double>(big.size());
    CHECK(std::fabs(mean) < 0.02);

    CHECK_THROWS_AS(glorot_init(0, 3, rng), InvalidArgument);
}

TEST_CASE("gaussian sampling moments and determinism") {
    Rng r1(123), r2(123);
    Tensor a = sample_gaussian(2, 3, r1);
    Tensor b = sample_gaussian(2, 3, r2);
    CHECK(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
    CHECK_FALSE(a.requires_grad());

    Rng r3(5);
    Tensor big = sample_gaussian(1000, 100, r3);
    double mean = 0.0, sq = 0.0;
    for (double v : big.values()) {
        mean += v;
        sq += v * v;
    }
    const double n = static_cast<double>(big.size());
    mean /= n;
    double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng streams are reproducible and derivable") {
    Rng a(2024), b(2024);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(55);
    Rng d1 = base.derive(1);
    Rng d2 = base.derive(2);
    Rng d1_again = base.derive(1);
    CHECK(d1.next_u64() == d1_again.next_u64());
    CHECK(d1.next_u64() != d2.next_u64());
}

} // TEST_SUITE
