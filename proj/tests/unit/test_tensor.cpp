#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mmmt/error.hpp"
#include "mmmt/grad_check.hpp"
#include "mmmt/rng.hpp"
#include "mmmt/tensor.hpp"
#include "test_support.hpp"

using namespace mmmt;
using testing::numeric_partial;
using testing::random_tensor;
using testing::rel_error;

namespace {

// Sum of elementwise products: a scalar probe that gives every output
// element its own upstream gradient.
double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Max relative error between an analytic gradient tensor and central
// differences of `loss` with respect to every entry of `x`.
double max_fd_error(const std::function<double()>& loss, Tensor& x, const Tensor& analytic) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        worst = std::max(worst, rel_error(analytic[i], numeric_partial(loss, x[i])));
    }
    return worst;
}

}  // namespace

TEST_CASE("splitmix64 seed 0 first output") {
    RngState rng(0);
    CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("rng streams are reproducible and distinct") {
    RngState a = RngState::derive(42, 1), b = RngState::derive(42, 1), c = RngState::derive(42, 2);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        (void)c;
    }
    CHECK(RngState::derive(42, 1).next_u64() != RngState::derive(42, 2).next_u64());
    RngState u(7);
    for (int i = 0; i < 10000; ++i) {
        const double v = u.uniform();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        REQUIRE(u.below(5) < 5);
    }
}

TEST_CASE("normal draws have unit moments") {
    RngState rng(11);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("matmul examples") {
    const Tensor id = Tensor::from_rows({{1, 0}, {0, 1}});
    const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(id, m) == m);
    CHECK(matmul(Tensor::from_rows({{1, 2}}), Tensor::from_rows({{3}, {4}})) == Tensor::from_rows({{11}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    try {
        matmul(Tensor::zeros(2, 3), Tensor::zeros(4, 2));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x2") != std::string::npos);
    }
}

TEST_CASE("matmul gradient 3x4 * 4x2 within 1e-6") {
    RngState rng(3);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), up = random_tensor({3, 2}, rng);
    Tensor da({3, 4}), db({4, 2});
    matmul_backward(a, b, up, &da, &db);
    auto loss = [&] { return dot(matmul(a, b), up); };
    CHECK(max_fd_error(loss, a, da) < 1e-6);
    CHECK(max_fd_error(loss, b, db) < 1e-6);
}

TEST_CASE("gelu values") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(std::abs(gelu(10.0) - 10.0) < 1e-9);
    CHECK(gelu(-10.0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("softmax examples") {
    const Tensor a = softmax_rows(Tensor::from_rows({{0, 0}}));
    CHECK(a[0] == 0.5);
    CHECK(a[1] == 0.5);
    const Tensor b = softmax_rows(Tensor::from_rows({{1000, 1000, 1000}}));
    for (double v : b.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const Tensor c = softmax_rows(Tensor::from_rows({{0, std::log(3.0)}}));
    CHECK(c[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(c[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one") {
    RngState rng(5);
    for (int seed = 0; seed < 20; ++seed) {
        const Tensor y = softmax_rows(random_tensor({4, 7}, rng, 30.0));
        REQUIRE(y.all_finite());
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (double v : y.row(r)) s += v;
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("layer norm examples and moments") {
    const Tensor ones = Tensor::from_rows({{1, 1, 1}});
    const Tensor gain({3}, {1, 1, 1}), bias({3});
    const Tensor y = layer_norm(Tensor::from_rows({{1, 2, 3}}), gain, bias, 1e-5);
    CHECK(y[0] == doctest::Approx(-1.2247).epsilon(1e-3));
    CHECK(std::abs(y[1]) < 1e-12);
    CHECK(y[2] == doctest::Approx(1.2247).epsilon(1e-3));
    const Tensor flat = layer_norm(Tensor::from_rows({{5, 5, 5}}), gain, bias, 1e-5);
    for (double v : flat.data()) CHECK(v == 0.0);

    RngState rng(9);
    const Tensor g8({8}, std::vector<double>(8, 1.0)), b8({8});
    for (int seed = 0; seed < 20; ++seed) {
        const Tensor x = random_tensor({3, 8}, rng, 4.0);
        const Tensor out = layer_norm(x, g8, b8, 1e-5);
        for (std::size_t r = 0; r < 3; ++r) {
            double mean = 0.0, var = 0.0, raw_var = 0.0, raw_mean = 0.0;
            for (std::size_t c = 0; c < 8; ++c) raw_mean += x.at(r, c) / 8.0;
            for (std::size_t c = 0; c < 8; ++c) raw_var += (x.at(r, c) - raw_mean) * (x.at(r, c) - raw_mean) / 8.0;
            for (double v : out.row(r)) mean += v / 8.0;
            for (double v : out.row(r)) var += (v - mean) * (v - mean) / 8.0;
            CHECK(std::abs(mean) < 1e-9);
            CHECK(var == doctest::Approx(raw_var / (raw_var + 1e-5)).epsilon(1e-12));
        }
    }
}

TEST_CASE("dropout behaviour") {
    RngState rng(1);
    const Tensor x({100000}, std::vector<double>(100000, 1.0));
    CHECK(dropout(x, 0.0, rng, true) == x);
    CHECK(dropout(x, 0.5, rng, false) == x);
    CHECK_THROWS_AS(dropout(x, 1.0, rng, true), ConfigError);
    CHECK_THROWS_AS(dropout(x, -0.1, rng, true), ConfigError);
    Tensor mask;
    const Tensor y = dropout(x, 0.5, rng, true, &mask);
    double mean = 0.0;
    for (double v : y.data()) {
        REQUIRE((v == 0.0 || v == 2.0));
        mean += v;
    }
    CHECK(std::abs(mean / 100000.0 - 1.0) < 0.02);
    CHECK(mask == y);
}

TEST_CASE("op gradients match finite differences over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CAPTURE(seed);
        RngState rng = RngState::derive(seed, 77);

        // linear
        Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({5}, rng);
        Tensor up = random_tensor({3, 5}, rng);
        Tensor dx({3, 4}), dw({4, 5}), db({5});
        linear_backward(x, w, up, &dx, &dw, &db);
        auto lin = [&] { return dot(linear(x, w, b), up); };
        CHECK(max_fd_error(lin, x, dx) < 1e-4);
        CHECK(max_fd_error(lin, w, dw) < 1e-4);
        CHECK(max_fd_error(lin, b, db) < 1e-4);

        // gelu
        Tensor g = random_tensor({2, 6}, rng, 2.0), gup = random_tensor({2, 6}, rng);
        Tensor dg({2, 6});
        gelu_backward(g, gup, dg);
        CHECK(max_fd_error([&] { return dot(gelu(g), gup); }, g, dg) < 1e-4);

        // softmax
        Tensor s = random_tensor({3, 5}, rng, 2.0), sup = random_tensor({3, 5}, rng);
        Tensor ds({3, 5});
        softmax_rows_backward(softmax_rows(s), sup, ds);
        CHECK(max_fd_error([&] { return dot(softmax_rows(s), sup); }, s, ds) < 1e-4);

        // layer norm (input, gain, bias) on 2x4
        Tensor lx = random_tensor({2, 4}, rng), lg = random_tensor({4}, rng), lb = random_tensor({4}, rng);
        Tensor lup = random_tensor({2, 4}, rng);
        LayerNormCache cache;
        layer_norm(lx, lg, lb, 1e-5, &cache);
        Tensor dlx({2, 4}), dlg({4}), dlb({4});
        layer_norm_backward(cache, lg, lup, dlx, &dlg, &dlb);
        auto ln = [&] { return dot(layer_norm(lx, lg, lb, 1e-5), lup); };
        CHECK(max_fd_error(ln, lx, dlx) < 1e-5);
        CHECK(max_fd_error(ln, lg, dlg) < 1e-5);
        CHECK(max_fd_error(ln, lb, dlb) < 1e-5);

        // dropout with a frozen mask is linear in x
        Tensor d = random_tensor({4, 4}, rng), dup = random_tensor({4, 4}, rng), mask;
        const RngState saved = rng;
        dropout(d, 0.3, rng, true, &mask);
        Tensor dd({4, 4});
        dropout_backward(mask, dup, dd);
        auto drop = [&] {
            RngState replay = saved;
            return dot(dropout(d, 0.3, replay, true), dup);
        };
        CHECK(max_fd_error(drop, d, dd) < 1e-4);
    }
}

TEST_CASE("backward functions accumulate") {
    RngState rng(2);
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({3, 2}, rng), up = random_tensor({2, 2}, rng);
    Tensor once({2, 3}), twice({2, 3});
    matmul_backward(a, b, up, &once, nullptr);
    matmul_backward(a, b, up, &twice, nullptr);
    matmul_backward(a, b, up, &twice, nullptr);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(2.0 * once[i]));
}

TEST_CASE("zero_grads clears exactly") {
    Parameter p("p", Tensor({2, 2}, {1, 2, 3, 4}));
    p.grad.fill(3.5);
    std::vector<Parameter*> ps{&p};
    zero_grads(ps);
    for (double g : p.grad.data()) CHECK(g == 0.0);
    CHECK(p.grad.shape() == p.value.shape());
}

TEST_CASE("grad_check sanity") {
    Parameter p("w", Tensor({3}, {0.5, -1.0, 2.0}));
    const std::vector<double> coef{1.5, -2.0, 0.25};
    auto linear_loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s += coef[i] * p.value[i];
        return s;
    };
    for (std::size_t i = 0; i < 3; ++i) p.grad[i] = coef[i];
    std::vector<Parameter*> ps{&p};
    const auto ok = grad_check(linear_loss, ps);
    CHECK(ok.max_rel_error < 1e-9);
    CHECK(ok.entries_checked == 3);

    // Quadratic with gradient deliberately doubled: |2g - g| / max(1, 2g, g) = 0.5.
    auto quad = [&] { return 5.0 * p.value[2] * p.value[2]; };
    p.grad.fill(0.0);
    p.grad[2] = 2.0 * (10.0 * p.value[2]);
    const auto bad = grad_check(quad, ps);
    CHECK(bad.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(bad.worst_param == "w");
    CHECK(bad.worst_index == 2);

    CHECK_THROWS_AS(grad_check(quad, ps, {1e-3, 0}), ConfigError);
    CHECK_THROWS_AS(grad_check(quad, ps, {1e-7, 0}), ConfigError);
    // Values are restored after probing.
    CHECK(p.value == Tensor({3}, {0.5, -1.0, 2.0}));
}
