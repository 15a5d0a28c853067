#include "doctest.h"

#include <cmath>
#include <vector>

#include "caracal/tensor.hpp"

using namespace caracal;
using T64 = Tensor<double>;

namespace {

Rng test_rng(std::uint64_t seed = 42) { return Rng(seed); }

} // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul basics") {
    T64 a({2, 2}, {1, 2, 3, 4});
    T64 id({2, 2}, {1, 0, 0, 1});
    CHECK(matmul(a, id).data == std::vector<double>{1, 2, 3, 4});

    T64 row({1, 2}, {1, 2});
    T64 col({2, 1}, {3, 4});
    auto dot = matmul(row, col);
    CHECK(dot.dims == Shape{1, 1});
    CHECK(dot[0] == 11.0); // 1*3 + 2*4, by hand

    T64 bad({3, 2}, {0, 0, 0, 0, 0, 0});
    CHECK_THROWS_WITH_AS(matmul(a, bad), doctest::Contains("[2,2]"), std::invalid_argument);
}

TEST_CASE("left_pad prepends zeros") {
    T64 x({3}, {5, 6, 7});
    CHECK(left_pad(x, 2).data == std::vector<double>{0, 0, 5, 6, 7});
    CHECK(left_pad(x, 0).data == x.data);
}

TEST_CASE("slice copies a range") {
    T64 x({2, 3}, {1, 2, 3, 4, 5, 6});
    auto s = slice(x, 1, 1, 3);
    CHECK(s.dims == Shape{2, 2});
    CHECK(s.data == std::vector<double>{2, 3, 5, 6});
    CHECK_THROWS_AS(slice(x, 1, 2, 4), std::invalid_argument);
}

TEST_CASE("linear applies xW + b over the last dim") {
    T64 w({2, 2}, {2, 3, 4, 5});
    T64 x({2}, {1, 0});
    auto y = linear(x, w);
    CHECK(y[0] == 2.0);
    CHECK(y[1] == 3.0);

    T64 id({2, 2}, {1, 0, 0, 1});
    T64 b({2}, {7, 7});
    auto y2 = linear(T64({2}, {1, 1}), id, &b);
    CHECK(y2[0] == 8.0);
    CHECK(y2[1] == 8.0);

    // by-hand matrix multiply: [2,3] @ [[1,2],[3,4]] + [1,1]
    T64 w3({2, 2}, {1, 2, 3, 4});
    T64 b3({2}, {1, 1});
    auto y3 = linear(T64({2}, {2, 3}), w3, &b3);
    CHECK(y3[0] == doctest::Approx(12).epsilon(1e-12));
    CHECK(y3[1] == doctest::Approx(17).epsilon(1e-12));

    CHECK_THROWS_AS(linear(T64({3}, {1, 2, 3}), w), std::invalid_argument);
}

TEST_CASE("layer_norm normalizes per vector") {
    T64 g1({2}, {1, 1}), b0({2}, {0, 0});
    auto y = layer_norm(T64({2}, {1, 3}), g1, b0, 1e-12);
    CHECK(y[0] == doctest::Approx(-1).epsilon(1e-9));
    CHECK(y[1] == doctest::Approx(1).epsilon(1e-9));

    auto yc = layer_norm(T64({4}, {5, 5, 5, 5}), T64({4}, {1, 1, 1, 1}), T64({4}, {0, 0, 0, 0}),
                         1e-5);
    for (double v : yc.data) CHECK(std::abs(v) < 1e-9);

    // mean 2, population var 8/3
    auto y3 = layer_norm(T64({3}, {0, 2, 4}), T64({3}, {2, 2, 2}), T64({3}, {1, 1, 1}), 1e-12);
    CHECK(y3[0] == doctest::Approx(1 - 2 * std::sqrt(1.5)).epsilon(1e-9));
    CHECK(y3[1] == doctest::Approx(1).epsilon(1e-9));
    CHECK(y3[2] == doctest::Approx(1 + 2 * std::sqrt(1.5)).epsilon(1e-9));
}

TEST_CASE("layer_norm output is standardized before affine") {
    auto rng = test_rng(7);
    const std::size_t d = 16;
    auto x = randn<double>({4, d}, 1.0, rng);
    auto y = layer_norm(x, full<double>({d}, 1.0), zeros<double>({d}), 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < d; ++j) mean += y[r * d + j];
        mean /= d;
        for (std::size_t j = 0; j < d; ++j) var += (y[r * d + j] - mean) * (y[r * d + j] - mean);
        var /= d;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("silu values") {
    CHECK(silu(T64({1}, {0}))[0] == 0.0);
    CHECK(std::abs(silu(T64({1}, {20}))[0] - 20.0) < 1e-6);
    CHECK(silu(T64({1}, {1}))[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("softmax rows") {
    auto y = softmax_lastdim(T64({2}, {0, 0}));
    CHECK(y[0] == doctest::Approx(0.5));
    CHECK(y[1] == doctest::Approx(0.5));

    auto big = softmax_lastdim(T64({2}, {1000, 0}));
    CHECK(all_finite(big));
    CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(big[1] == doctest::Approx(0.0).epsilon(1e-9));

    auto y3 = softmax_lastdim(T64({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
    CHECK(y3[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(y3[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(y3[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax invariants: sums to one, shift invariant") {
    auto rng = test_rng(11);
    auto x = randn<double>({5, 9}, 3.0, rng);
    auto y = softmax_lastdim(x);
    auto yshift = softmax_lastdim(add(x, full<double>({9}, 17.5)));
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0;
        for (std::size_t j = 0; j < 9; ++j) s += y[r * 9 + j];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y[i] - yshift[i]) < 1e-6);
}

TEST_CASE("causal_depthwise_conv1d") {
    // impulse response reveals the kernel reversed-aligned
    T64 x({1, 4, 1}, {1, 0, 0, 0});
    T64 k({1, 3}, {2, 5, 11}); // [a,b,c]
    auto y = causal_depthwise_conv1d(x, k);
    CHECK(y.data == std::vector<double>{11, 5, 2, 0});

    // delta at the current position is the identity
    auto rng = test_rng(3);
    auto xr = randn<double>({2, 6, 3}, 1.0, rng);
    T64 kd({3, 3}, {0, 0, 1, 0, 0, 1, 0, 0, 1});
    CHECK(causal_depthwise_conv1d(xr, kd).data == xr.data);

    // sliding causal window by hand
    T64 x3({1, 3, 1}, {1, 2, 3});
    T64 k3({1, 3}, {1, 1, 1});
    CHECK(causal_depthwise_conv1d(x3, k3).data == std::vector<double>{1, 3, 6});

    T64 kbad({2, 3}, {0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(causal_depthwise_conv1d(x3, kbad), std::invalid_argument);
}

TEST_CASE("causal conv is exactly causal") {
    auto rng = test_rng(5);
    const std::size_t l = 10;
    auto x = randn<double>({1, l, 2}, 1.0, rng);
    auto k = randn<double>({2, 3}, 1.0, rng);
    auto y = causal_depthwise_conv1d(x, k);
    for (std::size_t t = 0; t < l; ++t) {
        auto xp = x;
        xp[(0 * l + t) * 2 + 1] += 3.25;
        auto yp = causal_depthwise_conv1d(xp, k);
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t c = 0; c < 2; ++c)
                CHECK(yp[(0 * l + s) * 2 + c] == y[(0 * l + s) * 2 + c]);
    }
}

TEST_CASE("grouped_pointwise_conv1d") {
    // group size 1, scalar weights [1]: adds the bias only
    auto rng = test_rng(9);
    auto x = randn<double>({1, 3, 4}, 1.0, rng);
    auto w1 = full<double>({4, 1, 1}, 1.0);
    auto b = randn<double>({4}, 1.0, rng);
    auto y = grouped_pointwise_conv1d(x, w1, &b);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(y[i] == doctest::Approx(x[i] + b.data[i % 4]).epsilon(1e-12));

    // block-diagonal matvec: identity group and swap group
    T64 x1({1, 1, 4}, {1, 2, 3, 4});
    T64 w({2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
    auto y1 = grouped_pointwise_conv1d(x1, w);
    CHECK(y1.data == std::vector<double>{1, 2, 4, 3});

    T64 wbad({3, 2, 2}, std::vector<double>(12, 0.0));
    CHECK_THROWS_AS(grouped_pointwise_conv1d(x1, wbad), std::invalid_argument);
}

TEST_CASE("grouped conv with one group equals a dense positionwise linear") {
    auto rng = test_rng(13);
    const std::size_t d = 6;
    auto x = randn<double>({2, 4, d}, 1.0, rng);
    auto w = randn<double>({1, d, d}, 1.0, rng);
    auto b = randn<double>({d}, 1.0, rng);
    auto y = grouped_pointwise_conv1d(x, w, &b);

    // same matrix transposed for xW convention
    Tensor<double> wt({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) wt[j * d + i] = w[i * d + j];
    auto yref = linear(x, wt, &b);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i] - yref[i]) < 1e-12);
}

TEST_CASE("embedding_lookup gathers rows") {
    T64 table({3, 2}, {1, 2, 3, 4, 5, 6});
    auto y = embedding_lookup<double>({0}, 1, 1, table);
    CHECK(y.data == std::vector<double>{1, 2});

    auto y2 = embedding_lookup<double>({2, 2}, 1, 2, table);
    CHECK(y2.data == std::vector<double>{5, 6, 5, 6});

    auto y3 = embedding_lookup<double>({1, 0}, 1, 2, T64({2, 2}, {1, 2, 3, 4}));
    CHECK(y3.data == std::vector<double>{3, 4, 1, 2});

    CHECK_THROWS_WITH_AS(embedding_lookup<double>({3}, 1, 1, table), doctest::Contains("range"),
                         std::invalid_argument);
}

TEST_CASE("cross_entropy") {
    auto uniform = zeros<double>({2, 256});
    CHECK(cross_entropy(uniform, {7, 200}) == doctest::Approx(std::log(256.0)).epsilon(1e-12));

    auto confident = zeros<double>({1, 4});
    confident[2] = 1e6;
    CHECK(cross_entropy(confident, {2}) == doctest::Approx(0.0).epsilon(1e-9));

    T64 two({1, 2}, {0, std::log(3.0)});
    CHECK(cross_entropy(two, {0}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(two, {2}), std::invalid_argument);
}

TEST_CASE("head split/merge round trip") {
    auto rng = test_rng(21);
    auto x = randn<double>({2, 5, 8}, 1.0, rng);
    auto h = split_heads(x, 2);
    CHECK(h.dims == Shape{2, 2, 5, 4});
    // head h owns channels [h*d, (h+1)*d)
    CHECK(h[((0 * 2 + 1) * 5 + 0) * 4 + 0] == x[(0 * 5 + 0) * 8 + 4]);
    CHECK(merge_heads(h).data == x.data);
}

TEST_CASE("ops are pure and finite") {
    auto rng = test_rng(17);
    auto x = randn<double>({2, 4, 6}, 1.0, rng);
    auto w = randn<double>({6, 6}, 0.5, rng);
    auto a = linear(x, w);
    auto b2 = linear(x, w);
    CHECK(a.data == b2.data);
    CHECK(all_finite(a));
    auto s1 = silu(x);
    CHECK(s1.data == silu(x).data);
    CHECK(all_finite(layer_norm(x, full<double>({6}, 1.0), zeros<double>({6}), 1e-5)));
}

TEST_SUITE_END();
