#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "pconv/ops.hpp"
#include "pconv/tensor.hpp"
#include "testutil.hpp"

using namespace pconv;
using testutil::max_abs_diff;

TEST_CASE("tensor shape bookkeeping") {
    Tensor<float> t(2, 3, 4, 5);
    CHECK(t.size() == 120);
    CHECK(t.shape().str() == "(2,3,4,5)");
    CHECK_THROWS_AS(Tensor<float>::from_values(1, 1, 2, 2, {1.f, 2.f, 3.f}), ShapeError);
    t.at(1, 2, 3, 4) = 7.f;
    CHECK(t[t.size() - 1] == 7.f);
}

TEST_CASE("conv2d scalar multiply-add") {
    auto x = Tensor<float>::from_values(1, 1, 1, 1, {2.f});
    auto w = Tensor<float>::from_values(1, 1, 1, 1, {3.f});
    auto y = conv2d(x, w, Tensor<float>::channel_vector({1.f}), 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 7.f);
}

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
    Tensor<float> x(1, 1, 3, 3, 1.f);
    Tensor<float> w(1, 1, 3, 3, 1.f);
    auto y = conv2d(x, w, Tensor<float>::channel_vector({0.f}), 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 9.f);
}

TEST_CASE("conv2d matches the naive quintuple-loop oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 1 + int(rng.next_below(2));
        const int ci = 1 + int(rng.next_below(3));
        const int co = 1 + int(rng.next_below(3));
        const int h = 3 + int(rng.next_below(6));
        const int w = 3 + int(rng.next_below(6));
        const int k = rng.uniform() < 0.5 ? 1 : 3;
        const int stride = 1 + int(rng.next_below(2));
        const int pad = int(rng.next_below(2));
        auto x = testutil::random_tensor_f({n, ci, h, w}, rng);
        auto wt = testutil::random_tensor_f({co, ci, k, k}, rng);
        std::vector<float> bias;
        for (int i = 0; i < co; ++i) bias.push_back(float(rng.uniform(-0.5, 0.5)));
        auto got = conv2d(x, wt, Tensor<float>::channel_vector(bias), stride, pad);
        auto want = oracles::conv2d_naive(x, wt, bias, stride, pad);
        CHECK(max_abs_diff(got, want) < 1e-5);
    }
}

TEST_CASE("conv2d names the offending axis") {
    Tensor<float> x(1, 3, 4, 4);
    Tensor<float> w(2, 4, 3, 3);
    CHECK_THROWS_WITH(conv2d(x, w, Tensor<float>(1, 2, 1, 1), 1, 1),
                      Catch::Matchers::ContainsSubstring("channel"));
    Tensor<float> weven(2, 3, 2, 2);
    CHECK_THROWS_AS(conv2d(x, weven, Tensor<float>(1, 2, 1, 1), 1, 1), ShapeError);
}

TEST_CASE("upsample_nearest replicates pixels") {
    auto x = Tensor<float>::from_values(1, 1, 2, 2, {1.f, 2.f, 3.f, 4.f});
    auto y = upsample_nearest(x, 2);
    const std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(y.values() == want);

    CHECK(testutil::bit_identical(upsample_nearest(x, 1), x));
}

TEST_CASE("upsample then 2x2 average-pool recovers the original") {
    Rng rng(7);
    auto x = testutil::random_tensor_f({2, 3, 5, 4}, rng);
    auto up = upsample_nearest(x, 2);
    auto back = avg_pool2(up);
    CHECK(max_abs_diff(back, x) < 1e-6);
}

TEST_CASE("batch_norm standardizes two-point channels") {
    auto x = Tensor<float>::from_values(1, 1, 1, 2, {1.f, 3.f});
    Tensor<float> gamma(1, 1, 1, 1, 1.f), beta(1, 1, 1, 1, 0.f);
    Tensor<float> rm(1, 1, 1, 1, 0.f), rv(1, 1, 1, 1, 1.f);
    auto y = batch_norm(x, gamma, beta, 1e-5f, BnMode::Train, rm, rv);
    CHECK(y[0] == Catch::Approx(-1.0).margin(1e-2));
    CHECK(y[1] == Catch::Approx(1.0).margin(1e-2));
}

TEST_CASE("batch_norm constant channel yields beta") {
    Tensor<float> x(2, 1, 3, 3, 5.f);
    Tensor<float> gamma(1, 1, 1, 1, 2.f), beta(1, 1, 1, 1, 0.7f);
    Tensor<float> rm(1, 1, 1, 1), rv(1, 1, 1, 1, 1.f);
    auto y = batch_norm(x, gamma, beta, 1e-5f, BnMode::Train, rm, rv);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == Catch::Approx(0.7).margin(1e-6));
}

TEST_CASE("batch_norm drives channel means to beta and stds to |gamma|") {
    Rng rng(31);
    auto x = testutil::random_tensor_f({3, 4, 6, 6}, rng, -2.0, 3.0);
    Tensor<float> gamma(1, 4, 1, 1), beta(1, 4, 1, 1);
    for (int c = 0; c < 4; ++c) {
        gamma[std::size_t(c)] = float(rng.uniform(0.5, 2.0));
        beta[std::size_t(c)] = float(rng.uniform(-1.0, 1.0));
    }
    Tensor<float> rm(1, 4, 1, 1), rv(1, 4, 1, 1, 1.f);
    auto y = batch_norm(x, gamma, beta, 1e-6f, BnMode::Train, rm, rv);
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0;
        std::size_t m = 0;
        for (int n = 0; n < 3; ++n)
            for (int yy = 0; yy < 6; ++yy)
                for (int xx = 0; xx < 6; ++xx) {
                    mean += y.at(n, c, yy, xx);
                    ++m;
                }
        mean /= double(m);
        CHECK(mean == Catch::Approx(double(beta[std::size_t(c)])).margin(1e-5));
        double var = 0.0;
        for (int n = 0; n < 3; ++n)
            for (int yy = 0; yy < 6; ++yy)
                for (int xx = 0; xx < 6; ++xx)
                    var += (y.at(n, c, yy, xx) - mean) * (y.at(n, c, yy, xx) - mean);
        var /= double(m);
        CHECK(std::sqrt(var) ==
              Catch::Approx(std::abs(double(gamma[std::size_t(c)]))).margin(1e-3));
    }
    // affine inversion recovers the standardized values
    for (int c = 0; c < 4; ++c)
        for (int n = 0; n < 3; ++n)
            for (int yy = 0; yy < 6; ++yy) {
                const double z =
                    (y.at(n, c, yy, 0) - beta[std::size_t(c)]) / gamma[std::size_t(c)];
                CHECK(std::abs(z) < 10.0); // standardized magnitude, sanity bound
            }
}

TEST_CASE("batch_norm eval mode uses running statistics") {
    Tensor<float> x(1, 1, 1, 2);
    x[0] = 4.f;
    x[1] = 8.f;
    Tensor<float> gamma(1, 1, 1, 1, 1.f), beta(1, 1, 1, 1, 0.f);
    Tensor<float> rm(1, 1, 1, 1, 4.f), rv(1, 1, 1, 1, 4.f);
    auto y = batch_norm(x, gamma, beta, 0.f, BnMode::Eval, rm, rv);
    CHECK(y[0] == Catch::Approx(0.0).margin(1e-6));
    CHECK(y[1] == Catch::Approx(2.0).margin(1e-6));
    CHECK(rm[0] == 4.f); // eval never touches the running stats
}

TEST_CASE("activations") {
    auto x = Tensor<float>::from_values(1, 1, 1, 3, {-1.f, 0.f, 2.f});
    auto r = relu(x);
    CHECK(r.values() == std::vector<float>{0.f, 0.f, 2.f});
    CHECK(testutil::bit_identical(relu(r), r)); // idempotent

    auto l = leaky_relu(Tensor<float>::from_values(1, 1, 1, 2, {-1.f, 2.f}), 0.2f);
    CHECK(l[0] == Catch::Approx(-0.2).margin(1e-7));
    CHECK(l[1] == 2.f);
    CHECK_THROWS_AS(leaky_relu(x, 1.5f), ContractError);

    auto a = activation(x, ActKind::Relu);
    CHECK(testutil::bit_identical(a, r));
}

TEST_CASE("concat_channels layout and round trip") {
    Rng rng(5);
    auto a = testutil::random_tensor_f({1, 1, 2, 2}, rng);
    auto b = testutil::random_tensor_f({1, 2, 2, 2}, rng);
    auto y = concat_channels(a, b);
    CHECK(y.shape() == Shape{1, 3, 2, 2});
    CHECK(testutil::bit_identical(slice_channels(y, 0, 1), a));
    CHECK(testutil::bit_identical(slice_channels(y, 1, 2), b));

    Tensor<float> empty(1, 0, 2, 2);
    CHECK(testutil::bit_identical(concat_channels(a, empty), a));

    Tensor<float> wrong(1, 1, 3, 2);
    CHECK_THROWS_AS(concat_channels(a, wrong), ShapeError);
}

TEST_CASE("max_pool2 picks the window maximum") {
    auto x = Tensor<float>::from_values(1, 1, 2, 4, {1.f, 5.f, 2.f, 0.f, 3.f, 4.f, -1.f, 7.f});
    std::vector<std::size_t> arg;
    auto y = max_pool2(x, &arg);
    CHECK(y.values() == std::vector<float>{5.f, 7.f});
    CHECK(arg[0] == 1);
    CHECK(arg[1] == 7);
    CHECK_THROWS_AS(max_pool2(Tensor<float>(1, 1, 3, 4)), ShapeError);
}

TEST_CASE("sigmoid range") {
    Rng rng(11);
    auto x = testutil::random_tensor_f({1, 2, 3, 3}, rng, -10.0, 10.0);
    auto y = sigmoid(x);
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(y[i] > 0.f);
        CHECK(y[i] < 1.f);
    }
}
