#include <cstring>
#include <random>

#include <doctest.h>

#include "skelres/layers.hpp"
#include "support/oracles.hpp"

using namespace skelres;
using namespace skelres::testing;

namespace {

template <typename Scalar>
double max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    REQUIRE(a.same_shape(b));
    return static_cast<double>((a.flat() - b.flat()).abs().maxCoeff());
}

template <typename Scalar>
bool bit_identical(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    return a.same_shape(b) &&
           std::memcmp(a.flat().data(), b.flat().data(),
                       sizeof(Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_SUITE("tensor_layers") {

TEST_CASE("tensor shape, flat storage and matrix views") {
    Tensor<double> t({2, 3});
    CHECK(t.size() == 6);
    CHECK(Tensor<double>::shape_string(t.shape()) == "[2x3]");
    for (Index i = 0; i < 6; ++i) t(i) = static_cast<double>(i);
    CHECK(t(1, 2) == 5.0);  // row-major: (1,2) -> 1*3+2

    auto m = t.as_matrix(2, 3);
    CHECK(m(0, 1) == 1.0);
    CHECK(m(1, 0) == 3.0);

    Tensor<double> r = t;
    r.reshape({3, 2});
    CHECK(r(2, 1) == 5.0);
    CHECK_THROWS_AS(r.reshape({4, 2}), ShapeError);

    Tensor<float> f = t.template cast<float>();
    CHECK(f(5) == 5.0f);
    CHECK(zeros_like(t).flat().abs().maxCoeff() == 0.0);
    CHECK(t.all_finite());
    t(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv2d matches the six-loop reference on random input") {
    std::mt19937_64 rng(101);
    for (auto [stride, pad, k] : {std::tuple<Index, Index, Index>{1, 1, 3},
                                  {2, 1, 3},
                                  {1, 0, 1},
                                  {2, 0, 1}}) {
        Tensor<double> x = random_uniform<double>({2, 3, 7, 6}, rng);
        Tensor<double> w = random_uniform<double>({4, 3, k, k}, rng);
        Tensor<double> b = random_uniform<double>({4}, rng);
        Tensor<double> want = conv2d_reference(x, w, b, stride, pad);
        for (ConvRoute route : {ConvRoute::Direct, ConvRoute::Im2col}) {
            Tensor<double> got = conv2d_forward<double>(x, w, b, stride, pad, nullptr, route);
            CHECK(got.same_shape(want));
            CHECK(max_abs_diff(got, want) < 1e-12);
        }
    }
}

TEST_CASE("conv2d direct and im2col routes agree bit for bit on integer data") {
    std::mt19937_64 rng(102);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor<float> x = random_integer_valued<float>({2, 4, 6, 5}, rng);
        Tensor<float> w = random_integer_valued<float>({3, 4, 3, 3}, rng);
        Tensor<float> b = random_integer_valued<float>({3}, rng);
        Tensor<float> a = conv2d_forward<float>(x, w, b, 1, 1, nullptr, ConvRoute::Direct);
        Tensor<float> c = conv2d_forward<float>(x, w, b, 1, 1, nullptr, ConvRoute::Im2col);
        CHECK(bit_identical(a, c));
    }
}

TEST_CASE("conv2d identity kernel and shape arithmetic") {
    std::mt19937_64 rng(103);
    Tensor<double> x = random_uniform<double>({1, 1, 4, 4}, rng);
    Tensor<double> w = Tensor<double>::full({1, 1, 1, 1}, 1.0);
    Tensor<double> b({1});
    Tensor<double> y = conv2d_forward(x, w, b, Index(1), Index(0));
    CHECK(bit_identical(x, y));

    // 3x3 stride-2 pad-1 on 8x8 halves the spatial size.
    Tensor<double> x2 = random_uniform<double>({1, 2, 8, 8}, rng);
    Tensor<double> w2 = random_uniform<double>({5, 2, 3, 3}, rng);
    Tensor<double> b2({5});
    Tensor<double> y2 = conv2d_forward(x2, w2, b2, Index(2), Index(1));
    CHECK(y2.dim(2) == 4);
    CHECK(y2.dim(3) == 4);
}

TEST_CASE("conv2d rejects unsupported geometry") {
    Tensor<double> x({1, 2, 4, 4}), b({3});
    CHECK_THROWS_AS(conv2d_forward(x, Tensor<double>({3, 2, 2, 2}), b, Index(1), Index(0)),
                    ShapeError);  // even kernel
    CHECK_THROWS_AS(conv2d_forward(x, Tensor<double>({3, 2, 3, 3}), b, Index(3), Index(1)),
                    ShapeError);  // unsupported stride
    CHECK_THROWS_AS(conv2d_forward(x, Tensor<double>({3, 2, 3, 3}), b, Index(1), Index(2)),
                    ShapeError);  // pad must be (k-1)/2 or 0
    CHECK_THROWS_AS(conv2d_forward(x, Tensor<double>({3, 4, 3, 3}), b, Index(1), Index(1)),
                    ShapeError);  // channel mismatch
}

TEST_CASE("batch norm train mode normalizes and updates running stats") {
    std::mt19937_64 rng(104);
    Tensor<double> x = random_uniform<double>({4, 3, 5, 6}, rng, -3.0, 5.0);
    Tensor<double> gamma = Tensor<double>::full({3}, 1.0), beta({3});
    Tensor<double> rm({3}), rv = Tensor<double>::full({3}, 1.0);
    rm(0) = 10.0;  // pre-existing running stats participate in the blend
    const double eps = 1e-5, momentum = 0.9;
    Tensor<double> y = batch_norm_forward(x, gamma, beta, rm, rv, Mode::Train, eps, momentum);

    std::vector<double> mean_y, var_y, mean_x, var_x;
    channel_stats_reference(y, mean_y, var_y);
    channel_stats_reference(x, mean_x, var_x);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(mean_y[c]) < 1e-12);
        CHECK(var_y[c] == doctest::Approx(1.0).epsilon(1e-4));  // eps shrinks it slightly
    }
    // running <- momentum * running + (1 - momentum) * batch
    CHECK(rm(0) == doctest::Approx(0.9 * 10.0 + 0.1 * mean_x[0]).epsilon(1e-12));
    CHECK(rv(1) == doctest::Approx(0.9 * 1.0 + 0.1 * var_x[1]).epsilon(1e-12));
}

TEST_CASE("batch norm infer mode is the running-stats affine map") {
    std::mt19937_64 rng(105);
    Tensor<double> x = random_uniform<double>({2, 2, 3, 3}, rng);
    Tensor<double> gamma({2}), beta({2}), rm({2}), rv({2});
    gamma(0) = 2.0, gamma(1) = 0.5;
    beta(0) = -1.0, beta(1) = 3.0;
    rm(0) = 0.25, rm(1) = -0.5;
    rv(0) = 4.0, rv(1) = 0.25;
    const double eps = 1e-5;
    Tensor<double> rm_copy = rm, rv_copy = rv;
    Tensor<double> y = batch_norm_forward(x, gamma, beta, rm, rv, Mode::Infer, eps, 0.9);
    CHECK(bit_identical(rm, rm_copy));  // inference must not touch running stats
    CHECK(bit_identical(rv, rv_copy));
    for (Index n = 0; n < 2; ++n)
        for (Index c = 0; c < 2; ++c)
            for (Index i = 0; i < 3; ++i)
                for (Index j = 0; j < 3; ++j) {
                    const double want =
                        gamma(c) * (x(n, c, i, j) - rm(c)) / std::sqrt(rv(c) + eps) + beta(c);
                    CHECK(y(n, c, i, j) == doctest::Approx(want).epsilon(1e-14));
                }
}

TEST_CASE("relu forward and backward") {
    Tensor<double> x({1, 1, 2, 2});
    x(0) = -1.5, x(1) = 0.0, x(2) = 2.5, x(3) = -0.1;
    ReluCache cache;
    Tensor<double> y = relu_forward(x, &cache);
    CHECK(y(0) == 0.0);
    CHECK(y(1) == 0.0);
    CHECK(y(2) == 2.5);
    CHECK(y(3) == 0.0);
    Tensor<double> gy = Tensor<double>::full({1, 1, 2, 2}, 7.0);
    Tensor<double> gx = relu_backward(cache, gy);
    CHECK(gx(0) == 0.0);
    CHECK(gx(1) == 0.0);  // the kink itself carries zero gradient
    CHECK(gx(2) == 7.0);
    CHECK(gx(3) == 0.0);
}

TEST_CASE("dropout scales survivors, is identity at rate 0 and in inference") {
    std::mt19937_64 rng(106);
    Tensor<double> x = random_uniform<double>({2, 3, 4, 4}, rng, 0.5, 1.5);

    std::mt19937_64 r1(42);
    Tensor<double> y = dropout_forward(x, 0.5, Mode::Train, r1);
    int kept = 0;
    for (Index i = 0; i < x.size(); ++i) {
        if (y(i) != 0.0) {
            ++kept;
            CHECK(y(i) == doctest::Approx(x(i) * 2.0).epsilon(1e-15));  // inverted scaling
        }
    }
    CHECK(kept > 0);
    CHECK(kept < x.size());

    std::mt19937_64 r2(42);
    Tensor<double> y2 = dropout_forward(x, 0.5, Mode::Train, r2);
    CHECK(bit_identical(y, y2));  // mask depends only on the rng state

    std::mt19937_64 r3(43);
    Tensor<double> yid = dropout_forward(x, 0.0, Mode::Train, r3);
    CHECK(bit_identical(x, yid));
    Tensor<double> yinf = dropout_forward(x, 0.5, Mode::Infer, r3);
    CHECK(bit_identical(x, yinf));

    CHECK_THROWS_AS(dropout_forward(x, 1.0, Mode::Train, r3), RateError);
    CHECK_THROWS_AS(dropout_forward(x, -0.1, Mode::Train, r3), RateError);
}

TEST_CASE("global mean pool averages each channel") {
    Tensor<double> x({1, 2, 2, 2});
    for (Index i = 0; i < 4; ++i) x(i) = static_cast<double>(i + 1);  // channel 0: 1..4
    for (Index i = 4; i < 8; ++i) x(i) = 10.0;                        // channel 1: constant
    PoolCache cache;
    Tensor<double> y = global_mean_pool_forward(x, &cache);
    CHECK(y.dim(0) == 1);
    CHECK(y.dim(1) == 2);
    CHECK(y(0) == doctest::Approx(2.5));
    CHECK(y(1) == doctest::Approx(10.0));
    Tensor<double> gy({1, 2});
    gy(0) = 4.0, gy(1) = 8.0;
    Tensor<double> gx = global_mean_pool_backward(cache, gy);
    CHECK(gx(0, 0, 1, 1) == doctest::Approx(1.0));  // 4 / (2*2)
    CHECK(gx(0, 1, 0, 0) == doctest::Approx(2.0));
}

TEST_CASE("fully connected layer on a hand example") {
    Tensor<double> x({1, 2}), w({2, 3}), b({3});
    x(0) = 1.0, x(1) = -2.0;
    for (Index i = 0; i < 6; ++i) w(i) = static_cast<double>(i);  // rows are input dims
    b(0) = 0.5, b(1) = -0.5, b(2) = 1.0;
    Tensor<double> y = fully_connected_forward(x, w, b);
    // y_j = x0*w(0,j) + x1*w(1,j) + b_j
    CHECK(y(0) == doctest::Approx(1.0 * 0 - 2.0 * 3 + 0.5));
    CHECK(y(1) == doctest::Approx(1.0 * 1 - 2.0 * 4 - 0.5));
    CHECK(y(2) == doctest::Approx(1.0 * 2 - 2.0 * 5 + 1.0));
}

TEST_CASE("softmax cross entropy on known distributions") {
    Tensor<double> logits({2, 4});  // row 0 uniform, row 1 strongly peaked at class 2
    for (Index j = 0; j < 4; ++j) logits(0, j) = 1.7;
    logits(1, 0) = -30.0, logits(1, 1) = -30.0, logits(1, 2) = 30.0, logits(1, 3) = -30.0;
    SoftmaxResult<double> r = softmax_cross_entropy(logits, {0, 2});
    const double uniform_loss = std::log(4.0);
    CHECK(r.loss == doctest::Approx(uniform_loss / 2.0).epsilon(1e-9));  // second row ~0

    for (Index i = 0; i < 2; ++i) {
        double psum = 0, gsum = 0;
        for (Index j = 0; j < 4; ++j) {
            psum += r.probs(i, j);
            gsum += r.grad(i, j);
        }
        CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(gsum == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 4}), LabelRangeError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1, 2}), LabelRangeError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0}), ShapeError);

    // Extreme logits must not overflow (max subtraction).
    Tensor<double> big({1, 2});
    big(0) = 1000.0, big(1) = -1000.0;
    SoftmaxResult<double> rb = softmax_cross_entropy(big, {0});
    CHECK(rb.loss == doctest::Approx(0.0));
    CHECK(std::isfinite(rb.probs(0, 0)));
}

}  // TEST_SUITE
