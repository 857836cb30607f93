#include <cstring>
#include <random>

#include <doctest.h>

#include "skelres/resnet.hpp"
#include "support/oracles.hpp"

using namespace skelres;
using namespace skelres::testing;

namespace {

template <typename Scalar>
bool bit_identical(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    return a.same_shape(b) &&
           std::memcmp(a.flat().data(), b.flat().data(),
                       sizeof(Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

/// A same-width stack of units whose second conv is zeroed, so every residual
/// branch contributes exactly nothing.
template <typename Scalar>
std::vector<UnitParams<Scalar>> zeroed_branch_stack(const NetworkSpec& spec, Index n_units,
                                                    Index width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<UnitParams<Scalar>> units;
    for (Index u = 0; u < n_units; ++u) {
        UnitParams<Scalar> p;
        p.conv1 = {random_uniform<Scalar>({width, width, 3, 3}, rng, -0.3, 0.3),
                   random_uniform<Scalar>({width}, rng, -0.1, 0.1)};
        p.conv2 = {Tensor<Scalar>::zeros({width, width, 3, 3}), Tensor<Scalar>::zeros({width})};
        p.bn1 = {random_uniform<Scalar>({width}, rng, 0.5, 1.5),
                 random_uniform<Scalar>({width}, rng, -0.2, 0.2), Tensor<Scalar>({width}),
                 Tensor<Scalar>::full({width}, Scalar(1))};
        p.bn2 = {random_uniform<Scalar>({width}, rng, 0.5, 1.5), Tensor<Scalar>::zeros({width}),
                 Tensor<Scalar>({width}), Tensor<Scalar>::full({width}, Scalar(1))};
        (void)spec;
        units.push_back(std::move(p));
    }
    return units;
}

}  // namespace

TEST_SUITE("resnet") {

TEST_CASE("depth family: only 6n+2 depths are accepted") {
    for (Index depth : {Index(8), Index(14), Index(20), Index(44), Index(110)}) {
        NetworkSpec spec = make_network_spec(depth, UnitKind::Proposed, 10);
        CHECK(spec.units_per_stage == (depth - 2) / 6);
        CHECK(total_units(spec) == 3 * spec.units_per_stage);
    }
    CHECK(total_units(make_network_spec(20, UnitKind::Proposed, 10)) == 9);
    CHECK(total_units(make_network_spec(44, UnitKind::Proposed, 10)) == 21);
    CHECK(total_units(make_network_spec(110, UnitKind::Proposed, 10)) == 54);

    for (Index depth : {Index(2), Index(6), Index(7), Index(9), Index(12), Index(21)})
        CHECK_THROWS_AS(make_network_spec(depth, UnitKind::Proposed, 10), DepthError);
    CHECK_THROWS_AS(make_network_spec(20, UnitKind::Proposed, 1), ConfigError);
}

TEST_CASE("stage plan: widths 16/32/64 with stride-2 transitions") {
    NetworkSpec spec = make_network_spec(20, UnitKind::Proposed, 10);
    for (Index u = 0; u < 9; ++u) {
        UnitSpec us = unit_spec_at(spec, u);
        if (u == 0) CHECK((us.in_channels == 16 && us.out_channels == 16 && us.stride == 1));
        if (u == 3) CHECK((us.in_channels == 16 && us.out_channels == 32 && us.stride == 2));
        if (u == 6) CHECK((us.in_channels == 32 && us.out_channels == 64 && us.stride == 2));
        if (u != 3 && u != 6) {
            CHECK(us.stride == 1);
            CHECK(us.in_channels == us.out_channels);
        }
    }
    CHECK_THROWS_AS(unit_spec_at(spec, 9), OutOfRangeError);
    CHECK_THROWS_AS(unit_spec_at(spec, -1), OutOfRangeError);
}

TEST_CASE("parameter counts are frozen for depth 20 with 10 classes") {
    NetworkParams<float> proposed = alloc_network<float>(make_network_spec(20, UnitKind::Proposed, 10));
    CHECK(count_params(proposed) == 270282);
    NetworkParams<float> original = alloc_network<float>(make_network_spec(20, UnitKind::Original, 10));
    CHECK(count_params(original) == 270410);
    // The two kinds differ only in where normalization sits: the widths of the
    // transition units' first norm layers and the stem norm account for the gap.
    CHECK(count_params(original) - count_params(proposed) == 2 * (16 + 32 + 64) - 2 * (16 + 32));
}

TEST_CASE("initialization is deterministic per seed") {
    NetworkSpec spec = make_network_spec(8, UnitKind::Proposed, 4);
    NetworkParams<float> a = init_network<float>(spec, 7);
    NetworkParams<float> b = init_network<float>(spec, 7);
    NetworkParams<float> c = init_network<float>(spec, 8);
    CHECK(bit_identical(a.stem.w, b.stem.w));
    CHECK(bit_identical(a.units[2].conv1.w, b.units[2].conv1.w));
    CHECK(bit_identical(a.fc_w, b.fc_w));
    CHECK_FALSE(bit_identical(a.stem.w, c.stem.w));
    // Norm layers start as the identity map with empty running history.
    CHECK(a.units[0].bn1.gamma.flat().minCoeff() == 1.0f);
    CHECK(a.units[0].bn1.beta.flat().maxCoeff() == 0.0f);
    CHECK(a.units[0].bn1.running_mean.flat().maxCoeff() == 0.0f);
    CHECK(a.units[0].bn1.running_var.flat().minCoeff() == 1.0f);
}

TEST_CASE("forward pass shapes and inference determinism") {
    std::mt19937_64 rng(21);
    for (UnitKind kind : {UnitKind::Original, UnitKind::Proposed}) {
        NetworkSpec spec = make_network_spec(8, kind, 5);
        NetworkParams<float> net = init_network<float>(spec, 3);
        Tensor<float> x = random_uniform<float>({2, 3, 32, 32}, rng, 0.0, 1.0);
        std::mt19937_64 r1(9), r2(77);
        Tensor<float> y1 = network_forward(net, x, Mode::Infer, r1);
        Tensor<float> y2 = network_forward(net, x, Mode::Infer, r2);
        CHECK(y1.dim(0) == 2);
        CHECK(y1.dim(1) == 5);
        CHECK(bit_identical(y1, y2));  // inference ignores the rng entirely

        Tensor<float> bad = random_uniform<float>({2, 4, 32, 32}, rng);
        std::mt19937_64 r3(1);
        CHECK_THROWS_AS(network_forward(net, bad, Mode::Infer, r3), ShapeError);
    }
}

TEST_CASE("parameter-free shortcut subsamples and zero-pads") {
    Tensor<double> x({1, 2, 4, 4});
    for (Index i = 0; i < x.size(); ++i) x(i) = static_cast<double>(i);
    Tensor<double> y = shortcut_forward(x, Index(5), Index(2));
    CHECK(y.dim(1) == 5);
    CHECK(y.dim(2) == 2);
    CHECK(y.dim(3) == 2);
    for (Index c = 0; c < 2; ++c)
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j)
                CHECK(y(0, c, i, j) == x(0, c, 2 * i, 2 * j));  // top-left subsample
    for (Index c = 2; c < 5; ++c)
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j) CHECK(y(0, c, i, j) == 0.0);

    // Identity case returns the input unchanged.
    CHECK(bit_identical(shortcut_forward(x, Index(2), Index(1)), x));

    // Gradient routes back only through the copied entries.
    Tensor<double> gy = Tensor<double>::full({1, 5, 2, 2}, 3.0);
    Tensor<double> gx = shortcut_backward(gy, {1, 2, 4, 4}, Index(2));
    CHECK(gx(0, 0, 0, 0) == 3.0);
    CHECK(gx(0, 0, 0, 1) == 0.0);
    CHECK(gx(0, 1, 2, 2) == 3.0);
    CHECK(gx(0, 1, 3, 3) == 0.0);
}

TEST_CASE("zeroed-branch stacks: identity for pre-activation, rectifier for post") {
    const Index width = 4, n_units = 3;
    Tensor<double> x({2, width, 5, 5});
    std::mt19937_64 xrng(22);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (Index i = 0; i < x.size(); ++i) x(i) = d(xrng);  // negative entries matter here

    for (UnitKind kind : {UnitKind::Proposed, UnitKind::Original}) {
        NetworkSpec spec;
        spec.kind = kind;
        spec.dropout_rate = 0.5;
        UnitSpec us{width, width, 1};
        auto units = zeroed_branch_stack<double>(spec, n_units, width, 31);

        std::mt19937_64 rng(5);
        Tensor<double> y = x;
        std::vector<UnitCache<double>> caches(static_cast<std::size_t>(n_units));
        for (Index u = 0; u < n_units; ++u)
            y = unit_forward(spec, us, units[static_cast<std::size_t>(u)], y, Mode::Train, rng,
                             &caches[static_cast<std::size_t>(u)]);

        if (kind == UnitKind::Proposed) {
            CHECK(bit_identical(y, x));  // exact identity, not approximate
            Tensor<double> gy({2, width, 5, 5});
            for (Index i = 0; i < gy.size(); ++i) gy(i) = d(xrng);
            Tensor<double> g = gy;
            for (Index u = n_units - 1; u >= 0; --u) {
                UnitParams<double> grads;
                g = unit_backward(spec, units[static_cast<std::size_t>(u)],
                                  caches[static_cast<std::size_t>(u)], g, grads);
                // The zeroed conv blocks all branch gradient flow upstream of it.
                CHECK(grads.conv1.w.flat().abs().maxCoeff() == 0.0);
            }
            CHECK(bit_identical(g, gy));  // exact pass-through
        } else {
            // Post-addition rectification clips the negative entries instead.
            CHECK_FALSE(bit_identical(y, x));
            Tensor<double> want = x;
            want.flat() = want.flat().max(0.0);
            CHECK(bit_identical(y, want));
        }
    }
}

TEST_CASE("residual trace is exactly additive for pre-activation networks") {
    std::mt19937_64 rng(23);
    for (Index depth : {Index(8), Index(14)}) {
        NetworkSpec spec = make_network_spec(depth, UnitKind::Proposed, 3);
        spec.stage_widths = {4, 8, 16};
        NetworkParams<double> net = init_network<double>(spec, 100 + depth);
        Tensor<double> x = random_uniform<double>({2, 3, 16, 16}, rng, 0.0, 1.0);
        ResidualTrace<double> tr = residual_trace(net, x);
        CHECK(tr.inputs.size() == static_cast<std::size_t>(total_units(spec)));
        CHECK(trace_reconstruction_error(tr) == 0.0);
        CHECK(trace_additivity_gap(tr) == 0.0);
    }

    NetworkParams<double> orig =
        init_network<double>(make_network_spec(8, UnitKind::Original, 3), 5);
    Tensor<double> x = random_uniform<double>({1, 3, 8, 8}, rng);
    CHECK_THROWS_AS(residual_trace(orig, x), KindError);
}

TEST_CASE("post-addition rectification breaks additivity (negative control)") {
    // Drive one Original unit by hand and test the telescoping equation
    // x_out = x_in + branch directly: rectification makes it fail whenever the
    // pre-activation goes negative anywhere.
    NetworkSpec spec;
    spec.kind = UnitKind::Original;
    UnitSpec us{3, 3, 1};
    std::mt19937_64 rng(24);
    UnitParams<double> p;
    p.conv1 = {random_uniform<double>({3, 3, 3, 3}, rng, -0.5, 0.5),
               random_uniform<double>({3}, rng)};
    p.conv2 = {random_uniform<double>({3, 3, 3, 3}, rng, -0.5, 0.5),
               random_uniform<double>({3}, rng)};
    p.bn1 = {Tensor<double>::full({3}, 1.0), Tensor<double>::zeros({3}), Tensor<double>({3}),
             Tensor<double>::full({3}, 1.0)};
    p.bn2 = {Tensor<double>::full({3}, 1.0), random_uniform<double>({3}, rng),
             Tensor<double>({3}), Tensor<double>::full({3}, 1.0)};

    Tensor<double> x = random_uniform<double>({2, 3, 6, 6}, rng, -1.0, 1.0);
    UnitCache<double> cache;
    std::mt19937_64 r(1);
    Tensor<double> y = unit_forward(spec, us, p, x, Mode::Train, r, &cache);
    Tensor<double> telescoped(x.shape());
    telescoped.flat() = x.flat() + cache.branch.flat();
    const double gap = (y.flat() - telescoped.flat()).abs().maxCoeff();
    CHECK(gap > 0.0);  // the rectifier clipped some negative pre-activation
    // And y is exactly the rectified telescoped sum.
    Tensor<double> clipped = telescoped;
    clipped.flat() = clipped.flat().max(0.0);
    CHECK(bit_identical(y, clipped));
}

}  // TEST_SUITE
