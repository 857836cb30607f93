#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "skelres/layers.hpp"
#include "skelres/tensor.hpp"

namespace skelres {

// ---------------------------------------------------------------------------
// Architecture description
//
// Depth-d networks from the 6n+2 family: a 3x3/16 stem, three stages of n
// residual units at widths 16/32/64 (stride 2 entering stages 2 and 3,
// parameter-free shortcuts), global mean pooling and a fully connected
// classifier. Two unit flavours:
//   Original:  y = relu( conv-BN-relu-conv-BN (x) + shortcut(x) )
//   Proposed:  y = BN-relu-conv-BN-relu-dropout-conv (x) + shortcut(x)
// The Proposed stem is a bare conv (its BN+ReLU live inside the first unit's
// pre-activation); the Original stem is conv+BN+ReLU.
// ---------------------------------------------------------------------------

enum class UnitKind { Original, Proposed };

inline std::string to_string(UnitKind k) {
    return k == UnitKind::Original ? "original" : "proposed";
}

inline UnitKind unit_kind_from_string(const std::string& s) {
    if (s == "original") return UnitKind::Original;
    if (s == "proposed") return UnitKind::Proposed;
    throw KindError("unknown residual unit kind '" + s + "' (want original|proposed)");
}

struct NetworkSpec {
    Index depth = 20;
    UnitKind kind = UnitKind::Proposed;
    Index num_classes = 0;
    std::array<Index, 3> stage_widths{16, 32, 64};
    Index units_per_stage = 3;  // n in 6n+2
    Index input_channels = 3;
    double dropout_rate = 0.5;  // between the two convs of a Proposed unit
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;  // running-stat smoothing
};

inline NetworkSpec make_network_spec(Index depth, UnitKind kind, Index num_classes) {
    if (depth < 8 || (depth - 2) % 6 != 0)
        throw DepthError("depth " + std::to_string(depth) +
                         " is not of the form 6n+2 (canonical choices: 20, 32, 44, 56, 110)");
    if (num_classes < 2)
        throw ConfigError("num_classes",
                          "must be at least 2, got " + std::to_string(num_classes));
    NetworkSpec s;
    s.depth = depth;
    s.kind = kind;
    s.num_classes = num_classes;
    s.units_per_stage = (depth - 2) / 6;
    s.dropout_rate = kind == UnitKind::Proposed ? 0.5 : 0.0;
    return s;
}

/// Geometry of one unit, derived from its position in the stack.
struct UnitSpec {
    Index in_channels = 16;
    Index out_channels = 16;
    Index stride = 1;
    bool identity_shortcut() const { return stride == 1 && in_channels == out_channels; }
};

inline Index total_units(const NetworkSpec& s) { return 3 * s.units_per_stage; }

inline UnitSpec unit_spec_at(const NetworkSpec& s, Index u) {
    if (u < 0 || u >= total_units(s)) throw OutOfRangeError("unit index out of range");
    const Index stage = u / s.units_per_stage;
    const bool first = (u % s.units_per_stage) == 0;
    UnitSpec us;
    us.out_channels = s.stage_widths[static_cast<std::size_t>(stage)];
    us.in_channels = (stage == 0 || !first)
                         ? us.out_channels
                         : s.stage_widths[static_cast<std::size_t>(stage - 1)];
    us.stride = (stage > 0 && first) ? 2 : 1;
    return us;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ConvParams {
    Tensor<Scalar> w, b;
};

template <typename Scalar>
struct BnParams {
    Tensor<Scalar> gamma, beta, running_mean, running_var;
};

template <typename Scalar>
struct UnitParams {
    // Original: conv1-bn1-relu-conv2-bn2.  Proposed: bn1-relu-conv1-bn2-relu-drop-conv2.
    ConvParams<Scalar> conv1, conv2;
    BnParams<Scalar> bn1, bn2;
};

template <typename Scalar>
struct NetworkParams {
    NetworkSpec spec;
    ConvParams<Scalar> stem;
    std::optional<BnParams<Scalar>> stem_bn;  // Original kind only
    std::vector<UnitParams<Scalar>> units;
    Tensor<Scalar> fc_w, fc_b;
};

/// Named handle onto one parameter tensor; weight_decay marks conv/FC weights
/// (the only tensors L2 regularization applies to).
template <typename Scalar>
struct ParamRef {
    std::string name;
    Tensor<Scalar>* tensor = nullptr;
    bool weight_decay = false;
};

namespace detail {

template <typename Scalar>
ConvParams<Scalar> alloc_conv(Index f, Index c, Index k) {
    return {Tensor<Scalar>({f, c, k, k}), Tensor<Scalar>({f})};
}

template <typename Scalar>
BnParams<Scalar> alloc_bn(Index c) {
    BnParams<Scalar> p{Tensor<Scalar>({c}), Tensor<Scalar>({c}), Tensor<Scalar>({c}),
                       Tensor<Scalar>({c})};
    return p;
}

inline std::string unit_name(Index u) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "unit%02d", static_cast<int>(u));
    return buf;
}

template <typename Scalar, typename Fn>
void visit_params(NetworkParams<Scalar>& net, bool include_running_stats, Fn&& fn) {
    fn("stem.w", net.stem.w, true);
    fn("stem.b", net.stem.b, false);
    if (net.stem_bn) {
        fn("stem_bn.gamma", net.stem_bn->gamma, false);
        fn("stem_bn.beta", net.stem_bn->beta, false);
        if (include_running_stats) {
            fn("stem_bn.running_mean", net.stem_bn->running_mean, false);
            fn("stem_bn.running_var", net.stem_bn->running_var, false);
        }
    }
    for (Index u = 0; u < static_cast<Index>(net.units.size()); ++u) {
        auto& up = net.units[static_cast<std::size_t>(u)];
        const std::string base = unit_name(u);
        fn(base + ".conv1.w", up.conv1.w, true);
        fn(base + ".conv1.b", up.conv1.b, false);
        fn(base + ".conv2.w", up.conv2.w, true);
        fn(base + ".conv2.b", up.conv2.b, false);
        for (auto [tag, bn] : {std::pair{".bn1", &up.bn1}, std::pair{".bn2", &up.bn2}}) {
            fn(base + tag + ".gamma", bn->gamma, false);
            fn(base + tag + ".beta", bn->beta, false);
            if (include_running_stats) {
                fn(base + tag + ".running_mean", bn->running_mean, false);
                fn(base + tag + ".running_var", bn->running_var, false);
            }
        }
    }
    fn("fc.w", net.fc_w, true);
    fn("fc.b", net.fc_b, false);
}

}  // namespace detail

/// Allocates a network with every tensor zero-filled (grad accumulators and
/// checkpoint loading start from this).
template <typename Scalar>
NetworkParams<Scalar> alloc_network(const NetworkSpec& spec) {
    NetworkParams<Scalar> net;
    net.spec = spec;
    net.stem = detail::alloc_conv<Scalar>(spec.stage_widths[0], spec.input_channels, 3);
    if (spec.kind == UnitKind::Original)
        net.stem_bn = detail::alloc_bn<Scalar>(spec.stage_widths[0]);
    for (Index u = 0; u < total_units(spec); ++u) {
        const UnitSpec us = unit_spec_at(spec, u);
        UnitParams<Scalar> up;
        up.conv1 = detail::alloc_conv<Scalar>(us.out_channels, us.in_channels, 3);
        up.conv2 = detail::alloc_conv<Scalar>(us.out_channels, us.out_channels, 3);
        // Proposed bn1 normalizes the unit input, Original bn1 the conv1 output.
        up.bn1 = detail::alloc_bn<Scalar>(spec.kind == UnitKind::Proposed ? us.in_channels
                                                                          : us.out_channels);
        up.bn2 = detail::alloc_bn<Scalar>(us.out_channels);
        net.units.push_back(std::move(up));
    }
    net.fc_w = Tensor<Scalar>({spec.stage_widths[2], spec.num_classes});
    net.fc_b = Tensor<Scalar>({spec.num_classes});
    return net;
}

/// He-normal conv/FC weights (std = sqrt(2 / fan_in)), zero biases, BN gamma 1,
/// beta 0, running mean 0, running var 1. Draws in double then casts so the
/// stream of variates is scalar-type independent.
template <typename Scalar>
NetworkParams<Scalar> init_network(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkParams<Scalar> net = alloc_network<Scalar>(spec);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto he_fill = [&](Tensor<Scalar>& w, Index fan_in) {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (Index i = 0; i < w.size(); ++i)
            w(i) = static_cast<Scalar>(normal(rng) * std_dev);
    };
    he_fill(net.stem.w, spec.input_channels * 9);
    if (net.stem_bn) net.stem_bn->gamma.flat() = Scalar(1);
    if (net.stem_bn) net.stem_bn->running_var.flat() = Scalar(1);
    for (Index u = 0; u < total_units(spec); ++u) {
        const UnitSpec us = unit_spec_at(spec, u);
        auto& up = net.units[static_cast<std::size_t>(u)];
        he_fill(up.conv1.w, us.in_channels * 9);
        he_fill(up.conv2.w, us.out_channels * 9);
        up.bn1.gamma.flat() = Scalar(1);
        up.bn1.running_var.flat() = Scalar(1);
        up.bn2.gamma.flat() = Scalar(1);
        up.bn2.running_var.flat() = Scalar(1);
    }
    he_fill(net.fc_w, spec.stage_widths[2]);
    return net;
}

template <typename Scalar>
std::vector<ParamRef<Scalar>> trainable_params(NetworkParams<Scalar>& net) {
    std::vector<ParamRef<Scalar>> refs;
    detail::visit_params(net, false, [&](const std::string& name, Tensor<Scalar>& t, bool wd) {
        refs.push_back({name, &t, wd});
    });
    return refs;
}

/// Trainable parameters plus BN running statistics — the full serializable state.
template <typename Scalar>
std::vector<ParamRef<Scalar>> network_state(NetworkParams<Scalar>& net) {
    std::vector<ParamRef<Scalar>> refs;
    detail::visit_params(net, true, [&](const std::string& name, Tensor<Scalar>& t, bool wd) {
        refs.push_back({name, &t, wd});
    });
    return refs;
}

template <typename Scalar>
Index count_params(const NetworkParams<Scalar>& net) {
    Index n = 0;
    detail::visit_params(const_cast<NetworkParams<Scalar>&>(net), false,
                         [&](const std::string&, Tensor<Scalar>& t, bool) { n += t.size(); });
    return n;
}

// ---------------------------------------------------------------------------
// Parameter-free shortcut: identity, or (stride 2) top-left subsample of each
// 2x2 block with zero-padded extra channels.
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> shortcut_forward(const Tensor<Scalar>& x, Index out_channels, Index stride) {
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (stride == 1 && out_channels == c) return x;
    require(out_channels >= c, "shortcut: cannot drop channels");
    const Index ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
    Tensor<Scalar> y = Tensor<Scalar>::zeros({n, out_channels, ho, wo});
    for (Index in = 0; in < n; ++in)
        for (Index ic = 0; ic < c; ++ic)
            for (Index i = 0; i < ho; ++i)
                for (Index j = 0; j < wo; ++j)
                    y(in, ic, i, j) = x(in, ic, i * stride, j * stride);
    return y;
}

template <typename Scalar>
Tensor<Scalar> shortcut_backward(const Tensor<Scalar>& gy, const std::vector<Index>& x_shape,
                                 Index stride) {
    const Index n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3];
    if (stride == 1 && gy.dim(1) == c) return gy;
    Tensor<Scalar> gx = Tensor<Scalar>::zeros({n, c, h, w});
    const Index ho = gy.dim(2), wo = gy.dim(3);
    for (Index in = 0; in < n; ++in)
        for (Index ic = 0; ic < c; ++ic)  // zero-padded channels carry no gradient
            for (Index i = 0; i < ho; ++i)
                for (Index j = 0; j < wo; ++j)
                    gx(in, ic, i * stride, j * stride) = gy(in, ic, i, j);
    return gx;
}

// ---------------------------------------------------------------------------
// Residual units
// ---------------------------------------------------------------------------

template <typename Scalar>
struct UnitCache {
    ConvCache<Scalar> conv1, conv2;
    BnCache<Scalar> bn1, bn2;
    ReluCache relu1, relu2;
    DropoutCache<Scalar> drop;
    ReluCache post_relu;  // Original only
    Tensor<Scalar> x;      // unit input
    Tensor<Scalar> branch; // residual branch output F(x)
    UnitSpec us;
};

template <typename Scalar>
Tensor<Scalar> unit_forward(const NetworkSpec& spec, const UnitSpec& us, UnitParams<Scalar>& p,
                            const Tensor<Scalar>& x, Mode mode, std::mt19937_64& rng,
                            UnitCache<Scalar>* cache) {
    const Scalar eps = static_cast<Scalar>(spec.bn_eps);
    const Scalar mom = static_cast<Scalar>(spec.bn_momentum);
    Tensor<Scalar> branch;
    if (spec.kind == UnitKind::Proposed) {
        Tensor<Scalar> t = batch_norm_forward(x, p.bn1.gamma, p.bn1.beta, p.bn1.running_mean,
                                              p.bn1.running_var, mode, eps, mom,
                                              cache ? &cache->bn1 : nullptr);
        t = relu_forward(t, cache ? &cache->relu1 : nullptr);
        t = conv2d_forward(t, p.conv1.w, p.conv1.b, us.stride, 1,
                           cache ? &cache->conv1 : nullptr);
        t = batch_norm_forward(t, p.bn2.gamma, p.bn2.beta, p.bn2.running_mean, p.bn2.running_var,
                               mode, eps, mom, cache ? &cache->bn2 : nullptr);
        t = relu_forward(t, cache ? &cache->relu2 : nullptr);
        t = dropout_forward(t, spec.dropout_rate, mode, rng, cache ? &cache->drop : nullptr);
        branch = conv2d_forward(t, p.conv2.w, p.conv2.b, 1, 1, cache ? &cache->conv2 : nullptr);
    } else {
        Tensor<Scalar> t = conv2d_forward(x, p.conv1.w, p.conv1.b, us.stride, 1,
                                          cache ? &cache->conv1 : nullptr);
        t = batch_norm_forward(t, p.bn1.gamma, p.bn1.beta, p.bn1.running_mean, p.bn1.running_var,
                               mode, eps, mom, cache ? &cache->bn1 : nullptr);
        t = relu_forward(t, cache ? &cache->relu1 : nullptr);
        t = conv2d_forward(t, p.conv2.w, p.conv2.b, 1, 1, cache ? &cache->conv2 : nullptr);
        branch = batch_norm_forward(t, p.bn2.gamma, p.bn2.beta, p.bn2.running_mean,
                                    p.bn2.running_var, mode, eps, mom,
                                    cache ? &cache->bn2 : nullptr);
    }

    Tensor<Scalar> sc = shortcut_forward(x, us.out_channels, us.stride);
    Tensor<Scalar> y(branch.shape());
    y.flat() = branch.flat() + sc.flat();
    if (spec.kind == UnitKind::Original)
        y = relu_forward(y, cache ? &cache->post_relu : nullptr);
    if (cache) {
        cache->x = x;
        cache->branch = std::move(branch);
        cache->us = us;
    }
    return y;
}

/// Backward through one unit; parameter gradients land in `g` (assigned, not
/// accumulated), returns gradient wrt the unit input.
template <typename Scalar>
Tensor<Scalar> unit_backward(const NetworkSpec& spec, const UnitParams<Scalar>& p,
                             const UnitCache<Scalar>& cache, const Tensor<Scalar>& gy,
                             UnitParams<Scalar>& g) {
    const UnitSpec& us = cache.us;
    Tensor<Scalar> gsum = gy;
    if (spec.kind == UnitKind::Original) gsum = relu_backward(cache.post_relu, gy);

    // gsum splits into the branch path and the shortcut path.
    Tensor<Scalar> gx_shortcut = shortcut_backward(gsum, cache.x.shape(), us.stride);

    Tensor<Scalar> gx_branch;
    if (spec.kind == UnitKind::Proposed) {
        ConvGrads<Scalar> c2 = conv2d_backward(cache.conv2, p.conv2.w, gsum);
        g.conv2.w = std::move(c2.gw);
        g.conv2.b = std::move(c2.gb);
        Tensor<Scalar> t = dropout_backward(cache.drop, c2.gx);
        t = relu_backward(cache.relu2, t);
        BnGrads<Scalar> b2 = batch_norm_backward(cache.bn2, p.bn2.gamma, t);
        g.bn2.gamma = std::move(b2.ggamma);
        g.bn2.beta = std::move(b2.gbeta);
        ConvGrads<Scalar> c1 = conv2d_backward(cache.conv1, p.conv1.w, b2.gx);
        g.conv1.w = std::move(c1.gw);
        g.conv1.b = std::move(c1.gb);
        t = relu_backward(cache.relu1, c1.gx);
        BnGrads<Scalar> b1 = batch_norm_backward(cache.bn1, p.bn1.gamma, t);
        g.bn1.gamma = std::move(b1.ggamma);
        g.bn1.beta = std::move(b1.gbeta);
        gx_branch = std::move(b1.gx);
    } else {
        BnGrads<Scalar> b2 = batch_norm_backward(cache.bn2, p.bn2.gamma, gsum);
        g.bn2.gamma = std::move(b2.ggamma);
        g.bn2.beta = std::move(b2.gbeta);
        ConvGrads<Scalar> c2 = conv2d_backward(cache.conv2, p.conv2.w, b2.gx);
        g.conv2.w = std::move(c2.gw);
        g.conv2.b = std::move(c2.gb);
        Tensor<Scalar> t = relu_backward(cache.relu1, c2.gx);
        BnGrads<Scalar> b1 = batch_norm_backward(cache.bn1, p.bn1.gamma, t);
        g.bn1.gamma = std::move(b1.ggamma);
        g.bn1.beta = std::move(b1.gbeta);
        ConvGrads<Scalar> c1 = conv2d_backward(cache.conv1, p.conv1.w, b1.gx);
        g.conv1.w = std::move(c1.gw);
        g.conv1.b = std::move(c1.gb);
        gx_branch = std::move(c1.gx);
    }

    Tensor<Scalar> gx(cache.x.shape());
    gx.flat() = gx_branch.flat() + gx_shortcut.flat();
    return gx;
}

// ---------------------------------------------------------------------------
// Whole network
// ---------------------------------------------------------------------------

template <typename Scalar>
struct NetCache {
    ConvCache<Scalar> stem;
    BnCache<Scalar> stem_bn;
    ReluCache stem_relu;
    std::vector<UnitCache<Scalar>> units;
    PoolCache pool;
    FcCache<Scalar> fc;
};

template <typename Scalar>
Tensor<Scalar> network_forward(NetworkParams<Scalar>& net, const Tensor<Scalar>& x, Mode mode,
                               std::mt19937_64& rng, NetCache<Scalar>* cache = nullptr) {
    const NetworkSpec& spec = net.spec;
    require(x.rank() == 4 && x.dim(1) == spec.input_channels,
            "network_forward: input must be N x " + std::to_string(spec.input_channels) +
                " x H x W");
    if (cache) cache->units.resize(static_cast<std::size_t>(total_units(spec)));

    Tensor<Scalar> t = conv2d_forward(x, net.stem.w, net.stem.b, 1, 1,
                                      cache ? &cache->stem : nullptr);
    if (spec.kind == UnitKind::Original) {
        auto& bn = *net.stem_bn;
        t = batch_norm_forward(t, bn.gamma, bn.beta, bn.running_mean, bn.running_var, mode,
                               static_cast<Scalar>(spec.bn_eps),
                               static_cast<Scalar>(spec.bn_momentum),
                               cache ? &cache->stem_bn : nullptr);
        t = relu_forward(t, cache ? &cache->stem_relu : nullptr);
    }
    for (Index u = 0; u < total_units(spec); ++u) {
        const UnitSpec us = unit_spec_at(spec, u);
        t = unit_forward(spec, us, net.units[static_cast<std::size_t>(u)], t, mode, rng,
                         cache ? &cache->units[static_cast<std::size_t>(u)] : nullptr);
    }
    t = global_mean_pool_forward(t, cache ? &cache->pool : nullptr);
    return fully_connected_forward(t, net.fc_w, net.fc_b, cache ? &cache->fc : nullptr);
}

/// Gradients land in `grads` (a NetworkParams of matching spec whose tensors
/// receive d loss / d param; running stats there are untouched).
template <typename Scalar>
Tensor<Scalar> network_backward(const NetworkParams<Scalar>& net, const NetCache<Scalar>& cache,
                                const Tensor<Scalar>& glogits, NetworkParams<Scalar>& grads) {
    const NetworkSpec& spec = net.spec;
    FcGrads<Scalar> fg = fully_connected_backward(cache.fc, net.fc_w, glogits);
    grads.fc_w = std::move(fg.gw);
    grads.fc_b = std::move(fg.gb);
    Tensor<Scalar> t = global_mean_pool_backward(cache.pool, fg.gx);
    for (Index u = total_units(spec) - 1; u >= 0; --u) {
        t = unit_backward(spec, net.units[static_cast<std::size_t>(u)],
                          cache.units[static_cast<std::size_t>(u)], t,
                          grads.units[static_cast<std::size_t>(u)]);
    }
    if (spec.kind == UnitKind::Original) {
        t = relu_backward(cache.stem_relu, t);
        BnGrads<Scalar> bg = batch_norm_backward(cache.stem_bn, net.stem_bn->gamma, t);
        grads.stem_bn->gamma = std::move(bg.ggamma);
        grads.stem_bn->beta = std::move(bg.gbeta);
        t = std::move(bg.gx);
    }
    ConvGrads<Scalar> sg = conv2d_backward(cache.stem, net.stem.w, t);
    grads.stem.w = std::move(sg.gw);
    grads.stem.b = std::move(sg.gb);
    return sg.gx;
}

// ---------------------------------------------------------------------------
// Residual tracing (identity-mapping analysis)
//
// For the Proposed (pre-activation) kind each unit computes y = F(x) + s(x)
// with no activation after the addition, so along any run of identity
// shortcuts the final feature is the first input plus the plain sum of branch
// outputs. residual_trace records inputs/branches/outputs per unit in infer
// mode; the two verification helpers below measure how exactly the recorded
// tensors obey that decomposition.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ResidualTrace {
    std::vector<Tensor<Scalar>> inputs;
    std::vector<Tensor<Scalar>> branches;
    std::vector<Tensor<Scalar>> outputs;
    std::vector<UnitSpec> specs;
};

template <typename Scalar>
ResidualTrace<Scalar> residual_trace(NetworkParams<Scalar>& net, const Tensor<Scalar>& x) {
    const NetworkSpec& spec = net.spec;
    if (spec.kind != UnitKind::Proposed)
        throw KindError("residual tracing requires pre-activation units: the post-addition "
                        "ReLU of the original kind breaks the additive decomposition");
    std::mt19937_64 rng(0);  // infer mode draws nothing
    NetCache<Scalar> cache;
    network_forward(net, x, Mode::Infer, rng, &cache);
    ResidualTrace<Scalar> tr;
    for (Index u = 0; u < total_units(spec); ++u) {
        auto& uc = cache.units[static_cast<std::size_t>(u)];
        tr.inputs.push_back(std::move(uc.x));
        tr.branches.push_back(std::move(uc.branch));
        tr.specs.push_back(uc.us);
    }
    // Unit outputs are the next unit's inputs; rebuild the last from its parts.
    for (std::size_t u = 1; u < tr.inputs.size(); ++u) tr.outputs.push_back(tr.inputs[u]);
    Tensor<Scalar> last(tr.branches.back().shape());
    Tensor<Scalar> sc = shortcut_forward(tr.inputs.back(), tr.specs.back().out_channels,
                                         tr.specs.back().stride);
    last.flat() = tr.branches.back().flat() + sc.flat();
    tr.outputs.push_back(std::move(last));
    return tr;
}

/// Max |y_l - (F_l + s(x_l))| over all units: recomputes each output from the
/// recorded input and branch with the same operand order as the forward pass,
/// so it is 0 whenever the trace is internally consistent.
template <typename Scalar>
Scalar trace_reconstruction_error(const ResidualTrace<Scalar>& tr) {
    Scalar worst = 0;
    for (std::size_t u = 0; u < tr.inputs.size(); ++u) {
        Tensor<Scalar> sc =
            shortcut_forward(tr.inputs[u], tr.specs[u].out_channels, tr.specs[u].stride);
        Tensor<Scalar> rebuilt(tr.branches[u].shape());
        rebuilt.flat() = tr.branches[u].flat() + sc.flat();
        worst = std::max(worst, (rebuilt.flat() - tr.outputs[u].flat()).abs().maxCoeff());
    }
    return worst;
}

/// Max |x_L - (x_l + sum of branches)| over every maximal identity-shortcut
/// run, accumulating the sum in forward order. Floating-point addition is
/// commutative, so this telescoped sum reproduces the forward result exactly.
template <typename Scalar>
Scalar trace_additivity_gap(const ResidualTrace<Scalar>& tr) {
    Scalar worst = 0;
    std::size_t u = 0;
    while (u < tr.inputs.size()) {
        if (!tr.specs[u].identity_shortcut()) {
            ++u;
            continue;
        }
        Tensor<Scalar> acc = tr.inputs[u];
        std::size_t v = u;
        while (v < tr.inputs.size() && tr.specs[v].identity_shortcut()) {
            acc.flat() += tr.branches[v].flat();
            worst = std::max(worst, (acc.flat() - tr.outputs[v].flat()).abs().maxCoeff());
            ++v;
        }
        u = v;
    }
    return worst;
}

}  // namespace skelres
