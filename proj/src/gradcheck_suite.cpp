#include "skelres/gradcheck.hpp"

#include "skelres/layers.hpp"
#include "skelres/resnet.hpp"
#include "skelres/rng.hpp"

namespace skelres {
namespace {

Tensor<double> random_tensor(const std::vector<Index>& shape, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(shape);
    for (Index i = 0; i < t.size(); ++i) t(i) = lo + (hi - lo) * uniform_real(rng);
    return t;
}

/// Keeps values away from 0 so ReLU kinks never sit inside the finite
/// difference stencil.
Tensor<double> random_tensor_off_zero(const std::vector<Index>& shape, std::mt19937_64& rng) {
    Tensor<double> t = random_tensor(shape, rng);
    for (Index i = 0; i < t.size(); ++i)
        if (std::abs(t(i)) < 0.05) t(i) += t(i) >= 0 ? 0.1 : -0.1;
    return t;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
    return (y.flat() * w.flat()).sum();
}

struct Suite {
    std::vector<LayerCheck> checks;
    std::mt19937_64 rng;
    std::mt19937_64 sample_rng;
    bool corrupt = false;
    bool corrupted_yet = false;

    explicit Suite(std::uint64_t seed) : rng(seed), sample_rng(derive_seed(seed, 1)) {}

    void add(const std::string& name, double tol, Tensor<double>& param,
             Tensor<double> analytic, const std::function<double()>& loss,
             Index max_coords = -1, double eps = 1e-4, double kink_rtol = 0.0) {
        if (corrupt && !corrupted_yet) {
            // Negative control: skew one analytic value; the checker must flag it.
            analytic(0) += 0.5 * std::max(1.0, std::abs(analytic(0)));
            corrupted_yet = true;
        }
        GradCheckResult r =
            check_gradient(param, analytic, loss, eps, max_coords, &sample_rng, kink_rtol);
        checks.push_back({name, r.max_rel_err, tol, r.max_rel_err <= tol && r.coords_checked > 0});
    }
};

void check_conv(Suite& s, ConvRoute route, Index stride, const std::string& name) {
    Tensor<double> x = random_tensor({2, 2, 5, 4}, s.rng);
    Tensor<double> w = random_tensor({3, 2, 3, 3}, s.rng);
    Tensor<double> b = random_tensor({3}, s.rng);
    ConvCache<double> cache;
    Tensor<double> y = conv2d_forward(x, w, b, stride, 1, &cache, route);
    Tensor<double> wsum = random_tensor(y.shape(), s.rng);
    ConvGrads<double> g = conv2d_backward(cache, w, wsum, route);
    auto loss = [&] {
        return weighted_sum(conv2d_forward<double>(x, w, b, stride, 1, nullptr, route), wsum);
    };
    s.add(name + ".gx", 1e-5, x, g.gx, loss);
    s.add(name + ".gw", 1e-5, w, g.gw, loss);
    s.add(name + ".gb", 1e-5, b, g.gb, loss);
}

void check_batch_norm(Suite& s) {
    Tensor<double> x = random_tensor({3, 2, 4, 3}, s.rng);
    Tensor<double> gamma = random_tensor({2}, s.rng, 0.5, 1.5);
    Tensor<double> beta = random_tensor({2}, s.rng);
    const double eps_bn = 1e-5, mom = 0.9;
    auto fwd = [&](BnCache<double>* cache) {
        Tensor<double> rm({2}), rv = Tensor<double>::full({2}, 1.0);  // scratch copies
        return batch_norm_forward(x, gamma, beta, rm, rv, Mode::Train, eps_bn, mom, cache);
    };
    BnCache<double> cache;
    Tensor<double> y = fwd(&cache);
    Tensor<double> wsum = random_tensor(y.shape(), s.rng);
    BnGrads<double> g = batch_norm_backward(cache, gamma, wsum);
    auto loss = [&] { return weighted_sum(fwd(nullptr), wsum); };
    s.add("batch_norm.gx", 1e-4, x, g.gx, loss);
    s.add("batch_norm.ggamma", 1e-4, gamma, g.ggamma, loss);
    s.add("batch_norm.gbeta", 1e-4, beta, g.gbeta, loss);
}

void check_relu(Suite& s) {
    Tensor<double> x = random_tensor_off_zero({2, 3, 4, 4}, s.rng);
    ReluCache cache;
    Tensor<double> y = relu_forward(x, &cache);
    Tensor<double> wsum = random_tensor(y.shape(), s.rng);
    Tensor<double> gx = relu_backward(cache, wsum);
    auto loss = [&] { return weighted_sum(relu_forward(x), wsum); };
    s.add("relu.gx", 1e-5, x, gx, loss);
}

void check_dropout(Suite& s) {
    Tensor<double> x = random_tensor({2, 3, 4, 4}, s.rng);
    const std::uint64_t mask_seed = derive_seed(77, 0);
    auto fwd = [&](DropoutCache<double>* cache) {
        std::mt19937_64 r(mask_seed);  // same mask every evaluation
        return dropout_forward(x, 0.5, Mode::Train, r, cache);
    };
    DropoutCache<double> cache;
    Tensor<double> y = fwd(&cache);
    Tensor<double> wsum = random_tensor(y.shape(), s.rng);
    Tensor<double> gx = dropout_backward(cache, wsum);
    auto loss = [&] { return weighted_sum(fwd(nullptr), wsum); };
    s.add("dropout.gx", 1e-5, x, gx, loss);
}

void check_pool(Suite& s) {
    Tensor<double> x = random_tensor({2, 3, 4, 5}, s.rng);
    PoolCache cache;
    Tensor<double> y = global_mean_pool_forward(x, &cache);
    Tensor<double> wsum = random_tensor(y.shape(), s.rng);
    Tensor<double> gx = global_mean_pool_backward(cache, wsum);
    auto loss = [&] { return weighted_sum(global_mean_pool_forward(x), wsum); };
    s.add("global_mean_pool.gx", 1e-5, x, gx, loss);
}

void check_fc(Suite& s) {
    Tensor<double> x = random_tensor({3, 4}, s.rng);
    Tensor<double> w = random_tensor({4, 5}, s.rng);
    Tensor<double> b = random_tensor({5}, s.rng);
    FcCache<double> cache;
    Tensor<double> y = fully_connected_forward(x, w, b, &cache);
    Tensor<double> wsum = random_tensor(y.shape(), s.rng);
    FcGrads<double> g = fully_connected_backward(cache, w, wsum);
    auto loss = [&] { return weighted_sum(fully_connected_forward(x, w, b), wsum); };
    s.add("fully_connected.gx", 1e-5, x, g.gx, loss);
    s.add("fully_connected.gw", 1e-5, w, g.gw, loss);
    s.add("fully_connected.gb", 1e-5, b, g.gb, loss);
}

void check_softmax(Suite& s) {
    Tensor<double> logits = random_tensor({4, 6}, s.rng, -2.0, 2.0);
    std::vector<int> labels{1, 0, 5, 3};
    SoftmaxResult<double> r = softmax_cross_entropy(logits, labels);
    auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
    s.add("softmax_cross_entropy.glogits", 1e-6, logits, r.grad, loss, -1, 1e-5);
}

void check_unit(Suite& s, UnitKind kind, Index stride, const std::string& name) {
    NetworkSpec spec;
    spec.kind = kind;
    spec.dropout_rate = kind == UnitKind::Proposed ? 0.5 : 0.0;
    UnitSpec us{4, stride == 1 ? Index(4) : Index(8), stride};

    UnitParams<double> p;
    p.conv1 = {random_tensor({us.out_channels, us.in_channels, 3, 3}, s.rng, -0.3, 0.3),
               random_tensor({us.out_channels}, s.rng, -0.1, 0.1)};
    p.conv2 = {random_tensor({us.out_channels, us.out_channels, 3, 3}, s.rng, -0.3, 0.3),
               random_tensor({us.out_channels}, s.rng, -0.1, 0.1)};
    const Index bn1c = kind == UnitKind::Proposed ? us.in_channels : us.out_channels;
    p.bn1 = {random_tensor({bn1c}, s.rng, 0.5, 1.5), random_tensor({bn1c}, s.rng),
             Tensor<double>({bn1c}), Tensor<double>::full({bn1c}, 1.0)};
    p.bn2 = {random_tensor({us.out_channels}, s.rng, 0.5, 1.5),
             random_tensor({us.out_channels}, s.rng), Tensor<double>({us.out_channels}),
             Tensor<double>::full({us.out_channels}, 1.0)};

    Tensor<double> x = random_tensor({2, us.in_channels, 6, 5}, s.rng);
    const std::uint64_t mask_seed = derive_seed(91, static_cast<std::uint64_t>(stride));
    auto fwd = [&](UnitCache<double>* cache) {
        UnitParams<double> scratch = p;  // train mode mutates running stats
        std::mt19937_64 r(mask_seed);
        return unit_forward(spec, us, scratch, x, Mode::Train, r, cache);
    };
    UnitCache<double> cache;
    Tensor<double> y = fwd(&cache);
    Tensor<double> wsum = random_tensor(y.shape(), s.rng);
    UnitParams<double> g;
    Tensor<double> gx = unit_backward(spec, p, cache, wsum, g);
    auto loss = [&] { return weighted_sum(fwd(nullptr), wsum); };
    s.add(name + ".gx", 1e-4, x, gx, loss, 60, 1e-4, 1e-4);
    s.add(name + ".conv1.gw", 1e-4, p.conv1.w, g.conv1.w, loss, 60, 1e-4, 1e-4);
    s.add(name + ".conv2.gw", 1e-4, p.conv2.w, g.conv2.w, loss, 60, 1e-4, 1e-4);
    // conv2's bias is a live parameter only when conv2 ends the branch; with a
    // batch norm after it (the post-activation ordering) the normalization
    // cancels any per-channel constant, the loss is flat in that direction,
    // and finite differences would measure nothing but roundoff.
    if (kind == UnitKind::Proposed)
        s.add(name + ".conv2.gb", 1e-4, p.conv2.b, g.conv2.b, loss, -1, 1e-4, 1e-4);
    s.add(name + ".bn1.ggamma", 1e-4, p.bn1.gamma, g.bn1.gamma, loss, -1, 1e-4, 1e-4);
    s.add(name + ".bn2.gbeta", 1e-4, p.bn2.beta, g.bn2.beta, loss, -1, 1e-4, 1e-4);
}

void check_network(Suite& s, UnitKind kind, const std::string& name) {
    NetworkSpec spec = make_network_spec(8, kind, 3);
    NetworkParams<double> net = init_network<double>(spec, 12345);
    Tensor<double> x = random_tensor({2, 3, 8, 8}, s.rng, 0.0, 1.0);
    std::vector<int> labels{1, 2};
    const std::uint64_t mask_seed = derive_seed(17, kind == UnitKind::Proposed ? 1 : 0);

    NetworkParams<double> scratch = net;  // loss evaluations must not advance running stats
    auto loss = [&] {
        scratch = net;
        std::mt19937_64 r(mask_seed);
        Tensor<double> logits = network_forward(scratch, x, Mode::Train, r);
        return softmax_cross_entropy(logits, labels).loss;
    };

    NetCache<double> cache;
    NetworkParams<double> fwd_net = net;
    std::mt19937_64 r(mask_seed);
    Tensor<double> logits = network_forward(fwd_net, x, Mode::Train, r, &cache);
    SoftmaxResult<double> sm = softmax_cross_entropy(logits, labels);
    NetworkParams<double> grads = alloc_network<double>(spec);
    Tensor<double> gx = network_backward(net, cache, sm.grad, grads);

    s.add(name + ".gx", 1e-3, x, gx, loss, 24, 1e-4, 1e-3);
    s.add(name + ".stem.gw", 1e-3, net.stem.w, grads.stem.w, loss, 24, 1e-4, 1e-3);
    s.add(name + ".unit01.conv1.gw", 1e-3, net.units[1].conv1.w, grads.units[1].conv1.w, loss,
          24, 1e-4, 1e-3);
    s.add(name + ".unit02.bn1.ggamma", 1e-3, net.units[2].bn1.gamma, grads.units[2].bn1.gamma,
          loss, 24, 1e-4, 1e-3);
    s.add(name + ".fc.gb", 1e-3, net.fc_b, grads.fc_b, loss, -1, 1e-4, 1e-3);
}

}  // namespace

std::vector<LayerCheck> run_network_gradcheck(Index depth, UnitKind kind, std::uint64_t seed) {
    NetworkSpec spec = make_network_spec(depth, kind, 3);
    spec.stage_widths = {2, 4, 8};
    Suite s(seed);
    NetworkParams<double> net = init_network<double>(spec, derive_seed(seed, 5));
    Tensor<double> x = random_tensor({2, 3, 8, 8}, s.rng, 0.0, 1.0);
    std::vector<int> labels{0, 2};
    const std::uint64_t mask_seed = derive_seed(seed, 6);

    NetworkParams<double> scratch = net;
    auto loss = [&] {
        scratch = net;
        std::mt19937_64 r(mask_seed);
        return softmax_cross_entropy(network_forward(scratch, x, Mode::Train, r), labels).loss;
    };

    NetCache<double> cache;
    NetworkParams<double> fwd_net = net;
    std::mt19937_64 r(mask_seed);
    SoftmaxResult<double> sm =
        softmax_cross_entropy(network_forward(fwd_net, x, Mode::Train, r, &cache), labels);
    NetworkParams<double> grads = alloc_network<double>(spec);
    Tensor<double> gx = network_backward(net, cache, sm.grad, grads);

    const std::string tag = "network[depth" + std::to_string(depth) + "," + to_string(kind) + "]";
    s.add(tag + ".gx", 1e-3, x, gx, loss, 16, 1e-4, 1e-3);
    s.add(tag + ".stem.gw", 1e-3, net.stem.w, grads.stem.w, loss, 16, 1e-4, 1e-3);
    const Index last = total_units(spec) - 1;
    const Index mid = last / 2;
    s.add(tag + ".unit" + std::to_string(mid) + ".conv2.gw",
          1e-3, net.units[static_cast<std::size_t>(mid)].conv2.w,
          grads.units[static_cast<std::size_t>(mid)].conv2.w, loss, 16, 1e-4, 1e-3);
    s.add(tag + ".unit" + std::to_string(last) + ".bn2.ggamma",
          1e-3, net.units[static_cast<std::size_t>(last)].bn2.gamma,
          grads.units[static_cast<std::size_t>(last)].bn2.gamma, loss, 16, 1e-4, 1e-3);
    s.add(tag + ".fc.gw", 1e-3, net.fc_w, grads.fc_w, loss, 16, 1e-4, 1e-3);
    return s.checks;
}

std::vector<LayerCheck> run_layer_gradchecks(std::uint64_t seed, bool corrupt) {
    Suite s(seed);
    s.corrupt = corrupt;
    check_conv(s, ConvRoute::Direct, 1, "conv2d[direct]");
    check_conv(s, ConvRoute::Im2col, 1, "conv2d[im2col]");
    check_conv(s, ConvRoute::Im2col, 2, "conv2d[stride2]");
    check_batch_norm(s);
    check_relu(s);
    check_dropout(s);
    check_pool(s);
    check_fc(s);
    check_softmax(s);
    check_unit(s, UnitKind::Proposed, 1, "unit[proposed]");
    check_unit(s, UnitKind::Proposed, 2, "unit[proposed,down]");
    check_unit(s, UnitKind::Original, 1, "unit[original]");
    check_network(s, UnitKind::Proposed, "network[proposed]");
    check_network(s, UnitKind::Original, "network[original]");
    return s.checks;
}

}  // namespace skelres
