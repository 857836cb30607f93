#include "skelres/train.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "skelres/rng.hpp"

namespace skelres {

std::vector<LrSegment> standard_schedule() {
    return {{1, 75, 0.01}, {76, 150, 0.001}, {151, 200, 0.0001}};
}

std::vector<LrSegment> scaled_schedule(int epochs) {
    if (epochs < 1) throw OutOfRangeError("schedule needs at least 1 epoch");
    if (epochs < 3) {
        // Too short for three phases; run everything at the initial rate.
        return {{1, epochs, 0.01}};
    }
    // Phase boundaries at 75/200 and 150/200 of the budget, rounded, each
    // phase kept non-empty.
    int b1 = std::clamp(static_cast<int>(std::lround(epochs * 75.0 / 200.0)), 1, epochs - 2);
    int b2 = std::clamp(static_cast<int>(std::lround(epochs * 150.0 / 200.0)), b1 + 1,
                        epochs - 1);
    return {{1, b1, 0.01}, {b1 + 1, b2, 0.001}, {b2 + 1, epochs, 0.0001}};
}

double lr_at_epoch(const std::vector<LrSegment>& schedule, int epoch) {
    for (const auto& seg : schedule)
        if (epoch >= seg.first_epoch && epoch <= seg.last_epoch) return seg.rate;
    throw OutOfRangeError("epoch " + std::to_string(epoch) + " is outside the schedule");
}

SgdState make_sgd_state(NetworkParams<float>& net) {
    SgdState state;
    for (const auto& ref : trainable_params(net)) state.velocity.push_back(zeros_like(*ref.tensor));
    return state;
}

void sgd_step(std::vector<ParamRef<float>>& params, std::vector<ParamRef<float>>& grads,
              SgdState& state, float lr, float momentum, float weight_decay) {
    if (params.size() != grads.size() || params.size() != state.velocity.size())
        throw ShapeError("sgd_step: parameter/gradient/velocity lists differ in length");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<float>& p = *params[i].tensor;
        Tensor<float>& g = *grads[i].tensor;
        Tensor<float>& v = state.velocity[i];
        if (!p.same_shape(g) || !p.same_shape(v))
            throw ShapeError("sgd_step: shape mismatch at " + params[i].name);
        const float wd = params[i].weight_decay ? weight_decay : 0.0f;
        v.flat() = momentum * v.flat() + (g.flat() + wd * p.flat());
        p.flat() -= lr * v.flat();
    }
}

namespace {

/// Interleaved uint8 RGB rows -> planar float CHW scaled to [0,1].
void fill_input(Tensor<float>& x, Index n, const ActionImage& img) {
    for (Index c = 0; c < 3; ++c)
        for (Index i = 0; i < img.height; ++i)
            for (Index j = 0; j < img.width; ++j)
                x(n, c, i, j) = static_cast<float>(img.at(i, j, c)) / 255.0f;
}

int argmax_row(const Tensor<float>& logits, Index row) {
    int best = 0;
    for (Index j = 1; j < logits.dim(1); ++j)
        if (logits(row, j) > logits(row, best)) best = static_cast<int>(j);
    return best;
}

}  // namespace

Metrics train_epoch(NetworkParams<float>& net, SgdState& opt, const TrainSet& data,
                    const TrainConfig& cfg, int epoch, std::mt19937_64& dropout_rng) {
    if (data.images.empty()) throw EmptyDatasetError("training set is empty");
    const auto t0 = std::chrono::steady_clock::now();
    const auto schedule = cfg.schedule.empty() ? scaled_schedule(cfg.epochs) : cfg.schedule;
    const float lr = static_cast<float>(lr_at_epoch(schedule, epoch));

    std::vector<std::size_t> order(data.images.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    auto params = trainable_params(net);
    NetworkParams<float> grads = alloc_network<float>(net.spec);
    auto grad_refs = trainable_params(grads);

    const Index h = data.images.front().height, w = data.images.front().width;
    double loss_sum = 0;
    std::size_t wrong = 0;
    std::size_t done = 0;
    while (done < order.size()) {
        const Index b =
            static_cast<Index>(std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                     order.size() - done));
        Tensor<float> x({b, 3, h, w});
        std::vector<int> labels(static_cast<std::size_t>(b));
        for (Index n = 0; n < b; ++n) {
            const std::size_t idx = order[done + static_cast<std::size_t>(n)];
            fill_input(x, n, data.images[idx]);
            labels[static_cast<std::size_t>(n)] = data.labels[idx];
        }

        NetCache<float> cache;
        Tensor<float> logits = network_forward(net, x, Mode::Train, dropout_rng, &cache);
        SoftmaxResult<float> sm = softmax_cross_entropy(logits, labels);
        network_backward(net, cache, sm.grad, grads);
        sgd_step(params, grad_refs, opt, lr, static_cast<float>(cfg.momentum),
                 static_cast<float>(cfg.weight_decay));

        loss_sum += static_cast<double>(sm.loss) * static_cast<double>(b);
        for (Index n = 0; n < b; ++n)
            if (argmax_row(logits, n) != labels[static_cast<std::size_t>(n)]) ++wrong;
        done += static_cast<std::size_t>(b);
    }

    Metrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_error_pct = 100.0 * static_cast<double>(wrong) / static_cast<double>(order.size());
    m.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

void refresh_running_stats(NetworkParams<float>& net, const TrainSet& data, int batch_size,
                           std::uint64_t shuffle_seed) {
    if (data.images.empty()) throw EmptyDatasetError("refresh_running_stats: data set is empty");
    if (batch_size < 1) throw OutOfRangeError("refresh_running_stats: batch_size must be >= 1");
    const double rate = net.spec.dropout_rate;
    const double ema = net.spec.bn_momentum;
    net.spec.dropout_rate = 0.0;  // dropout draws nothing at rate 0; rng below never advances

    std::vector<std::size_t> order(data.images.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const Index h = data.images.front().height, w = data.images.front().width;
    std::mt19937_64 unused_rng(0);
    std::size_t done = 0;
    int batch = 0;
    while (done < order.size()) {
        const Index b = static_cast<Index>(
            std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - done));
        Tensor<float> x({b, 3, h, w});
        for (Index n = 0; n < b; ++n)
            fill_input(x, n, data.images[order[done + static_cast<std::size_t>(n)]]);
        // Momentum batch/(batch+1) turns the moving-average update into a
        // cumulative mean: the first batch overwrites the stale statistics and
        // each later batch contributes equally.
        net.spec.bn_momentum = static_cast<double>(batch) / static_cast<double>(batch + 1);
        network_forward(net, x, Mode::Train, unused_rng);
        ++batch;
        done += static_cast<std::size_t>(b);
    }

    net.spec.dropout_rate = rate;
    net.spec.bn_momentum = ema;
}

Metrics evaluate(NetworkParams<float>& net, const std::vector<SkeletonSequence>& test_seqs,
                 const JointPermutation& perm, ResizeMethod method, const LabelMap& labels,
                 Index height, Index width, int batch_size, Index pre_height, Index pre_width) {
    if (test_seqs.empty()) throw EmptyDatasetError("test set is empty");
    if (net.spec.num_classes != labels.num_classes())
        throw ProtocolMismatchError("network has " + std::to_string(net.spec.num_classes) +
                                    " classes but the protocol defines " +
                                    std::to_string(labels.num_classes()));
    const auto t0 = std::chrono::steady_clock::now();
    const int m_classes = labels.num_classes();
    const Index ph = std::max(height, pre_height > 0 ? pre_height : (height * 5 + 3) / 4);
    const Index pw = std::max(width, pre_width > 0 ? pre_width : (width * 5 + 3) / 4);
    const Index row0 = (ph - height) / 2, col0 = (pw - width) / 2;

    Metrics m;
    m.confusion.assign(static_cast<std::size_t>(m_classes),
                       std::vector<int>(static_cast<std::size_t>(m_classes), 0));
    std::mt19937_64 unused_rng(0);  // infer mode draws nothing
    std::size_t wrong = 0, done = 0;
    while (done < test_seqs.size()) {
        const Index b = static_cast<Index>(
            std::min<std::size_t>(static_cast<std::size_t>(batch_size), test_seqs.size() - done));
        Tensor<float> x({b, 3, height, width});
        std::vector<int> truth(static_cast<std::size_t>(b));
        for (Index n = 0; n < b; ++n) {
            const SkeletonSequence& seq = test_seqs[done + static_cast<std::size_t>(n)];
            const ActionImage full = encode_image(seq, perm, ph, pw, method);
            fill_input(x, n, crop(full, row0, col0, height, width));
            truth[static_cast<std::size_t>(n)] = labels.label_of(seq.action_id);
        }
        Tensor<float> logits = network_forward(net, x, Mode::Infer, unused_rng);
        for (Index n = 0; n < b; ++n) {
            const int t = truth[static_cast<std::size_t>(n)];
            const int p = argmax_row(logits, n);
            ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
            if (p != t) ++wrong;
        }
        done += static_cast<std::size_t>(b);
    }
    m.test_error_pct = 100.0 * static_cast<double>(wrong) / static_cast<double>(test_seqs.size());
    m.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

std::string metrics_csv_header() { return "epoch,train_loss,train_err,test_err,seconds"; }

std::string metrics_csv_row(const Metrics& m) {
    std::ostringstream out;
    out << m.epoch << ',' << m.train_loss << ',' << m.train_error_pct << ','
        << m.test_error_pct << ',' << m.wall_time_seconds;
    return out.str();
}

FitResult fit(const TrainConfig& cfg, const std::vector<SkeletonSequence>& corpus,
              const std::string& protocol, const JointPermutation& perm, std::ostream* csv,
              std::ostream* progress) {
    ProtocolSplit split = make_split(corpus, protocol);
    LabelMap labels = make_label_map(corpus, protocol);
    if (split.train.empty()) throw EmptyDatasetError("protocol split has no training sequences");
    if (split.test.empty()) throw EmptyDatasetError("protocol split has no test sequences");

    const std::set<std::string> train_ids(split.train.begin(), split.train.end());
    const std::set<std::string> test_ids(split.test.begin(), split.test.end());
    std::vector<const SkeletonSequence*> train_seqs;
    std::vector<SkeletonSequence> test_seqs;
    for (const auto& seq : corpus) {
        const std::string id = sequence_id(seq);
        if (train_ids.count(id)) train_seqs.push_back(&seq);
        if (test_ids.count(id)) test_seqs.push_back(seq);
    }

    // Encode each training sequence once at the augmentation source size;
    // crops are re-drawn from these every epoch.
    struct BaseImage {
        ActionImage image;
        int label;
        std::string id;
    };
    std::vector<BaseImage> bases;
    for (const auto* seq : train_seqs) {
        const std::string id = sequence_id(*seq);
        if (test_ids.count(id))
            throw Error("leakage guard: sequence " + id + " is in both split sides");
        bases.push_back({encode_image(*seq, perm, cfg.augment.pre_h, cfg.augment.pre_w,
                                      cfg.method),
                         labels.label_of(seq->action_id), id});
    }

    NetworkSpec spec = make_network_spec(cfg.depth, cfg.kind, labels.num_classes());
    FitResult result;
    result.split_name = split.name;
    NetworkParams<float> net = init_network<float>(spec, derive_seed(cfg.seed, 1));
    SgdState opt = make_sgd_state(net);
    std::mt19937_64 dropout_rng(derive_seed(cfg.seed, 4));

    if (csv) *csv << metrics_csv_header() << '\n';

    double best_acc = -1.0;
    auto consider = [&](const Metrics& m) {
        if (m.test_accuracy_pct() > best_acc) {
            best_acc = m.test_accuracy_pct();
            result.best_metrics = m;
            result.best_epoch = m.epoch;
            result.best_params = net;
        }
    };

    if (cfg.epochs == 0) {
        Metrics m = evaluate(net, test_seqs, perm, cfg.method, labels, cfg.augment.crop_h,
                             cfg.augment.crop_w, cfg.batch_size, cfg.augment.pre_h,
                             cfg.augment.pre_w);
        m.epoch = 0;
        result.final_metrics = m;
        consider(m);
        result.history.push_back(m);
        if (csv) *csv << metrics_csv_row(m) << '\n';
        return result;
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        TrainSet ts;
        for (std::size_t i = 0; i < bases.size(); ++i) {
            AugmentPolicy policy = cfg.augment;
            policy.rng_seed = derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(epoch),
                                          static_cast<std::uint64_t>(i));
            for (auto& img : augment(bases[i].image, policy)) {
                ts.images.push_back(std::move(img));
                ts.labels.push_back(bases[i].label);
                ts.source_ids.push_back(bases[i].id);
            }
        }
        for (const auto& id : ts.source_ids)
            if (test_ids.count(id)) throw Error("leakage guard: test sequence " + id +
                                                " reached the training path");

        Metrics m = train_epoch(net, opt, ts, cfg, epoch, dropout_rng);
        const auto refresh_t0 = std::chrono::steady_clock::now();
        refresh_running_stats(net, ts, cfg.batch_size,
                              derive_seed(cfg.seed, 5, static_cast<std::uint64_t>(epoch)));
        m.wall_time_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - refresh_t0).count();
        Metrics ev = evaluate(net, test_seqs, perm, cfg.method, labels, cfg.augment.crop_h,
                              cfg.augment.crop_w, cfg.batch_size, cfg.augment.pre_h,
                              cfg.augment.pre_w);
        m.test_error_pct = ev.test_error_pct;
        m.confusion = std::move(ev.confusion);
        m.wall_time_seconds += ev.wall_time_seconds;

        result.history.push_back(m);
        consider(m);
        result.final_metrics = m;
        if (csv) {
            *csv << metrics_csv_row(m) << '\n';
            csv->flush();
        }
        if (progress) {
            *progress << "epoch " << m.epoch << "/" << cfg.epochs << "  loss " << m.train_loss
                      << "  train_err " << m.train_error_pct << "%  test_err "
                      << m.test_error_pct << "%  (" << m.wall_time_seconds << "s)\n";
            progress->flush();
        }
    }
    return result;
}

}  // namespace skelres
