#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "skelres/encoder.hpp"
#include "skelres/protocol.hpp"
#include "skelres/resnet.hpp"

namespace skelres {

struct LrSegment {
    int first_epoch = 1;  // inclusive, 1-based
    int last_epoch = 1;   // inclusive
    double rate = 0.01;
};

/// The published recipe: 0.01 for epochs 1-75, 0.001 for 76-150, 0.0001 for
/// 151-200.
std::vector<LrSegment> standard_schedule();

/// The same three-phase shape compressed proportionally (75/200, 75/200,
/// 50/200) onto a different epoch budget. scaled_schedule(200) equals
/// standard_schedule().
std::vector<LrSegment> scaled_schedule(int epochs);

double lr_at_epoch(const std::vector<LrSegment>& schedule, int epoch);

struct TrainConfig {
    Index depth = 20;
    UnitKind kind = UnitKind::Proposed;
    int batch_size = 128;
    int epochs = 200;
    std::vector<LrSegment> schedule;  // empty -> scaled_schedule(epochs)
    double weight_decay = 1e-4;
    double momentum = 0.9;
    AugmentPolicy augment;  // rng_seed is derived per epoch/sequence from seed
    ResizeMethod method = ResizeMethod::Bicubic;
    std::uint64_t seed = 1;
};

struct Metrics {
    int epoch = 0;
    double train_loss = 0;
    double train_error_pct = 0;
    double test_error_pct = 0;
    std::vector<std::vector<int>> confusion;  // [true][predicted]
    double wall_time_seconds = 0;

    double test_accuracy_pct() const { return 100.0 - test_error_pct; }
};

/// Momentum SGD with L2 decay folded into the gradient:
///   v <- momentum * v + (grad + weight_decay * param);  param <- param - lr * v.
/// Decay applies only to refs flagged weight_decay (conv/FC weights).
struct SgdState {
    std::vector<Tensor<float>> velocity;
};

SgdState make_sgd_state(NetworkParams<float>& net);
void sgd_step(std::vector<ParamRef<float>>& params, std::vector<ParamRef<float>>& grads,
              SgdState& state, float lr, float momentum, float weight_decay);

/// In-memory training set: augmented images with labels and the id of the
/// sequence each came from (the leakage guard checks those ids).
struct TrainSet {
    std::vector<ActionImage> images;
    std::vector<int> labels;
    std::vector<std::string> source_ids;
};

Metrics train_epoch(NetworkParams<float>& net, SgdState& opt, const TrainSet& data,
                    const TrainConfig& cfg, int epoch, std::mt19937_64& dropout_rng);

/// Re-estimate every batch-norm running mean/variance as the plain average of
/// per-batch moments over one forward sweep of data, with dropout disabled so
/// the moments describe the activations inference actually sees. Dropout noise
/// inflates the variance a training-time moving average records; stacked units
/// compound that mismatch, so networks with dropout in the residual branch
/// need this refresh before their running stats are usable for inference.
/// Batches are drawn in shuffled order (seeded, deterministic) because the
/// average of within-batch variances understates the global variance when
/// batches are class-homogeneous. Weights, optimizer state, and RNG streams
/// are untouched.
void refresh_running_stats(NetworkParams<float>& net, const TrainSet& data, int batch_size,
                           std::uint64_t shuffle_seed);

/// Infer-mode evaluation with one center-style encoding per sequence: each
/// sequence is rendered at pre_height x pre_width -- the size training crops
/// are drawn from -- and the center height x width crop feeds the network, so
/// test inputs share the training crops' scale. pre dimensions of 0 default
/// to 5/4 of the target (the published 40-over-32 ratio); pre is never taken
/// below the target, and pre == target degenerates to a direct encoding.
Metrics evaluate(NetworkParams<float>& net, const std::vector<SkeletonSequence>& test_seqs,
                 const JointPermutation& perm, ResizeMethod method, const LabelMap& labels,
                 Index height = 32, Index width = 32, int batch_size = 128,
                 Index pre_height = 0, Index pre_width = 0);

struct FitResult {
    std::vector<Metrics> history;
    Metrics final_metrics;
    Metrics best_metrics;
    int best_epoch = 0;  // lowest epoch attaining the best test accuracy
    NetworkParams<float> best_params;
    std::string split_name;
};

/// Full experiment: split the corpus under the protocol, encode the training
/// side to the augmentation source size, then per epoch re-augment with fresh
/// derived seeds, train, and evaluate the test side. Writes one CSV row
/// "epoch,train_loss,train_err,test_err,seconds" per epoch when csv is given,
/// and one short progress line per epoch when progress is given.
FitResult fit(const TrainConfig& cfg, const std::vector<SkeletonSequence>& corpus,
              const std::string& protocol, const JointPermutation& perm,
              std::ostream* csv = nullptr, std::ostream* progress = nullptr);

std::string metrics_csv_header();
std::string metrics_csv_row(const Metrics& m);

}  // namespace skelres
