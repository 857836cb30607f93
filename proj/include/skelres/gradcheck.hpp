#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "skelres/resnet.hpp"
#include "skelres/tensor.hpp"

namespace skelres {

/// Central-difference check of an analytic gradient. `loss` must recompute the
/// scalar objective from the current contents of `param`; the checker nudges
/// one coordinate at a time by +-eps and restores it afterwards.
///
/// Relative error per coordinate: |a - n| / max(|a|, |n|, 1e-8).
/// If max_coords >= 0 and the tensor is larger, a random subset of coordinates
/// is probed (rng required in that case).
///
/// kink_rtol > 0 enables rectifier-kink rejection for losses that are only
/// piecewise smooth. The numeric estimate becomes the central difference at
/// step eps/4, and the checker probes each flank at steps eps, eps/2 and
/// eps/4, Richardson-extrapolating one-sided slopes over the pairs (eps,
/// eps/2) and (eps/2, eps/4). For a smooth objective the extrapolated flanks
/// agree to O(eps^2) -- the curvature term cancels -- while a kink within
/// eps/4 of the base point (the only kind that can corrupt the central
/// estimate, which silently averages the two regimes) leaves at least a third
/// of the slope jump on one of the two pairs; two pairs are needed because a
/// single pair has a blind distance where its residual vanishes. The
/// coordinate is skipped when either pair's flanks disagree by more than
/// kink_rtol/2 * max(|fwd|, |bwd|, 1e-8). A wrong backward pass is still
/// caught: its flanks agree with each other and disagree with the analytic
/// value. Callers pass kink_rtol = tolerance. A check where every probed
/// coordinate was skipped reports coords_checked == 0 and must be treated as a
/// failure by the caller.
struct GradCheckResult {
    double max_rel_err = 0.0;
    Index worst_coord = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    Index coords_checked = 0;
    Index coords_skipped = 0;
};

inline GradCheckResult check_gradient(Tensor<double>& param, const Tensor<double>& analytic,
                                      const std::function<double()>& loss, double eps = 1e-4,
                                      Index max_coords = -1, std::mt19937_64* rng = nullptr,
                                      double kink_rtol = 0.0) {
    if (!param.same_shape(analytic))
        throw ShapeError("check_gradient: analytic gradient shape mismatch");
    std::vector<Index> coords;
    if (max_coords >= 0 && param.size() > max_coords) {
        coords.resize(static_cast<std::size_t>(param.size()));
        for (Index i = 0; i < param.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
        if (!rng) throw ConfigError("rng", "coordinate sampling requested without an rng");
        std::shuffle(coords.begin(), coords.end(), *rng);
        coords.resize(static_cast<std::size_t>(max_coords));
    } else {
        coords.resize(static_cast<std::size_t>(param.size()));
        for (Index i = 0; i < param.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    }

    GradCheckResult r;
    const double l0 = kink_rtol > 0 ? loss() : 0.0;
    for (Index i : coords) {
        const double saved = param(i);
        auto at = [&](double offset) {
            param(i) = saved + offset;
            const double l = loss();
            param(i) = saved;
            return l;
        };
        double numeric;
        if (kink_rtol > 0) {
            const double lp1 = at(eps), lp2 = at(eps / 2), lp4 = at(eps / 4);
            const double lm1 = at(-eps), lm2 = at(-eps / 2), lm4 = at(-eps / 4);
            // Richardson-extrapolated one-sided slopes, 2*slope(h/2) - slope(h),
            // over the step pairs (eps, eps/2) and (eps/2, eps/4).
            auto kinked = [&](double h, double lp_h, double lp_half, double lm_h,
                             double lm_half) {
                const double fwd = (4.0 * lp_half - lp_h - 3.0 * l0) / h;
                const double bwd = (3.0 * l0 - 4.0 * lm_half + lm_h) / h;
                const double scale = std::max({std::abs(fwd), std::abs(bwd), 1e-8});
                return std::abs(fwd - bwd) > 0.5 * kink_rtol * scale;
            };
            if (kinked(eps, lp1, lp2, lm1, lm2) || kinked(eps / 2, lp2, lp4, lm2, lm4)) {
                ++r.coords_skipped;
                continue;
            }
            numeric = 2.0 * (lp4 - lm4) / eps;  // central difference at step eps/4
        } else {
            numeric = (at(eps) - at(-eps)) / (2.0 * eps);
        }
        const double a = analytic(i);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > r.max_rel_err) {
            r.max_rel_err = rel;
            r.worst_coord = i;
            r.worst_analytic = a;
            r.worst_numeric = numeric;
        }
        ++r.coords_checked;
    }
    return r;
}

/// One line of the layer-by-layer report produced by run_layer_gradchecks.
struct LayerCheck {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Runs the full battery: every layer (both conv routes), both residual unit
/// flavours, and a tiny end-to-end network, each against central differences.
/// With corrupt=true one analytic gradient is deliberately skewed so callers
/// can confirm the checker actually fails when it should.
std::vector<LayerCheck> run_layer_gradchecks(std::uint64_t seed, bool corrupt = false);

/// Finite-difference check of a full network at the requested depth and unit
/// kind, with stage widths shrunk to 2/4/8 and coordinates sampled so deep
/// stacks stay fast. Tolerance 1e-3 (64-bit).
std::vector<LayerCheck> run_network_gradcheck(Index depth, UnitKind kind, std::uint64_t seed);

inline bool all_pass(const std::vector<LayerCheck>& checks) {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return !checks.empty();
}

}  // namespace skelres
