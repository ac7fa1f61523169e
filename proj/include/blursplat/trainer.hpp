// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Joint optimization of the Gaussian scene and the per-image camera motion.
//
#pragma once

#include "adam.hpp"
#include "blur.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "lie.hpp"
#include "losses.hpp"
#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace blursplat {

enum class LrGroup { Translation, Rotation, Alignment };

inline LrGroup lrGroupFromName(const std::string &name) {
    if (name == "translation")
        return LrGroup::Translation;
    if (name == "rotation")
        return LrGroup::Rotation;
    if (name == "alignment")
        return LrGroup::Alignment;
    throw InvalidArgument("lr_at: unknown parameter group '" + name + "'");
}

struct TrainConfig {
    int n_subframes     = 21;
    int bezier_order    = 9;
    long total_iters    = 10000;
    double lr_translation     = 1e-2;
    double lr_rotation        = 1e-3;
    double lr_alignment       = 3e-3;
    double lr_decay_half_life = 15000;
    // densification threshold schedule
    double theta_final           = 2e-4;
    double theta_init_mult       = 5.0;
    double theta_anneal_end_frac = 0.3;
    bool anneal_densification    = true; ///< false keeps theta at theta_final throughout
    long densify_interval        = 100;
    long densify_from            = 500;
    double densify_until_frac    = 0.5;
    double percent_dense         = 0.01; ///< split instead of clone above this scale (times extent)
    double prune_opacity         = 0.005;
    long opacity_reset_interval  = 3000;
    long max_gaussians           = 20000;
    double lambda_start = 0.05;
    double lambda_end   = 0.01;
    // scene learning rates (position scaled by the dataset extent)
    double lr_position_init  = 1.6e-4;
    double lr_position_final = 1.6e-6;
    double lr_color          = 2.5e-3;
    double lr_opacity        = 0.05;
    double lr_scaling        = 5e-3;
    double lr_quaternion     = 1e-3;
    bool optimize_poses     = true;
    bool optimize_alignment = true;
    Vec3 background         = Vec3::Zero();
    int workers             = 1;
    std::uint64_t seed      = 0;
    long checkpoint_interval = 1000;

    void validate() const {
        if (n_subframes < 2 || bezier_order < 1 || total_iters <= 0)
            throw InvalidArgument("train config: need n_subframes >= 2, bezier_order >= 1, total_iters > 0");
        for (double lr : {lr_translation, lr_rotation, lr_alignment, lr_position_init, lr_position_final, lr_color,
                          lr_opacity, lr_scaling, lr_quaternion})
            if (!(lr > 0.0))
                throw InvalidArgument("train config: learning rates must be positive");
        if (!(lr_decay_half_life > 0.0))
            throw InvalidArgument("train config: lr_decay_half_life must be positive");
        if (!(theta_final > 0.0) || !(theta_init_mult >= 1.0))
            throw InvalidArgument("train config: need theta_final > 0 and theta_init_mult >= 1");
        if (!(theta_anneal_end_frac > 0.0 && theta_anneal_end_frac <= 1.0))
            throw InvalidArgument("train config: theta_anneal_end_frac must lie in (0, 1]");
        if (densify_interval <= 0 || opacity_reset_interval <= 0 || checkpoint_interval <= 0 || max_gaussians <= 0)
            throw InvalidArgument("train config: intervals must be positive");
        if (!(lambda_start >= 0.0 && lambda_end >= 0.0))
            throw InvalidArgument("train config: lambda must be non-negative");
        if (workers < 1)
            throw InvalidArgument("train config: workers must be >= 1");
    }

    KeyValues toKeyValues() const {
        KeyValues kv;
        kv.set("n_subframes", n_subframes);
        kv.set("bezier_order", bezier_order);
        kv.set("total_iters", total_iters);
        kv.set("lr_translation", lr_translation);
        kv.set("lr_rotation", lr_rotation);
        kv.set("lr_alignment", lr_alignment);
        kv.set("lr_decay_half_life", lr_decay_half_life);
        kv.set("theta_final", theta_final);
        kv.set("theta_init_mult", theta_init_mult);
        kv.set("theta_anneal_end_frac", theta_anneal_end_frac);
        kv.set("anneal_densification", anneal_densification);
        kv.set("densify_interval", densify_interval);
        kv.set("densify_from", densify_from);
        kv.set("densify_until_frac", densify_until_frac);
        kv.set("percent_dense", percent_dense);
        kv.set("prune_opacity", prune_opacity);
        kv.set("opacity_reset_interval", opacity_reset_interval);
        kv.set("max_gaussians", max_gaussians);
        kv.set("lambda_start", lambda_start);
        kv.set("lambda_end", lambda_end);
        kv.set("lr_position_init", lr_position_init);
        kv.set("lr_position_final", lr_position_final);
        kv.set("lr_color", lr_color);
        kv.set("lr_opacity", lr_opacity);
        kv.set("lr_scaling", lr_scaling);
        kv.set("lr_quaternion", lr_quaternion);
        kv.set("optimize_poses", optimize_poses);
        kv.set("optimize_alignment", optimize_alignment);
        kv.set("background", formatDouble(background.x()) + " " + formatDouble(background.y()) + " " +
                                 formatDouble(background.z()));
        kv.set("workers", workers);
        kv.set("seed", std::to_string(seed));
        kv.set("checkpoint_interval", checkpoint_interval);
        return kv;
    }

    /// Overrides fields named in `kv`; unknown keys are an error.
    static TrainConfig fromKeyValues(const KeyValues &kv) { return fromKeyValues(kv, TrainConfig{}); }

    static TrainConfig fromKeyValues(const KeyValues &kv, TrainConfig c) {
        for (const auto &[key, value] : kv.entries()) {
            auto num  = [&] { return kv.getDouble(key); };
            auto intv = [&] { return kv.getInteger(key); };
            if (key == "n_subframes") c.n_subframes = static_cast<int>(intv());
            else if (key == "bezier_order") c.bezier_order = static_cast<int>(intv());
            else if (key == "total_iters") c.total_iters = intv();
            else if (key == "lr_translation") c.lr_translation = num();
            else if (key == "lr_rotation") c.lr_rotation = num();
            else if (key == "lr_alignment") c.lr_alignment = num();
            else if (key == "lr_decay_half_life") c.lr_decay_half_life = num();
            else if (key == "theta_final") c.theta_final = num();
            else if (key == "theta_init_mult") c.theta_init_mult = num();
            else if (key == "theta_anneal_end_frac") c.theta_anneal_end_frac = num();
            else if (key == "anneal_densification") c.anneal_densification = kv.getBool(key);
            else if (key == "densify_interval") c.densify_interval = intv();
            else if (key == "densify_from") c.densify_from = intv();
            else if (key == "densify_until_frac") c.densify_until_frac = num();
            else if (key == "percent_dense") c.percent_dense = num();
            else if (key == "prune_opacity") c.prune_opacity = num();
            else if (key == "opacity_reset_interval") c.opacity_reset_interval = intv();
            else if (key == "max_gaussians") c.max_gaussians = intv();
            else if (key == "lambda_start") c.lambda_start = num();
            else if (key == "lambda_end") c.lambda_end = num();
            else if (key == "lr_position_init") c.lr_position_init = num();
            else if (key == "lr_position_final") c.lr_position_final = num();
            else if (key == "lr_color") c.lr_color = num();
            else if (key == "lr_opacity") c.lr_opacity = num();
            else if (key == "lr_scaling") c.lr_scaling = num();
            else if (key == "lr_quaternion") c.lr_quaternion = num();
            else if (key == "optimize_poses") c.optimize_poses = kv.getBool(key);
            else if (key == "optimize_alignment") c.optimize_alignment = kv.getBool(key);
            else if (key == "workers") c.workers = static_cast<int>(intv());
            else if (key == "seed") c.seed = static_cast<std::uint64_t>(intv());
            else if (key == "checkpoint_interval") c.checkpoint_interval = intv();
            else if (key == "background") {
                const auto tok = splitWhitespace(value);
                if (tok.size() != 3)
                    throw ParseError("config", kv.lineOf(key), "background needs three numbers");
                for (int k = 0; k < 3; ++k)
                    c.background(k) = parseDouble(tok[k], "config", kv.lineOf(key));
            } else
                throw ParseError("config", kv.lineOf(key), "unknown config key '" + key + "'");
        }
        c.validate();
        return c;
    }

    long densifyUntil() const { return static_cast<long>(densify_until_frac * static_cast<double>(total_iters)); }
};

/// Per-image camera motion and its optimizer state. Moment layout: control
/// twists (rho, phi) in order, then the raw alignment values.
struct CameraTrack {
    BezierTrajectory trajectory;
    AlignmentParams alignment;
    AdamMoments moments;
    long steps = 0;

    std::size_t parameterCount() const { return trajectory.control().size() * 6 + alignment.raw.size(); }
};

struct TrainState {
    GaussianScene scene;
    std::vector<CameraTrack> cameras;
    AdamMoments scene_moments; ///< kGaussianParams per Gaussian
    long scene_steps = 0;
    long iter        = 0;
    std::uint64_t rng_seed = 0;
    double extent          = 1.0;
    std::vector<LossReport> history;
    std::vector<std::size_t> history_observation;

    bool consistent() const {
        if (!scene.consistent() || scene_moments.size() != scene.size() * kGaussianParams)
            return false;
        return std::all_of(cameras.begin(), cameras.end(),
                           [](const CameraTrack &c) { return c.moments.size() == c.parameterCount(); });
    }
};

struct DensifySummary {
    std::size_t cloned = 0, split = 0, pruned = 0;
};

// ---------------------------------------------------------------------------
// schedules

inline double lrAt(const TrainConfig &c, LrGroup group, long iter) {
    if (iter < 0)
        throw InvalidArgument("lr_at: iteration must be non-negative");
    double base = 0.0;
    switch (group) {
    case LrGroup::Translation: base = c.lr_translation; break;
    case LrGroup::Rotation: base = c.lr_rotation; break;
    case LrGroup::Alignment: base = c.lr_alignment; break;
    default: throw InvalidArgument("lr_at: unknown parameter group");
    }
    return base * std::pow(0.5, static_cast<double>(iter) / c.lr_decay_half_life);
}

inline double lrAt(const TrainConfig &c, const std::string &group, long iter) {
    return lrAt(c, lrGroupFromName(group), iter);
}

/// Densification threshold: geometric decay from theta_init_mult * theta_final
/// to theta_final over the first theta_anneal_end_frac of training.
inline double thetaAt(const TrainConfig &c, long iter) {
    if (!c.anneal_densification)
        return c.theta_final;
    const double end = c.theta_anneal_end_frac * static_cast<double>(c.total_iters);
    if (static_cast<double>(iter) >= end)
        return c.theta_final;
    return c.theta_final * std::pow(c.theta_init_mult, 1.0 - static_cast<double>(std::max(iter, 0L)) / end);
}

/// Log-linear interpolation of the position learning rate over training.
inline double positionLrAt(const TrainConfig &c, long iter, double extent) {
    const double f = std::clamp(static_cast<double>(iter) / static_cast<double>(c.total_iters), 0.0, 1.0);
    return extent * std::exp((1.0 - f) * std::log(c.lr_position_init) + f * std::log(c.lr_position_final));
}

// ---------------------------------------------------------------------------
// setup

inline TrainState initTraining(const Dataset &ds, const TrainConfig &cfg) {
    cfg.validate();
    ds.validate();
    TrainState s;
    s.scene = initScene(ds.points, ds.colors);
    s.scene_moments.resize(s.scene.size() * kGaussianParams);
    s.rng_seed = cfg.seed;
    s.extent   = ds.extent;
    for (const auto &o : ds.observations) {
        CameraTrack t;
        t.trajectory = BezierTrajectory::constant(logSE3(o.initial_pose), cfg.bezier_order);
        t.alignment  = AlignmentParams::evenlySpaced(cfg.n_subframes);
        t.moments.resize(t.parameterCount());
        s.cameras.push_back(std::move(t));
    }
    return s;
}

/// Observation visited at `iter`: a fresh permutation of all images per epoch,
/// derived from the seed so a resumed run visits the same sequence.
inline std::size_t observationAt(std::uint64_t seed, std::size_t count, long iter) {
    const auto epoch = static_cast<std::uint64_t>(iter) / count;
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + epoch + 1);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm[static_cast<std::uint64_t>(iter) % count];
}

// ---------------------------------------------------------------------------
// optimisation

namespace detail {

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline void updateScene(TrainState &s, const TrainConfig &cfg, const std::vector<GaussianGradient> &grads) {
    ++s.scene_steps;
    const AdamHyper hyper{0.9, 0.999, 1e-15};
    const double lrPos = positionLrAt(cfg, s.iter, s.extent);
    for (std::size_t i = 0; i < s.scene.size(); ++i) {
        auto &g          = s.scene.gaussians[i];
        const auto grad  = grads[i].packed();
        const std::size_t off = i * kGaussianParams;
        adamUpdate(g.position.data(), grad.data(), s.scene_moments, off, 3, lrPos, s.scene_steps, hyper);
        adamUpdate(g.log_scale.data(), grad.data() + 3, s.scene_moments, off + 3, 3, cfg.lr_scaling, s.scene_steps,
                   hyper);
        adamUpdate(g.rotation_q.data(), grad.data() + 6, s.scene_moments, off + 6, 4, cfg.lr_quaternion,
                   s.scene_steps, hyper);
        adamUpdate(g.color.data(), grad.data() + 10, s.scene_moments, off + 10, 3, cfg.lr_color, s.scene_steps, hyper);
        adamUpdate(&g.opacity_logit, grad.data() + 13, s.scene_moments, off + 13, 1, cfg.lr_opacity, s.scene_steps,
                   hyper);
        g.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
        const double qn = g.rotation_q.norm();
        g.rotation_q    = qn > 0.0 ? Vec4(g.rotation_q / qn) : Vec4(1, 0, 0, 0);
    }
}

inline void updateCamera(CameraTrack &cam, const TrainConfig &cfg, long iter, const BlurGradients &grads) {
    ++cam.steps;
    const AdamHyper hyper{0.9, 0.999, 1e-8};
    auto &ctrl = cam.trajectory.control();
    if (cfg.optimize_poses) {
        const double lrT = lrAt(cfg, LrGroup::Translation, iter), lrR = lrAt(cfg, LrGroup::Rotation, iter);
        for (std::size_t k = 0; k < ctrl.size(); ++k) {
            const Vec6 &g = grads.control[k];
            adamUpdate(ctrl[k].rho.data(), g.data(), cam.moments, k * 6, 3, lrT, cam.steps, hyper);
            adamUpdate(ctrl[k].phi.data(), g.data() + 3, cam.moments, k * 6 + 3, 3, lrR, cam.steps, hyper);
        }
    }
    if (cfg.optimize_alignment)
        adamUpdate(cam.alignment.raw.data(), grads.alignment.data(), cam.moments, ctrl.size() * 6,
                   cam.alignment.raw.size(), lrAt(cfg, LrGroup::Alignment, iter), cam.steps, hyper);
}

inline bool allFinite(const BlurGradients &g) {
    for (const auto &c : g.control)
        if (!c.allFinite())
            return false;
    for (double a : g.alignment)
        if (!std::isfinite(a))
            return false;
    for (const auto &gg : g.gaussians)
        for (double v : gg.packed())
            if (!std::isfinite(v))
                return false;
    return true;
}

} // namespace detail

/// One optimisation step over `batch` (usually a single image). Updates every
/// parameter group, accumulates densification statistics and advances iter.
inline LossReport trainStep(TrainState &s, const Dataset &ds, const TrainConfig &cfg,
                            std::span<const std::size_t> batch) {
    if (batch.empty())
        throw InvalidArgument("train_step: empty batch");
    LossReport mean;
    const double lambda =
        lambdaSchedule(std::min(s.iter, cfg.total_iters), cfg.total_iters, cfg.lambda_start, cfg.lambda_end);
    for (std::size_t idx : batch) {
        if (idx >= ds.observations.size() || idx >= s.cameras.size())
            throw InvalidArgument("train_step: observation index out of range");
        const auto &obs = ds.observations[idx];
        auto &cam       = s.cameras[idx];

        BlurPass pass(s.scene, cam.trajectory, cam.alignment, obs.camera,
                      BlurOptions{cfg.background, cfg.workers, true, false});
        const double rgb    = rgbLoss(pass.image(), obs.image);
        const double smooth = smoothnessLoss(pass.result().subframes);
        const auto report   = combineLosses(rgb, smooth, lambda);
        if (!std::isfinite(report.total))
            throw NumericalError("non-finite loss on observation " + std::to_string(idx), static_cast<long>(idx));

        const auto up    = rgbLossGradient(pass.image(), obs.image);
        const auto subUp = smoothnessLossGradient(pass.result().subframes, lambda);
        const auto grads = pass.backward(up, subUp);
        if (!detail::allFinite(grads))
            throw NumericalError("non-finite gradient on observation " + std::to_string(idx), static_cast<long>(idx));

        detail::updateCamera(cam, cfg, s.iter, grads);
        detail::updateScene(s, cfg, grads.gaussians);
        for (std::size_t g = 0; g < s.scene.size(); ++g)
            if (grads.visible[g]) {
                s.scene.grad_accum[g] += grads.view_grad[g];
                s.scene.grad_count[g] += 1.0;
            }

        mean.rgb_loss += rgb / static_cast<double>(batch.size());
        mean.smooth_loss += smooth / static_cast<double>(batch.size());
        mean.total += report.total / static_cast<double>(batch.size());
        s.history_observation.push_back(idx);
    }
    mean.lambda = lambda;
    s.history.push_back(mean);
    ++s.iter;
    return mean;
}

/// Clone or split Gaussians whose mean view-space gradient reaches `theta`,
/// then prune low-opacity ones. Keeps every per-Gaussian array aligned.
inline DensifySummary densifyAndPrune(TrainState &s, const TrainConfig &cfg, double theta) {
    DensifySummary out;
    auto &scene           = s.scene;
    const std::size_t n0  = scene.size();
    const double bigScale = cfg.percent_dense * s.extent;
    std::mt19937_64 rng(s.rng_seed * 0xD1B54A32D192ED03ull + static_cast<std::uint64_t>(s.iter));
    std::normal_distribution<double> normal;

    std::vector<Gaussian3D> next;
    std::vector<double> m, v;
    next.reserve(n0 * 2);
    auto keep = [&](const Gaussian3D &g, std::size_t from) {
        next.push_back(g);
        for (int k = 0; k < kGaussianParams; ++k) {
            m.push_back(from == SIZE_MAX ? 0.0 : s.scene_moments.m[from * kGaussianParams + k]);
            v.push_back(from == SIZE_MAX ? 0.0 : s.scene_moments.v[from * kGaussianParams + k]);
        }
    };

    std::vector<unsigned char> remove(n0, 0);
    std::vector<Gaussian3D> clones, children;
    long budget = cfg.max_gaussians - static_cast<long>(n0);
    for (std::size_t i = 0; i < n0; ++i) {
        const double count = scene.grad_count[i];
        const double grad  = count > 0.0 ? scene.grad_accum[i] / count : 0.0;
        if (!(grad >= theta) || budget <= 0)
            continue;
        const auto &g = scene.gaussians[i];
        if (g.scale().maxCoeff() <= bigScale) {
            clones.push_back(g);
            ++out.cloned;
            --budget;
        } else {
            const Mat3 r = quaternionToRotation(g.rotation_q);
            for (int c = 0; c < 2; ++c) {
                Gaussian3D child = g;
                const Vec3 sample(normal(rng) * g.scale()(0), normal(rng) * g.scale()(1), normal(rng) * g.scale()(2));
                child.position  = g.position + r * sample;
                child.log_scale = g.log_scale.array() - std::log(1.6);
                children.push_back(child);
            }
            remove[i] = 1;
            ++out.split;
            --budget;
        }
    }

    for (std::size_t i = 0; i < n0; ++i)
        if (!remove[i])
            keep(scene.gaussians[i], i);
    for (const auto &g : clones)
        keep(g, SIZE_MAX);
    for (const auto &g : children)
        keep(g, SIZE_MAX);

    // prune
    GaussianScene pruned;
    AdamMoments moments;
    for (std::size_t i = 0; i < next.size(); ++i) {
        if (next[i].opacity() < cfg.prune_opacity) {
            ++out.pruned;
            continue;
        }
        pruned.push(next[i]);
        moments.m.insert(moments.m.end(), m.begin() + i * kGaussianParams, m.begin() + (i + 1) * kGaussianParams);
        moments.v.insert(moments.v.end(), v.begin() + i * kGaussianParams, v.begin() + (i + 1) * kGaussianParams);
    }
    s.scene         = std::move(pruned);
    s.scene_moments = std::move(moments);
    return out;
}

/// Caps every opacity at 0.01 and clears the opacity moments.
inline void resetOpacity(TrainState &s) {
    const double cap = detail::logit(0.01);
    for (std::size_t i = 0; i < s.scene.size(); ++i) {
        auto &g         = s.scene.gaussians[i];
        g.opacity_logit = std::min(g.opacity_logit, cap);
        s.scene_moments.m[i * kGaussianParams + 13] = 0.0;
        s.scene_moments.v[i * kGaussianParams + 13] = 0.0;
    }
}

struct IterationReport {
    LossReport loss;
    std::size_t observation = 0;
    bool densified          = false;
    DensifySummary densify;
    bool opacity_reset = false;
};

/// trainStep on the scheduled observation followed by the densification and
/// opacity-reset cadence.
inline IterationReport trainIteration(TrainState &s, const Dataset &ds, const TrainConfig &cfg) {
    IterationReport r;
    r.observation = observationAt(s.rng_seed, ds.observations.size(), s.iter);
    const std::size_t batch[1] = {r.observation};
    r.loss = trainStep(s, ds, cfg, batch);

    const long it = s.iter;
    if (it < cfg.densifyUntil()) {
        if (it > cfg.densify_from && it % cfg.densify_interval == 0) {
            r.densify   = densifyAndPrune(s, cfg, thetaAt(cfg, it));
            r.densified = true;
            s.scene.resetStatistics();
        }
        if (it % cfg.opacity_reset_interval == 0) {
            resetOpacity(s);
            r.opacity_reset = true;
        }
    }
    return r;
}

/// Runs until total_iters. `onIteration` is called after every iteration.
inline void train(TrainState &s, const Dataset &ds, const TrainConfig &cfg,
                  const std::function<void(const TrainState &, const IterationReport &)> &onIteration = {}) {
    cfg.validate();
    if (s.cameras.size() != ds.observations.size())
        throw InvalidInput("train: state and dataset disagree on the number of images");
    while (s.iter < cfg.total_iters) {
        const auto r = trainIteration(s, ds, cfg);
        if (onIteration)
            onIteration(s, r);
    }
}

} // namespace blursplat
