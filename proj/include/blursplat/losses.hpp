// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "errors.hpp"
#include "image.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace blursplat {

struct LossReport {
    double rgb_loss    = 0.0;
    double smooth_loss = 0.0;
    double lambda      = 0.0;
    double total       = 0.0;
};

/// Mean absolute difference over all pixels and channels.
inline double rgbLoss(const GammaImage &pred, const GammaImage &obs) {
    requireSameShape(pred, obs, "rgb_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        sum += std::abs(pred[i] - obs[i]);
    return sum / static_cast<double>(pred.size());
}

/// d rgbLoss / d pred (subgradient 0 where equal).
inline ImageGradient rgbLossGradient(const GammaImage &pred, const GammaImage &obs) {
    requireSameShape(pred, obs, "rgb_loss");
    ImageGradient g(pred.width(), pred.height());
    const double inv = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - obs[i];
        g[i]           = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return g;
}

namespace detail {

inline void checkSubframes(std::span<const LinearImage> frames) {
    if (frames.size() < 2)
        throw InvalidArgument("smoothness_loss: need at least two sub-frames");
    for (const auto &f : frames)
        requireSameShape(f, frames.front(), "smoothness_loss");
}

inline double differenceNorm(const LinearImage &a, const LinearImage &b) {
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        sq += d * d;
    }
    return std::sqrt(sq);
}

} // namespace detail

/// (1/N) * sum over adjacent pairs of the L2 norm of the whole difference image.
inline double smoothnessLoss(std::span<const LinearImage> frames) {
    detail::checkSubframes(frames);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < frames.size(); ++i)
        sum += detail::differenceNorm(frames[i + 1], frames[i]);
    return sum / static_cast<double>(frames.size());
}

/// Gradient of smoothnessLoss with respect to each sub-frame. Pairs with a zero
/// difference contribute nothing.
inline std::vector<ImageGradient> smoothnessLossGradient(std::span<const LinearImage> frames, double scale = 1.0) {
    detail::checkSubframes(frames);
    const std::size_t n = frames.size();
    std::vector<ImageGradient> grads;
    grads.reserve(n);
    for (const auto &f : frames)
        grads.emplace_back(f.width(), f.height());
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double norm = detail::differenceNorm(frames[i + 1], frames[i]);
        if (norm <= 0.0)
            continue;
        const double w = scale / (static_cast<double>(n) * norm);
        for (std::size_t k = 0; k < frames[i].size(); ++k) {
            const double d = w * (frames[i + 1][k] - frames[i][k]);
            grads[i + 1][k] += d;
            grads[i][k] -= d;
        }
    }
    return grads;
}

/// Linear anneal from `start` at iteration 0 to `end` at `totalIters`.
inline double lambdaSchedule(long iter, long totalIters, double start = 0.05, double end = 0.01) {
    if (totalIters <= 0)
        throw InvalidArgument("lambda_schedule: total_iters must be positive");
    if (iter < 0 || iter > totalIters)
        throw InvalidArgument("lambda_schedule: iteration outside [0, total_iters]");
    if (iter == totalIters)
        return end;
    const double f = static_cast<double>(iter) / static_cast<double>(totalIters);
    return start + (end - start) * f;
}

inline LossReport combineLosses(double rgb, double smooth, double lambda) {
    return {rgb, smooth, lambda, rgb + lambda * smooth};
}

} // namespace blursplat
