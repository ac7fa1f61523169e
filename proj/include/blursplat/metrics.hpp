// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Image metrics, frozen-scene test-pose alignment and pose error measures.
//
#pragma once

#include "adam.hpp"
#include "blur.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "lie.hpp"
#include "losses.hpp"
#include "rasterizer.hpp"
#include "scene.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace blursplat {

inline constexpr double kPsnrCap = 120.0;

/// 10 log10(1 / MSE), capped at 120 dB when MSE < 1e-12.
template <typename SpaceA, typename SpaceB>
double psnr(const RgbImage<SpaceA> &a, const RgbImage<SpaceB> &b) {
    requireSameShape(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.size());
    if (mse < 1e-12)
        return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussianWindow(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const int r = size / 2;
    double sum  = 0.0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
        sum += w[i];
    }
    for (auto &x : w)
        x /= sum;
    return w;
}

/// Separable filter keeping only positions where the window fits.
inline std::vector<double> filterValid(const std::vector<double> &img, int w, int h, const std::vector<double> &k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            rows[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

} // namespace detail

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// data range 1, per channel over valid window positions, channels averaged.
template <typename SpaceA, typename SpaceB>
double ssim(const RgbImage<SpaceA> &a, const RgbImage<SpaceB> &b) {
    requireSameShape(a, b, "ssim");
    constexpr int kWin = 11;
    if (a.width() < kWin || a.height() < kWin)
        throw InvalidArgument("ssim: images must be at least 11x11");
    const auto win  = detail::gaussianWindow(kWin, 1.5);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int w = a.width(), h = a.height();
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> x(static_cast<std::size_t>(w) * h), y(x.size()), xx(x.size()), yy(x.size()), xy(x.size());
        for (std::size_t p = 0; p < x.size(); ++p) {
            x[p]  = a[p * 3 + c];
            y[p]  = b[p * 3 + c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = detail::filterValid(x, w, h, win), my = detail::filterValid(y, w, h, win);
        const auto mxx = detail::filterValid(xx, w, h, win), myy = detail::filterValid(yy, w, h, win);
        const auto mxy = detail::filterValid(xy, w, h, win);
        double sum = 0.0;
        for (std::size_t p = 0; p < mx.size(); ++p) {
            const double vx = mxx[p] - mx[p] * mx[p], vy = myy[p] - my[p] * my[p], cxy = mxy[p] - mx[p] * my[p];
            sum += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cxy + c2)) /
                   ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / 3.0;
}

// ---------------------------------------------------------------------------
// test-pose alignment

struct AlignOptions {
    long iters         = 500;
    double lr          = 1e-3;
    long halve_every   = 200;
    Vec3 background    = Vec3::Zero();
    int workers        = 1;
};

struct AlignResult {
    RigidPose pose;
    double loss         = 0.0; ///< L1 at the returned pose
    double initial_loss = 0.0;
    long iterations     = 0;
};

/// L1 between the gamma-corrected render at `pose` and `target`, with the
/// gradient for a left pose perturbation.
inline std::pair<double, Vec6> poseLossAndGradient(const GaussianScene &scene, const Camera &cam,
                                                   const GammaImage &target, const RigidPose &pose, const Vec3 &bg,
                                                   int workers) {
    RenderPass pass(scene, pose, cam, {bg, workers, false});
    const auto &lin   = pass.image();
    const auto pred   = gammaCorrect(lin);
    const double loss = rgbLoss(pred, target);
    auto up           = rgbLossGradient(pred, target);
    for (std::size_t k = 0; k < up.size(); ++k)
        up[k] *= gammaDerivative(lin[k]);
    return {loss, pass.backward(up).pose};
}

/// Adam on a left twist perturbation of the pose with the scene frozen.
/// Returns the lowest-loss pose seen (the initial pose included).
inline AlignResult alignTestPose(const GaussianScene &scene, const Camera &cam, const GammaImage &target,
                                 const RigidPose &init, const AlignOptions &opts = {}) {
    requireSameShape(target, RgbImage<GammaSpace>(cam.width, cam.height), "align_test_pose");
    AlignResult best;
    RigidPose pose = init;
    AdamMoments mom(6);
    const AdamHyper hyper;
    for (long it = 0; it <= opts.iters; ++it) {
        const auto [loss, grad] = poseLossAndGradient(scene, cam, target, pose, opts.background, opts.workers);
        if (!std::isfinite(loss) || !grad.allFinite())
            throw NumericalError("align_test_pose: non-finite loss or gradient");
        if (it == 0) {
            best.initial_loss = loss;
            best.loss         = loss;
            best.pose         = pose;
        } else if (loss < best.loss) {
            best.loss = loss;
            best.pose = pose;
        }
        best.iterations = it;
        if (it == opts.iters)
            break;
        const double lr = opts.lr * std::pow(0.5, static_cast<double>(it / opts.halve_every));
        Vec6 delta      = Vec6::Zero();
        adamUpdate(delta.data(), grad.data(), mom, 0, 6, lr, it + 1, hyper);
        pose = perturbLeft(delta, pose);
    }
    return best;
}

// ---------------------------------------------------------------------------
// pose errors

/// Pose at the middle sub-frame time.
inline RigidPose midExposurePose(const BezierTrajectory &traj, const AlignmentParams &params) {
    const auto t = alignmentTimes(params);
    const std::size_t n = t.size();
    const double mid    = n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
    return traj.poseAt(mid);
}

struct PoseError {
    double rotation_deg = 0.0;
    double translation  = 0.0; ///< camera-center distance
};

inline PoseError poseError(const RigidPose &estimate, const RigidPose &truth) {
    return {rotationAngle(estimate.rotation, truth.rotation) * 180.0 / std::numbers::pi,
            (estimate.center() - truth.center()).norm()};
}

} // namespace blursplat
