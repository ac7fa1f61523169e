// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Blur forward model: render N sub-frames along the camera trajectory, average
// them in linear space and gamma-encode the mean.
//
#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "lie.hpp"
#include "parallel.hpp"
#include "rasterizer.hpp"
#include "scene.hpp"

#include <cmath>
#include <memory>
#include <span>
#include <vector>

namespace blursplat {

inline constexpr double kGamma = 2.2;
/// The gamma derivative is evaluated no closer to zero than this.
inline constexpr double kGammaDerivativeFloor = 1e-6;

inline double gammaValue(double x) { return std::min(1.0, std::pow(x, 1.0 / kGamma)); }

/// d gamma / dx with the derivative at 0 replaced by its value at 1e-6 and
/// zero where the output is clamped.
inline double gammaDerivative(double x) {
    if (std::pow(x, 1.0 / kGamma) > 1.0)
        return 0.0;
    const double xc = std::max(x, kGammaDerivativeFloor);
    return std::pow(xc, 1.0 / kGamma - 1.0) / kGamma;
}

inline GammaImage gammaCorrect(const LinearImage &img) {
    GammaImage out(img.width(), img.height());
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (img[i] < 0.0)
            throw InvalidArgument("gamma_correct: negative input");
        // NaN passes through so the loss reports it
        out[i] = std::isnan(img[i]) ? img[i] : gammaValue(img[i]);
    }
    return out;
}

struct BlurOptions {
    Vec3 background = Vec3::Zero();
    int workers     = 1;
    bool retainSubframes = false;
    bool signature       = false; ///< forwarded to every sub-frame pass
};

struct BlurryRender {
    GammaImage image;
    std::vector<LinearImage> subframes; ///< empty unless retained
};

struct BlurGradients {
    std::vector<GaussianGradient> gaussians;
    std::vector<Vec6> control; ///< per control twist, (rho, phi)
    std::vector<double> alignment;
    /// View-space positional gradient magnitudes summed over the sub-frames.
    std::vector<double> view_grad;
    std::vector<unsigned char> visible;
};

/// One blurry synthesis with cached sub-frame passes for the backward pass.
class BlurPass {
  public:
    BlurPass(const GaussianScene &scene, const BezierTrajectory &traj, const AlignmentParams &params,
             const Camera &cam, const BlurOptions &opts = {})
        : mTraj(traj), mParams(params), mOpts(opts), mSceneSize(scene.size()) {
        if (params.count() < 2)
            throw InvalidArgument("synthesize_blur: need at least two sub-frames");
        mTimes = alignmentTimes(params);
        const std::size_t n = mTimes.size();
        mTwists.resize(n);
        mPasses.resize(n);
        parallelFor(n, opts.workers, [&](std::size_t i) {
            mTwists[i] = traj.twistAt(mTimes[i]);
            mPasses[i] = std::make_unique<RenderPass>(scene, expSE3(mTwists[i]), cam,
                                                      RenderOptions{opts.background, 1, opts.signature});
        });

        mMean = LinearImage(cam.width, cam.height);
        for (const auto &pass : mPasses) {
            const auto &img = pass->image();
            for (std::size_t k = 0; k < img.size(); ++k)
                mMean[k] += img[k];
        }
        for (std::size_t k = 0; k < mMean.size(); ++k)
            mMean[k] /= static_cast<double>(n);

        mResult.image = gammaCorrect(mMean);
        if (opts.retainSubframes)
            for (const auto &pass : mPasses)
                mResult.subframes.push_back(pass->image());
    }

    const BlurryRender &result() const { return mResult; }
    const GammaImage &image() const { return mResult.image; }
    const LinearImage &linearMean() const { return mMean; }
    const std::vector<double> &times() const { return mTimes; }
    std::size_t subframeCount() const { return mPasses.size(); }
    const LinearImage &subframe(std::size_t i) const { return mPasses.at(i)->image(); }
    RigidPose subframePose(std::size_t i) const { return expSE3(mTwists.at(i)); }

    std::uint64_t signature() const {
        std::uint64_t h = 0;
        for (const auto &pass : mPasses)
            h = detail::mixHash(h, pass->signature());
        return h;
    }

    /// Chain rule through gamma, the average, each render and the trajectory.
    /// `subframeUpstream`, when non-empty, adds a direct gradient on each linear
    /// sub-frame render (the smoothness term).
    BlurGradients backward(const ImageGradient &upstream, std::span<const ImageGradient> subframeUpstream = {}) const {
        requireSameShape(upstream, mMean, "synthesize_blur_backward");
        const std::size_t n = mPasses.size();
        if (!subframeUpstream.empty()) {
            if (subframeUpstream.size() != n)
                throw InvalidArgument("synthesize_blur_backward: one sub-frame gradient per sub-frame required");
            for (const auto &g : subframeUpstream)
                requireSameShape(g, mMean, "synthesize_blur_backward");
        }

        ImageGradient linear(mMean.width(), mMean.height());
        for (std::size_t k = 0; k < mMean.size(); ++k)
            linear[k] = upstream[k] * gammaDerivative(mMean[k]) / static_cast<double>(n);

        std::vector<RenderGradients> parts(n);
        parallelFor(n, mOpts.workers, [&](std::size_t i) {
            if (subframeUpstream.empty()) {
                parts[i] = mPasses[i]->backward(linear);
            } else {
                ImageGradient up = linear;
                for (std::size_t k = 0; k < up.size(); ++k)
                    up[k] += subframeUpstream[i][k];
                parts[i] = mPasses[i]->backward(up);
            }
        });

        BlurGradients out;
        out.gaussians.assign(mSceneSize, GaussianGradient{});
        out.view_grad.assign(mSceneSize, 0.0);
        out.visible.assign(mSceneSize, 0);
        out.control.assign(mTraj.control().size(), Vec6::Zero());
        std::vector<double> gradTimes(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto &part = parts[i];
            for (std::size_t g = 0; g < mSceneSize; ++g) {
                out.gaussians[g] += part.gaussians[g];
                out.view_grad[g] += part.view_grad[g];
                out.visible[g] |= part.visible[g];
            }
            const Vec6 gTwist = leftJacobianSE3(Twist::fromVector(mTwists[i])).transpose() * part.pose;
            const auto weights = bernsteinWeights(mTraj.order(), mTimes[i]);
            for (std::size_t k = 0; k < weights.size(); ++k)
                out.control[k] += weights[k] * gTwist;
            gradTimes[i] = mTraj.derivativeAt(mTimes[i]).dot(gTwist);
        }
        out.alignment = alignmentTimesBackward(mParams, gradTimes);
        return out;
    }

  private:
    BezierTrajectory mTraj;
    AlignmentParams mParams;
    BlurOptions mOpts;
    std::size_t mSceneSize;
    std::vector<double> mTimes;
    std::vector<Vec6> mTwists;
    std::vector<std::unique_ptr<RenderPass>> mPasses;
    LinearImage mMean;
    BlurryRender mResult;
};

inline BlurryRender synthesizeBlur(const GaussianScene &scene, const BezierTrajectory &traj,
                                   const AlignmentParams &params, const Camera &cam, const BlurOptions &opts = {}) {
    return BlurPass(scene, traj, params, cam, opts).result();
}

} // namespace blursplat
