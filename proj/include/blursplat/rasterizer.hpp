// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable splat rasterizer. Forward: project every Gaussian, sort by
// camera-space depth, alpha-composite front to back per pixel. Backward: exact
// gradients of <upstream, image> for every Gaussian parameter and for a
// left-multiplied pose perturbation.
//
// Pixels are processed in 16x16 tiles. Each tile keeps its own per-entry
// gradient slots which are reduced in tile order, so the result does not depend
// on how many workers ran the tiles.
//
#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "lie.hpp"
#include "parallel.hpp"
#include "scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

namespace blursplat {

inline constexpr double kNearPlane  = 0.01;
inline constexpr double kBlurFloor  = 0.3;         ///< px^2 added to the cov2d diagonal
inline constexpr double kAlphaMin   = 1.0 / 255.0; ///< contributions below are skipped
inline constexpr double kAlphaMax   = 0.99;
inline constexpr double kMass99Sq   = 9.210340371976184; ///< -2 ln(0.01): 99% mass ellipse
inline constexpr int kTileSize      = 16;

/// Screen-space footprint of a Gaussian.
struct Projected2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d  = Mat2::Identity();
    double depth   = 0.0;
    Vec3 color     = Vec3::Zero();
    double opacity = 0.0;
};

/// Gradient for one Gaussian, laid out like Gaussian3D.
struct GaussianGradient {
    Vec3 position      = Vec3::Zero();
    Vec3 log_scale     = Vec3::Zero();
    Vec4 rotation_q    = Vec4::Zero();
    Vec3 color         = Vec3::Zero();
    double opacity_logit = 0.0;

    GaussianGradient &operator+=(const GaussianGradient &o) {
        position += o.position;
        log_scale += o.log_scale;
        rotation_q += o.rotation_q;
        color += o.color;
        opacity_logit += o.opacity_logit;
        return *this;
    }

    GaussianGradient &operator*=(double s) {
        position *= s;
        log_scale *= s;
        rotation_q *= s;
        color *= s;
        opacity_logit *= s;
        return *this;
    }

    std::array<double, kGaussianParams> packed() const {
        return {position.x(),  position.y(),  position.z(),  log_scale.x(), log_scale.y(),
                log_scale.z(), rotation_q(0), rotation_q(1), rotation_q(2), rotation_q(3),
                color.x(),     color.y(),     color.z(),     opacity_logit};
    }
};

struct RenderGradients {
    std::vector<GaussianGradient> gaussians;
    /// d/d(delta) of P' = exp(delta) * P, layout (rho, phi).
    Vec6 pose = Vec6::Zero();
    /// |dL/d mean2d| in normalized device units (pixel gradient scaled by size/2).
    std::vector<double> view_grad;
    std::vector<unsigned char> visible;
};

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    int workers     = 1;
    /// Hash the set of (pixel, splat, clamped) contributions; test instrumentation.
    bool signature = false;
    /// Keep the per-pixel contribution lists for backward(); off for plain renders.
    bool record = true;
};

namespace detail {

struct Splat {
    std::size_t index = 0; // position in the scene
    Projected2D proj;
    Vec3 camPoint;
    Mat3 cov3d, covCam, rotQ;
    Vec3 scale2;
    Vec4 quatRaw;
    Eigen::Matrix<double, 2, 3> jac;
    double conicA = 0, conicB = 0, conicC = 0;
    double opacityLogit = 0;
    double powerFloor   = 0; // below this exponent alpha < kAlphaMin
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1; // inclusive pixel footprint
};

// Hot per-pixel data, stored in depth order.
struct PixelSplat {
    double mx, my, a, b, c, opacity, powerFloor;
    double r, g, bl;
    int x0, x1, y0, y1;
};

// One recorded contribution: tile entry and the unclamped Gaussian falloff.
struct Hit {
    std::uint32_t entry;
    double gauss;
};

struct EntryGrad {
    double mean[2]  = {0, 0};
    double conic[3] = {0, 0, 0};
    double color[3] = {0, 0, 0};
    double opacity  = 0;
};

inline std::optional<Splat> projectSplat(const Gaussian3D &g, std::size_t index, const RigidPose &pose,
                                         const Camera &cam) {
    const Vec3 p = pose.apply(g.position);
    if (!(p.z() > kNearPlane))
        return std::nullopt;

    Splat s;
    s.index    = index;
    s.camPoint = p;
    s.rotQ     = quaternionToRotation(g.rotation_q);
    s.quatRaw  = g.rotation_q;
    s.scale2   = (2.0 * g.log_scale).array().exp();
    s.cov3d    = s.rotQ * s.scale2.asDiagonal() * s.rotQ.transpose();
    s.covCam   = pose.rotation * s.cov3d * pose.rotation.transpose();

    const double iz = 1.0 / p.z();
    s.jac << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;

    Mat2 cov = s.jac * s.covCam * s.jac.transpose();
    cov      = 0.5 * (cov + cov.transpose());
    cov(0, 0) += kBlurFloor;
    cov(1, 1) += kBlurFloor;

    s.proj.mean2d  = {cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy};
    s.proj.cov2d   = cov;
    s.proj.depth   = p.z();
    s.proj.color   = g.color;
    s.proj.opacity = g.opacity();
    s.opacityLogit = g.opacity_logit;

    const Vec2 &m  = s.proj.mean2d;
    const double ex = std::sqrt(kMass99Sq * cov(0, 0)), ey = std::sqrt(kMass99Sq * cov(1, 1));
    if (m.x() + ex < -0.5 || m.x() - ex > cam.width - 0.5 || m.y() + ey < -0.5 || m.y() - ey > cam.height - 0.5)
        return std::nullopt;

    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
    s.conicA         = cov(1, 1) / det;
    s.conicB         = -cov(0, 1) / det;
    s.conicC         = cov(0, 0) / det;

    // Footprint: every pixel that can reach alpha >= kAlphaMin.
    const double level = kAlphaMin / s.proj.opacity;
    s.powerFloor       = std::log(level);
    if (level <= 1.0) {
        const double m2 = -2.0 * s.powerFloor * (1.0 + 1e-9) + 1e-9;
        const double rx = std::sqrt(m2 * cov(0, 0)), ry = std::sqrt(m2 * cov(1, 1));
        s.x0 = std::max(0, static_cast<int>(std::ceil(m.x() - rx)));
        s.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(m.x() + rx)));
        s.y0 = std::max(0, static_cast<int>(std::ceil(m.y() - ry)));
        s.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(m.y() + ry)));
    }
    return s;
}

inline std::uint64_t mixHash(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

} // namespace detail

/// Projects one Gaussian; std::nullopt when it is behind the near plane or its
/// 99%-mass ellipse misses the image.
inline std::optional<Projected2D> projectGaussian(const Gaussian3D &g, const RigidPose &pose, const Camera &cam) {
    auto s = detail::projectSplat(g, 0, pose, cam);
    if (!s)
        return std::nullopt;
    return s->proj;
}

/// Forward rasterization with everything the backward pass needs.
class RenderPass {
  public:
    RenderPass(const GaussianScene &scene, const RigidPose &pose, const Camera &cam, const RenderOptions &opts = {})
        : mCam(cam), mOpts(opts), mSceneSize(scene.size()), mImage(cam.width, cam.height) {
        cam.validate();
        project(scene, pose);
        bin();
        forward();
    }

    const LinearImage &image() const { return mImage; }
    const Camera &camera() const { return mCam; }
    std::uint64_t signature() const { return mSignature; }
    std::size_t visibleCount() const { return mSplats.size(); }

    RenderGradients backward(const ImageGradient &upstream) const {
        if (upstream.width() != mCam.width || upstream.height() != mCam.height)
            throw InvalidArgument("render_backward: upstream gradient shape differs from the image");
        if (!mOpts.record)
            throw InvalidArgument("render_backward: pass was created without recording");

        std::vector<detail::EntryGrad> entryGrads(mEntries.size());
        parallelFor(mTileOffsets.size() - 1, mOpts.workers,
                    [&](std::size_t tile) { backwardTile(tile, upstream, entryGrads); });

        std::vector<detail::EntryGrad> splatGrads(mSplats.size());
        for (std::size_t e = 0; e < mEntries.size(); ++e) {
            auto &dst       = splatGrads[mEntries[e]];
            const auto &src = entryGrads[e];
            for (int k = 0; k < 2; ++k)
                dst.mean[k] += src.mean[k];
            for (int k = 0; k < 3; ++k) {
                dst.conic[k] += src.conic[k];
                dst.color[k] += src.color[k];
            }
            dst.opacity += src.opacity;
        }

        RenderGradients out;
        out.gaussians.assign(mSceneSize, GaussianGradient{});
        out.view_grad.assign(mSceneSize, 0.0);
        out.visible.assign(mSceneSize, 0);
        std::vector<Vec6> poseParts(mSplats.size(), Vec6::Zero());
        parallelFor(mSplats.size(), mOpts.workers, [&](std::size_t i) {
            const auto &s = mSplats[i];
            poseParts[i]  = chainRule(s, splatGrads[i], out.gaussians[s.index]);
            out.visible[s.index] = 1;
            out.view_grad[s.index] =
                std::hypot(splatGrads[i].mean[0] * 0.5 * mCam.width, splatGrads[i].mean[1] * 0.5 * mCam.height);
        });
        for (const auto &p : poseParts)
            out.pose += p;
        return out;
    }

  private:
    void project(const GaussianScene &scene, const RigidPose &pose) {
        mPoseRotation = pose.rotation;
        for (std::size_t i = 0; i < scene.size(); ++i)
            if (auto s = detail::projectSplat(scene.gaussians[i], i, pose, mCam))
                mSplats.push_back(std::move(*s));
        std::sort(mSplats.begin(), mSplats.end(), [](const detail::Splat &a, const detail::Splat &b) {
            return a.proj.depth < b.proj.depth || (a.proj.depth == b.proj.depth && a.index < b.index);
        });
        mPixelSplats.reserve(mSplats.size());
        for (const auto &s : mSplats) {
            const auto &p = s.proj;
            mPixelSplats.push_back({p.mean2d.x(), p.mean2d.y(), s.conicA, s.conicB, s.conicC, p.opacity,
                                    s.powerFloor, p.color.x(), p.color.y(), p.color.z(), s.x0, s.x1, s.y0, s.y1});
        }
    }

    void bin() {
        mTilesX         = (mCam.width + kTileSize - 1) / kTileSize;
        const int tilesY = (mCam.height + kTileSize - 1) / kTileSize;
        std::vector<std::vector<std::uint32_t>> lists(static_cast<std::size_t>(mTilesX) * tilesY);
        for (std::uint32_t i = 0; i < mPixelSplats.size(); ++i) {
            const auto &s = mPixelSplats[i];
            if (s.x1 < s.x0 || s.y1 < s.y0)
                continue;
            for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty)
                for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx)
                    lists[static_cast<std::size_t>(ty) * mTilesX + tx].push_back(i);
        }
        mTileOffsets.assign(lists.size() + 1, 0);
        for (std::size_t t = 0; t < lists.size(); ++t)
            mTileOffsets[t + 1] = mTileOffsets[t] + lists[t].size();
        mEntries.reserve(mTileOffsets.back());
        for (const auto &l : lists)
            mEntries.insert(mEntries.end(), l.begin(), l.end());
    }

    template <typename Visit>
    void tilePixels(std::size_t tile, Visit &&visit) const {
        const int tx = static_cast<int>(tile) % mTilesX, ty = static_cast<int>(tile) / mTilesX;
        const int xEnd = std::min(mCam.width, (tx + 1) * kTileSize);
        const int yEnd = std::min(mCam.height, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < yEnd; ++y)
            for (int x = tx * kTileSize; x < xEnd; ++x)
                visit(x, y);
    }

    // Calls hit(entry, alpha, gauss, clamped, dx, dy) for each contribution in
    // front-to-back order and returns the final transmittance.
    template <typename Hit>
    double composite(std::size_t tile, int x, int y, Hit &&hit) const {
        double transmittance = 1.0;
        for (std::size_t e = mTileOffsets[tile]; e < mTileOffsets[tile + 1]; ++e) {
            const auto &s = mPixelSplats[mEntries[e]];
            if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1)
                continue;
            const double dx = x - s.mx, dy = y - s.my;
            const double power = -0.5 * (s.a * dx * dx + s.c * dy * dy) - s.b * dx * dy;
            if (power < s.powerFloor - 1e-9)
                continue;
            const double gauss = std::exp(power);
            const double raw   = s.opacity * gauss;
            const bool clamped = raw > kAlphaMax;
            const double alpha = clamped ? kAlphaMax : raw;
            if (alpha < kAlphaMin)
                continue;
            hit(e, alpha, gauss, clamped, dx, dy, transmittance);
            transmittance *= (1.0 - alpha);
        }
        return transmittance;
    }

    void forward() {
        const std::size_t tiles = mTileOffsets.size() - 1;
        std::vector<std::uint64_t> tileSig(tiles, 0);
        const Vec3 bg = mOpts.background;
        if (mOpts.record) {
            mHits.assign(tiles, {});
            mHitOffsets.assign(tiles, {});
        }
        parallelFor(tiles, mOpts.workers, [&](std::size_t tile) {
            std::uint64_t sig = 0;
            tilePixels(tile, [&](int x, int y) {
                if (mOpts.record)
                    mHitOffsets[tile].push_back(static_cast<std::uint32_t>(mHits[tile].size()));
                double acc[3]   = {0, 0, 0};
                const double tf = composite(tile, x, y, [&](std::size_t e, double alpha, double gauss, bool clamped,
                                                           double, double, double t) {
                    const auto &s = mPixelSplats[mEntries[e]];
                    if (mOpts.record)
                        mHits[tile].push_back({static_cast<std::uint32_t>(e), gauss});
                    acc[0] += alpha * t * s.r;
                    acc[1] += alpha * t * s.g;
                    acc[2] += alpha * t * s.bl;
                    if (mOpts.signature) {
                        const std::uint64_t px = static_cast<std::uint64_t>(y) * mCam.width + x;
                        sig = detail::mixHash(sig, (px << 24) ^ (mSplats[mEntries[e]].index << 1) ^ (clamped ? 1 : 0));
                    }
                });
                for (int c = 0; c < 3; ++c)
                    mImage.at(x, y, c) = acc[c] + tf * bg[c];
            });
            if (mOpts.record)
                mHitOffsets[tile].push_back(static_cast<std::uint32_t>(mHits[tile].size()));
            tileSig[tile] = sig;
        });
        for (auto s : tileSig)
            mSignature = detail::mixHash(mSignature, s);
    }

    struct Contribution {
        std::size_t entry;
        double alpha, gauss, transmittance, invOneMinus;
        bool clamped;
    };

    void backwardTile(std::size_t tile, const ImageGradient &upstream, std::vector<detail::EntryGrad> &grads) const {
        std::vector<Contribution> list;
        const Vec3 bg     = mOpts.background;
        const auto &hits  = mHits[tile];
        const auto &start = mHitOffsets[tile];
        std::size_t pixel = 0;
        tilePixels(tile, [&](int x, int y) {
            const std::size_t h0 = start[pixel], h1 = start[pixel + 1];
            ++pixel;
            const double g[3] = {upstream.at(x, y, 0), upstream.at(x, y, 1), upstream.at(x, y, 2)};
            if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0)
                return;
            list.clear();
            double tf = 1.0;
            for (std::size_t h = h0; h < h1; ++h) {
                const auto &s      = mPixelSplats[mEntries[hits[h].entry]];
                const double raw   = s.opacity * hits[h].gauss;
                const bool clamped = raw > kAlphaMax;
                const double alpha = clamped ? kAlphaMax : raw;
                list.push_back({hits[h].entry, alpha, hits[h].gauss, tf, 1.0 / (1.0 - alpha), clamped});
                tf *= (1.0 - alpha);
            }
            double after[3] = {tf * bg[0], tf * bg[1], tf * bg[2]};
            for (auto it = list.rbegin(); it != list.rend(); ++it) {
                const auto &s   = mPixelSplats[mEntries[it->entry]];
                auto &out       = grads[it->entry];
                const double w  = it->alpha * it->transmittance;
                const double dAlpha = g[0] * (it->transmittance * s.r - after[0] * it->invOneMinus) +
                                      g[1] * (it->transmittance * s.g - after[1] * it->invOneMinus) +
                                      g[2] * (it->transmittance * s.bl - after[2] * it->invOneMinus);
                out.color[0] += w * g[0];
                out.color[1] += w * g[1];
                out.color[2] += w * g[2];
                after[0] += w * s.r;
                after[1] += w * s.g;
                after[2] += w * s.bl;
                if (it->clamped)
                    continue;
                out.opacity += dAlpha * it->gauss;
                const double gp = dAlpha * it->alpha;
                const double dx = x - s.mx, dy = y - s.my;
                out.conic[0] += -0.5 * dx * dx * gp;
                out.conic[1] += -dx * dy * gp;
                out.conic[2] += -0.5 * dy * dy * gp;
                out.mean[0] += gp * (s.a * dx + s.b * dy);
                out.mean[1] += gp * (s.b * dx + s.c * dy);
            }
        });
    }

    // Pushes screen-space gradients back to the Gaussian parameters; returns the
    // splat's contribution to the pose gradient.
    Vec6 chainRule(const detail::Splat &s, const detail::EntryGrad &g, GaussianGradient &out) const {
        const double fx = mCam.fx, fy = mCam.fy;
        const Vec3 &p   = s.camPoint;
        const double iz = 1.0 / p.z(), iz2 = iz * iz, iz3 = iz2 * iz;

        out.color = {g.color[0], g.color[1], g.color[2]};
        const double sig  = s.proj.opacity;
        out.opacity_logit = g.opacity * sig * (1.0 - sig);

        // conic -> cov2d
        Mat2 conic;
        conic << s.conicA, s.conicB, s.conicB, s.conicC;
        Mat2 gConic;
        gConic << g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2];
        const Mat2 gCov2 = -conic * gConic * conic;

        // cov2d = J M J^T (+ floor)
        const Mat3 gCovCam                    = s.jac.transpose() * gCov2 * s.jac;
        const Eigen::Matrix<double, 2, 3> gJac = 2.0 * gCov2 * s.jac * s.covCam;

        // camera-space point gradient from the mean and from J
        Vec3 gp = Vec3::Zero();
        gp.x() += g.mean[0] * fx * iz;
        gp.y() += g.mean[1] * fy * iz;
        gp.z() += -g.mean[0] * fx * p.x() * iz2 - g.mean[1] * fy * p.y() * iz2;
        gp.x() += gJac(0, 2) * (-fx * iz2);
        gp.y() += gJac(1, 2) * (-fy * iz2);
        gp.z() += gJac(0, 0) * (-fx * iz2) + gJac(0, 2) * (2.0 * fx * p.x() * iz3) + gJac(1, 1) * (-fy * iz2) +
                  gJac(1, 2) * (2.0 * fy * p.y() * iz3);

        const Mat3 &w = mPoseRotation;
        out.position  = w.transpose() * gp;

        // M = W Sigma W^T
        const Mat3 gSigma = w.transpose() * gCovCam * w;
        const Mat3 gW     = 2.0 * gCovCam * w * s.cov3d;

        // Sigma = R D R^T
        const Mat3 gR   = 2.0 * gSigma * s.rotQ * s.scale2.asDiagonal();
        const Mat3 gRot = s.rotQ.transpose() * gSigma * s.rotQ;
        for (int k = 0; k < 3; ++k)
            out.log_scale(k) = gRot(k, k) * 2.0 * s.scale2(k);

        // R(q_hat) -> q_hat -> q
        const Vec4 qh  = s.quatRaw.normalized();
        const double qw = qh(0), qx = qh(1), qy = qh(2), qz = qh(3);
        Vec4 gq;
        gq(0) = 2.0 * (qz * (gR(1, 0) - gR(0, 1)) + qy * (gR(0, 2) - gR(2, 0)) + qx * (gR(2, 1) - gR(1, 2)));
        gq(1) = 2.0 * (qy * (gR(1, 0) + gR(0, 1)) + qz * (gR(2, 0) + gR(0, 2)) + qw * (gR(2, 1) - gR(1, 2))) -
                4.0 * qx * (gR(1, 1) + gR(2, 2));
        gq(2) = 2.0 * (qx * (gR(1, 0) + gR(0, 1)) + qw * (gR(0, 2) - gR(2, 0)) + qz * (gR(2, 1) + gR(1, 2))) -
                4.0 * qy * (gR(0, 0) + gR(2, 2));
        gq(3) = 2.0 * (qw * (gR(1, 0) - gR(0, 1)) + qx * (gR(2, 0) + gR(0, 2)) + qy * (gR(2, 1) + gR(1, 2))) -
                4.0 * qz * (gR(0, 0) + gR(1, 1));
        const double qn = s.quatRaw.norm();
        out.rotation_q  = (gq - qh * qh.dot(gq)) / qn;

        // pose: p' = p + dphi x p + drho, W' = (I + dphi^) W
        Vec6 pose;
        pose.head<3>() = gp;
        Vec3 gphi      = p.cross(gp);
        for (int k = 0; k < 3; ++k)
            gphi(k) += (gW.array() * (hat(Vec3::Unit(k)) * w).array()).sum();
        pose.tail<3>() = gphi;
        return pose;
    }

    Camera mCam;
    RenderOptions mOpts;
    std::size_t mSceneSize = 0;
    Mat3 mPoseRotation     = Mat3::Identity();
    std::vector<detail::Splat> mSplats;
    std::vector<detail::PixelSplat> mPixelSplats;
    int mTilesX = 0;
    std::vector<std::size_t> mTileOffsets;
    std::vector<std::uint32_t> mEntries;
    std::vector<std::vector<detail::Hit>> mHits;            // per tile, pixels in scan order
    std::vector<std::vector<std::uint32_t>> mHitOffsets;    // per tile, pixel count + 1
    LinearImage mImage;
    std::uint64_t mSignature = 0;
};

inline LinearImage render(const GaussianScene &scene, const RigidPose &pose, const Camera &cam,
                          const Vec3 &background, int workers = 1) {
    return RenderPass(scene, pose, cam, {background, workers, false, false}).image();
}

/// Recomputes the forward pass and returns gradients of <upstream, render>.
inline RenderGradients renderBackward(const GaussianScene &scene, const RigidPose &pose, const Camera &cam,
                                      const Vec3 &background, const ImageGradient &upstream, int workers = 1) {
    if (upstream.width() != cam.width || upstream.height() != cam.height)
        throw InvalidArgument("render_backward: upstream gradient shape differs from the image");
    return RenderPass(scene, pose, cam, {background, workers}).backward(upstream);
}

} // namespace blursplat
