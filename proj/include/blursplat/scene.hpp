// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "errors.hpp"
#include "lie.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <vector>

namespace blursplat {

/// One splat. Constrained quantities are stored unconstrained: scale as log,
/// opacity as logit, rotation as a (renormalized) quaternion (w, x, y, z).
struct Gaussian3D {
    Vec3 position      = Vec3::Zero();
    Vec3 log_scale     = Vec3::Zero();
    Vec4 rotation_q    = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 color         = Vec3::Zero();
    double opacity_logit = 0.0;

    double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
    Vec3 scale() const { return log_scale.array().exp(); }
};

/// Number of scalars in a Gaussian3D, in optimizer layout order
/// (position, log_scale, rotation_q, color, opacity_logit).
inline constexpr int kGaussianParams = 14;

inline std::array<double, kGaussianParams> packGaussian(const Gaussian3D &g) {
    return {g.position.x(),   g.position.y(),   g.position.z(),   g.log_scale.x(),  g.log_scale.y(),
            g.log_scale.z(),  g.rotation_q(0),  g.rotation_q(1),  g.rotation_q(2),  g.rotation_q(3),
            g.color.x(),      g.color.y(),      g.color.z(),      g.opacity_logit};
}

inline Gaussian3D unpackGaussian(const std::array<double, kGaussianParams> &p) {
    Gaussian3D g;
    g.position      = {p[0], p[1], p[2]};
    g.log_scale     = {p[3], p[4], p[5]};
    g.rotation_q    = {p[6], p[7], p[8], p[9]};
    g.color         = {p[10], p[11], p[12]};
    g.opacity_logit = p[13];
    return g;
}

/// Splat collection plus per-splat densification statistics.
struct GaussianScene {
    std::vector<Gaussian3D> gaussians;
    std::vector<double> grad_accum;
    std::vector<double> grad_count;

    std::size_t size() const { return gaussians.size(); }

    void push(const Gaussian3D &g) {
        gaussians.push_back(g);
        grad_accum.push_back(0.0);
        grad_count.push_back(0.0);
    }

    bool consistent() const {
        return grad_accum.size() == gaussians.size() && grad_count.size() == gaussians.size() &&
               std::all_of(grad_count.begin(), grad_count.end(), [](double c) { return c >= 0.0; });
    }

    void resetStatistics() {
        std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
        std::fill(grad_count.begin(), grad_count.end(), 0.0);
    }
};

/// Pinhole intrinsics in pixels; pixel (u, v) has its center at (u, v).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    void validate() const {
        if (!(fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx > 0.0 && cx < width && cy > 0.0 &&
              cy < height))
            throw InvalidArgument("Camera: need fx, fy > 0, 0 < cx < width, 0 < cy < height");
    }

    friend bool operator==(const Camera &, const Camera &) = default;
};

/// Rotation of the normalized quaternion (w, x, y, z).
inline Mat3 quaternionToRotation(const Vec4 &q) {
    const Vec4 n = q.normalized();
    const double w = n(0), x = n(1), y = n(2), z = n(3);
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y), //
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),   //
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

inline Mat3 covariance3d(const Gaussian3D &g) {
    const Mat3 r  = quaternionToRotation(g.rotation_q);
    const Vec3 s2 = (2.0 * g.log_scale).array().exp();
    Mat3 cov      = r * s2.asDiagonal() * r.transpose();
    return 0.5 * (cov + cov.transpose());
}

/// One Gaussian per point: isotropic scale from the mean distance to the three
/// nearest neighbors, opacity 0.1, identity rotation.
inline GaussianScene initScene(std::span<const Vec3> points, std::span<const Vec3> colors) {
    if (points.empty())
        throw InvalidArgument("init_scene: point list is empty");
    if (colors.size() != points.size())
        throw InvalidArgument("init_scene: colors and points differ in length");

    constexpr std::size_t kNeighbors = 3;
    const double initialLogit        = std::log(0.1 / 0.9);

    GaussianScene scene;
    scene.gaussians.reserve(points.size());
    std::vector<double> dists;
    for (std::size_t i = 0; i < points.size(); ++i) {
        dists.clear();
        for (std::size_t j = 0; j < points.size(); ++j)
            if (j != i)
                dists.push_back((points[i] - points[j]).norm());
        const std::size_t k = std::min(kNeighbors, dists.size());
        double scale        = 1.0;
        if (k > 0) {
            std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());
            double sum = 0.0;
            for (std::size_t n = 0; n < k; ++n)
                sum += dists[n];
            scale = std::max(sum / static_cast<double>(k), 1e-7);
        }
        Gaussian3D g;
        g.position      = points[i];
        g.log_scale     = Vec3::Constant(std::log(scale));
        g.color         = colors[i];
        g.opacity_logit = initialLogit;
        scene.push(g);
    }
    return scene;
}

/// FNV-1a over the raw bytes of every Gaussian parameter.
inline std::uint64_t sceneHash(const GaussianScene &scene) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto &g : scene.gaussians) {
        for (double v : packGaussian(g)) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ull;
            }
        }
    }
    return h;
}

} // namespace blursplat
