// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Rigid-motion algebra: se(3) exponential/logarithm, the SE(3) left Jacobian,
// Bezier curves over twist coefficients and the monotone sub-frame time map.
//
#pragma once

#include "errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace blursplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// se(3) element. Vector layout everywhere is (rho, phi).
struct Twist {
    Vec3 rho = Vec3::Zero(); ///< translational part
    Vec3 phi = Vec3::Zero(); ///< rotational part, axis-angle radians

    static Twist fromVector(const Vec6 &v) { return {v.head<3>(), v.tail<3>()}; }

    Vec6 vector() const {
        Vec6 v;
        v << rho, phi;
        return v;
    }

    bool allFinite() const { return rho.allFinite() && phi.allFinite(); }

    friend bool operator==(const Twist &a, const Twist &b) { return a.rho == b.rho && a.phi == b.phi; }
};

/// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct RigidPose {
    Mat3 rotation    = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3 &x) const { return rotation * x + translation; }

    RigidPose operator*(const RigidPose &rhs) const {
        return {rotation * rhs.rotation, rotation * rhs.translation + translation};
    }

    RigidPose inverse() const {
        const Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }

    /// Camera center in world coordinates.
    Vec3 center() const { return -(rotation.transpose() * translation); }

    friend bool operator==(const RigidPose &a, const RigidPose &b) {
        return a.rotation == b.rotation && a.translation == b.translation;
    }
};

inline Mat3 hat(const Vec3 &v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

namespace detail {

// Sum_{n>=first} sign * coeff(n) * x^(n-first) with x = theta^2. Used for the
// small-angle branches where the closed forms lose digits to cancellation.
template <typename Coeff>
double evenSeries(double theta2, int first, int terms, Coeff coeff) {
    double sum = 0.0, power = 1.0;
    for (int n = first; n < first + terms; ++n) {
        const double sign = ((n - first) % 2 == 0) ? 1.0 : -1.0;
        sum += sign * coeff(n) * power;
        power *= theta2;
    }
    return sum;
}

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i)
        f *= i;
    return f;
}

constexpr double kSeriesAngle = 0.1;

/// Scalar coefficients shared by exp, V and the left Jacobian.
struct RotationCoeffs {
    double a; // sin(t)/t
    double b; // (1-cos t)/t^2
    double c; // (t - sin t)/t^3
    double d; // (t^2 + 2 cos t - 2)/(2 t^4)
    double e; // (2t - 3 sin t + t cos t)/(2 t^5)

    explicit RotationCoeffs(double theta) {
        const double t2 = theta * theta;
        if (theta < kSeriesAngle) {
            a = evenSeries(t2, 0, 7, [](int n) { return 1.0 / factorial(2 * n + 1); });
            b = evenSeries(t2, 1, 7, [](int n) { return 1.0 / factorial(2 * n); });
            c = evenSeries(t2, 1, 7, [](int n) { return 1.0 / factorial(2 * n + 1); });
            d = evenSeries(t2, 2, 7, [](int n) { return 1.0 / factorial(2 * n); });
            e = evenSeries(t2, 2, 7, [](int n) { return (n - 1) / factorial(2 * n + 1); });
        } else {
            const double s = std::sin(theta), co = std::cos(theta);
            a = s / theta;
            b = (1.0 - co) / t2;
            c = (theta - s) / (t2 * theta);
            d = (t2 + 2.0 * co - 2.0) / (2.0 * t2 * t2);
            e = (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t2 * t2 * theta);
        }
    }
};

} // namespace detail

inline Mat3 expSO3(const Vec3 &phi) {
    const detail::RotationCoeffs k(phi.norm());
    const Mat3 w = hat(phi);
    return Mat3::Identity() + k.a * w + k.b * w * w;
}

/// Left Jacobian of SO(3); also the V matrix of the se(3) exponential.
inline Mat3 leftJacobianSO3(const Vec3 &phi) {
    const detail::RotationCoeffs k(phi.norm());
    const Mat3 w = hat(phi);
    return Mat3::Identity() + k.b * w + k.c * w * w;
}

inline RigidPose expSE3(const Twist &xi) {
    if (!xi.allFinite())
        throw InvalidArgument("exp_se3: twist has non-finite components");
    return {expSO3(xi.phi), leftJacobianSO3(xi.phi) * xi.rho};
}

inline RigidPose expSE3(const Vec6 &xi) { return expSE3(Twist::fromVector(xi)); }

/// Principal-branch logarithm. Throws SingularityError within 1e-9 of angle pi.
inline Vec3 logSO3(const Mat3 &rotation) {
    Eigen::Quaterniond q(rotation);
    if (q.w() < 0.0)
        q.coeffs() = -q.coeffs();
    const double n     = q.vec().norm();
    const double theta = 2.0 * std::atan2(n, q.w());
    if (std::numbers::pi - theta < 1e-9)
        throw SingularityError("log_se3: rotation angle is within 1e-9 of pi");
    if (n < 1e-6) {
        const double w = q.w();
        return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * q.vec();
    }
    return (theta / n) * q.vec();
}

inline Twist logSE3(const RigidPose &pose) {
    Twist xi;
    xi.phi = logSO3(pose.rotation);
    xi.rho = leftJacobianSO3(xi.phi).partialPivLu().solve(pose.translation);
    return xi;
}

/// Left Jacobian of SE(3): exp(xi + d) ~= exp(J d) * exp(xi) to first order.
inline Mat6 leftJacobianSE3(const Twist &xi) {
    const detail::RotationCoeffs k(xi.phi.norm());
    const Mat3 w  = hat(xi.phi);
    const Mat3 r  = hat(xi.rho);
    const Mat3 ww = w * w;
    const Mat3 jr = Mat3::Identity() + k.b * w + k.c * ww;
    const Mat3 q  = 0.5 * r + k.c * (w * r + r * w + w * r * w) + k.d * (ww * r + r * ww - 3.0 * w * r * w) +
                   k.e * (w * r * ww + ww * r * w);
    Mat6 j   = Mat6::Zero();
    j.topLeftCorner<3, 3>()     = jr;
    j.topRightCorner<3, 3>()    = q;
    j.bottomRightCorner<3, 3>() = jr;
    return j;
}

/// Left-multiplies `pose` by exp(delta).
inline RigidPose perturbLeft(const Vec6 &delta, const RigidPose &pose) { return expSE3(delta) * pose; }

/// Geodesic rotation distance in radians.
inline double rotationAngle(const Mat3 &a, const Mat3 &b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
}

/// Camera trajectory as a Bezier curve in twist-coefficient space.
class BezierTrajectory {
  public:
    BezierTrajectory() = default;

    explicit BezierTrajectory(std::vector<Twist> control) : mControl(std::move(control)) {
        if (mControl.size() < 2)
            throw InvalidArgument("BezierTrajectory: need at least two control twists (order >= 1)");
    }

    /// Zero-motion curve: every control twist equals `xi`.
    static BezierTrajectory constant(const Twist &xi, int order) {
        if (order < 1)
            throw InvalidArgument("BezierTrajectory: order must be positive");
        return BezierTrajectory(std::vector<Twist>(static_cast<std::size_t>(order) + 1, xi));
    }

    int order() const { return static_cast<int>(mControl.size()) - 1; }
    const std::vector<Twist> &control() const { return mControl; }
    std::vector<Twist> &control() { return mControl; }

    /// Curve value in twist space, by de Casteljau.
    Vec6 twistAt(double t) const {
        checkParameter(t);
        std::vector<Vec6> pts;
        pts.reserve(mControl.size());
        for (const auto &c : mControl)
            pts.push_back(c.vector());
        for (std::size_t level = pts.size() - 1; level > 0; --level)
            for (std::size_t i = 0; i < level; ++i)
                pts[i] = (1.0 - t) * pts[i] + t * pts[i + 1];
        return pts.front();
    }

    /// d(twistAt)/dt.
    Vec6 derivativeAt(double t) const {
        checkParameter(t);
        const int n = order();
        std::vector<Vec6> diff;
        diff.reserve(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k)
            diff.push_back(n * (mControl[k + 1].vector() - mControl[k].vector()));
        for (std::size_t level = diff.size() - 1; level > 0; --level)
            for (std::size_t i = 0; i < level; ++i)
                diff[i] = (1.0 - t) * diff[i] + t * diff[i + 1];
        return diff.front();
    }

    RigidPose poseAt(double t) const { return expSE3(twistAt(t)); }

  private:
    static void checkParameter(double t) {
        if (!(t >= 0.0 && t <= 1.0))
            throw InvalidArgument("bezier_eval: t must lie in [0, 1]");
    }

    std::vector<Twist> mControl;
};

/// Bernstein basis values B_{k,order}(t), k = 0..order.
inline std::vector<double> bernsteinWeights(int order, double t) {
    std::vector<double> w(static_cast<std::size_t>(order) + 1, 0.0);
    w[0] = 1.0;
    for (int j = 1; j <= order; ++j) {
        for (int k = j; k > 0; --k)
            w[k] = (1.0 - t) * w[k] + t * w[k - 1];
        w[0] *= (1.0 - t);
    }
    return w;
}

inline RigidPose bezierEval(const BezierTrajectory &traj, double t) { return traj.poseAt(t); }

/// Learnable sub-frame sampling times.
///
/// raw[0] is the start offset; raw[j] (j >= 1) sets the increment between times
/// j-1 and j as softplus(raw[j]) / softplus(0) / (N-1). Times are clamped into
/// [0,1]. All-zero raw values give exactly (i-1)/(N-1).
struct AlignmentParams {
    std::vector<double> raw;

    static AlignmentParams evenlySpaced(int n) {
        if (n < 2)
            throw InvalidArgument("AlignmentParams: need at least two sub-frames");
        return {std::vector<double>(static_cast<std::size_t>(n), 0.0)};
    }

    int count() const { return static_cast<int>(raw.size()); }
};

namespace detail {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline const double kSoftplusZero = std::log(2.0);

// Unclamped cumulative times.
inline std::vector<double> unclampedTimes(const AlignmentParams &params) {
    const int n = params.count();
    if (n < 2)
        throw InvalidArgument("alignment_times: need at least two sub-frames");
    std::vector<double> u(static_cast<std::size_t>(n));
    double cum = 0.0;
    u[0]       = params.raw[0];
    for (int j = 1; j < n; ++j) {
        cum += softplus(params.raw[j]) / kSoftplusZero;
        u[j] = params.raw[0] + cum / (n - 1);
    }
    return u;
}

} // namespace detail

inline std::vector<double> alignmentTimes(const AlignmentParams &params) {
    auto u = detail::unclampedTimes(params);
    for (auto &x : u)
        x = std::clamp(x, 0.0, 1.0);
    return u;
}

/// Pulls a gradient on the times back to the raw values. Clamped times pass no gradient.
inline std::vector<double> alignmentTimesBackward(const AlignmentParams &params, std::span<const double> gradTimes) {
    const int n = params.count();
    if (static_cast<int>(gradTimes.size()) != n)
        throw InvalidArgument("alignment_times backward: gradient length mismatch");
    const auto u = detail::unclampedTimes(params);
    std::vector<double> g(static_cast<std::size_t>(n), 0.0);
    // suffix[j] = sum_{i >= j} dL/du_i
    double suffix = 0.0;
    for (int i = n - 1; i >= 1; --i) {
        if (u[i] >= 0.0 && u[i] <= 1.0)
            suffix += gradTimes[i];
        g[i] = suffix * detail::sigmoid(params.raw[i]) / (detail::kSoftplusZero * (n - 1));
    }
    if (u[0] >= 0.0 && u[0] <= 1.0)
        suffix += gradTimes[0];
    g[0] = suffix;
    return g;
}

inline std::vector<RigidPose> subframePoses(const BezierTrajectory &traj, const AlignmentParams &params) {
    std::vector<RigidPose> poses;
    for (double t : alignmentTimes(params))
        poses.push_back(traj.poseAt(t));
    return poses;
}

} // namespace blursplat
