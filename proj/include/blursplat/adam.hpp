// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace blursplat {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps   = 1e-8;
};

/// First/second moment buffers for a flat parameter block.
struct AdamMoments {
    std::vector<double> m, v;

    AdamMoments() = default;
    explicit AdamMoments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    std::size_t size() const { return m.size(); }
    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

/// One bias-corrected Adam update of `param[offset + k]` for k < count.
/// `step` is the 1-based step count of the block.
inline void adamUpdate(double *param, const double *grad, AdamMoments &mom, std::size_t offset, std::size_t count,
                       double lr, long step, const AdamHyper &h) {
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < count; ++k) {
        double &m = mom.m[offset + k];
        double &v = mom.v[offset + k];
        m         = h.beta1 * m + (1.0 - h.beta1) * grad[k];
        v         = h.beta2 * v + (1.0 - h.beta2) * grad[k] * grad[k];
        param[k] -= lr * (m / c1) / (std::sqrt(v / c2) + h.eps);
    }
}

} // namespace blursplat
