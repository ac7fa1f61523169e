// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "errors.hpp"
#include "lie.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace blursplat {

struct LinearSpace {};
struct GammaSpace {};
struct GradientSpace {};

/// Row-major height x width x 3 image of doubles. The tag records whether values
/// are linear radiance (renders) or gamma-encoded (camera observations).
template <typename Space>
class RgbImage {
  public:
    RgbImage() = default;
    RgbImage(int width, int height, double fill = 0.0)
        : mWidth(width), mHeight(height), mData(static_cast<std::size_t>(width) * height * 3, fill) {
        if (width <= 0 || height <= 0)
            throw InvalidArgument("image dimensions must be positive");
    }

    int width() const { return mWidth; }
    int height() const { return mHeight; }
    std::size_t pixelCount() const { return static_cast<std::size_t>(mWidth) * mHeight; }
    std::size_t size() const { return mData.size(); }
    bool empty() const { return mData.empty(); }

    double &at(int x, int y, int c) { return mData[index(x, y, c)]; }
    double at(int x, int y, int c) const { return mData[index(x, y, c)]; }
    double &operator[](std::size_t i) { return mData[i]; }
    double operator[](std::size_t i) const { return mData[i]; }

    std::vector<double> &data() { return mData; }
    const std::vector<double> &data() const { return mData; }

    bool sameShape(const auto &other) const { return mWidth == other.width() && mHeight == other.height(); }

    friend bool operator==(const RgbImage &, const RgbImage &) = default;

  private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * mWidth + static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
    }

    int mWidth = 0, mHeight = 0;
    std::vector<double> mData;
};

using LinearImage = RgbImage<LinearSpace>;
using GammaImage  = RgbImage<GammaSpace>;

/// Per-pixel RGB gradient with respect to an image.
using ImageGradient = RgbImage<GradientSpace>;

inline void requireSameShape(const auto &a, const auto &b, const char *what) {
    if (a.width() != b.width() || a.height() != b.height())
        throw InvalidArgument(std::string(what) + ": image shapes differ");
}

} // namespace blursplat
