// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "test_support.hpp"

#include <blursplat/losses.hpp>

#include <gtest/gtest.h>

using namespace blursplat;
using namespace blursplat::testing;

TEST(RgbLoss, IdenticalImagesGiveZero) {
    GammaImage a(4, 3, 0.4);
    EXPECT_EQ(rgbLoss(a, a), 0.0);
}

TEST(RgbLoss, ConstantOffset) {
    GammaImage a(5, 5, 0.2), b(5, 5, 0.7);
    EXPECT_NEAR(rgbLoss(a, b), 0.5, 1e-15);
    EXPECT_NEAR(rgbLoss(b, a), 0.5, 1e-15);
}

TEST(RgbLoss, SinglePixelDifference) {
    GammaImage a(2, 2, 0.0), b(2, 2, 0.0);
    a.at(1, 0, 1) = 0.6;
    EXPECT_NEAR(rgbLoss(a, b), 0.6 / 12.0, 1e-15);
}

TEST(RgbLoss, GradientIsSignOverCount) {
    GammaImage a(2, 1, 0.5), b(2, 1, 0.5);
    a.at(0, 0, 0) = 0.9;
    a.at(1, 0, 2) = 0.1;
    const auto g  = rgbLossGradient(a, b);
    EXPECT_EQ(g.at(0, 0, 0), 1.0 / 6.0);
    EXPECT_EQ(g.at(1, 0, 2), -1.0 / 6.0);
    EXPECT_EQ(g.at(0, 0, 1), 0.0);
}

TEST(RgbLoss, RejectsShapeMismatch) {
    EXPECT_THROW(rgbLoss(GammaImage(2, 2), GammaImage(2, 3)), InvalidArgument);
}

TEST(Smoothness, IdenticalFramesGiveZero) {
    std::vector<LinearImage> frames(5, LinearImage(3, 3, 0.3));
    EXPECT_EQ(smoothnessLoss(frames), 0.0);
    for (const auto &g : smoothnessLossGradient(frames))
        for (std::size_t k = 0; k < g.size(); ++k)
            EXPECT_EQ(g[k], 0.0);
}

TEST(Smoothness, TwoFramesHandComputed) {
    // one pixel differs by 0.3 in red and 0.4 in green: norm 0.5, N = 2
    std::vector<LinearImage> frames(2, LinearImage(2, 2, 0.1));
    frames[1].at(0, 1, 0) += 0.3;
    frames[1].at(0, 1, 1) += 0.4;
    EXPECT_NEAR(smoothnessLoss(frames), 0.25, 1e-12);
}

TEST(Smoothness, LinearRampOfFrames) {
    // N frames each brighter by d everywhere: (N-1) * d * sqrt(3 W H) / N
    const int n = 7, w = 4, h = 3;
    const double d = 0.05;
    std::vector<LinearImage> frames;
    for (int i = 0; i < n; ++i)
        frames.emplace_back(w, h, 0.1 + d * i);
    EXPECT_NEAR(smoothnessLoss(frames), (n - 1) * d * std::sqrt(3.0 * w * h) / n, 1e-12);
}

TEST(Smoothness, InvariantToReversal) {
    Rng rng(81);
    std::vector<LinearImage> frames;
    for (int i = 0; i < 6; ++i)
        frames.push_back(randomLinearImage(rng, 5, 4));
    const double forward = smoothnessLoss(frames);
    std::reverse(frames.begin(), frames.end());
    EXPECT_NEAR(smoothnessLoss(frames), forward, 1e-12);
}

TEST(Smoothness, GradientMatchesFiniteDifferences) {
    Rng rng(82);
    std::vector<LinearImage> frames;
    for (int i = 0; i < 4; ++i)
        frames.push_back(randomLinearImage(rng, 3, 2));
    const auto grads = smoothnessLossGradient(frames, 2.5);
    for (std::size_t i = 0; i < frames.size(); ++i)
        for (std::size_t k = 0; k < frames[i].size(); ++k) {
            const double saved = frames[i][k], h = 1e-6;
            frames[i][k]       = saved + h;
            const double up    = smoothnessLoss(frames);
            frames[i][k]       = saved - h;
            const double down  = smoothnessLoss(frames);
            frames[i][k]       = saved;
            EXPECT_NEAR(grads[i][k], 2.5 * (up - down) / (2 * h), 1e-7);
        }
}

TEST(Smoothness, RejectsBadInput) {
    std::vector<LinearImage> one(1, LinearImage(2, 2));
    EXPECT_THROW(smoothnessLoss(one), InvalidArgument);
    std::vector<LinearImage> mixed{LinearImage(2, 2), LinearImage(2, 3)};
    EXPECT_THROW(smoothnessLoss(mixed), InvalidArgument);
}

TEST(LambdaSchedule, EndpointsAndMidpoint) {
    EXPECT_DOUBLE_EQ(lambdaSchedule(0, 1000), 0.05);
    EXPECT_DOUBLE_EQ(lambdaSchedule(500, 1000), 0.03);
    EXPECT_DOUBLE_EQ(lambdaSchedule(1000, 1000), 0.01);
    EXPECT_DOUBLE_EQ(lambdaSchedule(250, 1000, 1.0, 0.0), 0.75);
}

TEST(LambdaSchedule, MonotoneNonIncreasing) {
    double previous = 1.0;
    for (long i = 0; i <= 777; ++i) {
        const double l = lambdaSchedule(i, 777);
        EXPECT_LE(l, previous);
        previous = l;
    }
}

TEST(LambdaSchedule, RejectsOutOfRange) {
    EXPECT_THROW(lambdaSchedule(-1, 10), InvalidArgument);
    EXPECT_THROW(lambdaSchedule(11, 10), InvalidArgument);
    EXPECT_THROW(lambdaSchedule(0, 0), InvalidArgument);
}

TEST(CombineLosses, WeightedSum) {
    const auto r = combineLosses(0.2, 3.0, 0.05);
    EXPECT_DOUBLE_EQ(r.total, 0.35);
    EXPECT_EQ(r.rgb_loss, 0.2);
    EXPECT_EQ(r.smooth_loss, 3.0);
    EXPECT_EQ(r.lambda, 0.05);
}
