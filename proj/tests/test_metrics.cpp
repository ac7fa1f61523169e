// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "test_support.hpp"

#include <blursplat/evaluation.hpp>
#include <blursplat/metrics.hpp>
#include <blursplat/synthetic.hpp>

#include <gtest/gtest.h>

using namespace blursplat;
using namespace blursplat::testing;

namespace {

SyntheticBundle alignmentBundle() {
    SyntheticConfig c;
    c.gaussians     = 60;
    c.images        = 2;
    c.eval_views    = 2;
    c.width         = 64;
    c.height        = 64;
    c.focal         = 120.0;
    c.n_subframes   = 3;
    c.bezier_order  = 2;
    c.sparse_points = 10;
    c.seed          = 31;
    return generateSynthetic(c);
}

} // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
    GammaImage a(16, 16, 0.3);
    EXPECT_EQ(psnr(a, a), 120.0);
}

TEST(Psnr, UniformOffsetOfOneTenth) {
    GammaImage a(16, 12, 0.2), b(16, 12, 0.3);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
}

TEST(Psnr, MatchesDirectFormulaAndIsSymmetric) {
    Rng rng(1);
    GammaImage a(23, 17), b(23, 17);
    for (std::size_t k = 0; k < a.size(); ++k) {
        a[k] = uniform(rng, 0, 1);
        b[k] = uniform(rng, 0, 1);
    }
    double se = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        se += (a[k] - b[k]) * (a[k] - b[k]);
    EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(se / static_cast<double>(a.size())), 1e-9);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, ShapeMismatchRejected) {
    EXPECT_THROW(psnr(GammaImage(4, 4), GammaImage(4, 5)), InvalidArgument);
}

TEST(Ssim, IdenticalImagesGiveOne) {
    Rng rng(2);
    GammaImage a(20, 15);
    for (std::size_t k = 0; k < a.size(); ++k)
        a[k] = uniform(rng, 0, 1);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, EqualConstantsGiveOne) {
    GammaImage a(12, 12, 0.5), b(12, 12, 1.0 - 0.5);
    EXPECT_NEAR(ssim(a, b), 1.0, 1e-12);
}

TEST(Ssim, MatchesReferenceFixture) {
    // reference: skimage.metrics.structural_similarity(a, b, gaussian_weights=True,
    // sigma=1.5, use_sample_covariance=False, data_range=1.0, channel_axis=2)
    const int w = 24, h = 20;
    GammaImage a(w, h), b(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                a.at(x, y, c) = 0.5 + 0.4 * std::sin(0.3 * x + 0.2 * y + c);
                b.at(x, y, c) = std::clamp(a.at(x, y, c) + 0.15 * std::cos(0.7 * x - 0.4 * y + 2 * c), 0.0, 1.0);
            }
    EXPECT_NEAR(ssim(a, b), 0.7749694145596994, 1e-4);
}

TEST(Ssim, SmallImagesRejected) {
    EXPECT_THROW(ssim(GammaImage(10, 30), GammaImage(10, 30)), InvalidArgument);
    EXPECT_THROW(ssim(GammaImage(12, 12), GammaImage(12, 13)), InvalidArgument);
}

TEST(PoseErrorMeasure, KnownOffsets) {
    const RigidPose a{Mat3::Identity(), Vec3(0, 0, 3)};
    RigidPose b;
    b.rotation    = Eigen::AngleAxisd(2.0 * std::numbers::pi / 180.0, Vec3::UnitY()).toRotationMatrix();
    b.translation = -(b.rotation * (a.center() + Vec3(0.3, 0.0, 0.4)));
    const auto e  = poseError(b, a);
    EXPECT_NEAR(e.rotation_deg, 2.0, 1e-12);
    EXPECT_NEAR(e.translation, 0.5, 1e-12);
}

TEST(PoseErrorMeasure, MidExposureUsesMiddleSubframeTime) {
    std::vector<Twist> ctrl;
    for (int k = 0; k < 4; ++k) {
        Twist t;
        t.rho = Vec3(0.1 * k, 0, 3);
        ctrl.push_back(t);
    }
    const BezierTrajectory traj(ctrl);
    const auto even = AlignmentParams::evenlySpaced(5);
    const RigidPose mid = midExposurePose(traj, even), ref = traj.poseAt(0.5);
    EXPECT_LT((mid.translation - ref.translation).norm(), 1e-15);
    const auto pairs = AlignmentParams::evenlySpaced(4);
    const auto times = alignmentTimes(pairs);
    const RigidPose m4 = midExposurePose(traj, pairs);
    EXPECT_LT((m4.translation - traj.poseAt(0.5 * (times[1] + times[2])).translation).norm(), 1e-15);
}

TEST(AlignTestPose, StaysPutAtTheOptimum) {
    const auto b     = alignmentBundle();
    const auto &view = b.sharp_eval_views[0];
    const auto hash0 = sceneHash(b.gt_scene);
    // unquantized target so the ground-truth pose is the exact minimizer
    const auto target = gammaCorrect(render(b.gt_scene, view.pose, b.camera, Vec3::Zero()));
    AlignOptions opts;
    opts.iters     = 100;
    const auto res = alignTestPose(b.gt_scene, b.camera, target, view.pose, opts);
    EXPECT_LE(rotationAngle(res.pose.rotation, view.pose.rotation), 1e-4);
    EXPECT_LE((res.pose.center() - view.pose.center()).norm() / b.config.scene_extent, 1e-4);
    EXPECT_LE(res.loss, res.initial_loss);
    EXPECT_EQ(sceneHash(b.gt_scene), hash0);
}

TEST(AlignTestPose, RecoversOneDegreePerturbation) {
    const auto b     = alignmentBundle();
    const auto hash0 = sceneHash(b.gt_scene);
    Rng rng(6);
    for (const auto &view : b.sharp_eval_views) {
        const Vec3 axis = randomUnit(rng);
        RigidPose init  = view.pose;
        // rotate about the camera center
        init.rotation    = expSO3(axis * (std::numbers::pi / 180.0)) * view.pose.rotation;
        init.translation = -(init.rotation * view.pose.center());
        ASSERT_NEAR(rotationAngle(init.rotation, view.pose.rotation) * 180.0 / std::numbers::pi, 1.0, 1e-9);
        AlignOptions opts;
        opts.iters     = 500;
        const auto res = alignTestPose(b.gt_scene, b.camera, view.image, init, opts);
        const double deg = rotationAngle(res.pose.rotation, view.pose.rotation) * 180.0 / std::numbers::pi;
        EXPECT_LT(deg, 0.1);
        EXPECT_LT(res.loss, res.initial_loss);
        EXPECT_EQ(res.iterations, 500);
    }
    EXPECT_EQ(sceneHash(b.gt_scene), hash0);
}

TEST(AlignTestPose, NonFiniteSceneIsReported) {
    auto b = alignmentBundle();
    for (auto &g : b.gt_scene.gaussians)
        g.color.x() = std::numeric_limits<double>::quiet_NaN();
    const auto &view = b.sharp_eval_views[0];
    EXPECT_THROW(alignTestPose(b.gt_scene, b.camera, view.image, view.pose), NumericalError);
}

TEST(Evaluation, MeansAreArithmeticMeans) {
    const auto b = alignmentBundle();
    AlignOptions opts;
    opts.iters     = 5;
    const auto rep = evaluateViews(b.gt_scene, b.camera, b.sharp_eval_views, opts);
    ASSERT_EQ(rep.views.size(), 2u);
    EXPECT_NEAR(rep.mean_psnr, 0.5 * (rep.views[0].psnr + rep.views[1].psnr), 1e-12);
    EXPECT_NEAR(rep.mean_ssim, 0.5 * (rep.views[0].ssim + rep.views[1].ssim), 1e-12);
    EXPECT_EQ(rep.align_iters, 5);
    // ground-truth scene at ground-truth poses: only 8-bit quantization remains
    EXPECT_GT(rep.mean_psnr, 50.0);
    EXPECT_GT(rep.mean_ssim, 0.999);
}

TEST(Evaluation, UntrainedSceneGivesLowScores) {
    const auto b = alignmentBundle();
    GaussianScene poor = initScene(b.points, b.colors);
    AlignOptions opts;
    opts.iters     = 3;
    const auto rep = evaluateViews(poor, b.camera, b.sharp_eval_views, opts);
    EXPECT_LT(rep.mean_psnr, 25.0);
    EXPECT_TRUE(std::isfinite(rep.mean_psnr));
}

TEST(Evaluation, ReportFilesAreWritten) {
    TempDir dir("eval");
    const auto b = alignmentBundle();
    AlignOptions opts;
    opts.iters = 2;
    auto rep   = evaluateViews(b.gt_scene, b.camera, b.sharp_eval_views, opts);
    std::vector<CameraTrack> tracks;
    std::vector<TrajectoryRecord> truth;
    for (std::size_t i = 0; i < b.gt_trajectories.size(); ++i) {
        CameraTrack t;
        t.trajectory = b.gt_trajectories[i];
        t.alignment  = b.gt_alignment[i];
        tracks.push_back(t);
        truth.push_back({b.gt_trajectories[i], b.gt_alignment[i]});
    }
    addPoseErrors(rep, tracks, truth, 1.0);
    EXPECT_EQ(rep.max_rotation_deg, 0.0);
    EXPECT_EQ(rep.max_translation, 0.0);
    writeReport(rep, dir / "report.txt");
    const auto kv = KeyValues::load(dir / "report.txt");
    EXPECT_EQ(kv.getInteger("views"), 2);
    EXPECT_EQ(kv.getDouble("mean_psnr_db"), rep.mean_psnr);
    const auto csv = readTextFile(dir / "report.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_NE(readTextFile(dir / "report.txt").find("LPIPS is not computed"), std::string::npos);
}
