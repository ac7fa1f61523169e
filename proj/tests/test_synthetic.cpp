// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "test_support.hpp"

#include <blursplat/dataset.hpp>
#include <blursplat/synthetic.hpp>

#include <gtest/gtest.h>

using namespace blursplat;
using namespace blursplat::testing;

namespace {

SyntheticConfig smallConfig(std::uint64_t seed = 11) {
    SyntheticConfig c;
    c.gaussians     = 40;
    c.images        = 3;
    c.eval_views    = 2;
    c.width         = 40;
    c.height        = 32;
    c.focal         = 80.0;
    c.n_subframes   = 7;
    c.bezier_order  = 4;
    c.sparse_points = 30;
    c.seed          = seed;
    return c;
}

std::vector<fs::path> filesUnder(const fs::path &root) {
    std::vector<fs::path> out;
    for (const auto &e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            out.push_back(fs::relative(e.path(), root));
    std::sort(out.begin(), out.end());
    return out;
}

void expectSameTree(const fs::path &a, const fs::path &b) {
    const auto fa = filesUnder(a), fb = filesUnder(b);
    ASSERT_EQ(fa, fb);
    for (const auto &f : fa)
        EXPECT_EQ(readTextFile(a / f), readTextFile(b / f)) << f;
}

} // namespace

TEST(Synthetic, DegenerateConfigRejected) {
    auto c   = smallConfig();
    c.images = 0;
    EXPECT_THROW(generateSynthetic(c), InvalidArgument);
    c           = smallConfig();
    c.gaussians = 0;
    EXPECT_THROW(generateSynthetic(c), InvalidArgument);
}

TEST(Synthetic, ZeroSeverityMatchesSharpRenders) {
    auto c          = smallConfig();
    c.blur_severity = 0.0;
    const auto b    = generateSynthetic(c);
    for (std::size_t i = 0; i < b.observations.size(); ++i) {
        const auto sharp = gammaCorrect(render(b.gt_scene, b.gtReferencePose(i), b.camera, Vec3::Zero()));
        EXPECT_LE(maxAbsDiff(b.observations[i].image, sharp), 1.0 / 255.0 + 1e-9) << i;
    }
}

TEST(Synthetic, ZeroPerturbationReportsReferencePoseExactly) {
    auto c               = smallConfig();
    c.perturb_rot_deg    = 0.0;
    c.perturb_trans_frac = 0.0;
    const auto b         = generateSynthetic(c);
    for (std::size_t i = 0; i < b.observations.size(); ++i) {
        const RigidPose ref = b.gt_trajectories[i].poseAt(0.5);
        EXPECT_EQ(b.observations[i].initial_pose.rotation, ref.rotation);
        EXPECT_EQ(b.observations[i].initial_pose.translation, ref.translation);
        EXPECT_EQ(b.pose_perturbations[i].rotation_deg, 0.0);
        EXPECT_EQ(b.pose_perturbations[i].translation_frac, 0.0);
    }
}

TEST(Synthetic, PerturbationsStayWithinBounds) {
    const auto b   = generateSynthetic(smallConfig());
    const double d = std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < b.observations.size(); ++i) {
        const RigidPose ref = b.gtReferencePose(i), rep = b.observations[i].initial_pose;
        const double rot    = rotationAngle(rep.rotation, ref.rotation) / d;
        const double tr     = (rep.center() - ref.center()).norm() / b.config.scene_extent;
        EXPECT_LE(rot, b.config.perturb_rot_deg + 1e-9);
        EXPECT_LE(tr, b.config.perturb_trans_frac + 1e-9);
        EXPECT_NEAR(rot, b.pose_perturbations[i].rotation_deg, 1e-9);
        EXPECT_NEAR(tr, b.pose_perturbations[i].translation_frac, 1e-9);
    }
}

TEST(Synthetic, TrajectoriesStayWithinSeverityBounds) {
    const auto b   = generateSynthetic(smallConfig());
    const double d = std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < b.gt_trajectories.size(); ++i) {
        const RigidPose mid = b.gtReferencePose(i);
        for (double t = 0.0; t <= 1.0; t += 0.05) {
            const RigidPose p = b.gt_trajectories[i].poseAt(t);
            // relative motion expressed in the world frame: exp(delta) = P * mid^-1
            const Twist delta = logSE3(p * mid.inverse());
            EXPECT_LE(delta.phi.norm(), 2.0 * b.config.blur_rot_deg * d);
            EXPECT_LE(delta.rho.norm(), 2.0 * b.config.blur_trans_frac * b.config.scene_extent + 0.05);
        }
    }
}

TEST(Synthetic, ObservationsRegenerateFromGroundTruth) {
    const auto b = generateSynthetic(smallConfig());
    for (std::size_t i = 0; i < b.observations.size(); ++i) {
        // independent oracle: average of separate sharp renders, then gamma
        const auto times = alignmentTimes(b.gt_alignment[i]);
        LinearImage mean(b.camera.width, b.camera.height);
        for (double t : times) {
            const auto img = render(b.gt_scene, b.gt_trajectories[i].poseAt(t), b.camera, Vec3::Zero());
            for (std::size_t k = 0; k < img.size(); ++k)
                mean[k] += img[k] / static_cast<double>(times.size());
        }
        GammaImage expected(mean.width(), mean.height());
        for (std::size_t k = 0; k < mean.size(); ++k)
            expected[k] = std::min(1.0, std::pow(mean[k], 1.0 / 2.2));
        EXPECT_LE(maxAbsDiff(b.clean_images[i], expected), 1e-6) << i;
        EXPECT_LE(maxAbsDiff(b.observations[i].image, b.clean_images[i]), 1.0 / 510.0 + 1e-12) << i;
    }
}

TEST(Synthetic, SameSeedGivesByteIdenticalBundle) {
    TempDir a("syn"), b("syn");
    writeBundle(generateSynthetic(smallConfig(5)), a.path());
    writeBundle(generateSynthetic(smallConfig(5)), b.path());
    expectSameTree(a.path(), b.path());
}

TEST(Synthetic, DifferentSeedsDiffer) {
    const auto a = generateSynthetic(smallConfig(5)), b = generateSynthetic(smallConfig(6));
    EXPECT_GT(maxAbsDiff(a.observations[0].image, b.observations[0].image), 0.0);
}

TEST(Synthetic, WriteReadWriteIsByteIdentical) {
    TempDir a("syn"), b("syn");
    writeBundle(generateSynthetic(smallConfig()), a.path());
    writeBundle(loadBundle(a.path()), b.path());
    expectSameTree(a.path(), b.path());
}

TEST(Synthetic, DiskBundleLoadsLikeMemory) {
    TempDir dir("syn");
    const auto b = generateSynthetic(smallConfig());
    writeBundle(b, dir.path());
    const Dataset ds = loadDataset(dir.path());
    const Dataset mem = b.dataset();
    ASSERT_EQ(ds.observations.size(), mem.observations.size());
    EXPECT_EQ(ds.extent, mem.extent);
    for (std::size_t i = 0; i < ds.observations.size(); ++i) {
        EXPECT_EQ(ds.observations[i].id, mem.observations[i].id);
        EXPECT_EQ(maxAbsDiff(ds.observations[i].image, mem.observations[i].image), 0.0);
        EXPECT_EQ(ds.observations[i].initial_pose.rotation, mem.observations[i].initial_pose.rotation);
        EXPECT_EQ(ds.observations[i].initial_pose.translation, mem.observations[i].initial_pose.translation);
        EXPECT_EQ(ds.observations[i].camera.fx, b.camera.fx);
    }
    ASSERT_EQ(ds.points.size(), mem.points.size());
    for (std::size_t k = 0; k < ds.points.size(); ++k) {
        EXPECT_EQ(ds.points[k], mem.points[k]);
        EXPECT_EQ(ds.colors[k], mem.colors[k]);
    }
    const auto gt = loadBundleGroundTruth(dir.path());
    ASSERT_EQ(gt.trajectories.size(), b.gt_trajectories.size());
    for (std::size_t i = 0; i < gt.trajectories.size(); ++i)
        for (std::size_t k = 0; k < b.gt_trajectories[i].control().size(); ++k) {
            EXPECT_EQ(gt.trajectories[i].trajectory.control()[k].rho, b.gt_trajectories[i].control()[k].rho);
            EXPECT_EQ(gt.trajectories[i].trajectory.control()[k].phi, b.gt_trajectories[i].control()[k].phi);
        }
    ASSERT_EQ(gt.eval_views.size(), b.sharp_eval_views.size());
    for (std::size_t v = 0; v < gt.eval_views.size(); ++v)
        EXPECT_EQ(maxAbsDiff(gt.eval_views[v].image, b.sharp_eval_views[v].image), 0.0);
}

TEST(Synthetic, ProjectionConventionIsConsistent) {
    TempDir dir("syn");
    auto c       = smallConfig();
    c.width      = 64;
    c.height     = 64;
    c.focal      = 120.0;
    const auto b = generateSynthetic(c);
    writeBundle(b, dir.path());
    const auto gt = loadBundleGroundTruth(dir.path());
    const Camera &cam = b.camera;
    for (std::size_t v = 0; v < gt.eval_views.size(); ++v) {
        const RigidPose &pose = gt.eval_views[v].pose;
        for (std::size_t g = 0; g < 5; ++g) {
            // pinhole by hand: x_cam = R x + t, u = fx x/z + cx
            const Vec3 x  = b.gt_scene.gaussians[g].position;
            const Vec3 pc = b.sharp_eval_views[v].pose.rotation * x + b.sharp_eval_views[v].pose.translation;
            const Vec2 uv(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
            const auto proj = projectGaussian(b.gt_scene.gaussians[g], pose, cam);
            if (!proj)
                continue;
            EXPECT_LT((proj->mean2d - uv).norm(), 1e-9);

            // a tiny isolated splat lights up the pixel it projects to
            GaussianScene one;
            Gaussian3D dot = b.gt_scene.gaussians[g];
            dot.log_scale  = Vec3::Constant(std::log(1e-3));
            dot.color      = Vec3::Ones();
            dot.opacity_logit = 4.0;
            one.push(dot);
            const auto img = render(one, pose, cam, Vec3::Zero());
            int bx = -1, by = -1;
            double best = -1.0;
            for (int y = 0; y < cam.height; ++y)
                for (int xx = 0; xx < cam.width; ++xx)
                    if (img.at(xx, y, 0) > best) {
                        best = img.at(xx, y, 0);
                        bx   = xx;
                        by   = y;
                    }
            if (uv.x() > 0.5 && uv.x() < cam.width - 1.5 && uv.y() > 0.5 && uv.y() < cam.height - 1.5) {
                EXPECT_EQ(bx, static_cast<int>(std::lround(uv.x())));
                EXPECT_EQ(by, static_cast<int>(std::lround(uv.y())));
            }
        }
    }
}

TEST(Synthetic, EvalViewsAreSharpRenders) {
    const auto b = generateSynthetic(smallConfig());
    for (const auto &v : b.sharp_eval_views) {
        const auto sharp = gammaCorrect(render(b.gt_scene, v.pose, b.camera, Vec3::Zero()));
        EXPECT_LE(maxAbsDiff(v.image, sharp), 1.0 / 510.0 + 1e-12);
    }
}

TEST(Synthetic, ConfigRoundtripsThroughKeyValues) {
    auto c          = smallConfig(99);
    c.blur_severity = 0.37;
    const auto back = SyntheticConfig::fromKeyValues(KeyValues::parse(c.toKeyValues().str(), "cfg"));
    EXPECT_EQ(back.toKeyValues().str(), c.toKeyValues().str());
}
