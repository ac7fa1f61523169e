// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "test_support.hpp"

#include <blursplat/io.hpp>

#include <gtest/gtest.h>

using namespace blursplat;
using namespace blursplat::testing;

namespace {

GaussianScene smallScene(Rng &rng, int n) {
    GaussianScene s;
    for (int i = 0; i < n; ++i) {
        Gaussian3D g;
        g.position      = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
        g.log_scale     = Vec3(uniform(rng, -4, -1), uniform(rng, -4, -1), uniform(rng, -4, -1));
        g.rotation_q    = randomQuaternion(rng);
        g.color         = Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
        g.opacity_logit = uniform(rng, -3, 3);
        s.push(g);
    }
    return s;
}

ColmapModel threeImageModel() {
    Rng rng(17);
    ColmapModel m;
    m.cameras.push_back({1, "PINHOLE", Camera{120.5, 118.25, 31.5, 24.0, 64, 48}});
    m.cameras.push_back({2, "SIMPLE_PINHOLE", Camera{100, 100, 50, 50, 100, 100}});
    for (int i = 0; i < 3; ++i) {
        const RigidPose pose = expSE3(randomTwist(rng, 3.0));
        m.images.push_back(makeColmapImage(i + 1, pose, i == 2 ? 2 : 1, "img_" + std::to_string(i) + ".png"));
    }
    for (int i = 0; i < 5; ++i)
        m.points.push_back({i + 1, Vec3(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)),
                            {i * 40, 255 - i * 30, 7}, uniform(rng, 0, 2)});
    return m;
}

} // namespace

// ---------------------------------------------------------------------------
// images

TEST(ImageIo, ByteExtremesMapToUnitRange) {
    TempDir dir("img");
    GammaImage img(3, 2, 0.0);
    img.at(1, 0, 0) = 1.0;
    img.at(2, 1, 2) = 1.0;
    writeImage(img, dir / "x.png");
    const auto back = readImage(dir / "x.png");
    ASSERT_EQ(back.width(), 3);
    ASSERT_EQ(back.height(), 2);
    EXPECT_EQ(back.at(1, 0, 0), 1.0);
    EXPECT_EQ(back.at(2, 1, 2), 1.0);
    EXPECT_EQ(back.at(0, 0, 0), 0.0);
    EXPECT_EQ(back.at(2, 1, 1), 0.0);
}

TEST(ImageIo, RandomRoundtripWithinHalfStep) {
    TempDir dir("img");
    Rng rng(3);
    GammaImage img(37, 23);
    for (std::size_t k = 0; k < img.size(); ++k)
        img[k] = uniform(rng, 0.0, 1.0);
    writeImage(img, dir / "r.png");
    const auto back = readImage(dir / "r.png");
    EXPECT_LE(maxAbsDiff(img, back), 1.0 / 510.0 + 1e-12);
}

TEST(ImageIo, QuantizeIsIdempotentThroughFiles) {
    TempDir dir("img");
    Rng rng(4);
    GammaImage img(8, 8);
    for (std::size_t k = 0; k < img.size(); ++k)
        img[k] = uniform(rng, 0.0, 1.0);
    const auto q = quantizeImage(img);
    writeImage(q, dir / "q.png");
    EXPECT_EQ(maxAbsDiff(readImage(dir / "q.png"), q), 0.0);
}

TEST(ImageIo, MissingFileIsIoError) {
    TempDir dir("img");
    EXPECT_THROW(readImage(dir / "nope.png"), IoError);
}

TEST(ImageIo, NonPngIsRejected) {
    TempDir dir("img");
    writeTextFile(dir / "fake.png", "definitely not a png file");
    EXPECT_THROW(readImage(dir / "fake.png"), UnsupportedFormat);
}

// ---------------------------------------------------------------------------
// COLMAP text

TEST(Colmap, SimplePinholeCamera) {
    const auto cams = parseColmapCameras("# comment\n1 SIMPLE_PINHOLE 100 100 100 50 50\n", "cameras.txt");
    ASSERT_EQ(cams.size(), 1u);
    const Camera &c = cams[0].camera;
    EXPECT_EQ(c.fx, 100.0);
    EXPECT_EQ(c.fy, 100.0);
    EXPECT_EQ(c.cx, 50.0);
    EXPECT_EQ(c.cy, 50.0);
    EXPECT_EQ(c.width, 100);
    EXPECT_EQ(c.height, 100);
}

TEST(Colmap, PinholeCamera) {
    const auto cams = parseColmapCameras("3 PINHOLE 640 480 500 510 320 240\n", "cameras.txt");
    ASSERT_EQ(cams.size(), 1u);
    EXPECT_EQ(cams[0].id, 3);
    EXPECT_EQ(cams[0].camera.fx, 500.0);
    EXPECT_EQ(cams[0].camera.fy, 510.0);
    EXPECT_EQ(cams[0].camera.cx, 320.0);
    EXPECT_EQ(cams[0].camera.cy, 240.0);
}

TEST(Colmap, IdentityPose) {
    const auto imgs = parseColmapImages("1 1 0 0 0 0 0 0 1 a.png\n\n", "images.txt");
    ASSERT_EQ(imgs.size(), 1u);
    const RigidPose p = imgs[0].pose();
    EXPECT_EQ((p.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(p.translation.norm(), 0.0);
    EXPECT_EQ(imgs[0].name, "a.png");
}

TEST(Colmap, ImageRecordsSkipKeypointLines) {
    const std::string text = "# header\n"
                             "1 1 0 0 0 1 2 3 1 a.png\n"
                             "10.5 20.5 -1 11 12 4\n"
                             "2 0.7071067811865476 0.7071067811865476 0 0 0 0 1 1 b.png\n"
                             "\n";
    const auto imgs = parseColmapImages(text, "images.txt");
    ASSERT_EQ(imgs.size(), 2u);
    EXPECT_EQ(imgs[0].tvec, Vec3(1, 2, 3));
    EXPECT_EQ(imgs[1].name, "b.png");
    // 90 degrees about x: camera y axis becomes world z
    const Mat3 r = imgs[1].pose().rotation;
    EXPECT_NEAR(r(1, 2), -1.0, 1e-12);
    EXPECT_NEAR(r(2, 1), 1.0, 1e-12);
}

TEST(Colmap, MalformedLineReportsLineNumber) {
    const std::string text = "# c\n# c\n1 PINHOLE 10 10 5 5 5 5\n2 PINHOLE 10 ten 5 5 5 5\n";
    try {
        parseColmapCameras(text, "cameras.txt");
        FAIL() << "expected ParseError";
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 4u);
    }
    try {
        parseColmapImages("1 1 0 0 0 0 0\n", "images.txt");
        FAIL() << "expected ParseError";
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 1u);
    }
    try {
        parseColmapPoints("# x\n1 0 0 0 255 0 0 0.5\n2 0 0 0 256 0 0 0.5\n", "points3D.txt");
        FAIL() << "expected ParseError";
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Colmap, UnsupportedCameraModel) {
    EXPECT_THROW(parseColmapCameras("1 OPENCV 10 10 5 5 5 5 0 0 0 0\n", "cameras.txt"), UnsupportedFormat);
}

TEST(Colmap, UnknownCameraReferenceIsRejected) {
    TempDir dir("colmap");
    auto m               = threeImageModel();
    m.images[0].cameraId = 9;
    writeColmapText(m, dir.path());
    EXPECT_THROW(loadColmapText(dir.path()), InvalidInput);
}

TEST(Colmap, ThreeImageFixtureRoundtripsBitExactly) {
    TempDir dir("colmap");
    const auto m = threeImageModel();
    writeColmapText(m, dir.path());
    const auto back = loadColmapText(dir.path());
    ASSERT_EQ(back.images.size(), 3u);
    ASSERT_EQ(back.cameras.size(), 2u);
    ASSERT_EQ(back.points.size(), 5u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.images[i].qvec, m.images[i].qvec);
        EXPECT_EQ(back.images[i].tvec, m.images[i].tvec);
        EXPECT_EQ(back.images[i].cameraId, m.images[i].cameraId);
        EXPECT_EQ(back.images[i].name, m.images[i].name);
        const RigidPose a = back.images[i].pose(), b = m.images[i].pose();
        EXPECT_EQ(a.rotation, b.rotation);
        EXPECT_EQ(a.translation, b.translation);
    }
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_EQ(back.cameras[c].model, m.cameras[c].model);
        EXPECT_EQ(back.cameras[c].camera.fx, m.cameras[c].camera.fx);
        EXPECT_EQ(back.cameras[c].camera.fy, m.cameras[c].camera.fy);
        EXPECT_EQ(back.cameras[c].camera.cx, m.cameras[c].camera.cx);
        EXPECT_EQ(back.cameras[c].camera.cy, m.cameras[c].camera.cy);
    }
    for (std::size_t p = 0; p < 5; ++p) {
        EXPECT_EQ(back.points[p].position, m.points[p].position);
        EXPECT_EQ(back.points[p].rgb, m.points[p].rgb);
        EXPECT_EQ(back.points[p].error, m.points[p].error);
    }
}

TEST(Colmap, ReEmissionIsByteIdentical) {
    TempDir a("colmap"), b("colmap");
    writeColmapText(threeImageModel(), a.path());
    writeColmapText(loadColmapText(a.path()), b.path());
    for (const char *f : {"cameras.txt", "images.txt", "points3D.txt"})
        EXPECT_EQ(readTextFile(a / f), readTextFile(b / f)) << f;
}

TEST(Colmap, QuaternionOfRotationMatchesAxisAngle) {
    // rotation by angle a about unit axis n has quaternion (cos a/2, sin a/2 n)
    const Vec3 n   = Vec3(1, 2, 2) / 3.0;
    const double a = 0.8;
    const Vec4 q   = rotationToQuaternion(Eigen::AngleAxisd(a, n).toRotationMatrix());
    EXPECT_NEAR(q(0), std::cos(a / 2), 1e-15);
    EXPECT_NEAR(q(1), std::sin(a / 2) * n.x(), 1e-15);
    EXPECT_NEAR(q(2), std::sin(a / 2) * n.y(), 1e-15);
    EXPECT_NEAR(q(3), std::sin(a / 2) * n.z(), 1e-15);
}

// ---------------------------------------------------------------------------
// key-value documents

TEST(KeyValueDoc, RoundtripAndReEmission) {
    KeyValues kv;
    kv.set("alpha", 0.1);
    kv.set("count", 42L);
    kv.set("flag", true);
    kv.set("name", std::string("two words"));
    const std::string text = kv.str("# header\n");
    const auto back        = KeyValues::parse(text, "doc");
    EXPECT_EQ(back.getDouble("alpha"), 0.1);
    EXPECT_EQ(back.getInteger("count"), 42);
    EXPECT_TRUE(back.getBool("flag"));
    EXPECT_EQ(back.get("name"), "two words");
    EXPECT_EQ(back.str("# header\n"), text);
}

TEST(KeyValueDoc, ErrorsCarryLines) {
    try {
        KeyValues::parse("a = 1\n# c\nbroken line\n", "doc");
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 3u);
    }
    const auto kv = KeyValues::parse("a = 1\nb = x\n", "doc");
    try {
        kv.getDouble("b");
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(kv.get("missing"), InvalidInput);
}

TEST(KeyValueDoc, DoublesSurviveExactly) {
    Rng rng(5);
    KeyValues kv;
    std::vector<double> values;
    for (int i = 0; i < 200; ++i) {
        values.push_back(std::ldexp(uniform(rng, -1, 1), static_cast<int>(uniform(rng, -40, 40))));
        kv.set("v" + std::to_string(i), values.back());
    }
    const auto back = KeyValues::parse(kv.str(), "doc");
    for (int i = 0; i < 200; ++i)
        EXPECT_EQ(back.getDouble("v" + std::to_string(i)), values[i]);
}

// ---------------------------------------------------------------------------
// scene and trajectory files

TEST(SceneFile, RoundtripAtStoragePrecision) {
    Rng rng(6);
    const auto scene = smallScene(rng, 25);
    const auto back  = decodeScenePly(encodeScenePly(scene, 1234), "scene.ply");
    EXPECT_EQ(back.iteration, 1234);
    ASSERT_EQ(back.scene.size(), scene.size());
    EXPECT_TRUE(back.scene.consistent());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto a = packGaussian(scene.gaussians[i]), b = packGaussian(back.scene.gaussians[i]);
        for (std::size_t k = 0; k < a.size(); ++k)
            EXPECT_EQ(b[k], static_cast<double>(static_cast<float>(a[k]))) << i << "," << k;
    }
}

TEST(SceneFile, ReEmissionIsByteIdentical) {
    Rng rng(7);
    const std::string first = encodeScenePly(smallScene(rng, 10), 5);
    EXPECT_EQ(encodeScenePly(decodeScenePly(first, "a").scene, 5), first);
}

TEST(SceneFile, TruncatedFileIsRejected) {
    Rng rng(8);
    std::string bytes = encodeScenePly(smallScene(rng, 4), 0);
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(decodeScenePly(bytes, "t"), IoError);
    EXPECT_THROW(decodeScenePly("not a ply\n", "t"), UnsupportedFormat);
}

TEST(TrajectoryFile, RoundtripIsExact) {
    Rng rng(9);
    std::vector<Twist> ctrl;
    for (int k = 0; k < 10; ++k)
        ctrl.push_back(randomTwist(rng, 2.0));
    const BezierTrajectory traj(ctrl);
    AlignmentParams params = AlignmentParams::evenlySpaced(21);
    for (auto &r : params.raw)
        r += uniform(rng, -0.3, 0.3);
    const std::string bytes = encodeTrajectory(traj, params);
    const auto back         = decodeTrajectory(bytes, "t.bin");
    ASSERT_EQ(back.trajectory.control().size(), 10u);
    for (std::size_t k = 0; k < 10; ++k) {
        EXPECT_EQ(back.trajectory.control()[k].rho, ctrl[k].rho);
        EXPECT_EQ(back.trajectory.control()[k].phi, ctrl[k].phi);
    }
    EXPECT_EQ(back.alignment.raw, params.raw);
    EXPECT_EQ(encodeTrajectory(back.trajectory, back.alignment), bytes);
}

TEST(TrajectoryFile, HeaderIsChecked) {
    const auto bytes = encodeTrajectory(BezierTrajectory::constant(Twist{}, 3), AlignmentParams::evenlySpaced(4));
    std::string bad  = bytes;
    bad[0]           = 'X';
    EXPECT_THROW(decodeTrajectory(bad, "t"), UnsupportedFormat);
    EXPECT_THROW(decodeTrajectory(bytes.substr(0, bytes.size() - 8), "t"), IoError);
    EXPECT_THROW(decodeTrajectory(bytes + "x", "t"), IoError);
}

TEST(PoseFile, RoundtripWithinRounding) {
    Rng rng(10);
    std::string text = "# poses\n";
    std::vector<RigidPose> poses;
    for (int i = 0; i < 5; ++i) {
        poses.push_back(expSE3(randomTwist(rng, 3.0)));
        text += formatPose(poses.back());
    }
    const auto back = parsePoses(text, "poses.txt");
    ASSERT_EQ(back.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_LT((back[i].rotation - poses[i].rotation).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_EQ(back[i].translation, poses[i].translation);
    }
    EXPECT_THROW(parsePoses("1 0 0 0 1 2\n", "p"), ParseError);
}
