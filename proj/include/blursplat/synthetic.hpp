// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic motion-blur datasets with full ground truth.
//
#pragma once

#include "blur.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "lie.hpp"
#include "rasterizer.hpp"
#include "scene.hpp"

#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace blursplat {

struct SyntheticConfig {
    int gaussians      = 300;
    int images         = 20;
    int eval_views     = 5;
    int width          = 128;
    int height         = 128;
    double focal       = 250.0;
    double radius      = 3.0;  ///< camera distance from the origin
    double arc_degrees = 80.0; ///< total yaw span of the camera arc
    double scene_extent = 1.0; ///< side of the cube holding the Gaussians
    double scale_min   = 0.02; ///< Gaussian scales, fraction of the extent
    double scale_max   = 0.08;
    /// 0 gives zero-motion trajectories; 1 the full rotation/translation span.
    double blur_severity    = 1.0;
    double blur_rot_deg     = 2.0;
    double blur_trans_frac  = 0.02;
    int n_subframes         = 21;
    int bezier_order        = 9;
    double alignment_jitter = 0.0; ///< std-dev of the raw alignment values
    double perturb_rot_deg    = 1.0;  ///< upper bound of the reported-pose rotation error
    double perturb_trans_frac = 0.01; ///< upper bound of the reported-pose center error
    double reference_time     = 0.5;  ///< trajectory time the reported poses refer to
    int sparse_points         = 300;
    double point_noise        = 0.01; ///< std-dev of sparse point positions, fraction of the extent
    double color_noise        = 0.05;
    std::uint64_t seed        = 1;

    void validate() const {
        if (gaussians <= 0 || images <= 0 || eval_views < 0 || width <= 0 || height <= 0)
            throw InvalidArgument("synthetic config: counts and image size must be positive");
        if (!(focal > 0 && radius > 0 && scene_extent > 0 && scale_min > 0 && scale_max >= scale_min))
            throw InvalidArgument("synthetic config: geometry must be positive");
        if (n_subframes < 2 || bezier_order < 1)
            throw InvalidArgument("synthetic config: need n_subframes >= 2 and bezier_order >= 1");
        if (blur_severity < 0 || perturb_rot_deg < 0 || perturb_trans_frac < 0 || alignment_jitter < 0 ||
            point_noise < 0 || color_noise < 0)
            throw InvalidArgument("synthetic config: magnitudes must be non-negative");
        if (!(reference_time >= 0 && reference_time <= 1))
            throw InvalidArgument("synthetic config: reference_time must lie in [0, 1]");
        if (sparse_points <= 0)
            throw InvalidArgument("synthetic config: need at least one sparse point");
    }

    KeyValues toKeyValues() const {
        KeyValues kv;
        kv.set("gaussians", gaussians);
        kv.set("images", images);
        kv.set("eval_views", eval_views);
        kv.set("width", width);
        kv.set("height", height);
        kv.set("focal", focal);
        kv.set("radius", radius);
        kv.set("arc_degrees", arc_degrees);
        kv.set("scene_extent", scene_extent);
        kv.set("scale_min", scale_min);
        kv.set("scale_max", scale_max);
        kv.set("blur_severity", blur_severity);
        kv.set("blur_rot_deg", blur_rot_deg);
        kv.set("blur_trans_frac", blur_trans_frac);
        kv.set("n_subframes", n_subframes);
        kv.set("bezier_order", bezier_order);
        kv.set("alignment_jitter", alignment_jitter);
        kv.set("perturb_rot_deg", perturb_rot_deg);
        kv.set("perturb_trans_frac", perturb_trans_frac);
        kv.set("reference_time", reference_time);
        kv.set("sparse_points", sparse_points);
        kv.set("point_noise", point_noise);
        kv.set("color_noise", color_noise);
        kv.set("seed", std::to_string(seed));
        return kv;
    }

    static SyntheticConfig fromKeyValues(const KeyValues &kv) {
        SyntheticConfig c;
        auto i = [&](const char *k, int &v) { if (kv.has(k)) v = static_cast<int>(kv.getInteger(k)); };
        auto d = [&](const char *k, double &v) { if (kv.has(k)) v = kv.getDouble(k); };
        i("gaussians", c.gaussians);
        i("images", c.images);
        i("eval_views", c.eval_views);
        i("width", c.width);
        i("height", c.height);
        d("focal", c.focal);
        d("radius", c.radius);
        d("arc_degrees", c.arc_degrees);
        d("scene_extent", c.scene_extent);
        d("scale_min", c.scale_min);
        d("scale_max", c.scale_max);
        d("blur_severity", c.blur_severity);
        d("blur_rot_deg", c.blur_rot_deg);
        d("blur_trans_frac", c.blur_trans_frac);
        i("n_subframes", c.n_subframes);
        i("bezier_order", c.bezier_order);
        d("alignment_jitter", c.alignment_jitter);
        d("perturb_rot_deg", c.perturb_rot_deg);
        d("perturb_trans_frac", c.perturb_trans_frac);
        d("reference_time", c.reference_time);
        i("sparse_points", c.sparse_points);
        d("point_noise", c.point_noise);
        d("color_noise", c.color_noise);
        if (kv.has("seed"))
            c.seed = static_cast<std::uint64_t>(kv.getInteger("seed"));
        return c;
    }
};

struct PosePerturbation {
    double rotation_deg = 0.0;
    double translation_frac = 0.0; ///< camera-center offset over the scene extent
};

struct SharpView {
    RigidPose pose;
    GammaImage image;
};

struct SyntheticBundle {
    SyntheticConfig config;
    Camera camera;
    std::vector<BlurObservation> observations; ///< 8-bit quantized images
    std::vector<GammaImage> clean_images;      ///< the same before quantization (not written)
    GaussianScene gt_scene;
    std::vector<BezierTrajectory> gt_trajectories;
    std::vector<AlignmentParams> gt_alignment;
    std::vector<SharpView> sharp_eval_views;
    std::vector<PosePerturbation> pose_perturbations;
    std::vector<Vec3> points, colors;

    RigidPose gtReferencePose(std::size_t i) const { return gt_trajectories.at(i).poseAt(config.reference_time); }

    Dataset dataset() const {
        Dataset ds;
        ds.observations = observations;
        ds.points       = points;
        ds.colors       = colors;
        ds.extent       = config.scene_extent;
        return ds;
    }
};

/// World-to-camera pose at `center` looking at the origin, image y pointing
/// along world +y (down).
inline RigidPose lookAtOrigin(const Vec3 &center) {
    const Vec3 z = (-center).normalized();
    const Vec3 x = Vec3::UnitY().cross(z).normalized();
    const Vec3 y = z.cross(x);
    RigidPose p;
    p.rotation.row(0) = x;
    p.rotation.row(1) = y;
    p.rotation.row(2) = z;
    p.translation     = -(p.rotation * center);
    return p;
}

namespace detail {

/// Camera on the viewing arc at parameter s in [0, 1].
inline RigidPose arcPose(const SyntheticConfig &c, double s) {
    const double deg   = std::numbers::pi / 180.0;
    const double yaw   = (s - 0.5) * c.arc_degrees * deg;
    const double elev  = (12.0 + 6.0 * std::sin(2.0 * std::numbers::pi * s)) * deg;
    const Vec3 center  = c.radius * Vec3(std::sin(yaw) * std::cos(elev), -std::sin(elev), -std::cos(yaw) * std::cos(elev));
    return lookAtOrigin(center);
}

inline Vec3 randomDirection(std::mt19937_64 &rng) {
    std::normal_distribution<double> n;
    Vec3 v;
    do
        v = Vec3(n(rng), n(rng), n(rng));
    while (v.norm() < 1e-9);
    return v.normalized();
}

} // namespace detail

/// Builds a full synthetic bundle in memory. Deterministic in the config.
inline SyntheticBundle generateSynthetic(const SyntheticConfig &cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal;
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const double deg = std::numbers::pi / 180.0;
    const double ext = cfg.scene_extent;

    SyntheticBundle b;
    b.config = cfg;
    b.camera = Camera{cfg.focal, cfg.focal, cfg.width / 2.0, cfg.height / 2.0, cfg.width, cfg.height};

    for (int i = 0; i < cfg.gaussians; ++i) {
        Gaussian3D g;
        g.position = ext * Vec3(uniform(-0.5, 0.5), uniform(-0.5, 0.5), uniform(-0.5, 0.5));
        for (int k = 0; k < 3; ++k)
            g.log_scale(k) = std::log(ext * uniform(cfg.scale_min, cfg.scale_max));
        g.rotation_q = Vec4(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
        g.color      = Vec3(uniform(0.05, 0.95), uniform(0.05, 0.95), uniform(0.05, 0.95));
        const double op = uniform(0.6, 0.95);
        g.opacity_logit = std::log(op / (1.0 - op));
        b.gt_scene.push(g);
    }

    for (int i = 0; i < cfg.images; ++i) {
        const double s      = cfg.images == 1 ? 0.5 : static_cast<double>(i) / (cfg.images - 1);
        const RigidPose base = detail::arcPose(cfg, s);

        // smooth motion: twist offsets polynomial in the curve parameter
        const double rotMax = cfg.blur_severity * cfg.blur_rot_deg * deg;
        const double trMax  = cfg.blur_severity * cfg.blur_trans_frac * ext;
        const Vec3 w1 = detail::randomDirection(rng) * uniform(0.6, 1.0), w2 = detail::randomDirection(rng) * uniform(0.0, 0.4);
        const Vec3 v1 = detail::randomDirection(rng) * uniform(0.6, 1.0), v2 = detail::randomDirection(rng) * uniform(0.0, 0.4);
        std::vector<Twist> ctrl;
        for (int k = 0; k <= cfg.bezier_order; ++k) {
            const double u = 2.0 * k / cfg.bezier_order - 1.0; // [-1, 1]
            Twist d;
            d.phi = rotMax * (u * w1 + (u * u - 0.5) * w2) / 1.5;
            d.rho = trMax * (u * v1 + (u * u - 0.5) * v2) / 1.5;
            ctrl.push_back(logSE3(expSE3(d) * base));
        }
        b.gt_trajectories.emplace_back(std::move(ctrl));

        AlignmentParams params = AlignmentParams::evenlySpaced(cfg.n_subframes);
        if (cfg.alignment_jitter > 0)
            for (std::size_t k = 1; k < params.raw.size(); ++k)
                params.raw[k] += cfg.alignment_jitter * normal(rng);
        b.gt_alignment.push_back(params);

        const RigidPose reference = b.gtReferencePose(static_cast<std::size_t>(i));
        RigidPose reported        = reference;
        PosePerturbation pert;
        if (cfg.perturb_rot_deg > 0 || cfg.perturb_trans_frac > 0) {
            const Vec3 axis = detail::randomDirection(rng);
            const double angle = uniform(0.0, cfg.perturb_rot_deg) * deg;
            const Vec3 shift   = detail::randomDirection(rng) * uniform(0.0, cfg.perturb_trans_frac) * ext;
            // rotate about the camera center, then move the center
            RigidPose rotated;
            rotated.rotation    = expSO3(angle * axis) * reference.rotation;
            const Vec3 center   = reference.center() + shift;
            rotated.translation = -(rotated.rotation * center);
            reported            = rotated;
            pert.rotation_deg     = rotationAngle(reported.rotation, reference.rotation) / deg;
            pert.translation_frac = (reported.center() - reference.center()).norm() / ext;
        }
        b.pose_perturbations.push_back(pert);

        char name[32];
        std::snprintf(name, sizeof name, "obs_%03d.png", i);
        BlurObservation o;
        o.camera = b.camera;
        o.id     = name;
        // a perturbed pose is stored as it reads back from the quaternion text,
        // so in-memory and on-disk bundles train identically
        const bool exact = pert.rotation_deg == 0.0 && pert.translation_frac == 0.0;
        o.initial_pose   = exact ? reference : makeColmapImage(i + 1, reported, 1, name).pose();
        b.observations.push_back(std::move(o));
    }

    for (int i = 0; i < cfg.images; ++i) {
        const auto blurry = synthesizeBlur(b.gt_scene, b.gt_trajectories[i], b.gt_alignment[i], b.camera);
        b.clean_images.push_back(blurry.image);
        b.observations[i].image = quantizeImage(blurry.image);
    }

    for (int v = 0; v < cfg.eval_views; ++v) {
        // midway between neighbouring training cameras
        const double s = (v + 0.5) / cfg.eval_views * (cfg.images - 1.0) / cfg.images + 0.5 / cfg.images;
        SharpView view;
        view.pose  = detail::arcPose(cfg, s);
        view.image = quantizeImage(gammaCorrect(render(b.gt_scene, view.pose, b.camera, Vec3::Zero())));
        b.sharp_eval_views.push_back(std::move(view));
    }

    std::vector<std::size_t> order(b.gt_scene.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t count = std::min<std::size_t>(cfg.sparse_points, order.size());
    for (std::size_t k = 0; k < count; ++k) {
        const auto &g = b.gt_scene.gaussians[order[k]];
        b.points.push_back(g.position + cfg.point_noise * ext * Vec3(normal(rng), normal(rng), normal(rng)));
        Vec3 c = g.color + cfg.color_noise * Vec3(normal(rng), normal(rng), normal(rng));
        for (int ch = 0; ch < 3; ++ch)
            c(ch) = quantize8(c(ch)) / 255.0;
        b.colors.push_back(c);
    }
    return b;
}

/// Writes the bundle: manifest.txt, colmap/, images/, eval/ and gt/.
inline void writeBundle(const SyntheticBundle &b, const fs::path &dir) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "eval");
    fs::create_directories(dir / "gt");

    ColmapModel model;
    model.cameras.push_back({1, "PINHOLE", b.camera});
    for (std::size_t i = 0; i < b.observations.size(); ++i) {
        const auto &o = b.observations[i];
        auto rec      = makeColmapImage(static_cast<long>(i) + 1, o.initial_pose, 1, o.id);
        model.images.push_back(rec);
        writeImage(o.image, dir / "images" / o.id);
    }
    for (std::size_t k = 0; k < b.points.size(); ++k) {
        ColmapPoint p;
        p.id       = static_cast<long>(k) + 1;
        p.position = b.points[k];
        for (int ch = 0; ch < 3; ++ch)
            p.rgb[ch] = quantize8(b.colors[k](ch));
        model.points.push_back(p);
    }
    writeColmapText(model, dir / "colmap");

    std::string poses;
    for (std::size_t v = 0; v < b.sharp_eval_views.size(); ++v) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.png", v);
        writeImage(b.sharp_eval_views[v].image, dir / "eval" / name);
        poses += formatPose(b.sharp_eval_views[v].pose);
    }
    writeTextFile(dir / "eval" / "poses.txt", poses);

    saveScene(b.gt_scene, 0, dir / "gt" / "scene.ply");
    std::string perturb = "image,rotation_deg,translation_frac\n";
    for (std::size_t i = 0; i < b.gt_trajectories.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "traj_%03zu.bin", i);
        saveTrajectory(b.gt_trajectories[i], b.gt_alignment[i], dir / "gt" / name);
        perturb += b.observations[i].id + "," + formatDouble(b.pose_perturbations[i].rotation_deg) + "," +
                   formatDouble(b.pose_perturbations[i].translation_frac) + "\n";
    }
    writeTextFile(dir / "gt" / "perturbations.csv", perturb);

    KeyValues kv = b.config.toKeyValues();
    kv.set("format", std::string("blursplat-synthetic-1"));
    kv.set("observation_count", static_cast<long>(b.observations.size()));
    kv.set("eval_view_count", static_cast<long>(b.sharp_eval_views.size()));
    kv.set("files.colmap", std::string("colmap/"));
    kv.set("files.images", std::string("images/"));
    kv.set("files.eval", std::string("eval/poses.txt eval/view_*.png"));
    kv.set("files.gt", std::string("gt/scene.ply gt/traj_*.bin gt/perturbations.csv"));
    double maxRot = 0, maxTr = 0;
    for (const auto &p : b.pose_perturbations) {
        maxRot = std::max(maxRot, p.rotation_deg);
        maxTr  = std::max(maxTr, p.translation_frac);
    }
    kv.set("perturbation.max_rotation_deg", maxRot);
    kv.set("perturbation.max_translation_frac", maxTr);
    kv.save(dir / "manifest.txt", "# blursplat synthetic bundle\n");
}

/// Held-out sharp views and ground truth of a written bundle.
struct BundleGroundTruth {
    SyntheticConfig config;
    std::vector<SharpView> eval_views;
    std::vector<TrajectoryRecord> trajectories;
    GaussianScene scene;
};

inline BundleGroundTruth loadBundleGroundTruth(const fs::path &dir) {
    if (!fs::exists(dir / "manifest.txt"))
        throw IoError(dir.string() + ": not a synthetic bundle (no manifest.txt)");
    BundleGroundTruth gt;
    const auto kv = KeyValues::load(dir / "manifest.txt");
    gt.config     = SyntheticConfig::fromKeyValues(kv);
    const auto poses = loadPoses(dir / "eval" / "poses.txt");
    for (std::size_t v = 0; v < poses.size(); ++v) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.png", v);
        gt.eval_views.push_back({poses[v], readImage(dir / "eval" / name)});
    }
    const long n = kv.getInteger("observation_count");
    for (long i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "traj_%03ld.bin", i);
        gt.trajectories.push_back(loadTrajectory(dir / "gt" / name));
    }
    gt.scene = loadScene(dir / "gt" / "scene.ply").scene;
    return gt;
}

/// Reads back everything writeBundle wrote (clean_images stays empty).
inline SyntheticBundle loadBundle(const fs::path &dir) {
    auto gt = loadBundleGroundTruth(dir);
    SyntheticBundle b;
    b.config           = gt.config;
    b.gt_scene         = std::move(gt.scene);
    b.sharp_eval_views = std::move(gt.eval_views);
    for (auto &t : gt.trajectories) {
        b.gt_trajectories.push_back(std::move(t.trajectory));
        b.gt_alignment.push_back(std::move(t.alignment));
    }
    const auto ds = loadDataset(dir);
    if (ds.observations.size() != b.gt_trajectories.size())
        throw InvalidInput(dir.string() + ": image and trajectory counts differ");
    b.camera       = ds.observations.front().camera;
    b.observations = ds.observations;
    b.points       = ds.points;
    b.colors       = ds.colors;

    const auto csv = dir / "gt" / "perturbations.csv";
    std::istringstream in(readTextFile(csv));
    std::string line;
    std::getline(in, line);
    for (std::size_t no = 2; std::getline(in, line); ++no) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');)
            f.push_back(cell);
        if (f.size() != 3)
            throw ParseError(csv.string(), no, "expected image,rotation_deg,translation_frac");
        b.pose_perturbations.push_back({parseDouble(f[1], csv.string(), no), parseDouble(f[2], csv.string(), no)});
    }
    if (b.pose_perturbations.size() != b.observations.size())
        throw InvalidInput(csv.string() + ": one row per image expected");
    return b;
}

} // namespace blursplat
