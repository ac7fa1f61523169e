// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Held-out view evaluation: align each test pose against the frozen scene,
// render sharply and score PSNR/SSIM.
//
#pragma once

#include "io.hpp"
#include "metrics.hpp"
#include "synthetic.hpp"
#include "trainer.hpp"

#include <string>
#include <vector>

namespace blursplat {

struct ViewScore {
    double psnr         = 0.0;
    double ssim         = 0.0;
    double psnr_initial = 0.0; ///< before test-pose alignment
    RigidPose aligned_pose;
};

struct EvalReport {
    std::vector<ViewScore> views;
    double mean_psnr  = 0.0;
    double mean_ssim  = 0.0;
    long align_iters  = 0;
    // filled when ground-truth trajectories are available
    std::vector<PoseError> pose_errors;
    double mean_rotation_deg = 0.0, max_rotation_deg = 0.0;
    double mean_translation = 0.0, max_translation = 0.0; ///< over the extent

    void finalize() {
        mean_psnr = mean_ssim = 0.0;
        for (const auto &v : views) {
            mean_psnr += v.psnr;
            mean_ssim += v.ssim;
        }
        if (!views.empty()) {
            mean_psnr /= static_cast<double>(views.size());
            mean_ssim /= static_cast<double>(views.size());
        }
    }
};

inline EvalReport evaluateViews(const GaussianScene &scene, const Camera &cam, const std::vector<SharpView> &views,
                                const AlignOptions &opts) {
    EvalReport rep;
    rep.align_iters = opts.iters;
    for (const auto &view : views) {
        ViewScore s;
        s.psnr_initial = psnr(gammaCorrect(render(scene, view.pose, cam, opts.background, opts.workers)), view.image);
        s.aligned_pose = opts.iters > 0 ? alignTestPose(scene, cam, view.image, view.pose, opts).pose : view.pose;
        const auto img = gammaCorrect(render(scene, s.aligned_pose, cam, opts.background, opts.workers));
        s.psnr         = psnr(img, view.image);
        s.ssim         = ssim(img, view.image);
        rep.views.push_back(s);
    }
    rep.finalize();
    return rep;
}

/// Mid-exposure pose errors of the estimated trajectories against ground
/// truth; translation reported as a fraction of `extent`.
inline void addPoseErrors(EvalReport &rep, const std::vector<CameraTrack> &estimated,
                          const std::vector<TrajectoryRecord> &truth, double extent) {
    if (estimated.size() != truth.size())
        throw InvalidInput("pose evaluation: image counts differ");
    rep.pose_errors.clear();
    rep.mean_rotation_deg = rep.max_rotation_deg = rep.mean_translation = rep.max_translation = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto e = poseError(midExposurePose(estimated[i].trajectory, estimated[i].alignment),
                           midExposurePose(truth[i].trajectory, truth[i].alignment));
        e.translation /= extent;
        rep.pose_errors.push_back(e);
        rep.mean_rotation_deg += e.rotation_deg / static_cast<double>(truth.size());
        rep.mean_translation += e.translation / static_cast<double>(truth.size());
        rep.max_rotation_deg = std::max(rep.max_rotation_deg, e.rotation_deg);
        rep.max_translation  = std::max(rep.max_translation, e.translation);
    }
}

inline std::string formatReportSummary(const EvalReport &rep) {
    KeyValues kv;
    kv.set("views", static_cast<long>(rep.views.size()));
    kv.set("align_iters", rep.align_iters);
    kv.set("mean_psnr_db", rep.mean_psnr);
    kv.set("mean_ssim", rep.mean_ssim);
    if (!rep.pose_errors.empty()) {
        kv.set("pose.mean_rotation_deg", rep.mean_rotation_deg);
        kv.set("pose.max_rotation_deg", rep.max_rotation_deg);
        kv.set("pose.mean_translation_frac", rep.mean_translation);
        kv.set("pose.max_translation_frac", rep.max_translation);
    }
    return kv.str("# blursplat evaluation report\n"
                  "# metrics: PSNR (dB) and SSIM after test-pose alignment; LPIPS is not computed\n");
}

inline std::string formatReportCsv(const EvalReport &rep) {
    std::string out = "view,psnr_db,ssim,psnr_before_alignment_db,qw,qx,qy,qz,tx,ty,tz\n";
    for (std::size_t i = 0; i < rep.views.size(); ++i) {
        const auto &v = rep.views[i];
        std::string pose = formatPose(v.aligned_pose);
        pose.pop_back();
        std::replace(pose.begin(), pose.end(), ' ', ',');
        out += std::to_string(i) + "," + formatDouble(v.psnr) + "," + formatDouble(v.ssim) + "," +
               formatDouble(v.psnr_initial) + "," + pose + "\n";
    }
    return out;
}

/// Writes the summary to `path` and the per-view table next to it (.csv).
inline void writeReport(const EvalReport &rep, const fs::path &path) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    writeTextFile(path, formatReportSummary(rep));
    auto csv = path;
    csv.replace_extension(".csv");
    writeTextFile(csv, formatReportCsv(rep));
}

} // namespace blursplat
