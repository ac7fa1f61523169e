// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// blursplat make-synthetic | train | render | eval
//
// Exit status: 0 success, 2 usage error, 3 data error, 4 numerical failure.
//
#include <blursplat/checkpoint.hpp>
#include <blursplat/dataset.hpp>
#include <blursplat/evaluation.hpp>
#include <blursplat/synthetic.hpp>
#include <blursplat/trainer.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

namespace bs = blursplat;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void requireDirectory(const std::string &path, const char *flag) {
    if (!bs::fs::is_directory(path))
        throw UsageError(std::string(flag) + ": directory '" + path + "' does not exist");
}

void requireFile(const std::string &path, const char *flag) {
    if (!bs::fs::is_regular_file(path))
        throw UsageError(std::string(flag) + ": file '" + path + "' does not exist");
}

// ---------------------------------------------------------------------------

struct SyntheticArgs {
    std::string out, config;
    std::uint64_t seed = 1;
    std::optional<int> gaussians, images, width, height;
    std::optional<double> severity, perturbRot, perturbTrans;
};

int runMakeSynthetic(const SyntheticArgs &a) {
    bs::SyntheticConfig cfg;
    if (!a.config.empty()) {
        requireFile(a.config, "--config");
        cfg = bs::SyntheticConfig::fromKeyValues(bs::KeyValues::load(a.config));
    }
    cfg.seed = a.seed;
    if (a.gaussians) cfg.gaussians = *a.gaussians;
    if (a.images) cfg.images = *a.images;
    if (a.width) cfg.width = *a.width;
    if (a.height) cfg.height = *a.height;
    if (a.severity) cfg.blur_severity = *a.severity;
    if (a.perturbRot) cfg.perturb_rot_deg = *a.perturbRot;
    if (a.perturbTrans) cfg.perturb_trans_frac = *a.perturbTrans;
    const auto bundle = bs::generateSynthetic(cfg);
    bs::writeBundle(bundle, a.out);
    std::cout << "wrote " << bundle.observations.size() << " blurry views, " << bundle.sharp_eval_views.size()
              << " held-out views and " << bundle.gt_scene.size() << " ground-truth Gaussians to " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data, out, config;
    std::optional<long> iters;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool noAnneal = false;
    bool fresh    = false;
    long logEvery = 100;
};

int runTrain(const TrainArgs &a) {
    requireDirectory(a.data, "--data");
    bs::TrainConfig cfg;
    if (!a.config.empty()) {
        requireFile(a.config, "--config");
        cfg = bs::TrainConfig::fromKeyValues(bs::KeyValues::load(a.config));
    }
    if (a.iters) cfg.total_iters = *a.iters;
    if (a.seed) cfg.seed = *a.seed;
    if (a.workers) cfg.workers = *a.workers;
    if (a.noAnneal) cfg.anneal_densification = false;
    cfg.validate();

    const bs::Dataset ds = bs::loadDataset(a.data);
    bs::TrainState state;
    if (!a.fresh && bs::fs::exists(bs::fs::path(a.out) / "manifest.txt")) {
        auto ck = bs::loadCheckpoint(a.out);
        if (ck.state.cameras.size() != ds.observations.size())
            throw bs::InvalidInput("checkpoint in " + a.out + " was trained on a different dataset");
        state = std::move(ck.state);
        std::cerr << "resuming from iteration " << state.iter << "\n";
    } else {
        state = bs::initTraining(ds, cfg);
    }

    const auto start = std::chrono::steady_clock::now();
    bs::train(state, ds, cfg, [&](const bs::TrainState &s, const bs::IterationReport &r) {
        if (a.logEvery > 0 && (s.iter % a.logEvery == 0 || s.iter == cfg.total_iters)) {
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::fprintf(stderr, "iter %6ld  loss %.5f  rgb %.5f  smooth %.4f  gaussians %zu  %.0fs\n", s.iter,
                         r.loss.total, r.loss.rgb_loss, r.loss.smooth_loss, s.scene.size(), sec);
        }
        if (s.iter % cfg.checkpoint_interval == 0 && s.iter < cfg.total_iters)
            bs::saveCheckpoint(s, cfg, ds, a.out);
    });
    bs::saveCheckpoint(state, cfg, ds, a.out);
    std::cout << "trained " << state.iter << " iterations, " << state.scene.size() << " Gaussians, checkpoint in "
              << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string ckpt, pose, out;
    std::size_t cameraIndex = 0;
    int workers             = 1;
};

int runRender(const RenderArgs &a) {
    requireDirectory(a.ckpt, "--ckpt");
    requireFile(a.pose, "--pose");
    const auto ck    = bs::loadCheckpoint(a.ckpt);
    const auto poses = bs::loadPoses(a.pose);
    if (poses.empty())
        throw bs::InvalidInput(a.pose + ": no pose");
    if (a.cameraIndex >= ck.cameras.size())
        throw UsageError("--camera: index out of range");
    // sharp view: trajectories and alignment are not used
    const auto img = bs::gammaCorrect(
        bs::render(ck.state.scene, poses.front(), ck.cameras[a.cameraIndex], ck.config.background, a.workers));
    bs::writeImage(img, a.out);
    std::cout << "rendered " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string ckpt, data, report;
    long alignIters     = 500;
    double alignLr      = 1e-3;
    long alignHalveEvery = 200;
    int workers         = 1;
};

int runEval(const EvalArgs &a) {
    requireDirectory(a.ckpt, "--ckpt");
    requireDirectory(a.data, "--data");
    const auto ck = bs::loadCheckpoint(a.ckpt);
    const auto gt = bs::loadBundleGroundTruth(a.data);
    if (ck.cameras.empty())
        throw bs::InvalidInput("checkpoint has no cameras");
    bs::AlignOptions opts;
    opts.iters       = a.alignIters;
    opts.lr          = a.alignLr;
    opts.halve_every = a.alignHalveEvery;
    opts.background  = ck.config.background;
    opts.workers     = a.workers;
    const bs::Camera cam{gt.config.focal, gt.config.focal, gt.config.width / 2.0, gt.config.height / 2.0,
                         gt.config.width, gt.config.height};
    auto rep = bs::evaluateViews(ck.state.scene, cam, gt.eval_views, opts);
    if (gt.trajectories.size() == ck.state.cameras.size())
        bs::addPoseErrors(rep, ck.state.cameras, gt.trajectories, gt.config.scene_extent);
    bs::writeReport(rep, a.report);
    std::cout << bs::formatReportSummary(rep);
    return kOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"blursplat: motion-deblurring Gaussian splatting"};
    app.require_subcommand(1);

    SyntheticArgs syn;
    auto *mk = app.add_subcommand("make-synthetic", "generate a synthetic blurry dataset with ground truth");
    mk->add_option("--out", syn.out, "output directory")->required();
    mk->add_option("--seed", syn.seed, "random seed");
    mk->add_option("--config", syn.config, "key=value file with generator settings");
    mk->add_option("--gaussians", syn.gaussians, "ground-truth Gaussian count");
    mk->add_option("--images", syn.images, "blurry training views");
    mk->add_option("--width", syn.width, "image width");
    mk->add_option("--height", syn.height, "image height");
    mk->add_option("--blur-severity", syn.severity, "0 = no motion, 1 = full span");
    mk->add_option("--perturb-rot-deg", syn.perturbRot, "max rotation error of the reported poses");
    mk->add_option("--perturb-trans-frac", syn.perturbTrans, "max center error of the reported poses");

    TrainArgs tr;
    auto *trn = app.add_subcommand("train", "optimise scene and camera motion");
    trn->add_option("--data", tr.data, "dataset directory")->required();
    trn->add_option("--out", tr.out, "checkpoint directory")->required();
    trn->add_option("--config", tr.config, "key=value file with TrainConfig fields");
    trn->add_option("--iters", tr.iters, "total iterations");
    trn->add_option("--seed", tr.seed, "random seed");
    trn->add_option("--workers", tr.workers, "render threads");
    trn->add_flag("--no-anneal", tr.noAnneal, "keep the densification threshold constant");
    trn->add_flag("--fresh", tr.fresh, "ignore an existing checkpoint in --out");
    trn->add_option("--log-every", tr.logEvery, "progress line interval (0 = quiet)");

    RenderArgs rd;
    auto *rnd = app.add_subcommand("render", "render a sharp view from a checkpoint");
    rnd->add_option("--ckpt", rd.ckpt, "checkpoint directory")->required();
    rnd->add_option("--pose", rd.pose, "pose file: qw qx qy qz tx ty tz (world-to-camera)")->required();
    rnd->add_option("--out", rd.out, "output PNG")->required();
    rnd->add_option("--camera", rd.cameraIndex, "use the intrinsics of this training image");
    rnd->add_option("--workers", rd.workers, "render threads");

    EvalArgs ev;
    auto *evl = app.add_subcommand("eval", "score held-out views after test-pose alignment");
    evl->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
    evl->add_option("--data", ev.data, "synthetic bundle directory")->required();
    evl->add_option("--align-iters", ev.alignIters, "test-pose alignment iterations");
    evl->add_option("--align-lr", ev.alignLr, "test-pose alignment learning rate");
    evl->add_option("--align-halve-every", ev.alignHalveEvery, "halve the alignment rate every K iterations");
    evl->add_option("--report", ev.report, "summary file (a .csv table is written next to it)")->required();
    evl->add_option("--workers", ev.workers, "render threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*mk)
            return runMakeSynthetic(syn);
        if (*trn)
            return runTrain(tr);
        if (*rnd)
            return runRender(rd);
        if (*evl)
            return runEval(ev);
    } catch (const UsageError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const bs::InvalidArgument &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const bs::NumericalError &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const bs::SingularityError &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception &e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
