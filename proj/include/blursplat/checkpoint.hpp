// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory:
//   scene.ply              Gaussians (float32) with the iteration in a comment
//   trajectories/NNN.bin   control twists + alignment raws per image
//   optimizer.bin          Adam moments, step counters, densification statistics
//   manifest.txt           config echo, iteration, image ids
//   loss_history.csv       one row per iteration
//
#pragma once

#include "errors.hpp"
#include "io.hpp"
#include "trainer.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace blursplat {

inline constexpr const char *kOptimizerMagic     = "BSOPT";
inline constexpr std::uint32_t kOptimizerVersion = 1;

inline std::string encodeOptimizer(const TrainState &s) {
    detail::BinaryWriter w;
    w.raw(kOptimizerMagic);
    w.put<std::uint32_t>(kOptimizerVersion);
    w.put<std::int64_t>(s.scene_steps);
    w.put<std::uint64_t>(s.scene.size());
    for (double x : s.scene_moments.m)
        w.put(x);
    for (double x : s.scene_moments.v)
        w.put(x);
    for (std::size_t i = 0; i < s.scene.size(); ++i) {
        w.put(s.scene.grad_accum[i]);
        w.put(s.scene.grad_count[i]);
    }
    w.put<std::uint64_t>(s.cameras.size());
    for (const auto &c : s.cameras) {
        w.put<std::int64_t>(c.steps);
        w.put<std::uint64_t>(c.moments.size());
        for (double x : c.moments.m)
            w.put(x);
        for (double x : c.moments.v)
            w.put(x);
    }
    return w.bytes();
}

inline void decodeOptimizer(const std::string &bytes, const std::string &source, TrainState &s) {
    detail::BinaryReader r(bytes, source);
    r.expect(kOptimizerMagic);
    if (r.get<std::uint32_t>() != kOptimizerVersion)
        throw UnsupportedFormat(source + ": unsupported optimizer version");
    s.scene_steps = r.get<std::int64_t>();
    const auto n  = r.get<std::uint64_t>();
    if (n != s.scene.size())
        throw InvalidInput(source + ": optimizer state does not match the scene size");
    s.scene_moments.resize(n * kGaussianParams);
    for (auto &x : s.scene_moments.m)
        x = r.get<double>();
    for (auto &x : s.scene_moments.v)
        x = r.get<double>();
    for (std::size_t i = 0; i < n; ++i) {
        s.scene.grad_accum[i] = r.get<double>();
        s.scene.grad_count[i] = r.get<double>();
    }
    if (r.get<std::uint64_t>() != s.cameras.size())
        throw InvalidInput(source + ": optimizer state does not match the image count");
    for (auto &c : s.cameras) {
        c.steps = r.get<std::int64_t>();
        if (r.get<std::uint64_t>() != c.parameterCount())
            throw InvalidInput(source + ": camera optimizer block has the wrong size");
        c.moments.resize(c.parameterCount());
        for (auto &x : c.moments.m)
            x = r.get<double>();
        for (auto &x : c.moments.v)
            x = r.get<double>();
    }
    if (!r.atEnd())
        throw IoError(source + ": trailing bytes");
}

inline std::string trajectoryFileName(std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "%03zu.bin", i);
    return name;
}

inline std::string formatLossHistory(const TrainState &s) {
    std::string out = "iteration,observation,rgb_loss,smooth_loss,lambda,total\n";
    for (std::size_t i = 0; i < s.history.size(); ++i) {
        const auto &h = s.history[i];
        out += std::to_string(i) + "," +
               (i < s.history_observation.size() ? std::to_string(s.history_observation[i]) : std::string("-")) +
               "," + formatDouble(h.rgb_loss) + "," + formatDouble(h.smooth_loss) + "," + formatDouble(h.lambda) + "," +
               formatDouble(h.total) + "\n";
    }
    return out;
}

inline void saveCheckpoint(const TrainState &s, const TrainConfig &cfg, const Dataset &ds, const fs::path &dir) {
    fs::create_directories(dir / "trajectories");
    saveScene(s.scene, s.iter, dir / "scene.ply");
    for (std::size_t i = 0; i < s.cameras.size(); ++i)
        saveTrajectory(s.cameras[i].trajectory, s.cameras[i].alignment, dir / "trajectories" / trajectoryFileName(i));
    writeTextFile(dir / "optimizer.bin", encodeOptimizer(s));
    writeTextFile(dir / "loss_history.csv", formatLossHistory(s));

    KeyValues kv;
    const auto cfgKv = cfg.toKeyValues();
    for (const auto &[k, v] : cfgKv.entries())
        kv.set("config." + k, v);
    kv.set("iteration", s.iter);
    kv.set("rng_seed", std::to_string(s.rng_seed));
    kv.set("extent", s.extent);
    kv.set("gaussians", static_cast<long>(s.scene.size()));
    kv.set("image_count", static_cast<long>(s.cameras.size()));
    for (std::size_t i = 0; i < ds.observations.size(); ++i) {
        const auto &o = ds.observations[i];
        kv.set("image." + trajectoryFileName(i).substr(0, 3), o.id);
        kv.set("camera." + trajectoryFileName(i).substr(0, 3),
               formatDouble(o.camera.fx) + " " + formatDouble(o.camera.fy) + " " + formatDouble(o.camera.cx) + " " +
                   formatDouble(o.camera.cy) + " " + std::to_string(o.camera.width) + " " +
                   std::to_string(o.camera.height));
    }
    if (!s.history.empty())
        kv.set("last_total_loss", s.history.back().total);
    kv.save(dir / "manifest.txt", "# blursplat checkpoint\n");
}

struct Checkpoint {
    TrainState state;
    TrainConfig config;
    std::vector<std::string> image_ids;
    std::vector<Camera> cameras;
};

inline TrainConfig configFromManifest(const KeyValues &kv) {
    KeyValues cfg;
    for (const auto &[k, v] : kv.entries())
        if (k.rfind("config.", 0) == 0)
            cfg.set(k.substr(7), v);
    return TrainConfig::fromKeyValues(cfg);
}

inline Checkpoint loadCheckpoint(const fs::path &dir) {
    if (!fs::exists(dir / "manifest.txt"))
        throw IoError(dir.string() + ": not a checkpoint directory (no manifest.txt)");
    Checkpoint ck;
    const auto kv = KeyValues::load(dir / "manifest.txt");
    ck.config     = configFromManifest(kv);
    auto loaded   = loadScene(dir / "scene.ply");
    auto &s       = ck.state;
    s.scene       = std::move(loaded.scene);
    s.iter        = kv.getInteger("iteration");
    s.rng_seed    = static_cast<std::uint64_t>(kv.getInteger("rng_seed"));
    s.extent      = kv.getDouble("extent");
    const long n  = kv.getInteger("image_count");
    for (long i = 0; i < n; ++i) {
        const auto base = trajectoryFileName(static_cast<std::size_t>(i));
        auto rec        = loadTrajectory(dir / "trajectories" / base);
        CameraTrack t;
        t.trajectory = std::move(rec.trajectory);
        t.alignment  = std::move(rec.alignment);
        t.moments.resize(t.parameterCount());
        s.cameras.push_back(std::move(t));
        const std::string key = base.substr(0, 3);
        ck.image_ids.push_back(kv.get("image." + key));
        const auto tok = splitWhitespace(kv.get("camera." + key));
        if (tok.size() != 6)
            throw ParseError((dir / "manifest.txt").string(), kv.lineOf("camera." + key), "camera needs 6 fields");
        const std::string src = (dir / "manifest.txt").string();
        const std::size_t line = kv.lineOf("camera." + key);
        ck.cameras.push_back(Camera{parseDouble(tok[0], src, line), parseDouble(tok[1], src, line),
                                    parseDouble(tok[2], src, line), parseDouble(tok[3], src, line),
                                    static_cast<int>(parseInteger(tok[4], src, line)),
                                    static_cast<int>(parseInteger(tok[5], src, line))});
    }
    if (fs::exists(dir / "optimizer.bin"))
        decodeOptimizer(readTextFile(dir / "optimizer.bin"), (dir / "optimizer.bin").string(), s);
    else
        s.scene_moments.resize(s.scene.size() * kGaussianParams);

    if (fs::exists(dir / "loss_history.csv")) {
        const std::string src = (dir / "loss_history.csv").string();
        std::istringstream in(readTextFile(dir / "loss_history.csv"));
        std::string line;
        std::getline(in, line); // header
        for (std::size_t no = 2; std::getline(in, line); ++no) {
            std::vector<std::string> f;
            std::stringstream ss(line);
            for (std::string cell; std::getline(ss, cell, ',');)
                f.push_back(cell);
            if (f.size() != 6)
                throw ParseError(src, no, "expected 6 columns");
            s.history_observation.push_back(static_cast<std::size_t>(parseInteger(f[1], src, no)));
            s.history.push_back(
                {parseDouble(f[2], src, no), parseDouble(f[3], src, no), parseDouble(f[4], src, no), parseDouble(f[5], src, no)});
        }
    }
    if (!s.consistent())
        throw InvalidInput(dir.string() + ": inconsistent checkpoint");
    return ck;
}

} // namespace blursplat
