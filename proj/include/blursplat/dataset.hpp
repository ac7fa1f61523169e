// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Training data: blurry observations with their (noisy) initial poses and the
// sparse point cloud that seeds the scene.
//
#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "io.hpp"
#include "lie.hpp"
#include "scene.hpp"

#include <string>
#include <vector>

namespace blursplat {

struct BlurObservation {
    GammaImage image;
    RigidPose initial_pose; ///< world-to-camera
    Camera camera;
    std::string id;
};

struct Dataset {
    std::vector<BlurObservation> observations;
    std::vector<Vec3> points;
    std::vector<Vec3> colors;
    /// Length unit for the densification size criterion and the position
    /// learning rate.
    double extent = 1.0;

    void validate() const {
        if (observations.empty())
            throw InvalidInput("dataset has no observations");
        if (points.empty())
            throw InvalidInput("dataset has no sparse points");
        if (points.size() != colors.size())
            throw InvalidInput("dataset points and colors differ in length");
        for (const auto &o : observations) {
            o.camera.validate();
            if (o.image.width() != o.camera.width || o.image.height() != o.camera.height)
                throw InvalidInput("observation " + o.id + ": image size differs from its camera");
        }
        if (!(extent > 0.0))
            throw InvalidInput("dataset extent must be positive");
    }
};

/// Camera-center spread: 1.1 times the largest distance from the mean center.
inline double cameraExtent(const std::vector<BlurObservation> &obs) {
    Vec3 mean = Vec3::Zero();
    for (const auto &o : obs)
        mean += o.initial_pose.center();
    mean /= static_cast<double>(obs.size());
    double r = 0.0;
    for (const auto &o : obs)
        r = std::max(r, (o.initial_pose.center() - mean).norm());
    return r > 0.0 ? 1.1 * r : 1.0;
}

/// Loads a COLMAP text model from `colmapDir` and the images it names from
/// `imageDir`.
inline Dataset loadColmapDataset(const fs::path &colmapDir, const fs::path &imageDir) {
    const ColmapModel model = loadColmapText(colmapDir);
    if (model.images.empty())
        throw InvalidInput(colmapDir.string() + ": no images");
    if (model.points.empty())
        throw InvalidInput(colmapDir.string() + ": no 3D points");
    Dataset ds;
    for (const auto &rec : model.images) {
        BlurObservation o;
        o.camera       = model.camera(rec.cameraId).camera;
        o.initial_pose = rec.pose();
        o.id           = rec.name;
        o.image        = readImage(imageDir / rec.name);
        ds.observations.push_back(std::move(o));
    }
    for (const auto &p : model.points) {
        ds.points.push_back(p.position);
        ds.colors.emplace_back(p.rgb[0] / 255.0, p.rgb[1] / 255.0, p.rgb[2] / 255.0);
    }
    ds.extent = cameraExtent(ds.observations);
    ds.validate();
    return ds;
}

/// A data directory is either a synthetic bundle (colmap/ and images/
/// subdirectories plus manifest.txt) or a bare COLMAP text export with an
/// images/ folder next to it.
inline Dataset loadDataset(const fs::path &dir) {
    if (!fs::is_directory(dir))
        throw IoError("data directory " + dir.string() + " does not exist");
    const fs::path colmap = fs::is_directory(dir / "colmap") ? dir / "colmap" : dir;
    Dataset ds            = loadColmapDataset(colmap, dir / "images");
    if (fs::exists(dir / "manifest.txt")) {
        const auto kv = KeyValues::load(dir / "manifest.txt");
        if (kv.has("scene_extent"))
            ds.extent = kv.getDouble("scene_extent");
    }
    ds.validate();
    return ds;
}

} // namespace blursplat
