// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
// File formats: 8-bit PNG images, PLY scene checkpoints, binary trajectory
// files, key=value documents and COLMAP text tables.
//
#pragma once

#include "errors.hpp"
#include "image.hpp"
#include "lie.hpp"
#include "scene.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace blursplat {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// text helpers

/// Shortest decimal that parses back to the same double.
inline std::string formatDouble(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> splitWhitespace(const std::string &line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;)
        out.push_back(tok);
    return out;
}

inline double parseDouble(const std::string &tok, const std::string &file, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v   = std::stod(tok, &used);
        if (used == tok.size())
            return v;
    } catch (const std::exception &) {
    }
    throw ParseError(file, line, "expected a number, got '" + tok + "'");
}

inline long parseInteger(const std::string &tok, const std::string &file, std::size_t line) {
    try {
        std::size_t used = 0;
        const long v     = std::stol(tok, &used);
        if (used == tok.size())
            return v;
    } catch (const std::exception &) {
    }
    throw ParseError(file, line, "expected an integer, got '" + tok + "'");
}

inline std::string readTextFile(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void writeTextFile(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text))
        throw IoError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// key = value documents

/// Ordered key=value document. Lines starting with '#' are comments.
class KeyValues {
  public:
    void set(const std::string &key, const std::string &value) { mValues[key] = value; }
    void set(const std::string &key, double value) { mValues[key] = formatDouble(value); }
    void set(const std::string &key, long value) { mValues[key] = std::to_string(value); }
    void set(const std::string &key, int value) { mValues[key] = std::to_string(value); }
    void set(const std::string &key, bool value) { mValues[key] = value ? "true" : "false"; }

    bool has(const std::string &key) const { return mValues.count(key) != 0; }
    const std::map<std::string, std::string> &entries() const { return mValues; }

    const std::string &get(const std::string &key) const {
        auto it = mValues.find(key);
        if (it == mValues.end())
            throw InvalidInput("missing key '" + key + "'" + (mSource.empty() ? "" : " in " + mSource));
        return it->second;
    }

    double getDouble(const std::string &key) const { return parseDouble(get(key), mSource, lineOf(key)); }
    long getInteger(const std::string &key) const { return parseInteger(get(key), mSource, lineOf(key)); }
    bool getBool(const std::string &key) const {
        const auto &v = get(key);
        if (v == "true" || v == "1")
            return true;
        if (v == "false" || v == "0")
            return false;
        throw ParseError(mSource, lineOf(key), "expected true/false for '" + key + "'");
    }

    std::string str(const std::string &header = "") const {
        std::string out = header;
        for (const auto &[k, v] : mValues)
            out += k + " = " + v + "\n";
        return out;
    }

    static KeyValues parse(const std::string &text, const std::string &source) {
        KeyValues kv;
        kv.mSource = source;
        std::istringstream in(text);
        std::size_t lineNo = 0;
        for (std::string line; std::getline(in, line);) {
            ++lineNo;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#')
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError(source, lineNo, "expected 'key = value'");
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            if (key.empty())
                throw ParseError(source, lineNo, "empty key");
            kv.mValues[key] = trim(line.substr(eq + 1));
            kv.mLines[key]  = lineNo;
        }
        return kv;
    }

    static KeyValues load(const fs::path &path) { return parse(readTextFile(path), path.string()); }
    void save(const fs::path &path, const std::string &header = "") const { writeTextFile(path, str(header)); }

    std::size_t lineOf(const std::string &key) const {
        auto it = mLines.find(key);
        return it == mLines.end() ? 0 : it->second;
    }

  private:
    std::map<std::string, std::string> mValues;
    std::map<std::string, std::size_t> mLines;
    std::string mSource;
};

// ---------------------------------------------------------------------------
// images

/// 8-bit value for a [0, 1] sample.
inline std::uint8_t quantize8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

/// Rounds every sample to the nearest 8-bit level and back.
template <typename Space>
RgbImage<Space> quantizeImage(const RgbImage<Space> &img) {
    RgbImage<Space> out = img;
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = quantize8(img[k]) / 255.0;
    return out;
}

namespace detail {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};

inline void pngError(png_structp png, png_const_charp msg) {
    auto *what = static_cast<std::string *>(png_get_error_ptr(png));
    *what      = msg;
    png_longjmp(png, 1);
}

inline void pngWarning(png_structp, png_const_charp) {}

} // namespace detail

/// Writes an 8-bit RGB PNG.
template <typename Space>
void writeImage(const RgbImage<Space> &img, const fs::path &path) {
    std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.string().c_str(), "wb"));
    if (!file)
        throw IoError("cannot write " + path.string());
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t k = 0; k < img.size(); ++k)
        bytes[k] = quantize8(img[k]);

    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::pngError, detail::pngWarning);
    png_infop info  = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    for (int y = 0; y < img.height(); ++y)
        rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width() * 3;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("cannot write " + path.string() + ": " + err);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads an 8-bit PNG (gray, RGB, with or without alpha) into [0, 1] RGB.
inline GammaImage readImage(const fs::path &path) {
    std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.string().c_str(), "rb"));
    if (!file)
        throw IoError("cannot open " + path.string());
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw UnsupportedFormat(path.string() + ": not a PNG file");

    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::pngError, detail::pngWarning);
    png_infop info  = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<std::uint8_t> bytes;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("cannot read " + path.string() + ": " + err);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info), type = png_get_color_type(png, info);
    if (depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedFormat(path.string() + ": only 8-bit images are supported");
    }
    if (type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (type & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    bytes.resize(static_cast<std::size_t>(w) * h * 3);
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    GammaImage img(w, h);
    for (std::size_t k = 0; k < bytes.size(); ++k)
        img[k] = bytes[k] / 255.0;
    return img;
}

// ---------------------------------------------------------------------------
// binary helpers

namespace detail {

class BinaryWriter {
  public:
    template <typename T>
    void put(T v) {
        const auto *p = reinterpret_cast<const char *>(&v);
        mBytes.append(p, sizeof(T));
    }
    void raw(const std::string &s) { mBytes += s; }
    const std::string &bytes() const { return mBytes; }

  private:
    std::string mBytes;
};

class BinaryReader {
  public:
    BinaryReader(std::string bytes, std::string source) : mBytes(std::move(bytes)), mSource(std::move(source)) {}

    template <typename T>
    T get() {
        if (mPos + sizeof(T) > mBytes.size())
            throw IoError(mSource + ": truncated file");
        T v;
        std::memcpy(&v, mBytes.data() + mPos, sizeof(T));
        mPos += sizeof(T);
        return v;
    }

    void expect(const std::string &magic) {
        if (mBytes.compare(mPos, magic.size(), magic) != 0)
            throw UnsupportedFormat(mSource + ": bad magic, expected " + magic);
        mPos += magic.size();
    }

    bool atEnd() const { return mPos == mBytes.size(); }
    const std::string &source() const { return mSource; }

  private:
    std::string mBytes;
    std::string mSource;
    std::size_t mPos = 0;
};

} // namespace detail

// ---------------------------------------------------------------------------
// scene checkpoint (PLY)

inline constexpr const char *kPlyAttributes[kGaussianParams] = {
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "red", "green", "blue", "opacity"};

/// Binary little-endian PLY with float32 attributes and an iteration comment.
inline std::string encodeScenePly(const GaussianScene &scene, long iteration) {
    std::string header = "ply\nformat binary_little_endian 1.0\ncomment blursplat scene\n";
    header += "comment iteration " + std::to_string(iteration) + "\n";
    header += "element vertex " + std::to_string(scene.size()) + "\n";
    for (const char *name : kPlyAttributes)
        header += std::string("property float ") + name + "\n";
    header += "end_header\n";
    detail::BinaryWriter w;
    w.raw(header);
    for (const auto &g : scene.gaussians)
        for (double v : packGaussian(g))
            w.put(static_cast<float>(v));
    return w.bytes();
}

struct LoadedScene {
    GaussianScene scene;
    long iteration = 0;
};

inline LoadedScene decodeScenePly(const std::string &bytes, const std::string &source) {
    const auto end = bytes.find("end_header\n");
    if (bytes.rfind("ply\n", 0) != 0 || end == std::string::npos)
        throw UnsupportedFormat(source + ": not a PLY file");
    std::istringstream header(bytes.substr(0, end));
    LoadedScene out;
    long count = -1;
    std::vector<std::string> props;
    std::size_t lineNo = 0;
    for (std::string line; std::getline(header, line);) {
        ++lineNo;
        const auto tok = splitWhitespace(line);
        if (tok.empty())
            continue;
        if (tok[0] == "format" && (tok.size() < 2 || tok[1] != "binary_little_endian"))
            throw UnsupportedFormat(source + ": only binary_little_endian PLY is supported");
        if (tok[0] == "comment" && tok.size() == 3 && tok[1] == "iteration")
            out.iteration = parseInteger(tok[2], source, lineNo);
        if (tok[0] == "element" && tok.size() == 3 && tok[1] == "vertex")
            count = parseInteger(tok[2], source, lineNo);
        if (tok[0] == "property") {
            if (tok.size() != 3 || tok[1] != "float")
                throw UnsupportedFormat(source + ": only float properties are supported");
            props.push_back(tok[2]);
        }
    }
    if (count < 0)
        throw ParseError(source, lineNo, "missing vertex element");
    if (props.size() != kGaussianParams)
        throw UnsupportedFormat(source + ": unexpected vertex layout");
    for (int k = 0; k < kGaussianParams; ++k)
        if (props[k] != kPlyAttributes[k])
            throw UnsupportedFormat(source + ": unexpected property " + props[k]);

    detail::BinaryReader r(bytes.substr(end + 11), source);
    for (long i = 0; i < count; ++i) {
        std::array<double, kGaussianParams> p;
        for (auto &v : p)
            v = r.get<float>();
        out.scene.push(unpackGaussian(p));
    }
    if (!r.atEnd())
        throw IoError(source + ": trailing bytes after vertex data");
    return out;
}

inline void saveScene(const GaussianScene &scene, long iteration, const fs::path &path) {
    writeTextFile(path, encodeScenePly(scene, iteration));
}

inline LoadedScene loadScene(const fs::path &path) { return decodeScenePly(readTextFile(path), path.string()); }

// ---------------------------------------------------------------------------
// per-image trajectory files

inline constexpr const char *kTrajectoryMagic = "BSTRAJ";
inline constexpr std::uint32_t kTrajectoryVersion = 1;

struct TrajectoryRecord {
    BezierTrajectory trajectory;
    AlignmentParams alignment;
};

/// Header: magic, version, order, N; then control twists and raw alignment
/// values as little-endian float64.
inline std::string encodeTrajectory(const BezierTrajectory &traj, const AlignmentParams &params) {
    detail::BinaryWriter w;
    w.raw(kTrajectoryMagic);
    w.put<std::uint32_t>(kTrajectoryVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(traj.order()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.count()));
    for (const auto &c : traj.control())
        for (int k = 0; k < 6; ++k)
            w.put<double>(c.vector()(k));
    for (double v : params.raw)
        w.put<double>(v);
    return w.bytes();
}

inline TrajectoryRecord decodeTrajectory(const std::string &bytes, const std::string &source) {
    detail::BinaryReader r(bytes, source);
    r.expect(kTrajectoryMagic);
    if (r.get<std::uint32_t>() != kTrajectoryVersion)
        throw UnsupportedFormat(source + ": unsupported trajectory version");
    const auto order = r.get<std::uint32_t>();
    const auto n     = r.get<std::uint32_t>();
    if (order < 1 || order > 64 || n < 2 || n > 100000)
        throw UnsupportedFormat(source + ": implausible trajectory header");
    std::vector<Twist> ctrl;
    for (std::uint32_t k = 0; k <= order; ++k) {
        Vec6 v;
        for (int j = 0; j < 6; ++j)
            v(j) = r.get<double>();
        ctrl.push_back(Twist::fromVector(v));
    }
    AlignmentParams params;
    for (std::uint32_t i = 0; i < n; ++i)
        params.raw.push_back(r.get<double>());
    if (!r.atEnd())
        throw IoError(source + ": trailing bytes");
    return {BezierTrajectory(std::move(ctrl)), std::move(params)};
}

inline void saveTrajectory(const BezierTrajectory &traj, const AlignmentParams &params, const fs::path &path) {
    writeTextFile(path, encodeTrajectory(traj, params));
}

inline TrajectoryRecord loadTrajectory(const fs::path &path) {
    return decodeTrajectory(readTextFile(path), path.string());
}

// ---------------------------------------------------------------------------
// COLMAP text tables

struct ColmapCamera {
    long id = 0;
    std::string model; // PINHOLE or SIMPLE_PINHOLE
    Camera camera;
};

struct ColmapImage {
    long id = 0;
    Vec4 qvec = Vec4(1, 0, 0, 0); // (w, x, y, z), world-to-camera
    Vec3 tvec = Vec3::Zero();
    long cameraId = 0;
    std::string name;

    RigidPose pose() const { return {quaternionToRotation(qvec), tvec}; }
};

struct ColmapPoint {
    long id = 0;
    Vec3 position = Vec3::Zero();
    std::array<int, 3> rgb{0, 0, 0};
    double error = 0.0;
};

struct ColmapModel {
    std::vector<ColmapCamera> cameras;
    std::vector<ColmapImage> images;
    std::vector<ColmapPoint> points;

    const ColmapCamera &camera(long id) const {
        for (const auto &c : cameras)
            if (c.id == id)
                return c;
        throw InvalidInput("image references unknown camera id " + std::to_string(id));
    }
};

namespace detail {

inline Vec4 rawQuaternion(const Mat3 &r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0)
        q.coeffs() *= -1.0;
    return {q.w(), q.x(), q.y(), q.z()};
}

} // namespace detail

/// Unit quaternion (w >= 0) of a rotation matrix. Matrix -> quaternion ->
/// matrix is not a fixed point in floating point, so the map is iterated until
/// it cycles and the smallest quaternion of the cycle is returned. Writing the
/// rotation decoded from that quaternion reproduces it exactly.
inline Vec4 rotationToQuaternion(const Mat3 &r) {
    std::vector<Vec4> seen{detail::rawQuaternion(r)};
    for (int it = 0; it < 64; ++it) {
        const Vec4 next = detail::rawQuaternion(quaternionToRotation(seen.back()));
        const auto hit  = std::find(seen.begin(), seen.end(), next);
        if (hit != seen.end())
            return *std::min_element(hit, seen.end(), [](const Vec4 &a, const Vec4 &b) {
                return std::lexicographical_compare(a.data(), a.data() + 4, b.data(), b.data() + 4);
            });
        seen.push_back(next);
    }
    return seen.back();
}

inline ColmapImage makeColmapImage(long id, const RigidPose &pose, long cameraId, const std::string &name) {
    return {id, rotationToQuaternion(pose.rotation), pose.translation, cameraId, name};
}

namespace detail {

template <typename Fn>
void forEachRecord(const std::string &text, Fn &&fn) {
    std::istringstream in(text);
    std::size_t lineNo = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first != std::string::npos && line[first] == '#')
            continue;
        fn(line, lineNo);
    }
}

} // namespace detail

inline std::vector<ColmapCamera> parseColmapCameras(const std::string &text, const std::string &source) {
    std::vector<ColmapCamera> out;
    detail::forEachRecord(text, [&](const std::string &line, std::size_t no) {
        const auto tok = splitWhitespace(line);
        if (tok.empty())
            return;
        if (tok.size() < 4)
            throw ParseError(source, no, "camera record needs CAMERA_ID MODEL WIDTH HEIGHT PARAMS");
        ColmapCamera c;
        c.id               = parseInteger(tok[0], source, no);
        c.model            = tok[1];
        c.camera.width     = static_cast<int>(parseInteger(tok[2], source, no));
        c.camera.height    = static_cast<int>(parseInteger(tok[3], source, no));
        std::vector<double> params;
        for (std::size_t k = 4; k < tok.size(); ++k)
            params.push_back(parseDouble(tok[k], source, no));
        if (c.model == "SIMPLE_PINHOLE") {
            if (params.size() != 3)
                throw ParseError(source, no, "SIMPLE_PINHOLE takes f, cx, cy");
            c.camera.fx = c.camera.fy = params[0];
            c.camera.cx = params[1];
            c.camera.cy = params[2];
        } else if (c.model == "PINHOLE") {
            if (params.size() != 4)
                throw ParseError(source, no, "PINHOLE takes fx, fy, cx, cy");
            c.camera.fx = params[0];
            c.camera.fy = params[1];
            c.camera.cx = params[2];
            c.camera.cy = params[3];
        } else {
            throw UnsupportedFormat(source + ":" + std::to_string(no) + ": unsupported camera model " + c.model);
        }
        out.push_back(c);
    });
    return out;
}

inline std::vector<ColmapImage> parseColmapImages(const std::string &text, const std::string &source) {
    std::vector<ColmapImage> out;
    bool expectPoints = false;
    detail::forEachRecord(text, [&](const std::string &line, std::size_t no) {
        if (expectPoints) { // 2D keypoint line, possibly empty
            expectPoints = false;
            return;
        }
        const auto tok = splitWhitespace(line);
        if (tok.empty())
            return;
        if (tok.size() != 10)
            throw ParseError(source, no, "image record needs IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME");
        ColmapImage img;
        img.id = parseInteger(tok[0], source, no);
        for (int k = 0; k < 4; ++k)
            img.qvec(k) = parseDouble(tok[1 + k], source, no);
        for (int k = 0; k < 3; ++k)
            img.tvec(k) = parseDouble(tok[5 + k], source, no);
        img.cameraId = parseInteger(tok[8], source, no);
        img.name     = tok[9];
        if (!(img.qvec.norm() > 0.0))
            throw ParseError(source, no, "zero quaternion");
        out.push_back(img);
        expectPoints = true;
    });
    return out;
}

inline std::vector<ColmapPoint> parseColmapPoints(const std::string &text, const std::string &source) {
    std::vector<ColmapPoint> out;
    detail::forEachRecord(text, [&](const std::string &line, std::size_t no) {
        const auto tok = splitWhitespace(line);
        if (tok.empty())
            return;
        if (tok.size() < 8)
            throw ParseError(source, no, "point record needs POINT3D_ID X Y Z R G B ERROR");
        ColmapPoint p;
        p.id = parseInteger(tok[0], source, no);
        for (int k = 0; k < 3; ++k)
            p.position(k) = parseDouble(tok[1 + k], source, no);
        for (int k = 0; k < 3; ++k) {
            const long c = parseInteger(tok[4 + k], source, no);
            if (c < 0 || c > 255)
                throw ParseError(source, no, "color out of range");
            p.rgb[k] = static_cast<int>(c);
        }
        p.error = parseDouble(tok[7], source, no);
        out.push_back(p);
    });
    return out;
}

/// Reads cameras.txt, images.txt and points3D.txt from `dir`.
inline ColmapModel loadColmapText(const fs::path &dir) {
    ColmapModel m;
    const auto cams = dir / "cameras.txt", imgs = dir / "images.txt", pts = dir / "points3D.txt";
    m.cameras = parseColmapCameras(readTextFile(cams), cams.string());
    m.images  = parseColmapImages(readTextFile(imgs), imgs.string());
    m.points  = parseColmapPoints(readTextFile(pts), pts.string());
    for (const auto &img : m.images)
        (void)m.camera(img.cameraId);
    return m;
}

inline std::string formatColmapCameras(const std::vector<ColmapCamera> &cams) {
    std::string out = "# Camera list with one line of data per camera:\n"
                      "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
    for (const auto &c : cams) {
        out += std::to_string(c.id) + " " + c.model + " " + std::to_string(c.camera.width) + " " +
               std::to_string(c.camera.height);
        if (c.model == "SIMPLE_PINHOLE")
            out += " " + formatDouble(c.camera.fx);
        else
            out += " " + formatDouble(c.camera.fx) + " " + formatDouble(c.camera.fy);
        out += " " + formatDouble(c.camera.cx) + " " + formatDouble(c.camera.cy) + "\n";
    }
    return out;
}

inline std::string formatColmapImages(const std::vector<ColmapImage> &imgs) {
    std::string out = "# Image list with two lines of data per image:\n"
                      "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
                      "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
    for (const auto &img : imgs) {
        out += std::to_string(img.id);
        for (int k = 0; k < 4; ++k)
            out += " " + formatDouble(img.qvec(k));
        for (int k = 0; k < 3; ++k)
            out += " " + formatDouble(img.tvec(k));
        out += " " + std::to_string(img.cameraId) + " " + img.name + "\n\n";
    }
    return out;
}

inline std::string formatColmapPoints(const std::vector<ColmapPoint> &pts) {
    std::string out = "# 3D point list with one line of data per point:\n"
                      "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
    for (const auto &p : pts) {
        out += std::to_string(p.id);
        for (int k = 0; k < 3; ++k)
            out += " " + formatDouble(p.position(k));
        for (int k = 0; k < 3; ++k)
            out += " " + std::to_string(p.rgb[k]);
        out += " " + formatDouble(p.error) + "\n";
    }
    return out;
}

inline void writeColmapText(const ColmapModel &m, const fs::path &dir) {
    fs::create_directories(dir);
    writeTextFile(dir / "cameras.txt", formatColmapCameras(m.cameras));
    writeTextFile(dir / "images.txt", formatColmapImages(m.images));
    writeTextFile(dir / "points3D.txt", formatColmapPoints(m.points));
}

// ---------------------------------------------------------------------------
// pose files: one "qw qx qy qz tx ty tz" line per pose

inline std::string formatPose(const RigidPose &pose) {
    const Vec4 q = rotationToQuaternion(pose.rotation);
    std::string out;
    for (int k = 0; k < 4; ++k)
        out += formatDouble(q(k)) + " ";
    for (int k = 0; k < 3; ++k)
        out += formatDouble(pose.translation(k)) + (k < 2 ? " " : "\n");
    return out;
}

inline std::vector<RigidPose> parsePoses(const std::string &text, const std::string &source) {
    std::vector<RigidPose> out;
    detail::forEachRecord(text, [&](const std::string &line, std::size_t no) {
        const auto tok = splitWhitespace(line);
        if (tok.empty())
            return;
        if (tok.size() != 7)
            throw ParseError(source, no, "pose line needs qw qx qy qz tx ty tz");
        Vec4 q;
        Vec3 t;
        for (int k = 0; k < 4; ++k)
            q(k) = parseDouble(tok[k], source, no);
        for (int k = 0; k < 3; ++k)
            t(k) = parseDouble(tok[4 + k], source, no);
        if (!(q.norm() > 0.0))
            throw ParseError(source, no, "zero quaternion");
        out.push_back({quaternionToRotation(q), t});
    });
    return out;
}

inline std::vector<RigidPose> loadPoses(const fs::path &path) { return parsePoses(readTextFile(path), path.string()); }

} // namespace blursplat
