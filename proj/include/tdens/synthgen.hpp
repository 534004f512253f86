#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tdens/errors.hpp"
#include "tdens/io.hpp"
#include "tdens/rng.hpp"
#include "tdens/types.hpp"

namespace tdens {

/// Synthetic road scene: vertical lanes, vehicles as filled rectangles whose
/// size shrinks linearly from the bottom row up to the horizon row, so the
/// same physical vehicle looks small when far and large when near.
struct SceneConfig {
    int width = 160;
    int height = 120;
    int n_lanes = 3;
    int horizon_row = 20;      ///< row where vehicles are smallest
    double near_scale = 1.0;   ///< size multiplier at the bottom row
    double far_scale = 0.3;    ///< size multiplier at the horizon row
    int vehicle_w = 24;        ///< base vehicle width at near scale
    int vehicle_h = 16;        ///< base vehicle height at near scale
    double arrival_rate = 5.0; ///< expected vehicles per frame (Poisson)
    int intensity_fg_lo = 90;  ///< per-vehicle intensity range
    int intensity_fg_hi = 230;
    int intensity_bg = 30;
    double noise_sigma = 3.0;  ///< Gaussian pixel noise added to every frame
    int n_frames = 10;
    std::uint64_t seed = 0;
    double max_iou = 0.3;      ///< in-lane pairwise overlap cap
    double region_length = 60.0; ///< physical ROI length for traffic density
};

inline void validate_scene_config(const SceneConfig& cfg) {
    const auto fail = [](const std::string& msg) { throw ConfigError("scene config: " + msg); };
    if (cfg.width < 1 || cfg.height < 1) fail("frame dimensions must be at least 1x1");
    if (cfg.n_lanes < 1) fail("n_lanes must be at least 1");
    if (cfg.horizon_row < 0 || cfg.horizon_row >= cfg.height)
        fail("horizon_row must lie inside the frame");
    if (!(cfg.far_scale > 0.0) || !(cfg.near_scale > cfg.far_scale))
        fail("scales must satisfy 0 < far_scale < near_scale");
    if (cfg.vehicle_w < 1 || cfg.vehicle_h < 1) fail("base vehicle size must be at least 1x1");
    if (cfg.arrival_rate < 0.0) fail("arrival_rate must be non-negative");
    if (cfg.intensity_bg < 0 || cfg.intensity_bg > 255) fail("intensity_bg must be in [0,255]");
    if (cfg.intensity_fg_lo < 0 || cfg.intensity_fg_hi > 255 ||
        cfg.intensity_fg_lo > cfg.intensity_fg_hi)
        fail("foreground intensity range must satisfy 0 <= lo <= hi <= 255");
    if (cfg.noise_sigma < 0.0) fail("noise_sigma must be non-negative");
    if (cfg.n_frames < 1) fail("n_frames must be at least 1");
    if (cfg.max_iou < 0.0 || cfg.max_iou > 1.0) fail("max_iou must be in [0,1]");
    if (!(cfg.region_length > 0.0)) fail("region_length must be positive");
    const int w_near = std::max(1, static_cast<int>(std::lround(cfg.vehicle_w * cfg.near_scale)));
    const int h_near = std::max(1, static_cast<int>(std::lround(cfg.vehicle_h * cfg.near_scale)));
    if (w_near > cfg.width || h_near > cfg.height)
        fail("vehicle too large for frame at requested scale");
}

inline nlohmann::json to_json(const SceneConfig& cfg) {
    return {
        {"arrival_rate", cfg.arrival_rate},
        {"far_scale", cfg.far_scale},
        {"height", cfg.height},
        {"horizon_row", cfg.horizon_row},
        {"intensity_bg", cfg.intensity_bg},
        {"intensity_fg_hi", cfg.intensity_fg_hi},
        {"intensity_fg_lo", cfg.intensity_fg_lo},
        {"max_iou", cfg.max_iou},
        {"n_frames", cfg.n_frames},
        {"n_lanes", cfg.n_lanes},
        {"near_scale", cfg.near_scale},
        {"noise_sigma", cfg.noise_sigma},
        {"region_length", cfg.region_length},
        {"seed", cfg.seed},
        {"vehicle_h", cfg.vehicle_h},
        {"vehicle_w", cfg.vehicle_w},
        {"width", cfg.width},
    };
}

/// Parse a SceneConfig. Absent keys keep their defaults; unknown keys are
/// rejected so config typos fail loudly.
inline SceneConfig scene_config_from_json(const nlohmann::json& j) {
    static const char* known[] = {
        "arrival_rate", "far_scale", "height", "horizon_row", "intensity_bg",
        "intensity_fg_hi", "intensity_fg_lo", "max_iou", "n_frames", "n_lanes",
        "near_scale", "noise_sigma", "region_length", "seed", "vehicle_h",
        "vehicle_w", "width",
    };
    if (!j.is_object()) throw ConfigError("scene config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(std::begin(known), std::end(known),
                         [&](const char* k) { return key == k; }) == std::end(known))
            throw ConfigError("scene config: unknown key '" + key + "'");
    }
    SceneConfig cfg;
    try {
        cfg.width = j.value("width", cfg.width);
        cfg.height = j.value("height", cfg.height);
        cfg.n_lanes = j.value("n_lanes", cfg.n_lanes);
        cfg.horizon_row = j.value("horizon_row", cfg.horizon_row);
        cfg.near_scale = j.value("near_scale", cfg.near_scale);
        cfg.far_scale = j.value("far_scale", cfg.far_scale);
        cfg.vehicle_w = j.value("vehicle_w", cfg.vehicle_w);
        cfg.vehicle_h = j.value("vehicle_h", cfg.vehicle_h);
        cfg.arrival_rate = j.value("arrival_rate", cfg.arrival_rate);
        cfg.intensity_fg_lo = j.value("intensity_fg_lo", cfg.intensity_fg_lo);
        cfg.intensity_fg_hi = j.value("intensity_fg_hi", cfg.intensity_fg_hi);
        cfg.intensity_bg = j.value("intensity_bg", cfg.intensity_bg);
        cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
        cfg.n_frames = j.value("n_frames", cfg.n_frames);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.max_iou = j.value("max_iou", cfg.max_iou);
        cfg.region_length = j.value("region_length", cfg.region_length);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scene config: bad value type: ") + e.what());
    }
    validate_scene_config(cfg);
    return cfg;
}

inline SceneConfig load_scene_config(const std::filesystem::path& path) {
    try {
        return scene_config_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("scene config: malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline double box_iou(const BBox& a, const BBox& b) {
    const std::int64_t ix0 = std::max(a.x0, b.x0);
    const std::int64_t iy0 = std::max(a.y0, b.y0);
    const std::int64_t ix1 = std::min(a.x1, b.x1);
    const std::int64_t iy1 = std::min(a.y1, b.y1);
    if (ix0 >= ix1 || iy0 >= iy1) return 0.0;
    const std::int64_t inter = (ix1 - ix0) * (iy1 - iy0);
    const std::int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

/// Overlap capping that remembers which input each kept box came from.
inline std::vector<std::pair<std::size_t, BBox>> cap_lane_overlap_indexed(
    const std::vector<BBox>& boxes, double max_iou, int frame_height) {
    std::vector<std::pair<std::size_t, BBox>> kept;
    const auto fits = [&](const BBox& b) {
        for (const auto& [idx, a] : kept)
            if (box_iou(a, b) > max_iou) return false;
        return true;
    };
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        bool placed = false;
        BBox b = boxes[i];
        while (b.y1 <= frame_height) { // slide down
            if (fits(b)) {
                placed = true;
                break;
            }
            ++b.y0;
            ++b.y1;
        }
        if (!placed) {
            b = boxes[i];
            while (b.y0 >= 0) { // slide up
                if (fits(b)) {
                    placed = true;
                    break;
                }
                --b.y0;
                --b.y1;
            }
        }
        if (placed) kept.emplace_back(i, b);
    }
    return kept;
}

} // namespace detail

/// Cap pairwise overlap within one lane. Boxes are processed in the given
/// order; each box keeps its place if it already satisfies the cap against
/// all accepted boxes, otherwise it slides down one pixel at a time, then up
/// from its original position, and is dropped when no in-frame position
/// works. Deterministic, no randomness.
inline std::vector<BBox> cap_lane_overlap(const std::vector<BBox>& boxes, double max_iou,
                                          int frame_height) {
    std::vector<BBox> out;
    for (auto& [idx, b] : detail::cap_lane_overlap_indexed(boxes, max_iou, frame_height))
        out.push_back(b);
    return out;
}

struct Scene {
    Frame background;
    std::vector<Frame> frames;
    std::vector<Annotation> annotations; ///< one entry per frame, boxes may be empty
};

namespace detail {

inline double row_scale(const SceneConfig& cfg, int row) {
    if (cfg.height - 1 == cfg.horizon_row) return cfg.near_scale;
    const double t = static_cast<double>(row - cfg.horizon_row) /
                     static_cast<double>(cfg.height - 1 - cfg.horizon_row);
    return cfg.far_scale + (cfg.near_scale - cfg.far_scale) * t;
}

inline std::string frame_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d", index);
    return buf;
}

struct PlacedVehicle {
    BBox box;
    int lane = 0;
    int intensity = 0;
};

} // namespace detail

/// Generate the whole scene. Frame i draws all of its randomness from the
/// stream (cfg.seed, i + 1), so frames can be produced in any order — or in
/// parallel — with identical results. The background is noise-free; frames
/// add Gaussian pixel noise on top of background and vehicles.
inline Scene generate_scene(const SceneConfig& cfg) {
    validate_scene_config(cfg);
    Scene scene;
    scene.background = make_frame(cfg.width, cfg.height,
                                  static_cast<std::uint8_t>(cfg.intensity_bg));
    scene.frames.reserve(static_cast<std::size_t>(cfg.n_frames));
    scene.annotations.reserve(static_cast<std::size_t>(cfg.n_frames));

    for (int i = 0; i < cfg.n_frames; ++i) {
        Xorshift64Star rng(cfg.seed, static_cast<std::uint64_t>(i) + 1);
        const int n_vehicles = rng.poisson(cfg.arrival_rate);

        // Draw order per vehicle is fixed: lane, anchor row, intensity, x.
        std::vector<std::vector<detail::PlacedVehicle>> lanes(
            static_cast<std::size_t>(cfg.n_lanes));
        for (int v = 0; v < n_vehicles; ++v) {
            const int lane = static_cast<int>(rng.uniform_int(
                static_cast<std::uint64_t>(cfg.n_lanes)));
            const int anchor = cfg.horizon_row + static_cast<int>(rng.uniform_int(
                static_cast<std::uint64_t>(cfg.height - cfg.horizon_row)));
            const int intensity = cfg.intensity_fg_lo + static_cast<int>(rng.uniform_int(
                static_cast<std::uint64_t>(cfg.intensity_fg_hi - cfg.intensity_fg_lo + 1)));
            const double s = detail::row_scale(cfg, anchor);
            const int w = std::max(1, static_cast<int>(std::lround(cfg.vehicle_w * s)));
            const int h = std::max(1, static_cast<int>(std::lround(cfg.vehicle_h * s)));

            BBox box;
            box.y1 = anchor + 1;
            box.y0 = box.y1 - h;
            if (box.y0 < 0) { // too close to the horizon for its height: push down
                box.y0 = 0;
                box.y1 = h;
            }
            const int lane_x0 = lane * cfg.width / cfg.n_lanes;
            const int lane_x1 = (lane + 1) * cfg.width / cfg.n_lanes;
            const int lane_w = lane_x1 - lane_x0;
            if (w <= lane_w) {
                box.x0 = lane_x0 + static_cast<int>(rng.uniform_int(
                    static_cast<std::uint64_t>(lane_w - w + 1)));
            } else { // wider than its lane: center it, clamped into the frame
                box.x0 = std::clamp(lane_x0 + (lane_w - w) / 2, 0, cfg.width - w);
            }
            box.x1 = box.x0 + w;
            lanes[static_cast<std::size_t>(lane)].push_back(
                detail::PlacedVehicle{box, lane, intensity});
        }

        // Enforce the in-lane overlap cap, far-to-near within each lane.
        std::vector<detail::PlacedVehicle> placed;
        for (auto& lane_vehicles : lanes) {
            std::stable_sort(lane_vehicles.begin(), lane_vehicles.end(),
                             [](const detail::PlacedVehicle& a, const detail::PlacedVehicle& b) {
                                 return a.box.y1 < b.box.y1;
                             });
            std::vector<BBox> boxes;
            boxes.reserve(lane_vehicles.size());
            for (const auto& pv : lane_vehicles) boxes.push_back(pv.box);
            for (const auto& [idx, b] :
                 detail::cap_lane_overlap_indexed(boxes, cfg.max_iou, cfg.height)) {
                detail::PlacedVehicle pv = lane_vehicles[idx];
                pv.box = b;
                placed.push_back(pv);
            }
        }

        // Painter's order: far (small, high) first, near (large, low) last.
        std::stable_sort(placed.begin(), placed.end(),
                         [](const detail::PlacedVehicle& a, const detail::PlacedVehicle& b) {
                             if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
                             return a.box.x0 < b.box.x0;
                         });

        Frame frame = scene.background;
        Annotation ann;
        ann.frame_id = detail::frame_name(i);
        for (const detail::PlacedVehicle& pv : placed) {
            for (int y = pv.box.y0; y < pv.box.y1; ++y)
                for (int x = pv.box.x0; x < pv.box.x1; ++x)
                    frame.at(x, y) = static_cast<std::uint8_t>(pv.intensity);
            ann.boxes.push_back(pv.box);
        }
        if (cfg.noise_sigma > 0.0) {
            for (std::size_t p = 0; p < frame.pixels.size(); ++p) {
                const double noisy = frame.pixels[p] + cfg.noise_sigma * rng.gaussian();
                frame.pixels[p] = static_cast<std::uint8_t>(
                    std::clamp(static_cast<int>(std::lround(noisy)), 0, 255));
            }
        }
        scene.frames.push_back(std::move(frame));
        scene.annotations.push_back(std::move(ann));
    }
    return scene;
}

/// Write background, frames, annotations and the dataset manifest under
/// `out_dir`. The manifest's ROI covers the full frame and carries the
/// config's region length.
inline DatasetManifest write_dataset(const Scene& scene, const SceneConfig& cfg,
                                     const std::filesystem::path& out_dir) {
    DatasetManifest manifest;
    manifest.annotations_path = "annotations.csv";
    manifest.background_path = "background.pgm";
    manifest.roi = RectI{0, 0, cfg.width, cfg.height};
    manifest.region_length = cfg.region_length;

    save_frame(scene.background, out_dir / "background.pgm");
    for (std::size_t i = 0; i < scene.frames.size(); ++i) {
        const std::string name = detail::frame_name(static_cast<int>(i));
        const std::string rel = "frames/" + name + ".pgm";
        save_frame(scene.frames[i], out_dir / rel);
        manifest.frames.push_back(FrameEntry{name, rel});
    }
    save_annotations(scene.annotations, out_dir / "annotations.csv");
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

} // namespace tdens
