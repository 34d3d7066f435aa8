#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mssdepth/events.hpp"

namespace mss::synth {

// Fronto-parallel textured plane covering columns [x0, x1) and rows [y0, y1).
struct Plane {
    double depth = 1.0; // metres
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double period = 16.0; // stripe period in pixels

    friend bool operator==(const Plane&, const Plane&) = default;
};

struct SceneSpec {
    std::uint64_t seed = 0;
    events::Geometry geometry{64, 64};
    std::size_t n_windows = 8;
    std::uint64_t window_us = 50'000;
    double camera_velocity = 320.0; // pixels per second at 1 m
    double contrast_threshold = 0.3;
    double texture_contrast = 1.0; // peak log-intensity amplitude
    double binocular_baseline_px = 8.0; // disparity at 1 m
    bool binocular = true;
    double noise_rate_hz = 0.0; // spurious events per pixel per second
    std::vector<Plane> planes;

    void validate() const;
    std::uint64_t duration_us() const { return n_windows * window_us; }
    // Integer disparity of a plane.
    long disparity(const Plane& p) const;
};

// key = value text; planes are "plane.N = depth x0 y0 x1 y1 period".
SceneSpec parse_spec(std::istream& in, const std::string& source = "<spec>");
SceneSpec load_spec(const std::string& path);
void write_spec(std::ostream& out, const SceneSpec& spec, const std::string& key_prefix = "");

struct Scene {
    std::vector<events::Event> left;
    std::vector<events::Event> right; // empty for monocular scenes
    std::vector<events::DepthFrame> ground_truth;
};

Scene generate(const SceneSpec& spec);

struct Window {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
    std::string ground_truth; // path as written in the manifest
};

struct Manifest {
    std::string dir; // directory the manifest was read from
    events::Geometry geometry;
    std::uint64_t window_us = 0;
    std::string events_left;
    std::string events_right; // empty when monocular
    std::vector<Window> windows;

    // Paths in the manifest are relative to its directory.
    std::string resolve(const std::string& relative) const;
};

// Writes events, ground-truth frames and manifest.txt into out_dir and
// returns the manifest path.
std::string write_dataset(const SceneSpec& spec, const std::string& out_dir);

Manifest load_manifest(const std::string& path_or_dir);

} // namespace mss::synth
