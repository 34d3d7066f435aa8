#include "mssdepth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

#include "mssdepth/error.hpp"
#include "mssdepth/keyvalue.hpp"

namespace mss::synth {

namespace fs = std::filesystem;
using events::Event;
using events::format_double;

namespace {

std::string region_str(const Plane& p) {
    return "[x " + std::to_string(p.x0) + ".." + std::to_string(p.x1) + ", y " + std::to_string(p.y0) + ".." +
           std::to_string(p.y1) + ")";
}

Plane parse_plane(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.size() != 6) fail(ErrorKind::validation, "key '" + key + "': expected 'depth x0 y0 x1 y1 period'");
    Plane p;
    p.depth = kv::to_double(key, tok[0]);
    p.x0 = kv::to_u64(key, tok[1]);
    p.y0 = kv::to_u64(key, tok[2]);
    p.x1 = kv::to_u64(key, tok[3]);
    p.y1 = kv::to_u64(key, tok[4]);
    p.period = kv::to_double(key, tok[5]);
    return p;
}

double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Crossing times (seconds) and polarities of one pixel column of a plane.
// Log intensity is contrast * tri(z) with z = x / period + phase - rate * t
// and tri(z) = |4 frac(z) - 2| - 1.
struct Crossing {
    std::uint64_t t_us;
    int p;
};

std::vector<Crossing> column_crossings(const SceneSpec& spec, const Plane& plane, double phase, std::size_t x) {
    std::vector<Crossing> out;
    const double rate = spec.camera_velocity / (plane.depth * plane.period); // periods per second
    if (rate == 0.0) return out;
    const double duration = static_cast<double>(spec.duration_us()) * 1e-6;
    const double z0 = static_cast<double>(x) / plane.period + phase;
    const double z1 = z0 - rate * duration;
    const double lo = std::min(z0, z1), hi = std::max(z0, z1);
    const double c = spec.texture_contrast;
    const double theta = spec.contrast_threshold;
    const long kmax = static_cast<long>(std::floor(c / theta));
    for (long n = static_cast<long>(std::floor(lo)); n <= static_cast<long>(std::floor(hi)); ++n) {
        for (long k = -kmax; k <= kmax; ++k) {
            const double level = static_cast<double>(k) * theta;
            if (std::abs(level) >= c) continue; // touching a turning point is not a crossing
            // falling half of tri (f < 1/2), then rising half
            const double f_fall = (1.0 - level / c) / 4.0;
            const double f_rise = (level / c + 3.0) / 4.0;
            for (int half = 0; half < 2; ++half) {
                const double z = static_cast<double>(n) + (half == 0 ? f_fall : f_rise);
                if (!(z > lo && z < hi)) continue;
                const double t = (z0 - z) / rate;
                const auto t_us = static_cast<std::uint64_t>(std::floor(t * 1e6));
                if (t_us >= spec.duration_us()) continue;
                // dL/dt = c * tri'(z) * dz/dt with dz/dt = -rate
                const int slope = half == 0 ? -1 : 1;
                out.push_back({t_us, -slope * (rate > 0 ? 1 : -1)});
            }
        }
    }
    return out;
}

void sort_events(std::vector<Event>& ev) {
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) {
        return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
    });
}

void add_noise(const SceneSpec& spec, std::mt19937_64& rng, std::vector<Event>& ev) {
    if (spec.noise_rate_hz <= 0.0) return;
    const auto& g = spec.geometry;
    const double expected = spec.noise_rate_hz * static_cast<double>(g.height * g.width) *
                            static_cast<double>(spec.duration_us()) * 1e-6;
    const auto n = static_cast<std::uint64_t>(std::llround(expected));
    for (std::uint64_t i = 0; i < n; ++i) {
        Event e;
        e.t = rng() % spec.duration_us();
        e.x = static_cast<std::uint32_t>(rng() % g.width);
        e.y = static_cast<std::uint32_t>(rng() % g.height);
        e.p = (rng() & 1) ? 1 : -1;
        ev.push_back(e);
    }
}

std::string window_gt_name(std::size_t w) {
    std::string n = std::to_string(w);
    return "gt_" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n + ".txt";
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
        out << text;
        if (!out) fail(ErrorKind::io, "write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

} // namespace

long SceneSpec::disparity(const Plane& p) const { return std::lround(binocular_baseline_px / p.depth); }

void SceneSpec::validate() const {
    const auto& g = geometry;
    if (g.height == 0 || g.width == 0) fail(ErrorKind::validation, "scene geometry must be non-empty");
    if (n_windows == 0) fail(ErrorKind::validation, "n_windows must be >= 1");
    if (window_us == 0) fail(ErrorKind::validation, "window length must be positive");
    if (!(contrast_threshold > 0.0)) fail(ErrorKind::validation, "contrast_threshold must be > 0");
    if (!(texture_contrast > 0.0)) fail(ErrorKind::validation, "texture_contrast must be > 0");
    if (!std::isfinite(camera_velocity)) fail(ErrorKind::validation, "camera_velocity must be finite");
    if (!(binocular_baseline_px >= 0.0)) fail(ErrorKind::validation, "binocular_baseline_px must be >= 0");
    if (!(noise_rate_hz >= 0.0)) fail(ErrorKind::validation, "noise_rate_hz must be >= 0");
    if (planes.empty()) fail(ErrorKind::validation, "scene needs at least one plane");
    std::vector<int> owner(g.height * g.width, -1);
    for (std::size_t i = 0; i < planes.size(); ++i) {
        const auto& p = planes[i];
        if (!(p.depth > 0.0) || !std::isfinite(p.depth)) {
            fail(ErrorKind::validation, "plane " + std::to_string(i) + ": depth must be > 0");
        }
        if (!(p.period > 0.0)) fail(ErrorKind::validation, "plane " + std::to_string(i) + ": period must be > 0");
        if (p.x0 >= p.x1 || p.y0 >= p.y1 || p.x1 > g.width || p.y1 > g.height) {
            fail(ErrorKind::validation, "plane " + std::to_string(i) + " region " + region_str(p) +
                                            " is empty or outside the " + std::to_string(g.height) + "x" +
                                            std::to_string(g.width) + " frame");
        }
        for (std::size_t y = p.y0; y < p.y1; ++y) {
            for (std::size_t x = p.x0; x < p.x1; ++x) {
                int& o = owner[y * g.width + x];
                if (o >= 0) {
                    fail(ErrorKind::validation, "plane " + std::to_string(i) + " region " + region_str(p) +
                                                    " overlaps plane " + std::to_string(o) + " region " +
                                                    region_str(planes[static_cast<std::size_t>(o)]) + " at (x=" +
                                                    std::to_string(x) + ", y=" + std::to_string(y) + ")");
                }
                o = static_cast<int>(i);
            }
        }
    }
    for (std::size_t i = 0; i < owner.size(); ++i) {
        if (owner[i] < 0) {
            fail(ErrorKind::validation, "planes do not cover pixel (x=" + std::to_string(i % g.width) + ", y=" +
                                            std::to_string(i / g.width) + ")");
        }
    }
}

SceneSpec parse_spec(std::istream& in, const std::string& source) {
    SceneSpec s;
    std::vector<std::pair<std::size_t, Plane>> planes;
    for (const auto& e : kv::parse(in, source)) {
        const auto& k = e.key;
        const auto& v = e.value;
        if (k == "seed") s.seed = kv::to_u64(k, v);
        else if (k == "height") s.geometry.height = kv::to_u64(k, v);
        else if (k == "width") s.geometry.width = kv::to_u64(k, v);
        else if (k == "n_windows") s.n_windows = kv::to_u64(k, v);
        else if (k == "window_ms") {
            const double us = kv::to_double(k, v) * 1000.0;
            if (us <= 0.0 || us != std::floor(us)) fail(ErrorKind::validation, "window_ms must be a positive whole number of microseconds");
            s.window_us = static_cast<std::uint64_t>(us);
        } else if (k == "camera_velocity") s.camera_velocity = kv::to_double(k, v);
        else if (k == "contrast_threshold") s.contrast_threshold = kv::to_double(k, v);
        else if (k == "texture_contrast") s.texture_contrast = kv::to_double(k, v);
        else if (k == "binocular_baseline_px") s.binocular_baseline_px = kv::to_double(k, v);
        else if (k == "binocular") s.binocular = kv::to_bool(k, v);
        else if (k == "noise_rate_hz") s.noise_rate_hz = kv::to_double(k, v);
        else if (k.rfind("plane.", 0) == 0) planes.emplace_back(kv::to_u64(k, k.substr(6)), parse_plane(k, v));
        else fail(ErrorKind::validation, source + ":" + std::to_string(e.line) + ": unknown key '" + k + "'");
    }
    std::sort(planes.begin(), planes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [idx, p] : planes) s.planes.push_back(p);
    s.validate();
    return s;
}

SceneSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open scene spec " + path);
    return parse_spec(in, path);
}

void write_spec(std::ostream& out, const SceneSpec& s, const std::string& pre) {
    out << pre << "seed = " << s.seed << '\n';
    out << pre << "height = " << s.geometry.height << '\n';
    out << pre << "width = " << s.geometry.width << '\n';
    out << pre << "n_windows = " << s.n_windows << '\n';
    out << pre << "window_ms = " << format_double(static_cast<double>(s.window_us) / 1000.0) << '\n';
    out << pre << "camera_velocity = " << format_double(s.camera_velocity) << '\n';
    out << pre << "contrast_threshold = " << format_double(s.contrast_threshold) << '\n';
    out << pre << "texture_contrast = " << format_double(s.texture_contrast) << '\n';
    out << pre << "binocular = " << (s.binocular ? "true" : "false") << '\n';
    out << pre << "binocular_baseline_px = " << format_double(s.binocular_baseline_px) << '\n';
    out << pre << "noise_rate_hz = " << format_double(s.noise_rate_hz) << '\n';
    for (std::size_t i = 0; i < s.planes.size(); ++i) {
        const auto& p = s.planes[i];
        out << pre << "plane." << i << " = " << format_double(p.depth) << ' ' << p.x0 << ' ' << p.y0 << ' ' << p.x1
            << ' ' << p.y1 << ' ' << format_double(p.period) << '\n';
    }
}

Scene generate(const SceneSpec& spec) {
    spec.validate();
    const auto& g = spec.geometry;
    std::mt19937_64 rng(spec.seed);
    std::vector<double> phase;
    for (std::size_t i = 0; i < spec.planes.size(); ++i) phase.push_back(uniform(rng));

    Scene scene;
    for (std::size_t i = 0; i < spec.planes.size(); ++i) {
        const auto& p = spec.planes[i];
        const long d = spec.disparity(p);
        for (std::size_t x = p.x0; x < p.x1; ++x) {
            const auto crossings = column_crossings(spec, p, phase[i], x);
            const long xr = static_cast<long>(x) - d;
            const bool right_visible = spec.binocular && xr >= 0 && xr < static_cast<long>(g.width);
            for (std::size_t y = p.y0; y < p.y1; ++y) {
                for (const auto& c : crossings) {
                    const Event e{c.t_us, static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), c.p};
                    scene.left.push_back(e);
                    if (right_visible) scene.right.push_back({e.t, static_cast<std::uint32_t>(xr), e.y, e.p});
                }
            }
        }
    }
    add_noise(spec, rng, scene.left);
    if (spec.binocular) add_noise(spec, rng, scene.right);
    sort_events(scene.left);
    sort_events(scene.right);

    Tensor depth({g.height, g.width});
    auto d = depth.mutable_data();
    for (const auto& p : spec.planes)
        for (std::size_t y = p.y0; y < p.y1; ++y)
            for (std::size_t x = p.x0; x < p.x1; ++x) d[y * g.width + x] = p.depth;
    for (std::size_t w = 0; w < spec.n_windows; ++w) {
        events::DepthFrame f;
        f.depth = depth.clone();
        f.valid.assign(g.height * g.width, 1);
        f.t = (w + 1) * spec.window_us;
        scene.ground_truth.push_back(std::move(f));
    }
    return scene;
}

std::string Manifest::resolve(const std::string& relative) const {
    const fs::path p(relative);
    return p.is_absolute() ? relative : (fs::path(dir) / p).string();
}

std::string write_dataset(const SceneSpec& spec, const std::string& out_dir) {
    const Scene scene = generate(spec);
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + out_dir + ": " + ec.message());

    events::save_events((dir / "events_left.csv").string(), scene.left);
    if (spec.binocular) events::save_events((dir / "events_right.csv").string(), scene.right);
    for (std::size_t w = 0; w < scene.ground_truth.size(); ++w) {
        events::save_depth((dir / window_gt_name(w)).string(), scene.ground_truth[w]);
    }

    std::ostringstream m;
    m << "format = mssdepth-dataset-1\n";
    m << "height = " << spec.geometry.height << '\n';
    m << "width = " << spec.geometry.width << '\n';
    m << "window_us = " << spec.window_us << '\n';
    m << "n_windows = " << spec.n_windows << '\n';
    m << "events_left = events_left.csv\n";
    m << "events_right = " << (spec.binocular ? "events_right.csv" : "none") << '\n';
    for (std::size_t w = 0; w < spec.n_windows; ++w) {
        m << "window." << w << " = " << w * spec.window_us << ' ' << (w + 1) * spec.window_us << ' '
          << window_gt_name(w) << '\n';
    }
    write_spec(m, spec, "spec.");
    const fs::path manifest = dir / "manifest.txt";
    write_text_atomic(manifest, m.str());
    return manifest.string();
}

Manifest load_manifest(const std::string& path_or_dir) {
    fs::path path(path_or_dir);
    if (fs::is_directory(path)) path /= "manifest.txt";
    Manifest m;
    m.dir = path.parent_path().string();
    std::size_t n_windows = 0;
    bool have_windows = false;
    std::vector<std::pair<std::size_t, Window>> windows;
    for (const auto& e : kv::load(path.string())) {
        const auto& k = e.key;
        if (k == "format") {
            if (e.value != "mssdepth-dataset-1") fail(ErrorKind::parse, path.string() + ": unsupported format '" + e.value + "'");
        } else if (k == "height") m.geometry.height = kv::to_u64(k, e.value);
        else if (k == "width") m.geometry.width = kv::to_u64(k, e.value);
        else if (k == "window_us") m.window_us = kv::to_u64(k, e.value);
        else if (k == "n_windows") {
            n_windows = kv::to_u64(k, e.value);
            have_windows = true;
        } else if (k == "events_left") m.events_left = e.value;
        else if (k == "events_right") m.events_right = e.value == "none" ? "" : e.value;
        else if (k.rfind("window.", 0) == 0) {
            std::istringstream ss(e.value);
            Window w;
            if (!(ss >> w.start >> w.end >> w.ground_truth) || w.end <= w.start) {
                fail(ErrorKind::parse, path.string() + ":" + std::to_string(e.line) + ": bad window entry '" + e.value + "'");
            }
            windows.emplace_back(kv::to_u64(k, k.substr(7)), w);
        } else if (k.rfind("spec.", 0) != 0) {
            fail(ErrorKind::parse, path.string() + ":" + std::to_string(e.line) + ": unknown key '" + k + "'");
        }
    }
    std::sort(windows.begin(), windows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].first != i) fail(ErrorKind::parse, path.string() + ": window indices are not 0.." + std::to_string(windows.size() - 1));
        m.windows.push_back(windows[i].second);
    }
    if (m.geometry.height == 0 || m.geometry.width == 0 || m.window_us == 0 || m.events_left.empty()) {
        fail(ErrorKind::parse, path.string() + ": manifest lacks geometry, window_us or events_left");
    }
    if (have_windows && n_windows != m.windows.size()) {
        fail(ErrorKind::parse, path.string() + ": n_windows = " + std::to_string(n_windows) + " but " +
                                   std::to_string(m.windows.size()) + " windows are listed");
    }
    return m;
}

} // namespace mss::synth
