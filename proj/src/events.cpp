#include "mssdepth/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mssdepth/error.hpp"

namespace mss::events {

namespace {

constexpr const char* kHeader = "t_us,x,y,p";

template <class U>
bool parse_unsigned(std::string_view s, U& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string line_error(std::size_t line, const std::string& what) {
    return "line " + std::to_string(line) + ": " + what;
}

void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

void check_bounds(std::span<const Event> events, const Geometry& g) {
    for (const auto& e : events) {
        if (e.x >= g.width || e.y >= g.height) {
            fail(ErrorKind::bounds, "event at (x=" + std::to_string(e.x) + ", y=" + std::to_string(e.y) +
                                        ", t=" + std::to_string(e.t) + ") outside " + std::to_string(g.height) + "x" +
                                        std::to_string(g.width) + " sensor");
        }
    }
}

void check_options(const StackOptions& opts) {
    if (opts.steps < 1) fail(ErrorKind::argument, "stacking needs T >= 1");
    if (opts.window_len == 0) fail(ErrorKind::argument, "stacking window length must be positive");
    if (opts.window_len % opts.steps != 0) {
        fail(ErrorKind::argument, "window length " + std::to_string(opts.window_len) + " us is not divisible by T=" +
                                      std::to_string(opts.steps));
    }
    if (opts.geometry.height == 0 || opts.geometry.width == 0) fail(ErrorKind::argument, "empty sensor geometry");
}

// Per-sub-bin counts [T, 2, H, W]: bin tau holds only the events of its own
// slice of the window.
std::vector<double> bin_counts(std::span<const Event> events, const StackOptions& opts) {
    const auto& g = opts.geometry;
    const std::size_t plane = g.height * g.width;
    const std::uint64_t bin_len = opts.window_len / opts.steps;
    const std::uint64_t end = opts.window_start + opts.window_len;
    std::vector<double> bins(opts.steps * 2 * plane, 0.0);
    for (const auto& e : events) {
        if (e.t < opts.window_start || e.t >= end) continue;
        const std::size_t tau = static_cast<std::size_t>((e.t - opts.window_start) / bin_len);
        const std::size_t c = e.p > 0 ? 0 : 1;
        bins[(tau * 2 + c) * plane + e.y * g.width + e.x] += 1.0;
    }
    return bins;
}

void binarize(Tensor& t) {
    for (double& v : t.mutable_data()) v = std::min(v, 1.0);
}

} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::vector<Event> parse_events(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::parse, line_error(1, "missing header \"t_us,x,y,p\""));
    strip_cr(line);
    if (line != kHeader) fail(ErrorKind::parse, line_error(1, "expected header \"t_us,x,y,p\", got \"" + line + "\""));

    std::vector<Event> events;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        std::string_view rest(line);
        std::string_view fields[4];
        std::size_t n = 0;
        while (true) {
            auto comma = rest.find(',');
            if (n == 4) {
                n = 5;
                break;
            }
            fields[n++] = rest.substr(0, comma);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (n != 4) fail(ErrorKind::parse, line_error(line_no, "expected 4 comma-separated fields"));
        Event e;
        unsigned p = 0;
        if (!parse_unsigned(fields[0], e.t)) fail(ErrorKind::parse, line_error(line_no, "bad timestamp"));
        if (!parse_unsigned(fields[1], e.x)) fail(ErrorKind::parse, line_error(line_no, "bad x coordinate"));
        if (!parse_unsigned(fields[2], e.y)) fail(ErrorKind::parse, line_error(line_no, "bad y coordinate"));
        if (!parse_unsigned(fields[3], p) || p > 1) {
            fail(ErrorKind::parse, line_error(line_no, "polarity must be 0 or 1, got \"" + std::string(fields[3]) + "\""));
        }
        e.p = p == 1 ? 1 : -1;
        if (!events.empty() && e.t < events.back().t) {
            fail(ErrorKind::ordering, line_error(line_no, "timestamp " + std::to_string(e.t) + " precedes " +
                                                              std::to_string(events.back().t)));
        }
        events.push_back(e);
    }
    return events;
}

std::vector<Event> load_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open event file '" + path + "'");
    try {
        return parse_events(in);
    } catch (const Error& e) {
        fail(e.kind(), path + ": " + e.what());
    }
}

void write_events(std::ostream& out, std::span<const Event> events) {
    out << kHeader << '\n';
    for (const auto& e : events) out << e.t << ',' << e.x << ',' << e.y << ',' << (e.p > 0 ? 1 : 0) << '\n';
}

void save_events(const std::string& path, std::span<const Event> events) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    write_events(out, events);
    if (!out) fail(ErrorKind::io, "write to '" + path + "' failed");
}

std::span<const Event> window_slice(std::span<const Event> events, std::uint64_t window_start,
                                    std::uint64_t window_end) {
    auto lo = std::lower_bound(events.begin(), events.end(), window_start,
                               [](const Event& e, std::uint64_t t) { return e.t < t; });
    auto hi = std::lower_bound(lo, events.end(), window_end, [](const Event& e, std::uint64_t t) { return e.t < t; });
    return {lo, hi};
}

StackedTensor cumulative_stack(std::span<const Event> events, const StackOptions& opts) {
    check_options(opts);
    check_bounds(events, opts.geometry);
    auto counts = bin_counts(events, opts);
    const std::size_t frame = 2 * opts.geometry.height * opts.geometry.width;
    for (std::size_t tau = 1; tau < opts.steps; ++tau)
        for (std::size_t i = 0; i < frame; ++i) counts[tau * frame + i] += counts[(tau - 1) * frame + i];
    StackedTensor out{Tensor({opts.steps, 2, opts.geometry.height, opts.geometry.width}, std::move(counts)),
                      opts.window_start, opts.window_len};
    if (opts.binarize) binarize(out.data);
    return out;
}

StackedTensor repeat_stack(std::span<const Event> events, const StackOptions& opts) {
    check_options(opts);
    check_bounds(events, opts.geometry);
    StackOptions single = opts;
    single.steps = 1;
    single.binarize = false;
    auto hist = bin_counts(events, single);
    const std::size_t frame = hist.size();
    std::vector<double> data(opts.steps * frame);
    for (std::size_t tau = 0; tau < opts.steps; ++tau) std::copy(hist.begin(), hist.end(), data.begin() + tau * frame);
    StackedTensor out{Tensor({opts.steps, 2, opts.geometry.height, opts.geometry.width}, std::move(data)),
                      opts.window_start, opts.window_len};
    if (opts.binarize) binarize(out.data);
    return out;
}

StackedTensor stack(std::span<const Event> events, const StackOptions& opts, StackMode mode) {
    return mode == StackMode::cumulative ? cumulative_stack(events, opts) : repeat_stack(events, opts);
}

StackedTensor binocular_concat(const StackedTensor& left, const StackedTensor& right) {
    const auto& a = left.data.shape();
    const auto& b = right.data.shape();
    if (a.size() != 4 || b.size() != 4) fail(ErrorKind::dimension, "binocular_concat needs [T,C,H,W] inputs");
    if (a[1] != 2 || b[1] != 2) fail(ErrorKind::dimension, "binocular_concat needs two polarity channels per camera");
    if (a[0] != b[0]) fail(ErrorKind::dimension, "binocular_concat: time steps differ (axis 0)");
    if (a[2] != b[2]) fail(ErrorKind::dimension, "binocular_concat: heights differ (axis 2)");
    if (a[3] != b[3]) fail(ErrorKind::dimension, "binocular_concat: widths differ (axis 3)");
    if (left.window_start != right.window_start || left.window_len != right.window_len) {
        fail(ErrorKind::dimension, "binocular_concat: camera windows differ");
    }
    const std::size_t half = 2 * a[2] * a[3];
    auto l = left.data.data();
    auto r = right.data.data();
    std::vector<double> data(2 * l.size());
    for (std::size_t t = 0; t < a[0]; ++t) {
        std::copy_n(l.begin() + t * half, half, data.begin() + 2 * t * half);
        std::copy_n(r.begin() + t * half, half, data.begin() + (2 * t + 1) * half);
    }
    return {Tensor({a[0], 4, a[2], a[3]}, std::move(data)), left.window_start, left.window_len};
}

std::pair<StackedTensor, StackedTensor> split_binocular(const StackedTensor& both) {
    const auto& s = both.data.shape();
    if (s.size() != 4 || s[1] != 4) fail(ErrorKind::dimension, "split_binocular needs a [T,4,H,W] input");
    const std::size_t half = 2 * s[2] * s[3];
    auto d = both.data.data();
    std::vector<double> l(s[0] * half), r(s[0] * half);
    for (std::size_t t = 0; t < s[0]; ++t) {
        std::copy_n(d.begin() + 2 * t * half, half, l.begin() + t * half);
        std::copy_n(d.begin() + (2 * t + 1) * half, half, r.begin() + t * half);
    }
    return {StackedTensor{Tensor({s[0], 2, s[2], s[3]}, std::move(l)), both.window_start, both.window_len},
            StackedTensor{Tensor({s[0], 2, s[2], s[3]}, std::move(r)), both.window_start, both.window_len}};
}

std::size_t DepthFrame::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

DepthFrame parse_depth(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) fail(ErrorKind::parse, "depth file: missing \"H W t_us\" header");
    std::istringstream hs(header);
    std::size_t h = 0, w = 0;
    std::uint64_t t = 0;
    std::string extra;
    if (!(hs >> h >> w >> t) || (hs >> extra) || h == 0 || w == 0) {
        fail(ErrorKind::parse, "depth file: bad header \"" + header + "\"");
    }
    DepthFrame frame{Tensor({h, w}), std::vector<std::uint8_t>(h * w, 0), t};
    auto depth = frame.depth.mutable_data();
    std::string line;
    for (std::size_t row = 0; row < h; ++row) {
        if (!std::getline(in, line)) fail(ErrorKind::parse, "depth file: missing row " + std::to_string(row));
        std::istringstream ls(line);
        std::string tok;
        std::size_t col = 0;
        while (ls >> tok) {
            if (col >= w) fail(ErrorKind::parse, "depth file: row " + std::to_string(row) + " has too many values");
            const std::size_t i = row * w + col;
            if (tok == "nan") {
                depth[i] = std::numeric_limits<double>::quiet_NaN();
            } else {
                double v = 0.0;
                auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                    fail(ErrorKind::parse, "depth file: row " + std::to_string(row) + ": bad value \"" + tok + "\"");
                }
                if (!std::isfinite(v) || v <= 0.0) {
                    fail(ErrorKind::validation, "depth file: row " + std::to_string(row) + ": depth must be finite "
                                                "and positive, got " + tok);
                }
                depth[i] = v;
                frame.valid[i] = 1;
            }
            ++col;
        }
        if (col != w) fail(ErrorKind::parse, "depth file: row " + std::to_string(row) + " has " + std::to_string(col) +
                                                  " values, expected " + std::to_string(w));
    }
    return frame;
}

DepthFrame load_depth(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open depth file '" + path + "'");
    try {
        return parse_depth(in);
    } catch (const Error& e) {
        fail(e.kind(), path + ": " + e.what());
    }
}

void write_depth(std::ostream& out, const DepthFrame& frame) {
    const auto g = frame.geometry();
    out << g.height << ' ' << g.width << ' ' << frame.t << '\n';
    auto d = frame.depth.data();
    for (std::size_t r = 0; r < g.height; ++r) {
        for (std::size_t c = 0; c < g.width; ++c) {
            const std::size_t i = r * g.width + c;
            if (c) out << ' ';
            out << (frame.valid[i] ? format_double(d[i]) : std::string("nan"));
        }
        out << '\n';
    }
}

void save_depth(const std::string& path, const DepthFrame& frame) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    write_depth(out, frame);
    if (!out) fail(ErrorKind::io, "write to '" + path + "' failed");
}

const DepthFrame& align_ground_truth(std::span<const DepthFrame> frames, std::uint64_t window_start,
                                     std::uint64_t window_len) {
    const std::uint64_t target = window_start + window_len;
    const DepthFrame* best = nullptr;
    std::uint64_t best_gap = 0;
    for (const auto& f : frames) {
        const std::uint64_t gap = f.t > target ? f.t - target : target - f.t;
        if (!best || gap < best_gap || (gap == best_gap && f.t < best->t)) {
            best = &f;
            best_gap = gap;
        }
    }
    if (!best) fail(ErrorKind::alignment, "no ground-truth frames to align with window ending at " +
                                              std::to_string(target) + " us");
    if (2 * best_gap > window_len) {
        fail(ErrorKind::alignment, "no ground-truth frame within " + std::to_string(window_len / 2) +
                                       " us of window end " + std::to_string(target) + " us; nearest is at " +
                                       std::to_string(best->t) + " us");
    }
    return *best;
}

} // namespace mss::events
