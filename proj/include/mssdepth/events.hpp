#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mssdepth/tensor.hpp"

namespace mss::events {

struct Event {
    std::uint64_t t = 0; // microseconds
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    int p = 1; // +1 or -1

    friend bool operator==(const Event&, const Event&) = default;
};

struct Geometry {
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const Geometry&, const Geometry&) = default;
};

// Event CSV: header "t_us,x,y,p", unsigned decimal records, p in {0,1} with
// 0 meaning a negative event.
std::vector<Event> parse_events(std::istream& in);
std::vector<Event> load_events(const std::string& path);
void write_events(std::ostream& out, std::span<const Event> events);
void save_events(const std::string& path, std::span<const Event> events);

// Events with window_start <= t < window_end, assuming a time-sorted stream.
std::span<const Event> window_slice(std::span<const Event> events, std::uint64_t window_start,
                                    std::uint64_t window_end);

struct StackedTensor {
    Tensor data; // [T, C, H, W] event counts
    std::uint64_t window_start = 0;
    std::uint64_t window_len = 50'000;

    std::size_t steps() const { return data.dim(0); }
    std::size_t channels() const { return data.dim(1); }
    Geometry geometry() const { return {data.dim(2), data.dim(3)}; }
};

struct StackOptions {
    std::uint64_t window_start = 0;
    std::uint64_t window_len = 50'000;
    std::size_t steps = 5;
    Geometry geometry;
    bool binarize = false; // clamp counts to {0,1}
};

// Frame tau counts events in [start, start + (tau+1) * len / T): each frame is
// a superset of the previous one. Positive events land in channel 0,
// negative events in channel 1.
StackedTensor cumulative_stack(std::span<const Event> events, const StackOptions& opts);

// One full-window histogram replicated across all T frames.
StackedTensor repeat_stack(std::span<const Event> events, const StackOptions& opts);

enum class StackMode { cumulative, repeat };
StackedTensor stack(std::span<const Event> events, const StackOptions& opts, StackMode mode);

// Channels become [left+, left-, right+, right-].
StackedTensor binocular_concat(const StackedTensor& left, const StackedTensor& right);
// Inverse of binocular_concat.
std::pair<StackedTensor, StackedTensor> split_binocular(const StackedTensor& both);

struct DepthFrame {
    Tensor depth; // [H, W] metres, NaN where invalid
    std::vector<std::uint8_t> valid;
    std::uint64_t t = 0;

    Geometry geometry() const { return {depth.dim(0), depth.dim(1)}; }
    std::size_t valid_count() const;
};

// Depth file: "H W t_us", then H rows of W decimal metres; "nan" marks an
// invalid pixel.
DepthFrame parse_depth(std::istream& in);
DepthFrame load_depth(const std::string& path);
void write_depth(std::ostream& out, const DepthFrame& frame);
void save_depth(const std::string& path, const DepthFrame& frame);

// Frame nearest to the window end (ties go to the earlier frame), within
// half a window.
const DepthFrame& align_ground_truth(std::span<const DepthFrame> frames, std::uint64_t window_start,
                                     std::uint64_t window_len);

// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);

} // namespace mss::events
