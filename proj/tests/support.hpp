#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include "mssdepth/error.hpp"

namespace support {

// Kind of the mss::Error thrown by fn, or nullopt when it returns normally.
template <class Fn>
std::optional<mss::ErrorKind> error_kind(Fn&& fn) {
    try {
        fn();
    } catch (const mss::Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

template <class Fn>
std::string error_message(Fn&& fn) {
    try {
        fn();
    } catch (const mss::Error& e) {
        return e.what();
    }
    return {};
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mssdepth_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

} // namespace support
