#include "mssdepth/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>

#include "mssdepth/error.hpp"

namespace mss::kv {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::vector<Entry> parse(std::istream& in, const std::string& source) {
    std::vector<Entry> entries;
    std::set<std::string> seen;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::parse, source + ":" + std::to_string(number) + ": expected 'key = value', got '" + text + "'");
        }
        Entry e{trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1)), number};
        if (e.key.empty()) fail(ErrorKind::parse, source + ":" + std::to_string(number) + ": empty key");
        if (!seen.insert(e.key).second) {
            fail(ErrorKind::validation, source + ":" + std::to_string(number) + ": duplicate key '" + e.key + "'");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<Entry> load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path);
    return parse(in, path);
}

double to_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(v)) {
        fail(ErrorKind::validation, "key '" + key + "': expected a finite number, got '" + value + "'");
    }
    return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
        fail(ErrorKind::validation, "key '" + key + "': expected a non-negative integer, got '" + value + "'");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    fail(ErrorKind::validation, "key '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& value) {
    std::vector<double> out;
    if (trim(value).empty()) return out;
    for (const auto& part : split(value, ',')) out.push_back(to_double(key, part));
    return out;
}

} // namespace mss::kv
