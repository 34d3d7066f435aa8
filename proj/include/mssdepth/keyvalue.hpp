#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mss::kv {

struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

// Flat "key = value" text; blank lines and "#" comments are skipped. A key
// may appear only once.
std::vector<Entry> parse(std::istream& in, const std::string& source);
std::vector<Entry> load(const std::string& path);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Typed conversions; failures are validation errors naming `key`.
double to_double(const std::string& key, const std::string& value);
std::uint64_t to_u64(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);
std::vector<double> to_doubles(const std::string& key, const std::string& value);

} // namespace mss::kv
