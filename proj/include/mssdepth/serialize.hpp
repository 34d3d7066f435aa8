#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mssdepth/tensor.hpp"

namespace mss {

// Tensor dump: "SPKT0001", u32 rank, rank x u32 dims, row-major f64 payload,
// all little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Checkpoint: "SPKC0001", u32 entry count, then per entry u16 name length,
// name bytes and an SPKT tensor.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(std::ostream& out, const NamedTensors& entries);
NamedTensors read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::string& path);

} // namespace mss
