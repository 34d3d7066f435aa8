#include "mssdepth/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "mssdepth/error.hpp"

namespace mss {

namespace {

constexpr char kTensorMagic[8] = {'S', 'P', 'K', 'T', '0', '0', '0', '1'};
constexpr char kCheckpointMagic[8] = {'S', 'P', 'K', 'C', '0', '0', '0', '1'};

template <class U>
void put_le(std::ostream& out, U value) {
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    out.write(bytes, sizeof(U));
}

template <class U>
U get_le(std::istream& in, const char* what) {
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        fail(ErrorKind::parse, std::string("truncated stream while reading ") + what);
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
    char got[8];
    if (!in.read(got, 8) || std::memcmp(got, magic, 8) != 0) {
        fail(ErrorKind::parse, std::string("bad ") + what + " magic");
    }
}

void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot open '" + tmp + "' for writing");
        body(out);
        out.flush();
        if (!out) fail(ErrorKind::io, "write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::io, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

} // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kTensorMagic, 8);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

Tensor read_tensor(std::istream& in) {
    expect_magic(in, kTensorMagic, "tensor");
    const auto rank = get_le<std::uint32_t>(in, "tensor rank");
    if (rank == 0 || rank > 16) fail(ErrorKind::parse, "implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) {
        d = get_le<std::uint32_t>(in, "tensor dims");
        if (d == 0) fail(ErrorKind::parse, "tensor dimension of size zero");
    }
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "tensor payload"));
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
    atomic_write(path, [&](std::ostream& out) { write_tensor(out, t); });
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
    try {
        return read_tensor(in);
    } catch (const Error& e) {
        fail(e.kind(), path + ": " + e.what());
    }
}

void write_checkpoint(std::ostream& out, const NamedTensors& entries) {
    out.write(kCheckpointMagic, 8);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, tensor] : entries) {
        if (name.size() > 0xFFFF) fail(ErrorKind::argument, "checkpoint entry name too long");
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(out, tensor);
    }
}

NamedTensors read_checkpoint(std::istream& in) {
    expect_magic(in, kCheckpointMagic, "checkpoint");
    const auto count = get_le<std::uint32_t>(in, "entry count");
    NamedTensors entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get_le<std::uint16_t>(in, "entry name length");
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) fail(ErrorKind::parse, "truncated checkpoint entry name");
        entries.emplace_back(std::move(name), read_tensor(in));
    }
    return entries;
}

void save_checkpoint(const std::string& path, const NamedTensors& entries) {
    atomic_write(path, [&](std::ostream& out) { write_checkpoint(out, entries); });
}

NamedTensors load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open checkpoint '" + path + "'");
    try {
        return read_checkpoint(in);
    } catch (const Error& e) {
        fail(e.kind(), path + ": " + e.what());
    }
}

} // namespace mss
