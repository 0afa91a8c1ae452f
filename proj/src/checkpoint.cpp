#include "stepdiff/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stepdiff {

namespace {

// The project targets little-endian hosts; serialize raw with a static check.
static_assert(sizeof(double) == 8, "64-bit IEEE doubles required");

template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    return v;
}

}  // namespace

void write_stpc(const std::string& path, const std::map<std::string, Tensor>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write("STPC", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& [name, t] : records) {
        if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: name too long: " + name);
        put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::map<std::string, Tensor> read_stpc(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "STPC", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const auto version = get<std::uint32_t>(is, path);
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                                 " in " + path);
    const auto count = get<std::uint32_t>(is, path);
    std::map<std::string, Tensor> out;
    for (std::uint32_t r = 0; r < count; ++r) {
        const auto name_len = get<std::uint16_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
        const auto rank = get<std::uint8_t>(is, path);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = get<std::uint32_t>(is, path);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated payload for record " + name +
                                          " in " + path);
        out[name] = std::move(t);
    }
    return out;
}

}  // namespace stepdiff
