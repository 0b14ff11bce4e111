#include "rmap/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace rmap::io {
namespace {

constexpr char kMagic[4] = {'R', 'M', 'T', '1'};

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) io_fail(path, "truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

bool host_is_little_endian() {
    const std::uint32_t probe = 1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) io_fail(path, "cannot open for writing");
    f.write(kMagic, 4);
    put_u32(f, static_cast<std::uint32_t>(t.shape().rank()));
    for (std::size_t i = 0; i < t.shape().rank(); ++i)
        put_u32(f, static_cast<std::uint32_t>(t.shape()[i]));
    auto data = t.data();
    if (host_is_little_endian()) {
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
    } else {
        for (float v : data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(f, bits);
        }
    }
    if (!f) io_fail(path, "write failed");
}

Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) io_fail(path, "cannot open");
    char magic[4];
    if (!f.read(magic, 4)) io_fail(path, "truncated header");
    if (std::memcmp(magic, kMagic, 4) != 0)
        io_fail(path, "not an RMT1 tensor file (bad magic/version)");
    const std::uint32_t rank = get_u32(f, path);
    if (rank > 8) io_fail(path, "implausible rank " + std::to_string(rank));
    std::vector<std::int64_t> dims(rank);
    std::int64_t numel = 1;
    for (auto& d : dims) {
        d = get_u32(f, path);
        numel *= d;
    }
    std::vector<float> data(static_cast<std::size_t>(numel));
    if (host_is_little_endian()) {
        if (!f.read(reinterpret_cast<char*>(data.data()),
                    static_cast<std::streamsize>(data.size() * sizeof(float))))
            io_fail(path, "truncated data");
    } else {
        for (auto& v : data) {
            const std::uint32_t bits = get_u32(f, path);
            std::memcpy(&v, &bits, 4);
        }
    }
    return Tensor::from_data(Shape(std::move(dims)), std::move(data));
}

void write_pgm(const std::string& path, const Tensor& t, std::int64_t plane) {
    std::int64_t h = 0, w = 0, offset = 0;
    if (t.shape().rank() == 3) {
        if (plane < 0 || plane >= t.dim(0))
            io_fail(path, "plane " + std::to_string(plane) + " out of range for " +
                              t.shape().str());
        h = t.dim(1);
        w = t.dim(2);
        offset = plane * h * w;
    } else if (t.shape().rank() == 2) {
        if (plane != 0) io_fail(path, "rank-2 tensor has only plane 0");
        h = t.dim(0);
        w = t.dim(1);
    } else {
        io_fail(path, "pgm export needs a rank-2 or rank-3 tensor, got " + t.shape().str());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) io_fail(path, "cannot open for writing");
    f << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    const float* src = t.data().data() + offset;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const float v = std::clamp(src[y * w + x], 0.0f, 1.0f);
            row[static_cast<std::size_t>(x)] =
                static_cast<unsigned char>(std::lround(255.0f * v));
        }
        f.write(reinterpret_cast<const char*>(row.data()), w);
    }
    if (!f) io_fail(path, "write failed");
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) io_fail(path, "cannot open");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) io_fail(path, "cannot open for writing");
    f << content;
    if (!f) io_fail(path, "write failed");
}

}  // namespace rmap::io
