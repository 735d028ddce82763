#pragma once

// File formats: binary Netpbm images (P6 rgb, P5 16-bit disparity) and the
// checkpoint container. Every format round-trips bit-exactly.
//
// Checkpoint layout (all integers little-endian):
//   magic "JFLOW1\0"
//   u32 record count
//   per record: u16 name length, UTF-8 name, u8 dtype (0 = f32), u8 rank,
//               rank x u32 dims, row-major f32 payload.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "jointflow/grid.hpp"
#include "jointflow/tensor.hpp"

namespace jointflow::io {

namespace iodetail {

[[noreturn]] inline void parse_fail(const std::filesystem::path& path, std::int64_t offset,
                                    const std::string& what) {
    throw std::runtime_error(path.string() + ": " + what + " (byte offset " +
                             std::to_string(offset) + ")");
}

// Reads one whitespace-delimited header token, skipping '#' comment lines.
inline std::string header_token(std::istream& in, const std::filesystem::path& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (!tok.empty()) return tok;
    parse_fail(path, in.tellg(), "unexpected end of header");
}

inline int header_int(std::istream& in, const std::filesystem::path& path, const char* field) {
    const std::string tok = header_token(in, path);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        parse_fail(path, in.tellg(), std::string("bad ") + field + " token '" + tok + "'");
    }
}

}  // namespace iodetail

inline void write_ppm(const std::filesystem::path& path, const GridF& rgb) {
    detail::require(rgb.c == 3, "write_ppm: rgb grid expected");
    std::ofstream out(path, std::ios::binary);
    detail::require(out.good(), "write_ppm: cannot open " + path.string());
    out << "P6\n" << rgb.w << ' ' << rgb.h << "\n255\n";
    std::vector<unsigned char> bytes(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, rgb.v[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    detail::require(out.good(), "write_ppm: write failed for " + path.string());
}

inline GridF read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) iodetail::parse_fail(path, 0, "cannot open file");
    const std::string magic = iodetail::header_token(in, path);
    if (magic != "P6") iodetail::parse_fail(path, in.tellg(), "expected magic P6, got '" + magic + "'");
    const int w = iodetail::header_int(in, path, "width");
    const int h = iodetail::header_int(in, path, "height");
    const int maxval = iodetail::header_int(in, path, "maxval");
    if (w <= 0 || h <= 0) iodetail::parse_fail(path, in.tellg(), "non-positive dimensions");
    if (maxval != 255) iodetail::parse_fail(path, in.tellg(), "maxval must be 255");
    GridF rgb(h, w, 3);
    std::vector<unsigned char> bytes(rgb.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        iodetail::parse_fail(path, in.tellg(), "truncated pixel payload");
    for (std::size_t i = 0; i < bytes.size(); ++i) rgb.v[i] = bytes[i] / 255.0f;
    return rgb;
}

inline void write_pgm16(const std::filesystem::path& path, const GridF& disparity) {
    detail::require(disparity.c == 1, "write_pgm16: single-channel grid expected");
    std::ofstream out(path, std::ios::binary);
    detail::require(out.good(), "write_pgm16: cannot open " + path.string());
    out << "P5\n" << disparity.w << ' ' << disparity.h << "\n65535\n";
    std::vector<unsigned char> bytes(disparity.size() * 2);
    for (std::size_t i = 0; i < disparity.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, disparity.v[i]));
        const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
        bytes[2 * i] = static_cast<unsigned char>(q >> 8);  // MSB first
        bytes[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    detail::require(out.good(), "write_pgm16: write failed for " + path.string());
}

inline GridF read_pgm16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) iodetail::parse_fail(path, 0, "cannot open file");
    const std::string magic = iodetail::header_token(in, path);
    if (magic != "P5") iodetail::parse_fail(path, in.tellg(), "expected magic P5, got '" + magic + "'");
    const int w = iodetail::header_int(in, path, "width");
    const int h = iodetail::header_int(in, path, "height");
    const int maxval = iodetail::header_int(in, path, "maxval");
    if (w <= 0 || h <= 0) iodetail::parse_fail(path, in.tellg(), "non-positive dimensions");
    if (maxval != 65535) iodetail::parse_fail(path, in.tellg(), "maxval must be 65535");
    GridF d(h, w, 1);
    std::vector<unsigned char> bytes(d.size() * 2);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        iodetail::parse_fail(path, in.tellg(), "truncated pixel payload");
    for (std::size_t i = 0; i < d.size(); ++i) {
        const std::uint16_t q =
            static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
        d.v[i] = q / 65535.0f;
    }
    return d;
}

struct TensorRecord {
    std::string name;
    Mat<float> value;
};

inline void write_checkpoint(const std::filesystem::path& path,
                             const std::vector<TensorRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    detail::require(out.good(), "write_checkpoint: cannot open " + path.string());
    const char magic[7] = {'J', 'F', 'L', 'O', 'W', '1', '\0'};
    out.write(magic, 7);
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        out.write(reinterpret_cast<const char*>(b), 2);
    };
    put_u32(static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        detail::require(r.name.size() <= 0xFFFF, "write_checkpoint: name too long");
        put_u16(static_cast<std::uint16_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        out.put(static_cast<char>(0));  // dtype f32
        out.put(static_cast<char>(2));  // rank
        put_u32(static_cast<std::uint32_t>(r.value.rows));
        put_u32(static_cast<std::uint32_t>(r.value.cols));
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(r.value.data()),
                  static_cast<std::streamsize>(r.value.size() * 4));
    }
    detail::require(out.good(), "write_checkpoint: write failed for " + path.string());
}

inline std::vector<TensorRecord> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) iodetail::parse_fail(path, 0, "cannot open file");
    char magic[7];
    in.read(magic, 7);
    if (in.gcount() != 7 || std::memcmp(magic, "JFLOW1\0", 7) != 0)
        iodetail::parse_fail(path, 0, "bad magic, not a JFLOW1 checkpoint");
    auto get_u32 = [&]() -> std::uint32_t {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (in.gcount() != 4) iodetail::parse_fail(path, in.tellg(), "truncated u32");
        return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    auto get_u16 = [&]() -> std::uint16_t {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        if (in.gcount() != 2) iodetail::parse_fail(path, in.tellg(), "truncated u16");
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    };
    const std::uint32_t count = get_u32();
    std::vector<TensorRecord> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord r;
        const std::uint16_t name_len = get_u16();
        r.name.resize(name_len);
        in.read(r.name.data(), name_len);
        if (in.gcount() != name_len) iodetail::parse_fail(path, in.tellg(), "truncated name");
        const int dtype = in.get();
        if (dtype != 0) iodetail::parse_fail(path, in.tellg(), "unsupported dtype tag");
        const int rank = in.get();
        if (rank != 2) iodetail::parse_fail(path, in.tellg(), "unsupported rank (expected 2)");
        const std::uint32_t rows = get_u32();
        const std::uint32_t cols = get_u32();
        if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1u << 28))
            iodetail::parse_fail(path, in.tellg(), "implausible tensor dims");
        r.value = Mat<float>(static_cast<int>(rows), static_cast<int>(cols));
        in.read(reinterpret_cast<char*>(r.value.data()),
                static_cast<std::streamsize>(r.value.size() * 4));
        if (in.gcount() != static_cast<std::streamsize>(r.value.size() * 4))
            iodetail::parse_fail(path, in.tellg(), "truncated payload for " + r.name);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace jointflow::io
