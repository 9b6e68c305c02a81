#pragma once

// Little-endian binary helpers shared by the checkpoint and feature files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "reiqa/error.hpp"

namespace reiqa::binio {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("unexpected end of file");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline std::uint64_t get_u64(std::istream& in) {
    const std::uint64_t lo = get_u32(in);
    return lo | static_cast<std::uint64_t>(get_u32(in)) << 32;
}

inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char b[4];
    if (!in.read(b, 4) || std::memcmp(b, magic, 4) != 0) {
        throw FormatError(std::string("bad magic, expected ") + magic);
    }
}

}  // namespace reiqa::binio
