#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reiqa/image.hpp"

namespace reiqa {

/// In-memory baseline JPEG codec, parameterized only by quality (1..100).
/// Uses the integer slow DCT on both sides so output is reproducible.
std::vector<std::uint8_t> jpeg_encode(const Image& img, int quality);
Image jpeg_decode(std::span<const std::uint8_t> bytes);

inline Image jpeg_roundtrip(const Image& img, int quality) {
    return jpeg_decode(jpeg_encode(img, quality));
}

}  // namespace reiqa
