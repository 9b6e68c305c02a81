#pragma once

#include <filesystem>

#include "reiqa/image.hpp"

namespace reiqa {

// 8-bit RGB only; samples map as v/255 on read and round(v*255) on write.
// The container is chosen by extension: .png, or .ppm for binary P6.

Image read_image(const std::filesystem::path& path);
void write_image(const Image& img, const std::filesystem::path& path);

Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);

}  // namespace reiqa
