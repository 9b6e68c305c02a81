#include "reiqa/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "reiqa/error.hpp"

namespace reiqa {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

unsigned char to_byte(float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Image from_interleaved(const unsigned char* rgb, int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, x, y) = rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
    return img;
}

std::vector<unsigned char> to_interleaved(const Image& img) {
    std::vector<unsigned char> buf(img.plane_size() * 3);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c)
                buf[(static_cast<std::size_t>(y) * img.width() + x) * 3 + c] = to_byte(img.at(c, x, y));
    return buf;
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return from_interleaved(buf.data(), static_cast<int>(image.width), static_cast<int>(image.height));
}

void write_png(const Image& img, const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_RGB;
    const auto buf = to_interleaved(img);
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + image.message);
    }
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
    auto next_int = [&]() {
        // Skip whitespace and comments between header fields.
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
            } else {
                break;
            }
        }
        long v = -1;
        in >> v;
        if (!in || v < 1) throw FormatError(path.string() + ": malformed PPM header");
        return v;
    };
    const long w = next_int();
    const long h = next_int();
    const long maxval = next_int();
    if (maxval > 255) throw FormatError(path.string() + ": 16-bit PPM is not supported");
    in.get();  // single whitespace byte before the raster
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
        throw FormatError(path.string() + ": truncated PPM raster");
    }
    Image img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < img.plane_size(); ++i)
        for (int c = 0; c < 3; ++c)
            img.plane(c)[i] = static_cast<float>(buf[i * 3 + c]) / static_cast<float>(maxval);
    return img;
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
    const auto buf = to_interleaved(img);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Image read_image(const std::filesystem::path& path) {
    const auto ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm") return read_ppm(path);
    throw FormatError("unsupported image container: " + path.string());
}

void write_image(const Image& img, const std::filesystem::path& path) {
    const auto ext = lower_ext(path);
    if (ext == ".png") return write_png(img, path);
    if (ext == ".ppm") return write_ppm(img, path);
    throw FormatError("unsupported image container: " + path.string());
}

}  // namespace reiqa
