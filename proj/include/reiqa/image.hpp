#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace reiqa {

/// Planar RGB raster with float samples in [0,1].
///
/// Storage is three contiguous row-major planes (R, G, B). Public operations
/// clip their results to [0,1] on exit; intermediate values inside a
/// composite operation may leave that range.
class Image {
public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int width, int height, float fill = 0.0f);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

    float& at(int c, int x, int y) { return data_[index(c, x, y)]; }
    float at(int c, int x, int y) const { return data_[index(c, x, y)]; }

    std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const float> plane(int c) const {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    /// Clamp every sample into [0,1]; NaN becomes 0.
    void clip();

    /// True when every sample is finite and within [0,1].
    bool in_range() const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int c, int x, int y) const {
        return static_cast<std::size_t>(c) * plane_size() + static_cast<std::size_t>(y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Odd-sized filter kernel, row-major weights. Origin is the center tap.
struct Kernel2D {
    int width = 1;
    int height = 1;
    std::vector<double> weights{1.0};

    double at(int x, int y) const { return weights[static_cast<std::size_t>(y) * width + x]; }
    double sum() const;
};

enum class ResizeMethod { Nearest, Bilinear, Bicubic, Lanczos3 };

// Filtering and geometry. All of these are pure and clip on exit.

/// 2D correlation with replicate-border edges. Throws InvalidArgument when the
/// kernel has even dimensions or is larger than the image.
Image convolve2d(const Image& img, const Kernel2D& k);

/// Separable filtering with 1D taps (odd lengths), replicate-border edges.
Image convolve_separable(const Image& img, std::span<const double> row_taps,
                         std::span<const double> col_taps);

/// Resample to new dimensions. Downscaling widens the filter support by the
/// scale factor so that every method except Nearest is antialiased.
Image resize(const Image& img, int new_width, int new_height, ResizeMethod method);

Image crop(const Image& img, const Rect& r);

bool rect_within(const Rect& r, int width, int height);

Kernel2D make_gaussian_kernel(double sigma);
/// Anti-aliased line of the given length through the center; angle in degrees.
Kernel2D make_line_kernel(double length, double angle_deg);
Kernel2D make_disk_kernel(double radius);
Kernel2D make_box_kernel(int size);
std::vector<double> gaussian_taps(double sigma);

// Color spaces. Every encoded plane stays within [0,1]:
//   YCbCr: BT.601 full range, Cb/Cr offset by +0.5.
//   LAB:   sRGB (D65) -> CIE L*a*b*, stored as L/100, a/255 + 0.5, b/255 + 0.5.
//   HSV:   hexcone model, hue stored as degrees/360.

Image to_ycbcr(const Image& rgb);
Image from_ycbcr(const Image& ycc);
Image to_lab(const Image& rgb);
Image from_lab(const Image& lab);
Image to_hsv(const Image& rgb);
Image from_hsv(const Image& hsv);

/// Mean squared error over all samples; dimensions must match.
double mse(const Image& a, const Image& b);

/// Largest absolute per-sample difference; dimensions must match.
double max_abs_diff(const Image& a, const Image& b);

std::uint64_t digest(const Image& img);

namespace detail {
// Unclipped inverses, for composite operations that clip once at the end.
Image from_ycbcr_unclipped(const Image& ycc);
Image from_lab_unclipped(const Image& lab);
Image from_hsv_unclipped(const Image& hsv);
}  // namespace detail

}  // namespace reiqa
