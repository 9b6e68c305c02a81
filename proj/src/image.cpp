#include "reiqa/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "reiqa/digest.hpp"
#include "reiqa/error.hpp"

namespace reiqa {

Image::Image(int width, int height, float fill) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("image dimensions must be positive, got " + std::to_string(width) +
                              "x" + std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
}

void Image::clip() {
    for (float& v : data_) {
        if (!(v >= 0.0f)) {
            v = 0.0f;  // also catches NaN
        } else if (v > 1.0f) {
            v = 1.0f;
        }
    }
}

bool Image::in_range() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

double Kernel2D::sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

namespace {

void check_kernel(const Kernel2D& k) {
    if (k.width < 1 || k.height < 1 || k.width % 2 == 0 || k.height % 2 == 0) {
        throw InvalidArgument("kernel dimensions must be odd and positive");
    }
    if (k.weights.size() != static_cast<std::size_t>(k.width) * k.height) {
        throw InvalidArgument("kernel weight count does not match its dimensions");
    }
}

void require_same_shape(const Image& a, const Image& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw InvalidArgument("image dimensions differ");
    }
}

// Clamped source indices for offsets [-r, n-1+r].
std::vector<int> replicate_index(int n, int r) {
    std::vector<int> idx(static_cast<std::size_t>(n + 2 * r));
    for (int i = -r; i < n + r; ++i) idx[static_cast<std::size_t>(i + r)] = std::clamp(i, 0, n - 1);
    return idx;
}

}  // namespace

Image convolve2d(const Image& img, const Kernel2D& k) {
    check_kernel(k);
    if (k.width > img.width() || k.height > img.height()) {
        throw InvalidArgument("kernel larger than image");
    }
    const int w = img.width();
    const int h = img.height();
    const int rx = k.width / 2;
    const int ry = k.height / 2;
    const auto xi = replicate_index(w, rx);
    const auto yi = replicate_index(h, ry);

    // Skip zero taps; line and disk kernels are mostly empty.
    struct Tap {
        int dx, dy;
        double w;
    };
    std::vector<Tap> taps;
    for (int j = 0; j < k.height; ++j)
        for (int i = 0; i < k.width; ++i)
            if (k.at(i, j) != 0.0) taps.push_back({i, j, k.at(i, j)});

    Image out(w, h);
    std::vector<double> acc(static_cast<std::size_t>(w));
    for (int c = 0; c < Image::kChannels; ++c) {
        const auto src = img.plane(c);
        auto dst = out.plane(c);
        for (int y = 0; y < h; ++y) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (const Tap& t : taps) {
                const float* row = src.data() + static_cast<std::size_t>(yi[y + t.dy]) * w;
                const int* xs = xi.data() + t.dx;
                for (int x = 0; x < w; ++x) acc[x] += t.w * row[xs[x]];
            }
            for (int x = 0; x < w; ++x) dst[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc[x]);
        }
    }
    out.clip();
    return out;
}

Image convolve_separable(const Image& img, std::span<const double> row_taps,
                         std::span<const double> col_taps) {
    if (row_taps.size() % 2 == 0 || col_taps.size() % 2 == 0) {
        throw InvalidArgument("separable taps must have odd length");
    }
    const int w = img.width();
    const int h = img.height();
    const int rx = static_cast<int>(row_taps.size() / 2);
    const int ry = static_cast<int>(col_taps.size() / 2);
    const auto xi = replicate_index(w, rx);
    const auto yi = replicate_index(h, ry);

    Image out(w, h);
    std::vector<double> tmp(img.plane_size());
    std::vector<double> acc(static_cast<std::size_t>(w));
    for (int c = 0; c < Image::kChannels; ++c) {
        const auto src = img.plane(c);
        for (int y = 0; y < h; ++y) {
            const float* row = src.data() + static_cast<std::size_t>(y) * w;
            double* t = tmp.data() + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (std::size_t i = 0; i < row_taps.size(); ++i) s += row_taps[i] * row[xi[x + i]];
                t[x] = s;
            }
        }
        auto dst = out.plane(c);
        for (int y = 0; y < h; ++y) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t j = 0; j < col_taps.size(); ++j) {
                const double* row = tmp.data() + static_cast<std::size_t>(yi[y + j]) * w;
                const double cw = col_taps[j];
                for (int x = 0; x < w; ++x) acc[x] += cw * row[x];
            }
            for (int x = 0; x < w; ++x) dst[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc[x]);
        }
    }
    out.clip();
    return out;
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

namespace {

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

double filter_value(ResizeMethod m, double x) {
    x = std::abs(x);
    switch (m) {
        case ResizeMethod::Bilinear:
            return x < 1.0 ? 1.0 - x : 0.0;
        case ResizeMethod::Bicubic: {
            constexpr double a = -0.5;
            if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
            if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
            return 0.0;
        }
        case ResizeMethod::Lanczos3:
            return x < 3.0 ? sinc(x) * sinc(x / 3.0) : 0.0;
        case ResizeMethod::Nearest:
            break;
    }
    return 0.0;
}

double filter_support(ResizeMethod m) {
    switch (m) {
        case ResizeMethod::Bilinear: return 1.0;
        case ResizeMethod::Bicubic: return 2.0;
        case ResizeMethod::Lanczos3: return 3.0;
        case ResizeMethod::Nearest: break;
    }
    return 0.5;
}

struct Coeffs {
    std::vector<int> start;
    std::vector<int> count;
    std::vector<double> weights;  // out_size * stride
    int stride = 0;
};

Coeffs compute_coeffs(int in_size, int out_size, ResizeMethod m) {
    const double scale = static_cast<double>(in_size) / out_size;
    const double fscale = std::max(scale, 1.0);
    const double support = filter_support(m) * fscale;
    Coeffs c;
    c.stride = static_cast<int>(std::ceil(support)) * 2 + 1;
    c.start.resize(static_cast<std::size_t>(out_size));
    c.count.resize(static_cast<std::size_t>(out_size));
    c.weights.assign(static_cast<std::size_t>(out_size) * c.stride, 0.0);
    for (int i = 0; i < out_size; ++i) {
        const double center = (i + 0.5) * scale;
        int lo = static_cast<int>(std::floor(center - support + 0.5));
        int hi = static_cast<int>(std::floor(center + support + 0.5));
        lo = std::max(lo, 0);
        hi = std::min(hi, in_size);
        hi = std::min(hi, lo + c.stride);
        double total = 0.0;
        double* w = c.weights.data() + static_cast<std::size_t>(i) * c.stride;
        for (int j = lo; j < hi; ++j) {
            const double v = filter_value(m, (j + 0.5 - center) / fscale);
            w[j - lo] = v;
            total += v;
        }
        if (total != 0.0)
            for (int j = 0; j < hi - lo; ++j) w[j] /= total;
        c.start[i] = lo;
        c.count[i] = hi - lo;
    }
    return c;
}

Image resize_nearest(const Image& img, int nw, int nh) {
    const double sx = static_cast<double>(img.width()) / nw;
    const double sy = static_cast<double>(img.height()) / nh;
    std::vector<int> xs(static_cast<std::size_t>(nw));
    std::vector<int> ys(static_cast<std::size_t>(nh));
    for (int x = 0; x < nw; ++x)
        xs[x] = std::min(img.width() - 1, static_cast<int>(std::floor((x + 0.5) * sx)));
    for (int y = 0; y < nh; ++y)
        ys[y] = std::min(img.height() - 1, static_cast<int>(std::floor((y + 0.5) * sy)));
    Image out(nw, nh);
    for (int c = 0; c < Image::kChannels; ++c)
        for (int y = 0; y < nh; ++y)
            for (int x = 0; x < nw; ++x) out.at(c, x, y) = img.at(c, xs[x], ys[y]);
    return out;
}

}  // namespace

Image resize(const Image& img, int new_width, int new_height, ResizeMethod method) {
    if (new_width < 1 || new_height < 1) {
        throw InvalidArgument("resize target dimensions must be at least 1");
    }
    if (method == ResizeMethod::Nearest) {
        Image out = resize_nearest(img, new_width, new_height);
        out.clip();
        return out;
    }
    const int w = img.width();
    const int h = img.height();
    const Coeffs cx = compute_coeffs(w, new_width, method);
    const Coeffs cy = compute_coeffs(h, new_height, method);

    Image out(new_width, new_height);
    std::vector<double> tmp(static_cast<std::size_t>(new_width) * h);
    std::vector<double> acc(static_cast<std::size_t>(new_width));
    for (int c = 0; c < Image::kChannels; ++c) {
        const auto src = img.plane(c);
        for (int y = 0; y < h; ++y) {
            const float* row = src.data() + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < new_width; ++x) {
                const double* wt = cx.weights.data() + static_cast<std::size_t>(x) * cx.stride;
                double s = 0.0;
                for (int j = 0; j < cx.count[x]; ++j) s += wt[j] * row[cx.start[x] + j];
                tmp[static_cast<std::size_t>(y) * new_width + x] = s;
            }
        }
        auto dst = out.plane(c);
        for (int y = 0; y < new_height; ++y) {
            std::fill(acc.begin(), acc.end(), 0.0);
            const double* wt = cy.weights.data() + static_cast<std::size_t>(y) * cy.stride;
            for (int j = 0; j < cy.count[y]; ++j) {
                const double* row = tmp.data() + static_cast<std::size_t>(cy.start[y] + j) * new_width;
                for (int x = 0; x < new_width; ++x) acc[x] += wt[j] * row[x];
            }
            for (int x = 0; x < new_width; ++x)
                dst[static_cast<std::size_t>(y) * new_width + x] = static_cast<float>(acc[x]);
        }
    }
    out.clip();
    return out;
}

bool rect_within(const Rect& r, int width, int height) {
    return r.w >= 1 && r.h >= 1 && r.x >= 0 && r.y >= 0 && r.x + r.w <= width && r.y + r.h <= height;
}

Image crop(const Image& img, const Rect& r) {
    if (!rect_within(r, img.width(), img.height())) {
        throw InvalidArgument("crop rect out of bounds");
    }
    Image out(r.w, r.h);
    for (int c = 0; c < Image::kChannels; ++c)
        for (int y = 0; y < r.h; ++y) {
            const auto src = img.plane(c).subspan(static_cast<std::size_t>(r.y + y) * img.width() + r.x, r.w);
            std::copy(src.begin(), src.end(), out.plane(c).begin() + static_cast<std::ptrdiff_t>(y) * r.w);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

std::vector<double> gaussian_taps(double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("gaussian sigma must be positive");
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
    double total = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        taps[i + r] = v;
        total += v;
    }
    for (double& v : taps) v /= total;
    return taps;
}

Kernel2D make_gaussian_kernel(double sigma) {
    const auto taps = gaussian_taps(sigma);
    const int n = static_cast<int>(taps.size());
    Kernel2D k{n, n, std::vector<double>(static_cast<std::size_t>(n) * n)};
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) k.weights[static_cast<std::size_t>(y) * n + x] = taps[y] * taps[x];
    return k;
}

namespace {

void normalize(Kernel2D& k) {
    const double s = k.sum();
    for (double& w : k.weights) w /= s;
}

// Shrink to the smallest odd, centered window holding every nonzero tap.
Kernel2D trim(const Kernel2D& k) {
    const int cx = k.width / 2;
    const int cy = k.height / 2;
    int rx = 0;
    int ry = 0;
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x)
            if (k.at(x, y) != 0.0) {
                rx = std::max(rx, std::abs(x - cx));
                ry = std::max(ry, std::abs(y - cy));
            }
    Kernel2D out{2 * rx + 1, 2 * ry + 1, {}};
    out.weights.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.weights[static_cast<std::size_t>(y) * out.width + x] = k.at(cx - rx + x, cy - ry + y);
    return out;
}

}  // namespace

Kernel2D make_line_kernel(double length, double angle_deg) {
    if (!(length > 0.0)) throw InvalidArgument("line kernel length must be positive");
    const int r = static_cast<int>(std::ceil((length - 1.0) / 2.0));
    const int n = 2 * r + 1;
    Kernel2D k{n, n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
    const double a = angle_deg * std::numbers::pi / 180.0;
    double dx = std::cos(a);
    double dy = -std::sin(a);
    // Snap axis-aligned directions so that cos(90deg) does not leave residue.
    if (std::abs(dx) < 1e-12) dx = 0.0;
    if (std::abs(dy) < 1e-12) dy = 0.0;
    const int samples = static_cast<int>(std::round(length));
    const double half = (length - 1.0) / 2.0;
    for (int s = 0; s < samples; ++s) {
        const double t = samples == 1 ? 0.0 : -half + (2.0 * half) * s / (samples - 1);
        const double px = r + t * dx;
        const double py = r + t * dy;
        // Bilinear splat of one unit of mass.
        const int x0 = static_cast<int>(std::floor(px));
        const int y0 = static_cast<int>(std::floor(py));
        const double fx = px - x0;
        const double fy = py - y0;
        const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int i = 0; i < 4; ++i) {
            if (wts[i] <= 1e-12) continue;
            const int x = std::clamp(xs[i], 0, n - 1);
            const int y = std::clamp(ys[i], 0, n - 1);
            k.weights[static_cast<std::size_t>(y) * n + x] += wts[i];
        }
    }
    normalize(k);
    return trim(k);
}

Kernel2D make_disk_kernel(double radius) {
    if (!(radius > 0.0)) throw InvalidArgument("disk radius must be positive");
    const int r = static_cast<int>(std::floor(radius));
    const int n = 2 * r + 1;
    Kernel2D k{n, n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x)
            if (x * x + y * y <= radius * radius) k.weights[static_cast<std::size_t>(y + r) * n + x + r] = 1.0;
    normalize(k);
    return k;
}

Kernel2D make_box_kernel(int size) {
    if (size < 1 || size % 2 == 0) throw InvalidArgument("box kernel size must be odd and positive");
    const double v = 1.0 / (static_cast<double>(size) * size);
    return Kernel2D{size, size, std::vector<double>(static_cast<std::size_t>(size) * size, v)};
}

// ---------------------------------------------------------------------------
// Color spaces
// ---------------------------------------------------------------------------

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 invert(const Mat3& m) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    Mat3 r{};
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

constexpr Mat3 kRgbToYcc{{{0.299, 0.587, 0.114},
                          {-0.168736, -0.331264, 0.5},
                          {0.5, -0.418688, -0.081312}}};

const Mat3& ycc_to_rgb() {
    static const Mat3 m = invert(kRgbToYcc);
    return m;
}

constexpr Mat3 kRgbToXyz{{{0.4124564, 0.3575761, 0.1804375},
                          {0.2126729, 0.7151522, 0.0721750},
                          {0.0193339, 0.1191920, 0.9503041}}};

const Mat3& xyz_to_rgb() {
    static const Mat3 m = invert(kRgbToXyz);
    return m;
}

// White point taken from the matrix rows so that RGB white maps to L=100, a=b=0.
const std::array<double, 3>& d65_white() {
    static const std::array<double, 3> w = {
        kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
        kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
        kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2]};
    return w;
}

double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) {
    return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

constexpr double kLabDelta = 6.0 / 29.0;

double lab_f(double t) {
    return t > kLabDelta * kLabDelta * kLabDelta ? std::cbrt(t)
                                                  : t / (3.0 * kLabDelta * kLabDelta) + 4.0 / 29.0;
}

double lab_finv(double u) {
    return u > kLabDelta ? u * u * u : 3.0 * kLabDelta * kLabDelta * (u - 4.0 / 29.0);
}

template <typename F>
Image map_pixels(const Image& in, F&& f) {
    Image out(in.width(), in.height());
    const std::size_t n = in.plane_size();
    const auto a = in.plane(0), b = in.plane(1), c = in.plane(2);
    auto oa = out.plane(0), ob = out.plane(1), oc = out.plane(2);
    for (std::size_t i = 0; i < n; ++i) {
        const std::array<double, 3> r = f(std::array<double, 3>{a[i], b[i], c[i]});
        oa[i] = static_cast<float>(r[0]);
        ob[i] = static_cast<float>(r[1]);
        oc[i] = static_cast<float>(r[2]);
    }
    return out;
}

std::array<double, 3> apply(const Mat3& m, const std::array<double, 3>& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

}  // namespace

Image to_ycbcr(const Image& rgb) {
    Image out = map_pixels(rgb, [](const std::array<double, 3>& p) {
        auto v = apply(kRgbToYcc, p);
        v[1] += 0.5;
        v[2] += 0.5;
        return v;
    });
    out.clip();
    return out;
}

Image detail::from_ycbcr_unclipped(const Image& ycc) {
    return map_pixels(ycc, [](const std::array<double, 3>& p) {
        return apply(ycc_to_rgb(), {p[0], p[1] - 0.5, p[2] - 0.5});
    });
}

Image from_ycbcr(const Image& ycc) {
    Image out = detail::from_ycbcr_unclipped(ycc);
    out.clip();
    return out;
}

Image to_lab(const Image& rgb) {
    Image out = map_pixels(rgb, [](const std::array<double, 3>& p) {
        const auto xyz = apply(kRgbToXyz, {srgb_to_linear(p[0]), srgb_to_linear(p[1]), srgb_to_linear(p[2])});
        const auto& wp = d65_white();
        const double fx = lab_f(xyz[0] / wp[0]);
        const double fy = lab_f(xyz[1] / wp[1]);
        const double fz = lab_f(xyz[2] / wp[2]);
        const double L = 116.0 * fy - 16.0;
        const double a = 500.0 * (fx - fy);
        const double b = 200.0 * (fy - fz);
        return std::array<double, 3>{L / 100.0, a / 255.0 + 0.5, b / 255.0 + 0.5};
    });
    out.clip();
    return out;
}

Image detail::from_lab_unclipped(const Image& lab) {
    return map_pixels(lab, [](const std::array<double, 3>& p) {
        const double L = p[0] * 100.0;
        const double a = (p[1] - 0.5) * 255.0;
        const double b = (p[2] - 0.5) * 255.0;
        const double fy = (L + 16.0) / 116.0;
        const double fx = fy + a / 500.0;
        const double fz = fy - b / 200.0;
        const auto& wp = d65_white();
        const auto lin = apply(xyz_to_rgb(), {wp[0] * lab_finv(fx), wp[1] * lab_finv(fy), wp[2] * lab_finv(fz)});
        std::array<double, 3> out{};
        for (int i = 0; i < 3; ++i) out[i] = linear_to_srgb(std::clamp(lin[i], 0.0, 1.0));
        return out;
    });
}

Image from_lab(const Image& lab) {
    Image out = detail::from_lab_unclipped(lab);
    out.clip();
    return out;
}

Image to_hsv(const Image& rgb) {
    return map_pixels(rgb, [](const std::array<double, 3>& p) {
        const double r = std::clamp(p[0], 0.0, 1.0);
        const double g = std::clamp(p[1], 0.0, 1.0);
        const double b = std::clamp(p[2], 0.0, 1.0);
        const double mx = std::max({r, g, b});
        const double mn = std::min({r, g, b});
        const double delta = mx - mn;
        double h = 0.0;
        if (delta > 0.0) {
            if (mx == r) {
                h = (g - b) / delta;
                if (h < 0.0) h += 6.0;
            } else if (mx == g) {
                h = (b - r) / delta + 2.0;
            } else {
                h = (r - g) / delta + 4.0;
            }
            h /= 6.0;
            if (h >= 1.0) h -= 1.0;
        }
        const double s = mx > 0.0 ? delta / mx : 0.0;
        return std::array<double, 3>{h, s, mx};
    });
}

Image detail::from_hsv_unclipped(const Image& hsv) {
    return map_pixels(hsv, [](const std::array<double, 3>& p) {
        const double h6 = (p[0] - std::floor(p[0])) * 6.0;
        const double s = p[1];
        const double v = p[2];
        const double fl = std::floor(h6);
        const double f = h6 - fl;
        const int sector = static_cast<int>(fl) % 6;
        const double pp = v * (1.0 - s);
        const double q = v * (1.0 - s * f);
        const double t = v * (1.0 - s * (1.0 - f));
        switch (sector) {
            case 0: return std::array<double, 3>{v, t, pp};
            case 1: return std::array<double, 3>{q, v, pp};
            case 2: return std::array<double, 3>{pp, v, t};
            case 3: return std::array<double, 3>{pp, q, v};
            case 4: return std::array<double, 3>{t, pp, v};
            default: return std::array<double, 3>{v, pp, q};
        }
    });
}

Image from_hsv(const Image& hsv) {
    Image out = detail::from_hsv_unclipped(hsv);
    out.clip();
    return out;
}

double mse(const Image& a, const Image& b) {
    require_same_shape(a, b);
    const auto da = a.data();
    const auto db = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - db[i];
        s += d * d;
    }
    return s / static_cast<double>(da.size());
}

double max_abs_diff(const Image& a, const Image& b) {
    require_same_shape(a, b);
    const auto da = a.data();
    const auto db = b.data();
    double m = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(static_cast<double>(da[i]) - db[i]));
    return m;
}

std::uint64_t digest(const Image& img) {
    Digest d;
    d.update_u64(static_cast<std::uint64_t>(img.width()));
    d.update_u64(static_cast<std::uint64_t>(img.height()));
    d.update(img.data());
    return d.value();
}

}  // namespace reiqa
