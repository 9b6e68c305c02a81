#include "reiqa/distortion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "reiqa/digest.hpp"
#include "reiqa/error.hpp"
#include "reiqa/jpeg_codec.hpp"

namespace reiqa {

namespace {

constexpr std::array<std::string_view, kNumDistortionKinds> kNames = {
    "ResizeBicubic",   "ResizeBilinear",      "ResizeLanczos", "Pixelate",      "MotionBlur",
    "GaussianBlur",    "LensBlur",            "MeanShift",     "Contrast",      "UnsharpMask",
    "Jitter",          "ColorBlock",          "NonEccentricity", "JpegCompression", "WhiteNoiseRGB",
    "WhiteNoiseYCbCr", "ImpulseNoise",        "MultiplicativeNoise", "Denoise",  "Brighten",
    "Darken",          "ColorDiffuse",        "ColorShift",    "ColorSaturate", "Saturate",
};

constexpr char kBuiltinTable[] =
#include "severity_table_text.inc"
    ;

void check_level(int level) {
    if (level < 1 || level > kNumLevels) {
        throw InvalidArgument("distortion level must be in 1..5, got " + std::to_string(level));
    }
}

std::size_t kind_index(DistortionKind k) {
    const auto i = static_cast<std::size_t>(k);
    if (i >= kNumDistortionKinds) throw InvalidArgument("unknown distortion kind");
    return i;
}

}  // namespace

std::string_view kind_name(DistortionKind kind) { return kNames[kind_index(kind)]; }

DistortionKind kind_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNames.size(); ++i)
        if (kNames[i] == name) return static_cast<DistortionKind>(i);
    throw InvalidArgument("unknown distortion kind '" + std::string(name) + "'");
}

std::vector<DistortionKind> list_kinds() {
    std::vector<DistortionKind> out;
    out.reserve(kNumDistortionKinds);
    for (int i = 0; i < kNumDistortionKinds; ++i) out.push_back(static_cast<DistortionKind>(i));
    return out;
}

bool is_monotone_kind(DistortionKind kind) {
    switch (kind) {
        case DistortionKind::ResizeBicubic:
        case DistortionKind::ResizeBilinear:
        case DistortionKind::ResizeLanczos:
        case DistortionKind::Pixelate:
        case DistortionKind::MotionBlur:
        case DistortionKind::GaussianBlur:
        case DistortionKind::LensBlur:
        case DistortionKind::JpegCompression:
        case DistortionKind::WhiteNoiseRGB:
        case DistortionKind::WhiteNoiseYCbCr:
        case DistortionKind::ImpulseNoise:
        case DistortionKind::MultiplicativeNoise:
        case DistortionKind::Denoise:
            return true;
        default:
            return false;
    }
}

// ---------------------------------------------------------------------------
// Severity table
// ---------------------------------------------------------------------------

double ParamSet::get(std::string_view name) const {
    for (const auto& [k, v] : values_)
        if (k == name) return v;
    throw InvalidArgument("parameter '" + std::string(name) + "' not present");
}

double ParamSet::governing() const {
    if (values_.empty()) throw StateError("empty parameter set");
    return values_.front().second;
}

SeverityTable SeverityTable::parse(std::string_view text) {
    SeverityTable table;
    std::array<std::array<bool, kNumLevels>, kNumDistortionKinds> seen{};
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kind_str;
        if (!(ls >> kind_str)) continue;
        int level = 0;
        if (!(ls >> level)) throw FormatError("severity table line " + std::to_string(lineno) + ": missing level");
        const DistortionKind kind = kind_from_name(kind_str);
        check_level(level);
        std::vector<std::pair<std::string, double>> values;
        std::string tok;
        while (ls >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw FormatError("severity table line " + std::to_string(lineno) + ": expected name=value");
            }
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(tok.substr(eq + 1), &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != tok.size() - eq - 1 || !std::isfinite(v)) {
                throw FormatError("severity table line " + std::to_string(lineno) + ": bad value in '" + tok + "'");
            }
            values.emplace_back(tok.substr(0, eq), v);
        }
        if (values.empty()) throw FormatError("severity table line " + std::to_string(lineno) + ": no parameters");
        const auto ki = static_cast<std::size_t>(kind);
        if (seen[ki][level - 1]) {
            throw FormatError("severity table line " + std::to_string(lineno) + ": duplicate row");
        }
        seen[ki][level - 1] = true;
        table.rows_[ki][level - 1] = ParamSet(std::move(values));
    }
    for (std::size_t k = 0; k < kNumDistortionKinds; ++k) {
        for (int l = 0; l < kNumLevels; ++l)
            if (!seen[k][l]) {
                throw FormatError("severity table missing " + std::string(kNames[k]) + " level " +
                                  std::to_string(l + 1));
            }
        const double d0 = table.rows_[k][1].governing() - table.rows_[k][0].governing();
        for (int l = 1; l < kNumLevels; ++l) {
            const double d = table.rows_[k][l].governing() - table.rows_[k][l - 1].governing();
            if (d == 0.0 || (d > 0.0) != (d0 > 0.0)) {
                throw FormatError("severity table: governing parameter of " + std::string(kNames[k]) +
                                  " is not strictly monotone");
            }
        }
    }
    return table;
}

SeverityTable SeverityTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open severity table " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const SeverityTable& SeverityTable::builtin() {
    static const SeverityTable table = parse(kBuiltinTable);
    return table;
}

const ParamSet& SeverityTable::params(DistortionKind kind, int level) const {
    check_level(level);
    return rows_[kind_index(kind)][level - 1];
}

std::string SeverityTable::canonical() const {
    std::string out;
    char buf[64];
    for (std::size_t k = 0; k < kNumDistortionKinds; ++k)
        for (int l = 0; l < kNumLevels; ++l) {
            out += kNames[k];
            out += ' ';
            out += std::to_string(l + 1);
            for (const auto& [name, v] : rows_[k][l].values()) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out += ' ' + name + '=' + buf;
            }
            out += '\n';
        }
    return out;
}

std::uint64_t SeverityTable::digest() const { return digest_of(canonical()); }

const ParamSet& params_for(DistortionKind kind, int level) {
    return SeverityTable::builtin().params(kind, level);
}

const ParamSet& params_for(std::string_view name, int level) {
    return params_for(kind_from_name(name), level);
}

// ---------------------------------------------------------------------------
// Distortion implementations
// ---------------------------------------------------------------------------

namespace {

int scaled(int n, double s) { return std::max(1, static_cast<int>(std::lround(n * s))); }

Image down_up(const Image& img, double scale, ResizeMethod m) {
    const Image small = resize(img, scaled(img.width(), scale), scaled(img.height(), scale), m);
    return resize(small, img.width(), img.height(), m);
}

// Replace each origin-aligned block by its mean. Power-of-two block sizes nest,
// so coarser levels never lose less detail than finer ones.
Image pixelate(const Image& img, int block) {
    Image out(img.width(), img.height());
    for (int c = 0; c < Image::kChannels; ++c)
        for (int by = 0; by < img.height(); by += block)
            for (int bx = 0; bx < img.width(); bx += block) {
                const int x1 = std::min(bx + block, img.width());
                const int y1 = std::min(by + block, img.height());
                double sum = 0.0;
                for (int y = by; y < y1; ++y)
                    for (int x = bx; x < x1; ++x) sum += img.at(c, x, y);
                const auto mean = static_cast<float>(sum / ((x1 - bx) * (y1 - by)));
                for (int y = by; y < y1; ++y)
                    for (int x = bx; x < x1; ++x) out.at(c, x, y) = mean;
            }
    out.clip();
    return out;
}

Image gaussian_blur(const Image& img, double sigma) {
    const auto taps = gaussian_taps(sigma);
    return convolve_separable(img, taps, taps);
}

Image box_blur(const Image& img, int size) {
    const std::vector<double> taps(static_cast<std::size_t>(size), 1.0 / size);
    return convolve_separable(img, taps, taps);
}

template <typename F>
Image map_samples(Image img, F&& f) {
    for (float& v : img.data()) v = static_cast<float>(f(static_cast<double>(v)));
    img.clip();
    return img;
}

Image add_gaussian_noise(Image img, double stddev, Rng& rng) {
    for (float& v : img.data()) v = static_cast<float>(v + stddev * rng.normal());
    return img;  // caller clips
}

// Bilinear sample with clamped coordinates.
float sample_bilinear(const Image& img, int c, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = img.at(c, x0, y0) * (1 - fx) + img.at(c, x1, y0) * fx;
    const double bot = img.at(c, x0, y1) * (1 - fx) + img.at(c, x1, y1) * fx;
    return static_cast<float>(top * (1 - fy) + bot * fy);
}

Image jitter(const Image& img, double amplitude, Rng& rng) {
    Image out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double dx = rng.uniform(-amplitude, amplitude);
            const double dy = rng.uniform(-amplitude, amplitude);
            for (int c = 0; c < Image::kChannels; ++c) out.at(c, x, y) = sample_bilinear(img, c, x + dx, y + dy);
        }
    out.clip();
    return out;
}

Image color_block(const Image& img, int blocks, int size, Rng& rng) {
    Image out = img;
    for (int b = 0; b < blocks; ++b) {
        const int x0 = static_cast<int>(rng.between(0, img.width() - size));
        const int y0 = static_cast<int>(rng.between(0, img.height() - size));
        const float color[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                                static_cast<float>(rng.uniform())};
        for (int c = 0; c < Image::kChannels; ++c)
            for (int y = y0; y < y0 + size; ++y)
                for (int x = x0; x < x0 + size; ++x) out.at(c, x, y) = color[c];
    }
    return out;
}

Image non_eccentricity(const Image& img, int radius, double coverage, int size, Rng& rng) {
    Image out = img;
    const double area = static_cast<double>(img.width()) * img.height();
    const int patches = std::max(1, static_cast<int>(std::lround(coverage * area / (size * size))));
    for (int p = 0; p < patches; ++p) {
        const int x0 = static_cast<int>(rng.between(0, img.width() - size));
        const int y0 = static_cast<int>(rng.between(0, img.height() - size));
        int dx = 0;
        int dy = 0;
        while (dx == 0 && dy == 0) {
            dx = static_cast<int>(rng.between(-radius, radius));
            dy = static_cast<int>(rng.between(-radius, radius));
        }
        const int sx = std::clamp(x0 + dx, 0, img.width() - size);
        const int sy = std::clamp(y0 + dy, 0, img.height() - size);
        for (int c = 0; c < Image::kChannels; ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) out.at(c, x0 + x, y0 + y) = img.at(c, sx + x, sy + y);
    }
    return out;
}

Image impulse_noise(Image img, double prob, Rng& rng) {
    for (float& v : img.data()) {
        if (rng.uniform() < prob) v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    }
    return img;
}

Image multiplicative_noise(Image img, double stddev, Rng& rng) {
    for (float& v : img.data()) v = static_cast<float>(v + v * stddev * rng.normal());
    img.clip();
    return img;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Image contrast(const Image& img, double gain) {
    const double lo = logistic(-0.5 * gain);
    const double hi = logistic(0.5 * gain);
    return map_samples(img, [&](double v) { return (logistic(gain * (v - 0.5)) - lo) / (hi - lo); });
}

Image unsharp(const Image& img, double amount, double sigma) {
    const Image blurred = gaussian_blur(img, sigma);
    Image out = img;
    auto o = out.data();
    const auto b = blurred.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(o[i] + amount * (o[i] - b[i]));
    out.clip();
    return out;
}

Image white_noise_ycbcr(const Image& img, double luma_std, double chroma_std, Rng& rng) {
    Image ycc = to_ycbcr(img);
    const double stds[3] = {luma_std, chroma_std, chroma_std};
    for (int c = 0; c < Image::kChannels; ++c)
        for (float& v : ycc.plane(c)) v = static_cast<float>(v + stds[c] * rng.normal());
    Image out = detail::from_ycbcr_unclipped(ycc);
    out.clip();
    return out;
}

Image denoise(const Image& img, const ParamSet& p, Rng& rng) {
    Image noisy = add_gaussian_noise(img, p.get("noise_std"), rng);
    noisy.clip();
    if (rng.uniform() < 0.5) return gaussian_blur(noisy, p.get("blur_sigma"));
    return box_blur(noisy, static_cast<int>(p.get("box")));
}

Image lab_chroma(const Image& img, double sigma, double factor) {
    Image lab = to_lab(img);
    if (sigma > 0.0) {
        // Blur the a/b planes only; L is kept.
        const Image blurred = gaussian_blur(lab, sigma);
        for (int c = 1; c < 3; ++c) std::ranges::copy(blurred.plane(c), lab.plane(c).begin());
    }
    if (factor != 1.0) {
        for (int c = 1; c < 3; ++c)
            for (float& v : lab.plane(c)) v = static_cast<float>(0.5 + (v - 0.5) * factor);
    }
    Image out = detail::from_lab_unclipped(lab);
    out.clip();
    return out;
}

Image color_saturate(const Image& img, double factor) {
    Image hsv = to_hsv(img);
    for (float& s : hsv.plane(1)) s = static_cast<float>(std::clamp(s * factor, 0.0, 1.0));
    Image out = detail::from_hsv_unclipped(hsv);
    out.clip();
    return out;
}

Image color_shift(const Image& img, int offset, Rng& rng) {
    int sx = 0;
    int sy = 0;
    while (sx == 0 && sy == 0) {
        sx = static_cast<int>(rng.between(-1, 1));
        sy = static_cast<int>(rng.between(-1, 1));
    }
    const int dx = sx * offset;
    const int dy = sy * offset;
    const int w = img.width();
    const int h = img.height();

    // Sobel gradient magnitude of the luma, normalized by its maximum.
    std::vector<double> luma(img.plane_size());
    for (std::size_t i = 0; i < luma.size(); ++i)
        luma[i] = 0.299 * img.plane(0)[i] + 0.587 * img.plane(1)[i] + 0.114 * img.plane(2)[i];
    auto L = [&](int x, int y) {
        return luma[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
    };
    std::vector<double> mag(luma.size());
    double peak = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
            const double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
            const double m = std::sqrt(gx * gx + gy * gy);
            mag[static_cast<std::size_t>(y) * w + x] = m;
            peak = std::max(peak, m);
        }
    Image out = img;
    if (peak <= 0.0) return out;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double wgt = mag[static_cast<std::size_t>(y) * w + x] / peak;
            const float shifted = img.at(1, std::clamp(x - dx, 0, w - 1), std::clamp(y - dy, 0, h - 1));
            out.at(1, x, y) = static_cast<float>((1.0 - wgt) * img.at(1, x, y) + wgt * shifted);
        }
    out.clip();
    return out;
}

}  // namespace

namespace {

// Level l runs the stage kernels of levels 1..l in order, each twice. A
// symmetric stage kernel with response H has H^2 in [0,1] after two passes,
// so every level attenuates each frequency at least as much as the one below
// it even though disks and lines have negative lobes.
template <class MakeKernel>
Image cascade(const Image& img, DistortionKind kind, int level, const SeverityTable& table, MakeKernel make) {
    Image out = img;
    for (int l = 1; l <= level; ++l) {
        const Kernel2D k = make(table.params(kind, l));
        out = convolve2d(convolve2d(out, k), k);
    }
    return out;
}

}  // namespace

int min_working_size(DistortionKind kind, int level, const SeverityTable& table) {
    const ParamSet& p = table.params(kind, level);
    switch (kind) {
        case DistortionKind::ColorBlock:
        case DistortionKind::NonEccentricity:
            return static_cast<int>(p.get("size"));
        case DistortionKind::MotionBlur:
            return make_line_kernel(p.get("length"), 45.0).width;
        case DistortionKind::LensBlur:
            return make_disk_kernel(p.get("radius")).width;
        case DistortionKind::JpegCompression:
            return 8;
        case DistortionKind::Pixelate:
            return static_cast<int>(p.get("block"));
        default:
            return 2;
    }
}

Image apply(const Image& img, const DistortionSpec& spec, const SeverityTable& table) {
    check_level(spec.level);
    const int need = min_working_size(spec.kind, spec.level, table);
    if (img.width() < need || img.height() < need) {
        throw InvalidArgument(std::string(kind_name(spec.kind)) + " level " + std::to_string(spec.level) +
                              " needs at least " + std::to_string(need) + "x" + std::to_string(need) + " pixels");
    }
    const ParamSet& p = table.params(spec.kind, spec.level);
    Rng rng(spec.seed);

    switch (spec.kind) {
        case DistortionKind::ResizeBicubic:
            return down_up(img, p.get("scale"), ResizeMethod::Bicubic);
        case DistortionKind::ResizeBilinear:
            return down_up(img, p.get("scale"), ResizeMethod::Bilinear);
        case DistortionKind::ResizeLanczos:
            return down_up(img, p.get("scale"), ResizeMethod::Lanczos3);
        case DistortionKind::Pixelate:
            return pixelate(img, static_cast<int>(p.get("block")));
        case DistortionKind::MotionBlur: {
            const double angle = rng.uniform(0.0, 180.0);
            return cascade(img, spec.kind, spec.level, table,
                           [&](const ParamSet& s) { return make_line_kernel(s.get("length"), angle); });
        }
        case DistortionKind::GaussianBlur:
            return gaussian_blur(img, p.get("sigma"));
        case DistortionKind::LensBlur:
            return cascade(img, spec.kind, spec.level, table,
                           [](const ParamSet& s) { return make_disk_kernel(s.get("radius")); });
        case DistortionKind::MeanShift: {
            const double delta = p.get("delta");
            return map_samples(img, [&](double v) { return v + delta; });
        }
        case DistortionKind::Contrast:
            return contrast(img, p.get("gain"));
        case DistortionKind::UnsharpMask:
            return unsharp(img, p.get("amount"), p.get("sigma"));
        case DistortionKind::Jitter:
            return jitter(img, p.get("amplitude"), rng);
        case DistortionKind::ColorBlock:
            return color_block(img, static_cast<int>(p.get("blocks")), static_cast<int>(p.get("size")), rng);
        case DistortionKind::NonEccentricity:
            return non_eccentricity(img, static_cast<int>(p.get("radius")), p.get("coverage"),
                                    static_cast<int>(p.get("size")), rng);
        case DistortionKind::JpegCompression:
            return jpeg_roundtrip(img, static_cast<int>(p.get("quality")));
        case DistortionKind::WhiteNoiseRGB: {
            Image out = add_gaussian_noise(img, p.get("std"), rng);
            out.clip();
            return out;
        }
        case DistortionKind::WhiteNoiseYCbCr:
            return white_noise_ycbcr(img, p.get("std"), p.get("chroma_std"), rng);
        case DistortionKind::ImpulseNoise:
            return impulse_noise(img, p.get("prob"), rng);
        case DistortionKind::MultiplicativeNoise:
            return multiplicative_noise(img, p.get("std"), rng);
        case DistortionKind::Denoise:
            return denoise(img, p, rng);
        case DistortionKind::Brighten:
        case DistortionKind::Darken: {
            const double gamma = p.get("gamma");
            return map_samples(img, [&](double v) { return std::pow(std::clamp(v, 0.0, 1.0), gamma); });
        }
        case DistortionKind::ColorDiffuse:
            return lab_chroma(img, p.get("sigma"), 1.0);
        case DistortionKind::ColorShift:
            return color_shift(img, static_cast<int>(p.get("offset")), rng);
        case DistortionKind::ColorSaturate:
            return color_saturate(img, p.get("factor"));
        case DistortionKind::Saturate:
            return lab_chroma(img, 0.0, p.get("factor"));
    }
    throw InvalidArgument("unknown distortion kind");
}

std::vector<DistortionSpec> sample_specs(Rng& rng, int n) {
    if (n < 1 || n > kNumDistortionKinds) {
        throw InvalidArgument("sample_specs: n must be in 1..25, got " + std::to_string(n));
    }
    std::vector<DistortionKind> pool = list_kinds();
    std::vector<DistortionSpec> out;
    out.reserve(static_cast<std::size_t>(n));
    // Partial Fisher-Yates: the first n slots end up a uniform n-subset.
    for (int i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(kNumDistortionKinds - i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        DistortionSpec s;
        s.kind = pool[static_cast<std::size_t>(i)];
        s.level = 1 + static_cast<int>(rng.below(kNumLevels));
        s.seed = rng.next_u64();
        out.push_back(s);
    }
    return out;
}

}  // namespace reiqa
