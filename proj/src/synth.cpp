#include "reiqa/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "reiqa/error.hpp"
#include "reiqa/rng.hpp"

namespace reiqa {

namespace {

using Color = std::array<double, 3>;

Color random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

// Sum of upsampled white-noise grids; octave o has cell size base/2^o and
// amplitude 2^-o.
std::vector<double> octave_noise(Rng& rng, int w, int h, int base_cell, int octaves) {
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    double amp = 1.0;
    double total = 0.0;
    for (int o = 0; o < octaves; ++o) {
        const int cell = std::max(1, base_cell >> o);
        const int gw = w / cell + 2;
        const int gh = h / cell + 2;
        std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
        for (double& g : grid) g = rng.uniform(-1.0, 1.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double gx = static_cast<double>(x) / cell;
                const double gy = static_cast<double>(y) / cell;
                const int x0 = static_cast<int>(gx);
                const int y0 = static_cast<int>(gy);
                // Smoothstep interpolation keeps the field band-limited.
                double fx = gx - x0;
                double fy = gy - y0;
                fx = fx * fx * (3 - 2 * fx);
                fy = fy * fy * (3 - 2 * fy);
                auto G = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * gw + i]; };
                const double v = (G(x0, y0) * (1 - fx) + G(x0 + 1, y0) * fx) * (1 - fy) +
                                 (G(x0, y0 + 1) * (1 - fx) + G(x0 + 1, y0 + 1) * fx) * fy;
                out[static_cast<std::size_t>(y) * w + x] += amp * v;
            }
        total += amp;
        amp *= 0.5;
    }
    for (double& v : out) v /= total;
    return out;
}

void put(Image& img, int x, int y, const Color& c) {
    for (int k = 0; k < 3; ++k) img.at(k, x, y) = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
}

Color lerp(const Color& a, const Color& b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

Image gradient(Rng& rng, int w, int h) {
    const Color c0 = random_color(rng), c1 = random_color(rng), c2 = random_color(rng);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
    const double diag = std::hypot(w, h);
    const auto grain = octave_noise(rng, w, h, 16, 4);
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = 0.5 + ((x - w / 2.0) * std::cos(angle) + (y - h / 2.0) * std::sin(angle)) / diag;
            const double r = std::min(1.0, std::hypot(x - cx, y - cy) / (0.7 * diag));
            Color c = lerp(lerp(c0, c1, std::clamp(t, 0.0, 1.0)), c2, r * 0.6);
            const double g = 0.06 * grain[static_cast<std::size_t>(y) * w + x];
            put(img, x, y, {c[0] + g, c[1] + g, c[2] + g});
        }
    return img;
}

Image texture(Rng& rng, int w, int h) {
    const int gratings = 2 + static_cast<int>(rng.below(2));
    struct Grating {
        double fx, fy, phase;
        Color color;
    };
    std::vector<Grating> gs;
    for (int i = 0; i < gratings; ++i) {
        const double freq = rng.uniform(0.02, 0.25);
        const double a = rng.uniform(0.0, std::numbers::pi);
        gs.push_back({freq * std::cos(a), freq * std::sin(a), rng.uniform(0.0, 6.3), random_color(rng)});
    }
    const Color base = random_color(rng);
    const int check = 4 + static_cast<int>(rng.below(28));
    const double check_amp = rng.uniform(0.0, 0.25);
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Color c = base;
            for (const auto& g : gs) {
                const double s = std::sin(2 * std::numbers::pi * (g.fx * x + g.fy * y) + g.phase);
                for (int k = 0; k < 3; ++k) c[k] = c[k] * 0.7 + 0.3 * g.color[k] * (0.5 + 0.5 * s);
            }
            const double chk = ((x / check + y / check) % 2 == 0) ? check_amp : -check_amp;
            put(img, x, y, {c[0] + chk, c[1] + chk, c[2] + chk});
        }
    return img;
}

Image band_noise(Rng& rng, int w, int h) {
    const int base = 8 << rng.below(4);
    std::array<std::vector<double>, 3> planes;
    for (auto& p : planes) p = octave_noise(rng, w, h, base, 5);
    const Color mean = random_color(rng);
    const double contrast = rng.uniform(0.3, 0.6);
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto i = static_cast<std::size_t>(y) * w + x;
            const double common = planes[0][i];
            put(img, x, y,
                {mean[0] + contrast * (0.7 * common + 0.3 * planes[1][i]),
                 mean[1] + contrast * (0.7 * common + 0.3 * planes[2][i]),
                 mean[2] + contrast * (0.7 * common - 0.3 * planes[1][i])});
        }
    return img;
}

Image composite(Rng& rng, int w, int h) {
    Image img = gradient(rng, w, h);
    const auto tex = octave_noise(rng, w, h, 32, 5);
    const int shapes = 4 + static_cast<int>(rng.below(8));
    for (int s = 0; s < shapes; ++s) {
        const Color c = random_color(rng);
        const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
        const double rx = rng.uniform(0.05, 0.3) * w, ry = rng.uniform(0.05, 0.3) * h;
        const bool ellipse = rng.uniform() < 0.5;
        const double tex_amp = rng.uniform(0.0, 0.3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = (x - cx) / rx;
                const double dy = (y - cy) / ry;
                const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (!inside) continue;
                const double t = tex_amp * tex[static_cast<std::size_t>(y) * w + x];
                put(img, x, y, {c[0] + t, c[1] + t, c[2] + t});
            }
    }
    return img;
}

}  // namespace

Image synth_image(std::uint64_t seed, int width, int height, SynthStyle style) {
    Rng rng(seed);
    switch (style) {
        case SynthStyle::Gradient: return gradient(rng, width, height);
        case SynthStyle::Texture: return texture(rng, width, height);
        case SynthStyle::BandNoise: return band_noise(rng, width, height);
        case SynthStyle::Composite: break;
    }
    return composite(rng, width, height);
}

std::vector<Image> synth_corpus(std::uint64_t seed, int count, int width, int height) {
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto style = static_cast<SynthStyle>(i % 4);
        out.push_back(synth_image(Rng::derive(seed, static_cast<std::uint64_t>(i)), width, height, style));
    }
    return out;
}

std::vector<PlannedDistortion> plan_distortions(std::uint64_t seed, int contents, int kinds_per_image,
                                                std::span<const DistortionKind> kinds, bool all_levels) {
    if (contents < 1) throw InvalidArgument("need at least one content");
    if (kinds_per_image < 1 || kinds_per_image > static_cast<int>(kinds.size())) {
        throw InvalidArgument("kinds per image must be in 1.." + std::to_string(kinds.size()));
    }
    std::vector<PlannedDistortion> out;
    for (int c = 0; c < contents; ++c) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c)));
        std::vector<DistortionKind> pool(kinds.begin(), kinds.end());
        for (int i = 0; i < kinds_per_image; ++i) {
            const auto j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
            const int level = 1 + static_cast<int>(rng.below(kNumLevels));
            const std::uint64_t noise_seed = rng.next_u64();
            for (int l = all_levels ? 1 : level; l <= (all_levels ? kNumLevels : level); ++l) {
                out.push_back({c, DistortionSpec{pool[static_cast<std::size_t>(i)], l, noise_seed}});
            }
        }
    }
    return out;
}

}  // namespace reiqa
