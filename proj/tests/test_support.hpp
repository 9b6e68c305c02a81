#pragma once

#include <cmath>
#include <vector>

#include "reiqa/image.hpp"
#include "reiqa/rng.hpp"

namespace reiqa::testing {

inline Image random_image(Rng& rng, int w, int h) {
    Image img(w, h);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

inline Image ramp_image(int w, int h) {
    Image img(w, h);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(c, x, y) = static_cast<float>((x + 2 * y + c) / static_cast<double>(w + 2 * h + 3));
    return img;
}

// Nested-loop correlation with replicate borders, computed in long double.
inline Image brute_force_convolve(const Image& img, const Kernel2D& k) {
    Image out(img.width(), img.height());
    const int rx = k.width / 2;
    const int ry = k.height / 2;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) {
                long double s = 0.0L;
                for (int j = 0; j < k.height; ++j)
                    for (int i = 0; i < k.width; ++i) {
                        int sx = x + i - rx;
                        int sy = y + j - ry;
                        sx = sx < 0 ? 0 : (sx >= img.width() ? img.width() - 1 : sx);
                        sy = sy < 0 ? 0 : (sy >= img.height() ? img.height() - 1 : sy);
                        s += static_cast<long double>(k.at(i, j)) * img.at(c, sx, sy);
                    }
                double v = static_cast<double>(s);
                out.at(c, x, y) = static_cast<float>(v < 0 ? 0 : (v > 1 ? 1 : v));
            }
    return out;
}

}  // namespace reiqa::testing
