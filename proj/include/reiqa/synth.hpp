#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reiqa/distortion.hpp"
#include "reiqa/image.hpp"

namespace reiqa {

/// Procedural stand-ins for natural photographs.
enum class SynthStyle {
    Gradient,   // smooth multi-color ramps with faint texture
    Texture,    // oriented gratings, stripes and checks
    BandNoise,  // multi-octave colored noise
    Composite,  // ramp background with hard-edged shapes and noise texture
};

Image synth_image(std::uint64_t seed, int width, int height, SynthStyle style);

/// Style cycles through the four kinds by index; image i uses a seed derived
/// from (seed, i).
std::vector<Image> synth_corpus(std::uint64_t seed, int count, int width, int height);

struct PlannedDistortion {
    int content = 0;
    DistortionSpec spec;
};

/// Distortions for a labeled synthetic set: for every content, `kinds_per_image`
/// distinct kinds drawn from `kinds`, each at one random level, or at all five
/// levels with all_levels. Order is content-major.
std::vector<PlannedDistortion> plan_distortions(std::uint64_t seed, int contents, int kinds_per_image,
                                                std::span<const DistortionKind> kinds, bool all_levels = false);

}  // namespace reiqa
