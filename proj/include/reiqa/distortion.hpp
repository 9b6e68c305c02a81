#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reiqa/image.hpp"
#include "reiqa/rng.hpp"

namespace reiqa {

enum class DistortionKind : std::uint8_t {
    ResizeBicubic,
    ResizeBilinear,
    ResizeLanczos,
    Pixelate,
    MotionBlur,
    GaussianBlur,
    LensBlur,
    MeanShift,
    Contrast,
    UnsharpMask,
    Jitter,
    ColorBlock,
    NonEccentricity,
    JpegCompression,
    WhiteNoiseRGB,
    WhiteNoiseYCbCr,
    ImpulseNoise,
    MultiplicativeNoise,
    Denoise,
    Brighten,
    Darken,
    ColorDiffuse,
    ColorShift,
    ColorSaturate,
    Saturate,
};

inline constexpr int kNumDistortionKinds = 25;
inline constexpr int kNumLevels = 5;

std::string_view kind_name(DistortionKind kind);
/// Throws InvalidArgument for names outside the bank.
DistortionKind kind_from_name(std::string_view name);
std::vector<DistortionKind> list_kinds();

/// Kinds whose error against the pristine image grows strictly with level:
/// blurs, noises, JPEG, pixelate and the resizes.
bool is_monotone_kind(DistortionKind kind);

struct DistortionSpec {
    DistortionKind kind = DistortionKind::GaussianBlur;
    int level = 1;
    std::uint64_t seed = 0;

    friend bool operator==(const DistortionSpec&, const DistortionSpec&) = default;
};

/// Named parameters of one table row, in file order. The first entry is the
/// governing scalar.
class ParamSet {
public:
    ParamSet() = default;
    explicit ParamSet(std::vector<std::pair<std::string, double>> values) : values_(std::move(values)) {}

    double get(std::string_view name) const;
    double governing() const;
    const std::vector<std::pair<std::string, double>>& values() const { return values_; }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<std::pair<std::string, double>> values_;
};

class SeverityTable {
public:
    /// Parse the key-value text format and validate it: every kind must have
    /// all five levels and a strictly monotone governing parameter.
    static SeverityTable parse(std::string_view text);
    static SeverityTable load(const std::filesystem::path& path);
    /// The table shipped in data/severity_table.txt, compiled in.
    static const SeverityTable& builtin();

    const ParamSet& params(DistortionKind kind, int level) const;

    /// Canonical serialization: one line per (kind, level) in enum order,
    /// values printed with %.17g. Independent of comments and whitespace in
    /// the source text.
    std::string canonical() const;
    std::uint64_t digest() const;

private:
    std::array<std::array<ParamSet, kNumLevels>, kNumDistortionKinds> rows_{};
};

const ParamSet& params_for(DistortionKind kind, int level);
const ParamSet& params_for(std::string_view kind_name, int level);

/// Smallest width/height the kind accepts at the given level.
int min_working_size(DistortionKind kind, int level, const SeverityTable& table = SeverityTable::builtin());

/// Apply one distortion. Deterministic in (img, spec); stochastic kinds draw
/// only from a generator seeded with spec.seed.
Image apply(const Image& img, const DistortionSpec& spec,
            const SeverityTable& table = SeverityTable::builtin());

/// n distinct kinds drawn uniformly without replacement, each with a uniform
/// level and a fresh seed. Requires 1 <= n <= 25.
std::vector<DistortionSpec> sample_specs(Rng& rng, int n);

}  // namespace reiqa
