#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "reiqa/distortion.hpp"
#include "reiqa/image.hpp"
#include "reiqa/rng.hpp"

namespace reiqa {

/// A source image followed by its distorted versions; element 0 is the
/// untouched source.
struct Chunk {
    Image source;
    std::vector<Image> distorted;
    std::vector<DistortionSpec> specs;

    std::size_t size() const { return distorted.size() + 1; }
    const Image& at(std::size_t i) const { return i == 0 ? source : distorted[i - 1]; }
};

struct OlaBounds {
    double min_frac = 0.10;
    double max_frac = 0.30;
};

struct PipelineConfig {
    int n_aug = 11;
    int patch = 160;
    OlaBounds ola;
    std::vector<double> scales{1.0, 0.5};
    int max_crop_attempts = 1000;

    /// Throws InvalidArgument on out-of-range fields.
    void validate() const;
};

/// Provenance of one query/key pair. Crop ids are 0 for the first crop of
/// the chunk and 1 for the second; a swapped pair carries the key crop in
/// the query slot.
struct PairMeta {
    std::uint64_t chunk = 0;
    int source = 0;
    int scale = 0;
    int aug = 0;
    int query_crop = 0;
    int key_crop = 1;
    bool swapped = false;

    friend bool operator==(const PairMeta&, const PairMeta&) = default;
};

/// Index-aligned queries and keys. Pair i is the only positive for query i;
/// every (query_i, key_j) with i != j is a negative.
struct PairBatch {
    std::vector<Image> queries;
    std::vector<Image> keys;
    std::vector<PairMeta> meta;
    int skipped = 0;  // (source, scale) combinations too small for a patch

    std::size_t size() const { return queries.size(); }
    std::uint64_t digest() const;
    void append(PairBatch&& other);
};

Chunk build_chunk(const Image& src, std::span<const DistortionSpec> specs);

/// Intersection area over the area of one patch. Both rects must have the
/// same size.
double overlap_fraction(const Rect& a, const Rect& b);

/// Two patch-sized rects whose overlap lies within cfg.ola, by rejection
/// sampling over uniform positions.
std::pair<Rect, Rect> sample_ola_crops(Rng& rng, int width, int height, const PipelineConfig& cfg);

std::vector<Image> crop_chunk(const Chunk& chunk, const Rect& r);

/// Exchange query and key for every odd pair index and toggle its swapped
/// flag. Applying it twice restores the input.
void half_swap(std::vector<Image>& queries, std::vector<Image>& keys, std::vector<PairMeta>& meta);
void half_swap(PairBatch& batch);

/// Pairs for every source at every scale: (n_aug + 1) pairs per chunk, half
/// swapped. Each source draws from its own stream split off `rng`, so the
/// result does not depend on `threads`. Chunk ids count up from chunk_base in
/// (source, scale) order.
PairBatch make_batch(Rng& rng, std::span<const Image> sources, const PipelineConfig& cfg, int threads = 1,
                     std::uint64_t chunk_base = 0);

/// Number of pairs make_batch yields for a source of the given size.
int pairs_for_source(int width, int height, const PipelineConfig& cfg);

}  // namespace reiqa
