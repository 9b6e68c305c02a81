#include <set>

#include "doctest.h"
#include "reiqa/error.hpp"
#include "reiqa/pairs.hpp"
#include "reiqa/synth.hpp"
#include "test_support.hpp"

using namespace reiqa;

namespace {

// Overlap by painting both rects onto a pixel grid and counting.
double painted_overlap(const Rect& a, const Rect& b, int width, int height) {
    std::vector<unsigned char> grid(static_cast<std::size_t>(width) * height, 0);
    for (int y = a.y; y < a.y + a.h; ++y)
        for (int x = a.x; x < a.x + a.w; ++x) grid[static_cast<std::size_t>(y) * width + x] |= 1;
    long both = 0;
    for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) both += grid[static_cast<std::size_t>(y) * width + x] & 1;
    return static_cast<double>(both) / (static_cast<double>(a.w) * a.h);
}

PipelineConfig small_config(int n_aug, std::vector<double> scales) {
    PipelineConfig cfg;
    cfg.n_aug = n_aug;
    cfg.patch = 32;
    cfg.scales = std::move(scales);
    return cfg;
}

}  // namespace

TEST_CASE("build_chunk has the source first and one entry per spec") {
    const Image src = synth_image(3, 64, 48, SynthStyle::Composite);
    std::vector<DistortionSpec> specs{{DistortionKind::GaussianBlur, 2, 1}, {DistortionKind::WhiteNoiseRGB, 3, 2}};
    const Chunk c = build_chunk(src, specs);
    CHECK(c.size() == 3);
    CHECK(c.at(0) == src);
    CHECK(c.at(1) == apply(src, specs[0]));
    CHECK(c.at(2) == apply(src, specs[1]));

    const Chunk empty = build_chunk(src, {});
    CHECK(empty.size() == 1);

    const Chunk again = build_chunk(src, specs);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(digest(again.at(i)) == digest(c.at(i)));

    std::vector<DistortionSpec> dup{{DistortionKind::GaussianBlur, 2, 1}, {DistortionKind::GaussianBlur, 4, 2}};
    CHECK_THROWS_AS(build_chunk(src, dup), InvalidArgument);
}

TEST_CASE("overlap_fraction") {
    const Rect a{0, 0, 160, 160};
    CHECK(overlap_fraction(a, a) == 1.0);
    CHECK(overlap_fraction(a, Rect{160, 0, 160, 160}) == 0.0);
    CHECK(overlap_fraction(a, Rect{400, 300, 160, 160}) == 0.0);
    CHECK(overlap_fraction(a, Rect{80, 0, 160, 160}) == 0.5);
    CHECK_THROWS_AS(overlap_fraction(a, Rect{0, 0, 100, 160}), InvalidArgument);

    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
        const int p = static_cast<int>(rng.between(1, 20));
        Rect r1{static_cast<int>(rng.between(0, 30)), static_cast<int>(rng.between(0, 30)), p, p};
        Rect r2{static_cast<int>(rng.between(0, 30)), static_cast<int>(rng.between(0, 30)), p, p};
        CHECK(overlap_fraction(r1, r2) == doctest::Approx(painted_overlap(r1, r2, 50, 50)).epsilon(1e-12));
    }
}

TEST_CASE("OLA sampler keeps every pair inside the bounds") {
    PipelineConfig cfg;  // patch 160, bounds [0.10, 0.30]
    Rng rng(2024);
    int inside = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto [a, b] = sample_ola_crops(rng, 320, 240, cfg);
        REQUIRE(rect_within(a, 320, 240));
        REQUIRE(rect_within(b, 320, 240));
        REQUIRE(a.w == 160);
        REQUIRE(b.h == 160);
        const double f = i % 50 == 0 ? painted_overlap(a, b, 320, 240) : overlap_fraction(a, b);
        inside += (f >= 0.10 && f <= 0.30);
    }
    CHECK(inside == 10000);
}

TEST_CASE("OLA sampler edge cases") {
    PipelineConfig cfg;
    cfg.patch = 160;
    Rng rng(5);

    cfg.ola = {1.0, 1.0};
    const auto [a, b] = sample_ola_crops(rng, 160, 160, cfg);
    CHECK(a == Rect{0, 0, 160, 160});
    CHECK(b == Rect{0, 0, 160, 160});

    cfg.ola = {0.1, 0.3};
    CHECK_THROWS_AS(sample_ola_crops(rng, 160, 160, cfg), SamplingExhausted);
    CHECK_THROWS_AS(sample_ola_crops(rng, 159, 400, cfg), InvalidArgument);

    // The sampler gives up after exactly max_crop_attempts draws.
    cfg.max_crop_attempts = 7;
    Rng counted(9);
    CHECK_THROWS_AS(sample_ola_crops(counted, 160, 160, cfg), SamplingExhausted);
    Rng reference(9);
    for (int i = 0; i < 7 * 4; ++i) reference.below(1);
    CHECK(counted.next_u64() == reference.next_u64());
}

TEST_CASE("crop_chunk is an element-wise crop") {
    const Image src = synth_image(8, 80, 64, SynthStyle::Texture);
    std::vector<DistortionSpec> specs{{DistortionKind::JpegCompression, 3, 4}, {DistortionKind::Darken, 1, 5}};
    const Chunk c = build_chunk(src, specs);

    const auto full = crop_chunk(c, Rect{0, 0, 80, 64});
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(full[i] == c.at(i));

    const Rect r{10, 7, 32, 32};
    const auto part = crop_chunk(c, r);
    REQUIRE(part.size() == 3);
    CHECK(part[0] == crop(src, r));
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(digest(part[i]) == digest(crop(c.at(i), r)));
    CHECK_THROWS_AS(crop_chunk(c, Rect{60, 0, 32, 32}), InvalidArgument);
}

TEST_CASE("half_swap") {
    auto make = [](int n) {
        PairBatch b;
        for (int i = 0; i < n; ++i) {
            b.queries.emplace_back(2, 2, 0.1f * static_cast<float>(i));
            b.keys.emplace_back(2, 2, 0.05f + 0.1f * static_cast<float>(i));
            b.meta.push_back(PairMeta{0, 0, 0, i, 0, 1, false});
        }
        return b;
    };

    PairBatch one = make(1);
    const PairBatch one_copy = one;
    half_swap(one);
    CHECK(one.queries == one_copy.queries);
    CHECK(one.meta == one_copy.meta);

    PairBatch four = make(4);
    const PairBatch orig = four;
    half_swap(four);
    for (int i = 0; i < 4; ++i) {
        const bool odd = i % 2 == 1;
        CHECK(four.meta[i].swapped == odd);
        CHECK(four.queries[i] == (odd ? orig.keys[i] : orig.queries[i]));
        CHECK(four.keys[i] == (odd ? orig.queries[i] : orig.keys[i]));
    }
    half_swap(four);
    CHECK(four.queries == orig.queries);
    CHECK(four.keys == orig.keys);
    CHECK(four.meta == orig.meta);

    PairBatch bad = make(3);
    bad.keys.pop_back();
    CHECK_THROWS_AS(half_swap(bad), InvalidArgument);
}

TEST_CASE("make_batch arity") {
    const auto sources = synth_corpus(77, 2, 96, 96);
    Rng rng(1);
    const PairBatch one = make_batch(rng, std::span(sources).first(1), small_config(2, {1.0}));
    CHECK(one.size() == 3);

    const PairBatch both = make_batch(rng, sources, small_config(11, {1.0, 0.5}));
    CHECK(both.size() == 48);
    CHECK(both.skipped == 0);
    CHECK(pairs_for_source(96, 96, small_config(11, {1.0, 0.5})) == 24);

    // Half scale of a 48-pixel source is smaller than the patch and is skipped.
    const auto tiny = synth_corpus(78, 1, 48, 48);
    const PairBatch partial = make_batch(rng, tiny, small_config(3, {1.0, 0.5}));
    CHECK(partial.size() == 4);
    CHECK(partial.skipped == 1);
    CHECK(pairs_for_source(48, 48, small_config(3, {1.0, 0.5})) == 4);

    CHECK_THROWS_AS(make_batch(rng, std::span<const Image>{}, small_config(2, {1.0})), InvalidArgument);
}

TEST_CASE("make_batch is deterministic and independent of thread count") {
    const auto sources = synth_corpus(5, 5, 128, 112);
    const auto cfg = small_config(4, {1.0, 0.5});
    Rng r1(99), r2(99), r3(99);
    const auto a = make_batch(r1, sources, cfg, 1);
    const auto b = make_batch(r2, sources, cfg, 1);
    const auto c = make_batch(r3, sources, cfg, 4);
    CHECK(a.digest() == b.digest());
    CHECK(a.digest() == c.digest());
    CHECK(a.meta == c.meta);
    CHECK(r1.next_u64() == r3.next_u64());
}

TEST_CASE("labeling invariants over 1000 batches") {
    const auto pool = synth_corpus(31, 12, 128, 128);
    PipelineConfig cfg = small_config(3, {1.0, 0.5});
    cfg.ola = {0.1, 0.5};
    Rng rng(4242);
    for (int b = 0; b < 1000; ++b) {
        const int n_src = 1 + static_cast<int>(rng.below(2));
        cfg.n_aug = 1 + static_cast<int>(rng.below(4));
        const std::size_t first = rng.below(pool.size() - n_src + 1);
        const PairBatch batch = make_batch(rng, std::span(pool).subspan(first, n_src), cfg, 1,
                                           static_cast<std::uint64_t>(b) * 16);
        REQUIRE(batch.size() == static_cast<std::size_t>(n_src * (cfg.n_aug + 1) * 2));

        int swapped = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) swapped += batch.meta[i].swapped;
        CHECK(swapped == static_cast<int>(batch.size() / 2));

        // Involution on the real batch.
        PairBatch twice = batch;
        half_swap(twice);
        half_swap(twice);
        CHECK(twice.digest() == batch.digest());

        std::set<std::uint64_t> chunks;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const PairMeta& m = batch.meta[i];
            chunks.insert(m.chunk);
            // A positive pair is two different crops of one augmented image.
            CHECK(m.query_crop != m.key_crop);
            CHECK(m.swapped == (i % 2 == 1));
        }
        // Every chunk has a negative that shares content and crop but not the
        // distortion.
        for (std::uint64_t k : chunks) {
            bool found = false;
            for (std::size_t i = 0; i < batch.size() && !found; ++i)
                for (std::size_t j = 0; j < batch.size() && !found; ++j) {
                    if (i == j) continue;
                    const PairMeta& q = batch.meta[i];
                    const PairMeta& kk = batch.meta[j];
                    found = q.chunk == k && kk.chunk == k && q.query_crop == kk.key_crop && q.aug != kk.aug;
                }
            CHECK(found);
        }
    }
}

TEST_CASE("pair contents match their metadata") {
    // Rebuild one chunk by hand and locate each emitted crop in it.
    const auto sources = synth_corpus(12, 1, 72, 72);
    const auto cfg = small_config(3, {1.0});
    Rng rng(6);
    const PairBatch batch = make_batch(rng, sources, cfg);

    Rng replay(6);
    Rng stream(Rng::derive(replay.next_u64(), 0));
    const auto specs = sample_specs(stream, cfg.n_aug);
    const Chunk chunk = build_chunk(sources[0], specs);
    const auto [r1, r2] = sample_ola_crops(stream, 72, 72, cfg);
    const Rect rects[2] = {r1, r2};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const PairMeta& m = batch.meta[i];
        CHECK(batch.queries[i] == crop(chunk.at(m.aug), rects[m.query_crop]));
        CHECK(batch.keys[i] == crop(chunk.at(m.aug), rects[m.key_crop]));
    }
}
