#include "reiqa/pairs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "reiqa/digest.hpp"
#include "reiqa/error.hpp"

namespace reiqa {

void PipelineConfig::validate() const {
    if (n_aug < 0 || n_aug > kNumDistortionKinds) throw InvalidArgument("n_aug must be in 0..25");
    if (patch < 32) throw InvalidArgument("patch must be at least 32");
    if (!(0.0 <= ola.min_frac && ola.min_frac <= ola.max_frac && ola.max_frac <= 1.0)) {
        throw InvalidArgument("overlap bounds must satisfy 0 <= min <= max <= 1");
    }
    if (scales.empty()) throw InvalidArgument("at least one scale is required");
    for (double s : scales)
        if (!(s > 0.0 && s <= 1.0)) throw InvalidArgument("scales must be in (0, 1]");
    if (max_crop_attempts < 1) throw InvalidArgument("max_crop_attempts must be positive");
}

std::uint64_t PairBatch::digest() const {
    Digest d;
    for (std::size_t i = 0; i < size(); ++i) {
        d.update(queries[i].data()).update(keys[i].data());
        const PairMeta& m = meta[i];
        d.update_u64(m.chunk).update_u64(static_cast<std::uint64_t>(m.aug));
        d.update_u64(static_cast<std::uint64_t>(m.query_crop * 2 + m.key_crop + (m.swapped ? 4 : 0)));
    }
    return d.value();
}

void PairBatch::append(PairBatch&& other) {
    for (auto& img : other.queries) queries.push_back(std::move(img));
    for (auto& img : other.keys) keys.push_back(std::move(img));
    meta.insert(meta.end(), other.meta.begin(), other.meta.end());
    skipped += other.skipped;
}

Chunk build_chunk(const Image& src, std::span<const DistortionSpec> specs) {
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (std::size_t j = i + 1; j < specs.size(); ++j)
            if (specs[i].kind == specs[j].kind) throw InvalidArgument("chunk specs must use distinct kinds");
    Chunk chunk;
    chunk.source = src;
    chunk.specs.assign(specs.begin(), specs.end());
    chunk.distorted.reserve(specs.size());
    for (const auto& spec : specs) chunk.distorted.push_back(apply(src, spec));
    return chunk;
}

double overlap_fraction(const Rect& a, const Rect& b) {
    if (a.w != b.w || a.h != b.h) throw InvalidArgument("overlap_fraction needs equal-sized rects");
    if (a.w <= 0 || a.h <= 0) throw InvalidArgument("overlap_fraction needs non-empty rects");
    const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    return static_cast<double>(ix) * iy / (static_cast<double>(a.w) * a.h);
}

std::pair<Rect, Rect> sample_ola_crops(Rng& rng, int width, int height, const PipelineConfig& cfg) {
    const int p = cfg.patch;
    if (width < p || height < p) throw InvalidArgument("image smaller than the crop patch");
    for (int attempt = 0; attempt < cfg.max_crop_attempts; ++attempt) {
        Rect a{static_cast<int>(rng.between(0, width - p)), static_cast<int>(rng.between(0, height - p)), p, p};
        Rect b{static_cast<int>(rng.between(0, width - p)), static_cast<int>(rng.between(0, height - p)), p, p};
        const double f = overlap_fraction(a, b);
        if (f >= cfg.ola.min_frac && f <= cfg.ola.max_frac) return {a, b};
    }
    throw SamplingExhausted("no crop pair met the overlap bounds after " + std::to_string(cfg.max_crop_attempts) +
                            " attempts");
}

std::vector<Image> crop_chunk(const Chunk& chunk, const Rect& r) {
    std::vector<Image> out;
    out.reserve(chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(crop(chunk.at(i), r));
    return out;
}

void half_swap(std::vector<Image>& queries, std::vector<Image>& keys, std::vector<PairMeta>& meta) {
    if (queries.size() != keys.size() || queries.size() != meta.size()) {
        throw InvalidArgument("half_swap needs equal-length queries, keys and meta");
    }
    for (std::size_t i = 1; i < queries.size(); i += 2) {
        std::swap(queries[i], keys[i]);
        std::swap(meta[i].query_crop, meta[i].key_crop);
        meta[i].swapped = !meta[i].swapped;
    }
}

void half_swap(PairBatch& batch) { half_swap(batch.queries, batch.keys, batch.meta); }

namespace {

int scaled_size(int n, double s) { return std::max(1, static_cast<int>(std::lround(n * s))); }

PairBatch pairs_from_source(Rng rng, const Image& src, int source, const PipelineConfig& cfg,
                            std::uint64_t chunk_base) {
    PairBatch out;
    for (std::size_t si = 0; si < cfg.scales.size(); ++si) {
        const double s = cfg.scales[si];
        const int w = scaled_size(src.width(), s);
        const int h = scaled_size(src.height(), s);
        if (w < cfg.patch || h < cfg.patch) {
            ++out.skipped;
            continue;
        }
        const Image scaled = (w == src.width() && h == src.height()) ? src : resize(src, w, h, ResizeMethod::Bilinear);
        const auto specs = cfg.n_aug > 0 ? sample_specs(rng, cfg.n_aug) : std::vector<DistortionSpec>{};
        const Chunk chunk = build_chunk(scaled, specs);
        const auto [r1, r2] = sample_ola_crops(rng, w, h, cfg);
        auto c1 = crop_chunk(chunk, r1);
        auto c2 = crop_chunk(chunk, r2);
        const std::uint64_t id = chunk_base + static_cast<std::uint64_t>(source) * cfg.scales.size() + si;
        for (std::size_t a = 0; a < chunk.size(); ++a) {
            out.queries.push_back(std::move(c1[a]));
            out.keys.push_back(std::move(c2[a]));
            out.meta.push_back(PairMeta{id, source, static_cast<int>(si), static_cast<int>(a), 0, 1, false});
        }
    }
    return out;
}

}  // namespace

PairBatch make_batch(Rng& rng, std::span<const Image> sources, const PipelineConfig& cfg, int threads,
                     std::uint64_t chunk_base) {
    cfg.validate();
    if (sources.empty()) throw InvalidArgument("make_batch needs at least one source");
    const std::uint64_t stream = rng.next_u64();
    const std::size_t n = sources.size();
    std::vector<PairBatch> parts(n);
    std::vector<std::exception_ptr> errors(n);

    auto work = [&](std::size_t i) {
        try {
            parts[i] = pairs_from_source(Rng(Rng::derive(stream, i)), sources[i], static_cast<int>(i), cfg,
                                         chunk_base);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    const int workers = std::clamp(threads, 1, static_cast<int>(n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) work(i);
            });
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    PairBatch batch;
    for (auto& part : parts) batch.append(std::move(part));
    half_swap(batch);
    return batch;
}

int pairs_for_source(int width, int height, const PipelineConfig& cfg) {
    int total = 0;
    for (double s : cfg.scales)
        if (scaled_size(width, s) >= cfg.patch && scaled_size(height, s) >= cfg.patch) total += cfg.n_aug + 1;
    return total;
}

}  // namespace reiqa
