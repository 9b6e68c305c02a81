#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <thread>

#include "doctest.h"
#include "reiqa/digest.hpp"
#include "reiqa/distortion.hpp"
#include "reiqa/error.hpp"
#include "reiqa/synth.hpp"

using namespace reiqa;

namespace {

// Version lock on the shipped table; update deliberately with the file.
constexpr const char* kTableDigest = "32e1ca6025faafa1";

}  // namespace

TEST_CASE("bank lists 25 kinds with round-tripping names") {
    const auto kinds = list_kinds();
    CHECK(kinds.size() == 25);
    std::set<std::string_view> names;
    for (auto k : kinds) {
        names.insert(kind_name(k));
        CHECK(kind_from_name(kind_name(k)) == k);
    }
    CHECK(names.size() == 25);
    CHECK_THROWS_AS(kind_from_name("Vignette"), InvalidArgument);
    CHECK_THROWS_AS(params_for("Vignette", 1), InvalidArgument);
}

TEST_CASE("severity table is monotone and matches the shipped file") {
    CHECK(params_for(DistortionKind::GaussianBlur, 1).get("sigma") <
          params_for(DistortionKind::GaussianBlur, 5).get("sigma"));
    CHECK(params_for(DistortionKind::JpegCompression, 5).get("quality") == 10);
    CHECK_THROWS_AS(params_for(DistortionKind::GaussianBlur, 0), InvalidArgument);
    CHECK_THROWS_AS(params_for(DistortionKind::GaussianBlur, 6), InvalidArgument);

    const SeverityTable from_file = SeverityTable::load(REIQA_SEVERITY_TABLE_PATH);
    CHECK(from_file.canonical() == SeverityTable::builtin().canonical());
    CHECK(Digest::to_hex(from_file.digest()) == kTableDigest);
}

TEST_CASE("severity table parser rejects malformed input") {
    std::string text = SeverityTable::builtin().canonical();
    CHECK_NOTHROW(SeverityTable::parse(text));
    // Missing row.
    const auto cut = text.find("GaussianBlur 3");
    std::string missing = text;
    missing.erase(cut, text.find('\n', cut) - cut + 1);
    CHECK_THROWS_AS(SeverityTable::parse(missing), FormatError);
    // Non-monotone governing parameter.
    std::string flat = text;
    const auto pos = flat.find("GaussianBlur 2 sigma=");
    flat.replace(pos, flat.find('\n', pos) - pos, "GaussianBlur 2 sigma=0.8");
    CHECK_THROWS_AS(SeverityTable::parse(flat), FormatError);
    CHECK_THROWS(SeverityTable::parse(text + "Blur 1 x=1\n"));
}

TEST_CASE("mean shift and blur closed forms") {
    const Image flat(32, 32, 0.5f);
    REQUIRE(params_for(DistortionKind::MeanShift, 2).get("delta") == 0.1);
    const Image shifted = apply(flat, {DistortionKind::MeanShift, 2, 1});
    for (float v : shifted.data()) REQUIRE(v == doctest::Approx(0.6).epsilon(1e-6));
    for (int level = 1; level <= 5; ++level) {
        const Image blurred = apply(flat, {DistortionKind::GaussianBlur, level, 1});
        CHECK(max_abs_diff(blurred, flat) < 1e-6);
    }
}

TEST_CASE("white noise statistics follow the table") {
    const Image flat(256, 256, 0.5f);
    for (int level : {2, 3}) {
        const double sd = params_for(DistortionKind::WhiteNoiseRGB, level).get("std");
        const Image noisy = apply(flat, {DistortionKind::WhiteNoiseRGB, level, 1234});
        double sum = 0.0;
        double sq = 0.0;
        const auto d = noisy.data();
        for (float v : d) {
            const double e = v - 0.5;
            sum += e;
            sq += e * e;
        }
        const double n = static_cast<double>(d.size());
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(n));
        CHECK(std::abs(var - sd * sd) < 0.05 * sd * sd);
    }
}

TEST_CASE("sample_specs draws distinct kinds") {
    Rng rng(5);
    const auto all = sample_specs(rng, 25);
    std::set<DistortionKind> seen;
    for (const auto& s : all) {
        seen.insert(s.kind);
        CHECK(s.level >= 1);
        CHECK(s.level <= 5);
    }
    CHECK(seen.size() == 25);

    Rng a(77), b(77);
    CHECK(sample_specs(a, 1) == sample_specs(b, 1));

    CHECK_THROWS_AS(sample_specs(rng, 0), InvalidArgument);
    CHECK_THROWS_AS(sample_specs(rng, 26), InvalidArgument);
}

TEST_CASE("sample_specs inclusion frequency is uniform") {
    Rng rng(2024);
    constexpr int draws = 10000;
    std::map<DistortionKind, int> count;
    std::map<int, int> levels;
    for (int i = 0; i < draws; ++i)
        for (const auto& s : sample_specs(rng, 11)) {
            ++count[s.kind];
            ++levels[s.level];
        }
    const double p = 11.0 / 25.0;
    const double sigma = std::sqrt(p * (1 - p) / draws);
    for (auto k : list_kinds()) CHECK(std::abs(count[k] / double(draws) - p) < 3 * sigma);
    for (int l = 1; l <= 5; ++l) CHECK(std::abs(levels[l] / (11.0 * draws) - 0.2) < 0.01);
}

TEST_CASE("every kind preserves shape and range, and is never a no-op") {
    const auto images = synth_corpus(31, 4, 96, 80);
    for (auto kind : list_kinds())
        for (int level = 1; level <= 5; ++level)
            for (std::size_t i = 0; i < images.size(); ++i) {
                const DistortionSpec spec{kind, level, 1000 + i};
                const Image out = apply(images[i], spec);
                INFO(kind_name(kind), " level ", level, " image ", i);
                REQUIRE(out.width() == images[i].width());
                REQUIRE(out.height() == images[i].height());
                REQUIRE(out.in_range());
                REQUIRE(max_abs_diff(out, images[i]) > 1e-4);
            }
}

TEST_CASE("apply is deterministic across runs and threads") {
    const Image img = synth_image(8, 64, 64, SynthStyle::Composite);
    std::vector<std::uint64_t> serial;
    for (auto kind : list_kinds()) serial.push_back(digest(apply(img, {kind, 3, 42})));
    std::vector<std::uint64_t> threaded(serial.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < serial.size(); ++i)
        workers.emplace_back([&, i] { threaded[i] = digest(apply(img, {list_kinds()[i], 3, 42})); });
    for (auto& t : workers) t.join();
    CHECK(serial == threaded);
}

TEST_CASE("too-small images are rejected") {
    const Image tiny(20, 20, 0.5f);
    CHECK_THROWS_AS(apply(tiny, {DistortionKind::ColorBlock, 1, 0}), InvalidArgument);
    CHECK_THROWS_AS(apply(Image(10, 40, 0.5f), {DistortionKind::NonEccentricity, 1, 0}), InvalidArgument);
    CHECK_THROWS_AS(apply(tiny, {DistortionKind::GaussianBlur, 0, 0}), InvalidArgument);
}

TEST_CASE("error against the pristine image grows with level for the monotone subset") {
    const auto images = synth_corpus(2718, 20, 128, 128);
    for (auto kind : list_kinds()) {
        if (!is_monotone_kind(kind)) continue;
        for (std::size_t i = 0; i < images.size(); ++i) {
            double prev = -1.0;
            for (int level = 1; level <= 5; ++level) {
                const double e = mse(apply(images[i], {kind, level, 555 + i}), images[i]);
                INFO(kind_name(kind), " image ", i, " level ", level, " mse ", e, " prev ", prev);
                CHECK(e > prev);
                prev = e;
            }
        }
    }
}
