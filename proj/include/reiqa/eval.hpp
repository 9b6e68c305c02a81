#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reiqa/encoder.hpp"
#include "reiqa/quality_head.hpp"

namespace reiqa {

struct ManifestEntry {
    std::string path;
    double mos = 0.0;
    std::optional<std::string> ref_path;
    std::optional<std::string> content_id;
    std::optional<std::string> split;  // "train", "val" or "test"
};

/// CSV with header `path,mos[,ref_path][,content_id][,split]`. Relative
/// paths resolve against the manifest's directory.
struct Manifest {
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir;

    /// Parse and validate; with check_paths every image (and reference) must
    /// exist.
    static Manifest load(const std::filesystem::path& path, bool check_paths = true);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return entries.size(); }
    bool has_content() const;
    bool has_ref() const;
    bool has_split() const;
    std::vector<double> mos() const;
    std::filesystem::path resolve(const std::string& p) const;
};

enum class Grouping { ByImage, ByContent };

struct SplitSpec {
    double train = 0.70;
    double val = 0.10;
    double test = 0.20;
    int repeats = 10;
    std::uint64_t seed = 0;
    Grouping grouping = Grouping::ByImage;

    void validate() const;
};

struct Split {
    std::vector<std::size_t> train, val, test;
    std::uint64_t digest() const;
};

/// Seeded group split. Groups (content ids, or single images) are shuffled
/// with a stream derived from (seed, repeat); the first three go one to each
/// partition and the rest each join the partition furthest below its target
/// item count. A manifest `split` column overrides the random protocol.
Split split(const Manifest& manifest, const SplitSpec& spec, int repeat);

struct RepeatResult {
    int repeat = 0;
    double srcc = 0.0;
    double plcc = 0.0;
    double lambda = 0.0;
};

struct EvalReport {
    std::vector<RepeatResult> repeats;
    double median_srcc = 0.0;
    double median_plcc = 0.0;
};

/// Held-out evaluation of one split: lambda chosen on val, scored on test.
RepeatResult evaluate_split(const Matrix& features, std::span<const double> mos, const Split& s,
                            std::span<const double> grid);

/// Rows of `features` align with manifest entries.
EvalReport run_protocol(const Manifest& manifest, const Matrix& features, const SplitSpec& spec,
                        std::span<const double> grid, int threads = 1);

struct CrossResult {
    double srcc = 0.0;
    double plcc = 0.0;
    double lambda = 0.0;
};

/// Lambda from a seeded 90/10 split of the training manifest, refit on all
/// of it, scored once on the whole test manifest.
CrossResult run_cross(const Manifest& train, const Matrix& train_features, const Manifest& test,
                      const Matrix& test_features, std::span<const double> grid, std::uint64_t seed);

void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
/// Plain-text SRCC/PLCC table.
std::string format_report(const std::string& name, const EvalReport& report);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

}  // namespace reiqa
