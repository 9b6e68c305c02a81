#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reiqa/encoder.hpp"
#include "reiqa/eval.hpp"
#include "reiqa/pairs.hpp"
#include "reiqa/trainer.hpp"

namespace reiqa {

struct GridConfig {
    int points = 13;
    double lo = 1e-3;
    double hi = 1e3;

    std::vector<double> values() const { return lambda_grid(points, lo, hi); }
};

struct EvalConfig {
    double train = 0.70;
    double val = 0.10;
    double test = 0.20;
    int repeats = 10;
    std::string grouping = "auto";  // auto, image or content
};

/// Everything a run depends on. The text form is
///
///   [section]
///   key = value
///
/// with sections run, pipeline, encoder, train, grid, eval and paths. Lines
/// starting with '#' are comments. Unknown sections and keys are errors.
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    PipelineConfig pipeline;
    EncoderConfig encoder;
    TrainConfig train;
    GridConfig grid;
    EvalConfig eval;
    std::map<std::string, std::string> paths;

    /// Assign one "section.key" from its text value.
    void set(const std::string& dotted_key, const std::string& value);
    void validate() const;

    /// Canonical text: every key in fixed order, numbers at round-trip
    /// precision. Parsing it back yields an identical config.
    std::string serialize() const;
    /// Digest of the settings that can change results: everything except
    /// run.threads and the paths.
    std::uint64_t digest() const;

    /// train config with the run seed and thread count applied.
    TrainConfig resolved_train() const;
    SplitSpec split_spec(bool has_content) const;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
};

/// Writes `run_manifest.txt` in dir: the command line, the config digest and
/// the canonical config.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg);

}  // namespace reiqa
