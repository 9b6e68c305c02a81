#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "reiqa/contrastive.hpp"
#include "reiqa/encoder.hpp"
#include "reiqa/pairs.hpp"

namespace reiqa {

enum class TrainMode {
    Quality,  // pair-pipeline batches
    Content,  // two random resized crops of one image form the positive
};

struct TrainConfig {
    double lr0 = 0.06;
    int epochs = 5;
    double tau = 0.2;
    double m = 0.999;
    int batch = 32;  // pairs per step
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Quality;
    int queue = 512;
    double sgd_momentum = 0.9;
    double weight_decay = 0.0;
    int threads = 1;

    void validate() const;
};

struct LogRow {
    long step = 0;
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    int queue_fill = 0;  // queue entries used as negatives in this step
};

struct TrainState {
    Encoder online;
    Encoder key;
    NegativeQueue queue;
    long step = 0;
};

/// One optimizer: SGD with momentum on the online encoder, then the momentum
/// update of the key encoder and the queue push.
class Trainer {
public:
    Trainer(const EncoderConfig& enc, const TrainConfig& cfg);
    explicit Trainer(TrainState state, const TrainConfig& cfg);

    LogRow step(std::span<const Image> queries, std::span<const Image> keys, double lr);

    TrainState& state() { return state_; }
    const TrainState& state() const { return state_; }

private:
    TrainConfig cfg_;
    TrainState state_;
    std::vector<std::vector<double>> velocity_;
};

/// Two independent random resized crops (area 20-100%, aspect 3/4-4/3,
/// bilinear to patch x patch, random horizontal flip).
std::pair<Image, Image> content_pair(Rng& rng, const Image& src, int patch);

/// Number of optimizer steps train() will take.
long planned_steps(std::span<const Image> sources, const PipelineConfig& pipe, const TrainConfig& cfg);

struct TrainResult {
    TrainState state;
    std::vector<LogRow> log;
};

/// Full run. Batches come from a deterministic stream that depends only on
/// (sources, configs, seed); with threads > 1 they are prepared ahead of the
/// optimizer and consumed in order, so results do not depend on threads.
TrainResult train(std::span<const Image> sources, const PipelineConfig& pipe, const TrainConfig& cfg,
                  const EncoderConfig& enc, const std::function<void(const LogRow&)>& on_step = {});

// Checkpoint: "RIQC", u32 version, u64 config digest, u32 tensor count, then
// per tensor u32 name length, name, u32 rank, u32 dims, float32 values; all
// little-endian.
struct Checkpoint {
    TrainState state;
    std::uint64_t config_digest = 0;
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, std::uint64_t config_digest);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_training_log(const std::filesystem::path& path, std::span<const LogRow> log);

}  // namespace reiqa
