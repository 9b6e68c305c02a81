#include "reiqa/trainer.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "binio.hpp"
#include "reiqa/error.hpp"

namespace reiqa {

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw InvalidArgument("lr0 must be positive");
    if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    if (!(m >= 0.0 && m < 1.0)) throw InvalidArgument("m must be in [0, 1)");
    if (batch < 2) throw InvalidArgument("batch must hold at least 2 pairs");
    if (queue < 0) throw InvalidArgument("queue capacity cannot be negative");
    if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw InvalidArgument("sgd_momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay cannot be negative");
    if (threads < 1) throw InvalidArgument("threads must be at least 1");
}

Trainer::Trainer(const EncoderConfig& enc, const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(Rng::derive(cfg.seed, 0x300));
    state_.online = Encoder::create(enc, rng);
    state_.key = state_.online;
    state_.queue = NegativeQueue(cfg.queue, enc.dim);
    for (const auto& p : state_.online.params()) velocity_.emplace_back(p.size(), 0.0);
}

Trainer::Trainer(TrainState state, const TrainConfig& cfg) : cfg_(cfg), state_(std::move(state)) {
    cfg_.validate();
    for (const auto& p : state_.online.params()) velocity_.emplace_back(p.size(), 0.0);
}

LogRow Trainer::step(std::span<const Image> queries, std::span<const Image> keys, double lr) {
    if (queries.size() != keys.size()) throw InvalidArgument("queries and keys differ in length");
    const Matrix k = state_.key.forward_train(keys, true, false).projections;
    const Encoding q = state_.online.forward_train(queries, true, true);
    const InfoNceBatch loss = info_nce_batch(q.projections, k, state_.queue, cfg_.tau);
    if (!std::isfinite(loss.loss)) throw NumericFailure("non-finite loss at step " + std::to_string(state_.step));
    const auto grads = state_.online.backward(loss.grad);

    auto& params = state_.online.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = params[i].values;
        auto& v = velocity_[i];
        const auto& g = grads[i].values;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            v[j] = cfg_.sgd_momentum * v[j] + g[j] + cfg_.weight_decay * theta[j];
            theta[j] -= lr * v[j];
        }
    }
    momentum_update(state_.key, state_.online, cfg_.m);

    LogRow row;
    row.step = state_.step++;
    row.lr = lr;
    row.loss = loss.loss;
    row.queue_fill = state_.queue.size();
    state_.queue.push(k);
    return row;
}

std::pair<Image, Image> content_pair(Rng& rng, const Image& src, int patch) {
    auto one = [&] {
        const int sw = src.width(), sh = src.height();
        Rect r{0, 0, std::min(sw, sh), std::min(sw, sh)};
        r.x = (sw - r.w) / 2;
        r.y = (sh - r.h) / 2;
        const double area = static_cast<double>(sw) * sh;
        for (int attempt = 0; attempt < 10; ++attempt) {
            const double frac = rng.uniform(0.2, 1.0);
            const double aspect = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
            const int w = static_cast<int>(std::lround(std::sqrt(area * frac * aspect)));
            const int h = static_cast<int>(std::lround(std::sqrt(area * frac / aspect)));
            if (w >= 1 && h >= 1 && w <= sw && h <= sh) {
                r = Rect{static_cast<int>(rng.between(0, sw - w)), static_cast<int>(rng.between(0, sh - h)), w, h};
                break;
            }
        }
        Image out = resize(crop(src, r), patch, patch, ResizeMethod::Bilinear);
        if (rng.uniform() < 0.5) {
            for (int c = 0; c < Image::kChannels; ++c)
                for (int y = 0; y < patch; ++y)
                    for (int x = 0; x < patch / 2; ++x) std::swap(out.at(c, x, y), out.at(c, patch - 1 - x, y));
        }
        return out;
    };
    Image a = one();
    Image b = one();
    return {std::move(a), std::move(b)};
}

long planned_steps(std::span<const Image> sources, const PipelineConfig& pipe, const TrainConfig& cfg) {
    long pairs = 0;
    if (cfg.mode == TrainMode::Content) {
        pairs = static_cast<long>(sources.size());
    } else {
        for (const auto& s : sources) pairs += pairs_for_source(s.width(), s.height(), pipe);
    }
    return pairs / cfg.batch * cfg.epochs;
}

namespace {

constexpr std::size_t kGroup = 8;  // sources per make_batch call

struct StepBatch {
    int epoch = 0;
    std::vector<Image> queries;
    std::vector<Image> keys;
};

// Deterministic sequence of step batches. Each epoch visits the sources in a
// seeded order, groups of kGroup sources at a time; leftover pairs at the end
// of an epoch are dropped.
class BatchStream {
public:
    BatchStream(std::span<const Image> sources, const PipelineConfig& pipe, const TrainConfig& cfg, int workers)
        : sources_(sources), pipe_(pipe), cfg_(cfg), workers_(workers) {
        start_epoch();
    }

    std::optional<StepBatch> next() {
        while (queries_.size() < static_cast<std::size_t>(cfg_.batch)) {
            if (pos_ < order_.size()) {
                refill();
                continue;
            }
            queries_.clear();
            keys_.clear();
            if (++epoch_ >= cfg_.epochs) return std::nullopt;
            start_epoch();
        }
        StepBatch out;
        out.epoch = epoch_;
        for (int i = 0; i < cfg_.batch; ++i) {
            out.queries.push_back(std::move(queries_.front()));
            out.keys.push_back(std::move(keys_.front()));
            queries_.pop_front();
            keys_.pop_front();
        }
        return out;
    }

private:
    void start_epoch() {
        order_.resize(sources_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        Rng shuffle(Rng::derive(cfg_.seed, 0x200 + static_cast<std::uint64_t>(epoch_)));
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[shuffle.below(i)]);
        epoch_seed_ = Rng::derive(cfg_.seed, 0x100 + static_cast<std::uint64_t>(epoch_));
        pos_ = 0;
    }

    void refill() {
        const std::size_t end = std::min(order_.size(), pos_ + kGroup);
        if (cfg_.mode == TrainMode::Content) {
            for (; pos_ < end; ++pos_) {
                Rng rng(Rng::derive(epoch_seed_, pos_));
                auto [a, b] = content_pair(rng, sources_[order_[pos_]], pipe_.patch);
                queries_.push_back(std::move(a));
                keys_.push_back(std::move(b));
            }
            return;
        }
        std::vector<Image> group;
        for (std::size_t i = pos_; i < end; ++i) group.push_back(sources_[order_[i]]);
        Rng rng(Rng::derive(epoch_seed_, pos_ / kGroup));
        PairBatch b = make_batch(rng, group, pipe_, workers_, pos_ * pipe_.scales.size());
        for (auto& img : b.queries) queries_.push_back(std::move(img));
        for (auto& img : b.keys) keys_.push_back(std::move(img));
        pos_ = end;
    }

    std::span<const Image> sources_;
    const PipelineConfig& pipe_;
    const TrainConfig& cfg_;
    int workers_;
    int epoch_ = 0;
    std::uint64_t epoch_seed_ = 0;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::deque<Image> queries_, keys_;
};

// Bounded single-producer/single-consumer handoff.
class Channel {
public:
    explicit Channel(std::size_t capacity) : capacity_(capacity) {}

    // False once the consumer has gone away.
    bool put(std::optional<StepBatch> item) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_ || cancelled_; });
        if (cancelled_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    void fail(std::exception_ptr e) {
        std::lock_guard lock(mu_);
        error_ = e;
        items_.push_back(std::nullopt);
        not_empty_.notify_one();
    }

    std::optional<StepBatch> take() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !items_.empty(); });
        auto item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        if (!item && error_) std::rethrow_exception(error_);
        return item;
    }

    void cancel() {
        std::lock_guard lock(mu_);
        cancelled_ = true;
        not_full_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
    std::deque<std::optional<StepBatch>> items_;
    std::exception_ptr error_;
    bool cancelled_ = false;
};

}  // namespace

TrainResult train(std::span<const Image> sources, const PipelineConfig& pipe, const TrainConfig& cfg,
                  const EncoderConfig& enc, const std::function<void(const LogRow&)>& on_step) {
    cfg.validate();
    pipe.validate();
    enc.validate();
    if (sources.empty()) throw InvalidArgument("training needs at least one source image");
    if (pipe.patch < enc.min_input()) throw InvalidArgument("patch is smaller than the encoder minimum input");
    const long total = planned_steps(sources, pipe, cfg);
    if (total == 0) throw InvalidArgument("the corpus does not fill a single batch");

    Trainer trainer(enc, cfg);
    TrainResult result;
    auto consume = [&](StepBatch& b) {
        const double lr = lr_at(trainer.state().step, total, cfg.lr0);
        LogRow row = trainer.step(b.queries, b.keys, lr);
        row.epoch = b.epoch;
        result.log.push_back(row);
        if (on_step) on_step(row);
    };

    if (cfg.threads <= 1) {
        BatchStream stream(sources, pipe, cfg, 1);
        while (auto b = stream.next()) consume(*b);
    } else {
        Channel channel(2);
        std::thread producer([&] {
            try {
                BatchStream stream(sources, pipe, cfg, cfg.threads - 1);
                while (true) {
                    auto b = stream.next();
                    const bool done = !b;
                    if (!channel.put(std::move(b)) || done) break;
                }
            } catch (...) {
                channel.fail(std::current_exception());
            }
        });
        try {
            while (auto b = channel.take()) consume(*b);
        } catch (...) {
            channel.cancel();
            producer.join();
            throw;
        }
        producer.join();
    }
    result.state = std::move(trainer.state());
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints and logs
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_tensor(std::ostream& out, const std::string& name, const std::vector<int>& shape,
                const std::vector<double>& values) {
    binio::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) binio::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : values) binio::put_f32(out, static_cast<float>(v));
}

std::vector<Tensor> with_prefix(const std::vector<Tensor>& all, const std::string& prefix) {
    std::vector<Tensor> out;
    for (const auto& t : all)
        if (t.name.rfind(prefix, 0) == 0) out.push_back(Tensor{t.name.substr(prefix.size()), t.shape, t.values});
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, std::uint64_t config_digest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write("RIQC", 4);
    binio::put_u32(out, kCheckpointVersion);
    binio::put_u64(out, config_digest);

    const auto& online = state.online;
    const auto& key = state.key;
    const std::size_t count =
        2 * (online.params().size() + online.buffers().size()) + 3;  // + queue keys, capacity, step
    binio::put_u32(out, static_cast<std::uint32_t>(count));
    for (const auto& [prefix, enc] : {std::pair{"online.", &online}, std::pair{"key.", &key}}) {
        for (const auto& t : enc->params()) put_tensor(out, prefix + t.name, t.shape, t.values);
        for (const auto& t : enc->buffers()) put_tensor(out, prefix + t.name, t.shape, t.values);
    }
    const Matrix q = state.queue.contents();
    put_tensor(out, "queue.keys", {state.queue.size(), state.queue.dim()},
               std::vector<double>(q.data(), q.data() + q.size()));
    put_tensor(out, "queue.capacity", {1}, {static_cast<double>(state.queue.capacity())});
    put_tensor(out, "state.step", {1}, {static_cast<double>(state.step)});
    out.flush();
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    binio::expect_magic(in, "RIQC");
    const std::uint32_t version = binio::get_u32(in);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config_digest = binio::get_u64(in);
    const std::uint32_t count = binio::get_u32(in);
    std::vector<Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t;
        const std::uint32_t len = binio::get_u32(in);
        if (len > 4096) throw FormatError("implausible tensor name length");
        t.name.resize(len);
        if (!in.read(t.name.data(), len)) throw FormatError("unexpected end of file");
        const std::uint32_t rank = binio::get_u32(in);
        if (rank > 8) throw FormatError("implausible tensor rank");
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.shape.push_back(static_cast<int>(binio::get_u32(in)));
            n *= static_cast<std::size_t>(t.shape.back());
        }
        if (n > (std::size_t{1} << 30)) throw FormatError("implausible tensor size");
        t.values.resize(n);
        for (double& v : t.values) v = binio::get_f32(in);
        tensors.push_back(std::move(t));
    }

    auto split = [&](const std::string& prefix) {
        auto all = with_prefix(tensors, prefix);
        std::vector<Tensor> params, buffers;
        for (auto& t : all) (t.name.find("running_") != std::string::npos ? buffers : params).push_back(std::move(t));
        return Encoder::from_tensors(params, buffers);
    };
    ck.state.online = split("online.");
    ck.state.key = split("key.");

    auto scalar = [&](const std::string& name) -> const Tensor& {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw FormatError("missing tensor '" + name + "'");
    };
    const Tensor& qk = scalar("queue.keys");
    const int dim = ck.state.online.config().dim;
    if (qk.shape.size() != 2 || (qk.shape[0] > 0 && qk.shape[1] != dim)) throw FormatError("bad queue tensor shape");
    ck.state.queue = NegativeQueue(static_cast<int>(scalar("queue.capacity").values.at(0)), dim);
    for (int r = 0; r < qk.shape[0]; ++r) {
        // Renormalize: float32 storage perturbs the unit norm slightly.
        std::vector<double> v(qk.values.begin() + static_cast<std::ptrdiff_t>(r) * dim,
                              qk.values.begin() + static_cast<std::ptrdiff_t>(r + 1) * dim);
        double n2 = 0.0;
        for (double x : v) n2 += x * x;
        for (double& x : v) x /= std::sqrt(n2);
        ck.state.queue.push(v);
    }
    ck.state.step = static_cast<long>(scalar("state.step").values.at(0));
    return ck;
}

void write_training_log(const std::filesystem::path& path, std::span<const LogRow> log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write training log " + path.string());
    out << "step,lr,loss,queue_fill\n";
    char buf[128];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%d\n", r.step, r.lr, r.loss, r.queue_fill);
        out << buf;
    }
    if (!out) throw IoError("failed writing training log " + path.string());
}

}  // namespace reiqa
