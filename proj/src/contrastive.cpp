#include "reiqa/contrastive.hpp"

#include <cmath>
#include <numbers>

#include "reiqa/error.hpp"

namespace reiqa {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_unit(std::span<const double> v) {
    const double n = std::sqrt(dot(v, v));
    if (!(std::abs(n - 1.0) <= 1e-6)) throw InvalidArgument("queue keys must be unit vectors");
}

}  // namespace

double info_nce_loss(std::span<const double> q, std::span<const double> k_pos,
                     const std::vector<std::vector<double>>& negatives, double tau) {
    if (q.empty() || k_pos.empty()) throw InvalidArgument("info_nce_loss needs a query and a positive key");
    if (q.size() != k_pos.size()) throw InvalidArgument("query and key dimensions differ");
    if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
    const double pos = dot(q, k_pos) / tau;
    std::vector<double> logits;
    logits.reserve(negatives.size());
    double top = pos;
    for (const auto& n : negatives) {
        if (n.size() != q.size()) throw InvalidArgument("negative key dimension differs from the query");
        logits.push_back(dot(q, n) / tau);
        top = std::max(top, logits.back());
    }
    double sum = std::exp(pos - top);
    for (double l : logits) sum += std::exp(l - top);
    return std::log(sum) + top - pos;
}

NegativeQueue::NegativeQueue(int capacity, int dim) : capacity_(capacity), dim_(dim) {
    if (capacity < 0 || dim < 1) throw InvalidArgument("queue needs capacity >= 0 and dim >= 1");
    slots_.assign(static_cast<std::size_t>(capacity) * dim, 0.0);
}

void NegativeQueue::push(std::span<const double> key) {
    if (static_cast<int>(key.size()) != dim_) throw InvalidArgument("key dimension does not match the queue");
    check_unit(key);
    if (capacity_ == 0) return;
    int slot;
    if (size_ < capacity_) {
        slot = (head_ + size_) % capacity_;
        ++size_;
    } else {
        slot = head_;
        head_ = (head_ + 1) % capacity_;
    }
    std::copy(key.begin(), key.end(), slots_.begin() + static_cast<std::ptrdiff_t>(slot) * dim_);
}

void NegativeQueue::push(const Matrix& keys) {
    if (keys.rows() > 0 && keys.cols() != dim_) throw InvalidArgument("key dimension does not match the queue");
    for (long r = 0; r < keys.rows(); ++r) check_unit({keys.row(r).data(), static_cast<std::size_t>(dim_)});
    for (long r = 0; r < keys.rows(); ++r) push(std::span<const double>(keys.row(r).data(), dim_));
}

std::span<const double> NegativeQueue::at(int i) const {
    if (i < 0 || i >= size_) throw InvalidArgument("queue index out of range");
    const int slot = (head_ + i) % capacity_;
    return {slots_.data() + static_cast<std::ptrdiff_t>(slot) * dim_, static_cast<std::size_t>(dim_)};
}

Matrix NegativeQueue::contents() const {
    Matrix out(size_, dim_);
    for (int i = 0; i < size_; ++i) {
        const auto row = at(i);
        for (int j = 0; j < dim_; ++j) out(i, j) = row[j];
    }
    return out;
}

InfoNceBatch info_nce_batch(const Matrix& q, const Matrix& k, const NegativeQueue& queue, double tau) {
    if (q.rows() == 0 || q.rows() != k.rows() || q.cols() != k.cols()) {
        throw InvalidArgument("queries and keys must be non-empty and the same shape");
    }
    if (queue.size() > 0 && queue.dim() != q.cols()) throw InvalidArgument("queue dimension differs from the keys");
    if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
    const long b = q.rows();
    Matrix keys(b + queue.size(), q.cols());
    keys.topRows(b) = k;
    if (queue.size() > 0) keys.bottomRows(queue.size()) = queue.contents();

    Matrix p = (q * keys.transpose()) / tau;
    double total = 0.0;
    for (long i = 0; i < b; ++i) {
        auto row = p.row(i);
        const double pos = row(i);
        const double top = row.maxCoeff();
        row.array() = (row.array() - top).exp();
        const double sum = row.sum();
        total += std::log(sum) + top - pos;
        row /= sum;
    }
    Matrix grad = p * keys - k;
    grad /= tau * static_cast<double>(b);
    return InfoNceBatch{total / static_cast<double>(b), std::move(grad)};
}

void momentum_update(Encoder& key, const Encoder& online, double m) {
    if (!(m >= 0.0 && m < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    auto& kp = key.params();
    const auto& qp = online.params();
    if (kp.size() != qp.size()) throw InvalidArgument("encoders have different parameter lists");
    for (std::size_t i = 0; i < kp.size(); ++i)
        if (kp[i].name != qp[i].name || kp[i].shape != qp[i].shape) {
            throw InvalidArgument("parameter '" + kp[i].name + "' does not match between encoders");
        }
    for (std::size_t i = 0; i < kp.size(); ++i) {
        auto& k = kp[i].values;
        const auto& q = qp[i].values;
        if (m == 0.0) {
            k = q;
            continue;
        }
        for (std::size_t j = 0; j < k.size(); ++j) k[j] += (1.0 - m) * (q[j] - k[j]);
    }
}

double lr_at(long step, long total, double lr0) {
    if (total <= 0) throw InvalidArgument("schedule length must be positive");
    if (step < 0 || step > total) throw InvalidArgument("step outside the schedule");
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

GradCheckResult gradient_check(std::uint64_t seed, const GradCheckConfig& cfg) {
    Rng rng(seed);
    Encoder online = Encoder::create(cfg.encoder, rng);
    Encoder key = online;
    // Move the key encoder off the online weights so keys are not trivially
    // aligned with queries.
    for (auto& t : key.params())
        for (double& v : t.values) v += 0.05 * rng.normal();

    auto random_batch = [&](int n) {
        std::vector<Image> out;
        for (int i = 0; i < n; ++i) {
            Image img(cfg.size, cfg.size);
            for (float& v : img.data()) v = static_cast<float>(rng.uniform());
            out.push_back(std::move(img));
        }
        return out;
    };
    const auto queries = random_batch(cfg.pairs);
    const auto keys_in = random_batch(cfg.pairs);

    NegativeQueue queue(cfg.queue, cfg.encoder.dim);
    for (int i = 0; i < cfg.queue; ++i) {
        std::vector<double> v(cfg.encoder.dim);
        double n2 = 0.0;
        for (double& x : v) {
            x = rng.normal();
            n2 += x * x;
        }
        for (double& x : v) x /= std::sqrt(n2);
        queue.push(v);
    }
    const Matrix k = key.forward_train(keys_in, false, false).projections;

    auto loss_at = [&] { return info_nce_batch(online.forward_train(queries, false).projections, k, queue, cfg.tau).loss; };

    const InfoNceBatch base = info_nce_batch(online.forward_train(queries, false).projections, k, queue, cfg.tau);
    const auto grads = online.backward(base.grad);

    GradCheckResult result;
    for (std::size_t pi = 0; pi < online.params().size(); ++pi) {
        auto& values = online.params()[pi].values;
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double orig = values[j];
            values[j] = orig + cfg.eps;
            const double up = loss_at();
            values[j] = orig - cfg.eps;
            const double down = loss_at();
            values[j] = orig;
            const double numeric = (up - down) / (2.0 * cfg.eps);
            const double analytic = grads[pi].values[j];
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
            ++result.checked;
        }
        const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
        const double rel = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
        if (rel >= result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_param = online.params()[pi].name;
        }
    }
    return result;
}

}  // namespace reiqa
