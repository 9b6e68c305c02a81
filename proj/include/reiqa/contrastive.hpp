#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reiqa/encoder.hpp"

namespace reiqa {

/// -log of the softmax weight of the positive among {positive} plus the
/// negatives, logits being dot products over tau. The max logit is
/// subtracted before exponentiation. With no negatives the loss is 0.
double info_nce_loss(std::span<const double> q, std::span<const double> k_pos,
                     const std::vector<std::vector<double>>& negatives, double tau);

/// Fixed-capacity FIFO of unit key vectors.
class NegativeQueue {
public:
    NegativeQueue() = default;
    NegativeQueue(int capacity, int dim);

    /// Append rows oldest-first; evicts the oldest entries past capacity.
    void push(const Matrix& keys);
    void push(std::span<const double> key);

    int size() const { return size_; }
    int capacity() const { return capacity_; }
    int dim() const { return dim_; }

    /// Entry i, counting from the oldest.
    std::span<const double> at(int i) const;
    /// All entries as rows, oldest first.
    Matrix contents() const;

private:
    int capacity_ = 0;
    int dim_ = 0;
    int size_ = 0;
    int head_ = 0;  // slot of the oldest entry
    std::vector<double> slots_;
};

struct InfoNceBatch {
    double loss = 0.0;  // mean over queries
    Matrix grad;        // d loss / d q, one row per query
};

/// Batched loss: query i is positive with key i; the other batch keys and
/// every queue entry are its negatives.
InfoNceBatch info_nce_batch(const Matrix& q, const Matrix& k, const NegativeQueue& queue, double tau);

/// theta_k <- m * theta_k + (1 - m) * theta_q over the trainable
/// parameters. m = 0 copies exactly; equal inputs are left untouched.
void momentum_update(Encoder& key, const Encoder& online, double m);

/// Cosine annealing: lr0 * (1 + cos(pi * t / total)) / 2.
double lr_at(long step, long total, double lr0);

struct GradCheckConfig {
    EncoderConfig encoder{{4, 8}, 16, 8};
    int pairs = 4;
    int size = 32;
    int queue = 8;
    double tau = 0.2;
    double eps = 1e-3;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t checked = 0;
};

/// Compare backward() of the mean batch loss against central differences
/// for every online parameter. Relative error per parameter tensor is
/// |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|) in the L2 norm.
GradCheckResult gradient_check(std::uint64_t seed, const GradCheckConfig& cfg = {});

}  // namespace reiqa
