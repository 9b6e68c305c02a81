#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reiqa/image.hpp"
#include "reiqa/rng.hpp"

namespace reiqa {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

/// B conv blocks (3x3 conv, batch norm, SiLU, 2x2 average pool), global
/// average pooling to F = widths.back(), then a Linear-SiLU-Linear head to d
/// followed by L2 normalization.
struct EncoderConfig {
    std::vector<int> widths{32, 64, 128, 256};
    int hidden = 512;
    int dim = 64;

    void validate() const;
    int feature_dim() const { return widths.back(); }
    /// Smallest input side that survives every pooling stage.
    int min_input() const { return 1 << widths.size(); }
};

struct Encoding {
    Matrix features;     // batch x F, pooled backbone output
    Matrix projections;  // batch x d, unit rows
};

class Encoder {
public:
    Encoder() = default;

    /// He-normal conv weights, unit/zero batch-norm affine, uniform
    /// +-1/sqrt(fan_in) linear layers.
    static Encoder create(const EncoderConfig& cfg, Rng& rng);

    /// Rebuild from named tensors (as stored in a checkpoint); the
    /// architecture is inferred from the shapes.
    static Encoder from_tensors(const std::vector<Tensor>& params, const std::vector<Tensor>& buffers);

    const EncoderConfig& config() const { return cfg_; }

    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    /// Batch-norm running statistics. Not trained, not momentum-updated.
    std::vector<Tensor>& buffers() { return buffers_; }
    const std::vector<Tensor>& buffers() const { return buffers_; }
    Tensor& param(std::string_view name);

    /// Inference mode: batch norm uses running statistics. Pure.
    Encoding encode(std::span<const Image> batch) const;

    /// Training mode: batch statistics. Updates running statistics when
    /// update_stats is set. With keep_cache the activations are kept for
    /// backward(); the key encoder runs without it and so cannot be
    /// differentiated.
    Encoding forward_train(std::span<const Image> batch, bool update_stats = true, bool keep_cache = true);

    /// Gradients of sum_ij dz(i,j) * z(i,j) for the cached forward pass, one
    /// tensor per parameter in params() order. Consumes the cache.
    std::vector<Tensor> backward(const Matrix& dz);
    bool has_cache() const { return cache_.has_value(); }

    std::uint64_t digest() const;

    static constexpr double kBnEps = 1e-5;
    static constexpr double kBnMomentum = 0.1;

private:
    struct BlockCache {
        int height = 0, width = 0;  // input spatial size
        Matrix col;                 // im2col of the input
        Matrix xhat;                // normalized conv output
        Matrix pre;                 // batch-norm output, SiLU input
        Eigen::VectorXd inv_std;
    };
    struct Cache {
        int batch = 0;
        std::vector<BlockCache> blocks;
        int last_h = 0, last_w = 0;
        Matrix feats, h1, a1, u, z;
        Eigen::VectorXd norms;
    };

    Encoding run(std::span<const Image> batch, bool training, bool update_stats, Cache* cache);

    EncoderConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<Tensor> buffers_;
    std::optional<Cache> cache_;
};

/// Images of equal size packed channel-major: row c holds plane c of every
/// image back to back.
Matrix pack_images(std::span<const Image> batch);

}  // namespace reiqa
