#include "reiqa/encoder.hpp"

#include <cmath>

#include "reiqa/digest.hpp"
#include "reiqa/error.hpp"

namespace reiqa {

namespace {

using Eigen::VectorXd;
using ConstMap = Eigen::Map<const Matrix>;
using ConstVec = Eigen::Map<const VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

void check_finite(const Matrix& m, int layer) {
    if (!m.allFinite()) throw NumericFailure("non-finite activation at layer " + std::to_string(layer));
}

// Rows: (input channel, ky, kx); columns: output pixels of every image.
Matrix im2col(const Matrix& x, int batch, int h, int w) {
    const long hw = static_cast<long>(h) * w;
    Matrix col = Matrix::Zero(x.rows() * 9, batch * hw);
    for (long ci = 0; ci < x.rows(); ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const long row = ci * 9 + ky * 3 + kx;
                const int dy = ky - 1, dx = kx - 1;
                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                for (int b = 0; b < batch; ++b)
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= h) continue;
                        const double* src = &x(ci, b * hw + static_cast<long>(sy) * w);
                        double* dst = &col(row, b * hw + static_cast<long>(y) * w);
                        for (int xx = x0; xx < x1; ++xx) dst[xx] = src[xx + dx];
                    }
            }
    return col;
}

Matrix col2im(const Matrix& col, long channels, int batch, int h, int w) {
    const long hw = static_cast<long>(h) * w;
    Matrix x = Matrix::Zero(channels, batch * hw);
    for (long ci = 0; ci < channels; ++ci)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const long row = ci * 9 + ky * 3 + kx;
                const int dy = ky - 1, dx = kx - 1;
                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                for (int b = 0; b < batch; ++b)
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= h) continue;
                        double* dst = &x(ci, b * hw + static_cast<long>(sy) * w);
                        const double* src = &col(row, b * hw + static_cast<long>(y) * w);
                        for (int xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
                    }
            }
    return x;
}

// 2x2 mean, odd trailing rows/columns dropped.
Matrix avg_pool(const Matrix& x, int batch, int h, int w) {
    const int ho = h / 2, wo = w / 2;
    const long hw = static_cast<long>(h) * w, hwo = static_cast<long>(ho) * wo;
    Matrix out(x.rows(), batch * hwo);
    for (long c = 0; c < x.rows(); ++c)
        for (int b = 0; b < batch; ++b)
            for (int y = 0; y < ho; ++y) {
                const double* r0 = &x(c, b * hw + static_cast<long>(2 * y) * w);
                const double* r1 = r0 + w;
                double* dst = &out(c, b * hwo + static_cast<long>(y) * wo);
                for (int xx = 0; xx < wo; ++xx)
                    dst[xx] = 0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
            }
    return out;
}

Matrix avg_pool_backward(const Matrix& g, int batch, int h, int w) {
    const int ho = h / 2, wo = w / 2;
    const long hw = static_cast<long>(h) * w, hwo = static_cast<long>(ho) * wo;
    Matrix dx = Matrix::Zero(g.rows(), batch * hw);
    for (long c = 0; c < g.rows(); ++c)
        for (int b = 0; b < batch; ++b)
            for (int y = 0; y < ho; ++y) {
                double* r0 = &dx(c, b * hw + static_cast<long>(2 * y) * w);
                double* r1 = r0 + w;
                const double* src = &g(c, b * hwo + static_cast<long>(y) * wo);
                for (int xx = 0; xx < wo; ++xx) {
                    const double v = 0.25 * src[xx];
                    r0[2 * xx] = r0[2 * xx + 1] = r1[2 * xx] = r1[2 * xx + 1] = v;
                }
            }
    return dx;
}

std::string block_name(std::size_t b, const char* leaf) { return "block" + std::to_string(b) + "." + leaf; }

}  // namespace

void EncoderConfig::validate() const {
    if (widths.empty() || widths.size() > 8) throw InvalidArgument("encoder needs 1..8 conv blocks");
    for (int w : widths)
        if (w < 1) throw InvalidArgument("conv widths must be positive");
    if (hidden < 1 || dim < 1) throw InvalidArgument("head sizes must be positive");
}

Matrix pack_images(std::span<const Image> batch) {
    if (batch.empty()) throw InvalidArgument("empty image batch");
    const int w = batch[0].width(), h = batch[0].height();
    const long hw = static_cast<long>(w) * h;
    Matrix x(Image::kChannels, static_cast<long>(batch.size()) * hw);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].width() != w || batch[b].height() != h) {
            throw InvalidArgument("images in one batch must share dimensions");
        }
        for (int c = 0; c < Image::kChannels; ++c) {
            const auto plane = batch[b].plane(c);
            for (long i = 0; i < hw; ++i) x(c, static_cast<long>(b) * hw + i) = plane[i];
        }
    }
    return x;
}

Encoder Encoder::create(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    Encoder e;
    e.cfg_ = cfg;
    int cin = Image::kChannels;
    for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
        const int cout = cfg.widths[b];
        Tensor conv{block_name(b, "conv.weight"), {cout, cin, 3, 3}, {}};
        const double sd = std::sqrt(2.0 / (cin * 9));
        conv.values.resize(static_cast<std::size_t>(cout) * cin * 9);
        for (double& v : conv.values) v = rng.normal(0.0, sd);
        e.params_.push_back(std::move(conv));
        e.params_.push_back(Tensor{block_name(b, "bn.weight"), {cout}, std::vector<double>(cout, 1.0)});
        e.params_.push_back(Tensor{block_name(b, "bn.bias"), {cout}, std::vector<double>(cout, 0.0)});
        e.buffers_.push_back(Tensor{block_name(b, "bn.running_mean"), {cout}, std::vector<double>(cout, 0.0)});
        e.buffers_.push_back(Tensor{block_name(b, "bn.running_var"), {cout}, std::vector<double>(cout, 1.0)});
        cin = cout;
    }
    auto linear = [&](const std::string& name, int out, int in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Tensor w{name + ".weight", {out, in}, std::vector<double>(static_cast<std::size_t>(out) * in)};
        Tensor bias{name + ".bias", {out}, std::vector<double>(out)};
        for (double& v : w.values) v = rng.uniform(-bound, bound);
        for (double& v : bias.values) v = rng.uniform(-bound, bound);
        e.params_.push_back(std::move(w));
        e.params_.push_back(std::move(bias));
    };
    linear("head.fc1", cfg.hidden, cfg.feature_dim());
    linear("head.fc2", cfg.dim, cfg.hidden);
    return e;
}

Encoder Encoder::from_tensors(const std::vector<Tensor>& params, const std::vector<Tensor>& buffers) {
    auto find = [](const std::vector<Tensor>& list, const std::string& name) -> const Tensor& {
        for (const auto& t : list)
            if (t.name == name) return t;
        throw FormatError("missing tensor '" + name + "'");
    };
    EncoderConfig cfg;
    cfg.widths.clear();
    for (std::size_t b = 0;; ++b) {
        const std::string name = block_name(b, "conv.weight");
        bool present = false;
        for (const auto& t : params) present |= t.name == name;
        if (!present) break;
        const Tensor& t = find(params, name);
        if (t.shape.size() != 4) throw FormatError("conv weight must be 4-D");
        cfg.widths.push_back(t.shape[0]);
    }
    if (cfg.widths.empty()) throw FormatError("no conv blocks found");
    const Tensor& fc1 = find(params, "head.fc1.weight");
    const Tensor& fc2 = find(params, "head.fc2.weight");
    if (fc1.shape.size() != 2 || fc2.shape.size() != 2) throw FormatError("head weights must be 2-D");
    cfg.hidden = fc1.shape[0];
    cfg.dim = fc2.shape[0];

    Rng dummy(0);
    Encoder e = create(cfg, dummy);
    for (auto& t : e.params_) {
        const Tensor& src = find(params, t.name);
        if (src.shape != t.shape) throw FormatError("tensor '" + t.name + "' has an unexpected shape");
        t.values = src.values;
    }
    for (auto& t : e.buffers_) {
        const Tensor& src = find(buffers, t.name);
        if (src.shape != t.shape) throw FormatError("tensor '" + t.name + "' has an unexpected shape");
        t.values = src.values;
    }
    return e;
}

Tensor& Encoder::param(std::string_view name) {
    for (auto& t : params_)
        if (t.name == name) return t;
    throw InvalidArgument("no parameter named '" + std::string(name) + "'");
}

std::uint64_t Encoder::digest() const {
    Digest d;
    for (const auto* list : {&params_, &buffers_})
        for (const auto& t : *list) d.update(t.name).update(std::span<const double>(t.values));
    return d.value();
}

Encoding Encoder::encode(std::span<const Image> batch) const {
    Encoder& self = const_cast<Encoder&>(*this);
    // Inference touches neither buffers nor cache.
    return self.run(batch, false, false, nullptr);
}

Encoding Encoder::forward_train(std::span<const Image> batch, bool update_stats, bool keep_cache) {
    cache_.reset();
    if (!keep_cache) return run(batch, true, update_stats, nullptr);
    Cache cache;
    Encoding out = run(batch, true, update_stats, &cache);
    cache_ = std::move(cache);
    return out;
}

Encoding Encoder::run(std::span<const Image> images, bool training, bool update_stats, Cache* cache) {
    if (params_.empty()) throw StateError("encoder has no parameters");
    const int batch = static_cast<int>(images.size());
    Matrix x = pack_images(images);
    int h = images[0].height(), w = images[0].width();
    if (h < cfg_.min_input() || w < cfg_.min_input()) {
        throw InvalidArgument("input " + std::to_string(w) + "x" + std::to_string(h) + " is below the encoder minimum " +
                              std::to_string(cfg_.min_input()));
    }
    if (cache) {
        cache->batch = batch;
        cache->blocks.resize(cfg_.widths.size());
    }

    for (std::size_t b = 0; b < cfg_.widths.size(); ++b) {
        const long cout = cfg_.widths[b];
        const ConstMap weight(params_[3 * b].values.data(), cout, x.rows() * 9);
        const ConstVec gamma(params_[3 * b + 1].values.data(), cout);
        const ConstVec beta(params_[3 * b + 2].values.data(), cout);
        auto& run_mean = buffers_[2 * b].values;
        auto& run_var = buffers_[2 * b + 1].values;

        Matrix col = im2col(x, batch, h, w);
        Matrix y = weight * col;
        const double n = static_cast<double>(y.cols());
        VectorXd mean(cout), inv_std(cout);
        if (training) {
            mean = y.rowwise().mean();
            y.colwise() -= mean;
            const VectorXd var = y.array().square().rowwise().mean();
            inv_std = (var.array() + kBnEps).rsqrt();
            if (update_stats) {
                const double unbias = n > 1 ? n / (n - 1) : 1.0;
                for (long c = 0; c < cout; ++c) {
                    run_mean[c] = (1 - kBnMomentum) * run_mean[c] + kBnMomentum * mean[c];
                    run_var[c] = (1 - kBnMomentum) * run_var[c] + kBnMomentum * var[c] * unbias;
                }
            }
        } else {
            mean = ConstVec(run_mean.data(), cout);
            y.colwise() -= mean;
            inv_std = (ConstVec(run_var.data(), cout).array() + kBnEps).rsqrt();
        }
        Matrix xhat = inv_std.asDiagonal() * y;
        Matrix pre = gamma.asDiagonal() * xhat;
        pre.colwise() += beta;
        Matrix act = pre.unaryExpr([](double v) { return v * sigmoid(v); });
        check_finite(act, static_cast<int>(b));

        if (cache) {
            BlockCache& bc = cache->blocks[b];
            bc.height = h;
            bc.width = w;
            bc.col = std::move(col);
            bc.xhat = std::move(xhat);
            bc.pre = std::move(pre);
            bc.inv_std = inv_std;
        }
        x = avg_pool(act, batch, h, w);
        h /= 2;
        w /= 2;
    }

    const long hw = static_cast<long>(h) * w;
    const int f = cfg_.feature_dim();
    Matrix feats(batch, f);
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < f; ++c) feats(b, c) = x.row(c).segment(b * hw, hw).mean();

    const int layer = static_cast<int>(cfg_.widths.size());
    const std::size_t hp = 3 * cfg_.widths.size();
    const ConstMap w1(params_[hp].values.data(), cfg_.hidden, f);
    const ConstVec b1(params_[hp + 1].values.data(), cfg_.hidden);
    const ConstMap w2(params_[hp + 2].values.data(), cfg_.dim, cfg_.hidden);
    const ConstVec b2(params_[hp + 3].values.data(), cfg_.dim);

    Matrix h1 = feats * w1.transpose();
    h1.rowwise() += b1.transpose();
    Matrix a1 = h1.unaryExpr([](double v) { return v * sigmoid(v); });
    check_finite(a1, layer);
    Matrix u = a1 * w2.transpose();
    u.rowwise() += b2.transpose();
    check_finite(u, layer + 1);

    VectorXd norms = u.rowwise().norm();
    for (int b = 0; b < batch; ++b)
        if (!(norms[b] > 1e-12)) throw NumericFailure("projection of batch row " + std::to_string(b) +
                                                      " has zero norm; cannot normalize");
    Matrix z = norms.cwiseInverse().asDiagonal() * u;

    if (cache) {
        cache->last_h = h;
        cache->last_w = w;
        cache->feats = feats;
        cache->h1 = std::move(h1);
        cache->a1 = std::move(a1);
        cache->u = std::move(u);
        cache->z = z;
        cache->norms = std::move(norms);
    }
    return Encoding{std::move(feats), std::move(z)};
}

std::vector<Tensor> Encoder::backward(const Matrix& dz) {
    if (!cache_) throw StateError("backward called without a cached forward pass");
    Cache cache = std::move(*cache_);
    cache_.reset();
    const int batch = cache.batch;
    if (dz.rows() != batch || dz.cols() != cfg_.dim) throw InvalidArgument("gradient shape does not match the batch");

    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (const auto& p : params_) grads.push_back(Tensor{p.name, p.shape, std::vector<double>(p.size(), 0.0)});
    auto grad_map = [&](std::size_t i, long rows, long cols) { return Eigen::Map<Matrix>(grads[i].values.data(), rows, cols); };

    // Through the normalization z = u / |u|.
    const VectorXd proj = (cache.z.cwiseProduct(dz)).rowwise().sum();
    Matrix du = dz - proj.asDiagonal() * cache.z;
    du = cache.norms.cwiseInverse().asDiagonal() * du;

    const int f = cfg_.feature_dim();
    const std::size_t hp = 3 * cfg_.widths.size();
    const ConstMap w1(params_[hp].values.data(), cfg_.hidden, f);
    const ConstMap w2(params_[hp + 2].values.data(), cfg_.dim, cfg_.hidden);

    grad_map(hp + 2, cfg_.dim, cfg_.hidden) = du.transpose() * cache.a1;
    grad_map(hp + 3, cfg_.dim, 1) = du.colwise().sum().transpose();
    Matrix dh1 = (du * w2).cwiseProduct(cache.h1.unaryExpr(&silu_grad));
    grad_map(hp, cfg_.hidden, f) = dh1.transpose() * cache.feats;
    grad_map(hp + 1, cfg_.hidden, 1) = dh1.colwise().sum().transpose();
    const Matrix dfeats = dh1 * w1;

    // Global average pooling.
    const long hw = static_cast<long>(cache.last_h) * cache.last_w;
    Matrix g(f, batch * hw);
    for (int c = 0; c < f; ++c)
        for (int b = 0; b < batch; ++b) g.row(c).segment(b * hw, hw).setConstant(dfeats(b, c) / static_cast<double>(hw));

    for (std::size_t bi = cfg_.widths.size(); bi-- > 0;) {
        BlockCache& bc = cache.blocks[bi];
        const long cout = cfg_.widths[bi];
        const long cin = bi == 0 ? Image::kChannels : cfg_.widths[bi - 1];
        const ConstVec gamma(params_[3 * bi + 1].values.data(), cout);

        Matrix dpre = avg_pool_backward(g, batch, bc.height, bc.width).cwiseProduct(bc.pre.unaryExpr(&silu_grad));
        grad_map(3 * bi + 1, cout, 1) = dpre.cwiseProduct(bc.xhat).rowwise().sum();
        grad_map(3 * bi + 2, cout, 1) = dpre.rowwise().sum();

        const Matrix dxhat = gamma.asDiagonal() * dpre;
        const double n = static_cast<double>(dxhat.cols());
        const VectorXd sum_d = dxhat.rowwise().sum();
        const VectorXd sum_dx = dxhat.cwiseProduct(bc.xhat).rowwise().sum();
        Matrix dy = n * dxhat;
        dy.colwise() -= sum_d;
        dy -= sum_dx.asDiagonal() * bc.xhat;
        dy = (bc.inv_std / n).asDiagonal() * dy;

        grad_map(3 * bi, cout, cin * 9) = dy * bc.col.transpose();
        if (bi > 0) {
            const ConstMap weight(params_[3 * bi].values.data(), cout, cin * 9);
            g = col2im(weight.transpose() * dy, cin, batch, bc.height, bc.width);
        }
    }
    return grads;
}

}  // namespace reiqa
