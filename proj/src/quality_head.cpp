#include "reiqa/quality_head.hpp"

#include <Eigen/Cholesky>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "binio.hpp"
#include "reiqa/error.hpp"
#include "reiqa/metrics.hpp"

namespace reiqa {

namespace {

void append_scales(const Encoder& enc, const Image& img, std::vector<double>& out) {
    const int half_w = static_cast<int>(std::lround(img.width() * 0.5));
    const int half_h = static_cast<int>(std::lround(img.height() * 0.5));
    const Image half = resize(img, half_w, half_h, ResizeMethod::Bilinear);
    for (const Image* im : {&img, &half}) {
        const Encoding e = enc.encode(std::span<const Image>(im, 1));
        out.insert(out.end(), e.features.data(), e.features.data() + e.features.size());
    }
}

}  // namespace

std::vector<double> extract(const Encoder* content, const Encoder& quality, const Image& img) {
    int need = quality.config().min_input();
    if (content) need = std::max(need, content->config().min_input());
    if (img.width() < 2 * need || img.height() < 2 * need) {
        throw InvalidArgument("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                              " is too small for half-scale extraction (needs " + std::to_string(2 * need) + ")");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(feature_dim(content, quality)));
    if (content) append_scales(*content, img, out);
    append_scales(quality, img, out);
    return out;
}

int feature_dim(const Encoder* content, const Encoder& quality) {
    return 2 * (quality.config().feature_dim() + (content ? content->config().feature_dim() : 0));
}

Matrix extract_all(const Encoder* content, const Encoder& quality, std::span<const Image> images, int threads) {
    const int dim = feature_dim(content, quality);
    Matrix out(static_cast<long>(images.size()), dim);
    std::vector<std::exception_ptr> errors(images.size());
    auto work = [&](std::size_t i) {
        try {
            const auto f = extract(content, quality, images[i]);
            for (int j = 0; j < dim; ++j) out(static_cast<long>(i), j) = f[j];
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(images.size(), 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < images.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < images.size(); i = next++) work(i);
            });
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

Matrix fr_features(const Matrix& ref, const Matrix& dist) {
    if (ref.rows() != dist.rows() || ref.cols() != dist.cols()) {
        throw InvalidArgument("reference and distorted features differ in shape");
    }
    return (ref - dist).cwiseAbs();
}

std::vector<double> RidgeModel::raw_weights() const {
    std::vector<double> w(weights.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = weights[j] / scale[j];
    return w;
}

double RidgeModel::raw_bias() const {
    double b = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) b -= weights[j] * mean[j] / scale[j];
    return b;
}

RidgeModel fit_ridge(const Matrix& x, std::span<const double> y, double lambda) {
    const long n = x.rows(), p = x.cols();
    if (n < 2) throw InvalidArgument("ridge needs at least two rows");
    if (static_cast<long>(y.size()) != n) throw InvalidArgument("ridge targets and rows differ in count");
    if (p < 1) throw InvalidArgument("ridge needs at least one feature");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be finite and non-negative");
    if (!x.allFinite()) throw InvalidArgument("ridge features must be finite");
    for (double v : y)
        if (!std::isfinite(v)) throw InvalidArgument("ridge targets must be finite");

    RidgeModel m;
    m.lambda = lambda;
    m.mean.resize(p);
    m.scale.resize(p);
    Matrix z(n, p);
    for (long j = 0; j < p; ++j) {
        const double mu = x.col(j).mean();
        double ss = 0.0;
        for (long i = 0; i < n; ++i) ss += (x(i, j) - mu) * (x(i, j) - mu);
        double sd = std::sqrt(ss / static_cast<double>(n));
        if (sd <= 1e-12 * std::max(1.0, std::abs(mu))) sd = 1.0;
        m.mean[j] = mu;
        m.scale[j] = sd;
        for (long i = 0; i < n; ++i) z(i, j) = (x(i, j) - mu) / sd;
    }
    double ybar = 0.0;
    for (double v : y) ybar += v;
    ybar /= static_cast<double>(n);
    Eigen::VectorXd yc(n);
    for (long i = 0; i < n; ++i) yc[i] = y[i] - ybar;

    Eigen::MatrixXd a = z.transpose() * z;
    a.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = z.transpose() * yc;
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
        throw NumericFailure("ridge system is singular at lambda=" + std::to_string(lambda));
    }
    const Eigen::VectorXd w = llt.solve(rhs);
    m.weights.assign(w.data(), w.data() + p);
    m.intercept = ybar;
    return m;
}

std::vector<double> lambda_grid(int points, double lo, double hi) {
    if (points < 1) throw InvalidArgument("lambda grid needs at least one point");
    if (!(lo > 0.0 && hi >= lo)) throw InvalidArgument("lambda grid bounds must satisfy 0 < lo <= hi");
    if (points == 1) return {lo};
    std::vector<double> g(points);
    const double a = std::log10(lo), b = std::log10(hi);
    for (int i = 0; i < points; ++i) g[i] = std::pow(10.0, a + (b - a) * i / (points - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

double predict(const RidgeModel& model, std::span<const double> feat) {
    if (feat.size() != model.dim()) throw InvalidArgument("feature dimension does not match the model");
    double s = model.raw_bias();
    const auto w = model.raw_weights();
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * feat[j];
    return s;
}

std::vector<double> predict_all(const RidgeModel& model, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != model.dim()) throw InvalidArgument("feature dimension does not match the model");
    const auto w = model.raw_weights();
    const double b = model.raw_bias();
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (long i = 0; i < x.rows(); ++i) {
        double s = b;
        for (long j = 0; j < x.cols(); ++j) s += w[j] * x(i, j);
        out[i] = s;
    }
    return out;
}

double predict_fr(const RidgeModel& model, std::span<const double> ref, std::span<const double> dist) {
    if (ref.size() != dist.size()) throw InvalidArgument("reference and distorted features differ in length");
    std::vector<double> d(ref.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = std::abs(ref[j] - dist[j]);
    return predict(model, d);
}

LambdaSearch select_lambda(const Matrix& x_train, std::span<const double> y_train, const Matrix& x_val,
                           std::span<const double> y_val, std::span<const double> grid) {
    if (grid.empty()) throw InvalidArgument("lambda grid is empty");
    LambdaSearch out;
    out.val_srcc.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    bool found = false;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        RidgeModel m;
        double s;
        try {
            m = fit_ridge(x_train, y_train, grid[i]);
            s = srcc(predict_all(m, x_val), y_val);
        } catch (const NumericFailure&) {
            continue;
        } catch (const DegenerateMetric&) {
            continue;
        }
        out.val_srcc[i] = s;
        if (!found || s > best || (s == best && grid[i] > out.model.lambda)) {
            best = s;
            out.model = std::move(m);
            found = true;
        }
    }
    if (!found) throw DegenerateMetric("no lambda in the grid gave a usable validation SRCC");
    return out;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

void save_features(const std::filesystem::path& path, const Matrix& values, std::span<const std::string> paths) {
    if (!paths.empty() && static_cast<long>(paths.size()) != values.rows()) {
        throw InvalidArgument("one path per feature row is required");
    }
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write feature file " + path.string());
        out.write("RIQF", 4);
        binio::put_u32(out, static_cast<std::uint32_t>(values.rows()));
        binio::put_u32(out, static_cast<std::uint32_t>(values.cols()));
        for (long i = 0; i < values.rows(); ++i)
            for (long j = 0; j < values.cols(); ++j) binio::put_f32(out, static_cast<float>(values(i, j)));
        if (!out) throw IoError("failed writing feature file " + path.string());
    }
    std::ofstream csv(path.string() + ".csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write feature index " + path.string() + ".csv");
    csv << "row,path\n";
    for (std::size_t i = 0; i < paths.size(); ++i) csv << i << ',' << paths[i] << '\n';
}

FeatureFile load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file " + path.string());
    binio::expect_magic(in, "RIQF");
    const std::uint32_t rows = binio::get_u32(in);
    const std::uint32_t dim = binio::get_u32(in);
    if (static_cast<std::uint64_t>(rows) * dim > (std::uint64_t{1} << 32)) throw FormatError("implausible feature size");
    FeatureFile f;
    f.values.resize(rows, dim);
    for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t j = 0; j < dim; ++j) f.values(i, j) = binio::get_f32(in);

    std::ifstream csv(path.string() + ".csv");
    if (csv) {
        std::string line;
        std::getline(csv, line);
        while (std::getline(csv, line)) {
            const auto comma = line.find(',');
            if (comma == std::string::npos) throw FormatError("bad feature index line: " + line);
            f.paths.push_back(line.substr(comma + 1));
        }
        if (f.paths.size() != rows) throw FormatError("feature index has a different row count");
    }
    return f;
}

void save_model(const std::filesystem::path& path, const RidgeModel& model) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write model " + path.string());
    char buf[160];
    std::snprintf(buf, sizeof buf, "lambda,%.17g\nbias,%.17g\nintercept,%.17g\n", model.lambda, model.raw_bias(),
                  model.intercept);
    out << buf << "feature,mean,scale,weight\n";
    for (std::size_t j = 0; j < model.dim(); ++j) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", j, model.mean[j], model.scale[j], model.weights[j]);
        out << buf;
    }
    if (!out) throw IoError("failed writing model " + path.string());
}

RidgeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model " + path.string());
    RidgeModel m;
    auto scalar = [&](const char* key) {
        std::string line;
        if (!std::getline(in, line) || line.rfind(std::string(key) + ",", 0) != 0) {
            throw FormatError(std::string("model file: expected '") + key + "'");
        }
        return std::stod(line.substr(std::strlen(key) + 1));
    };
    m.lambda = scalar("lambda");
    scalar("bias");  // derived; recomputed from the stored terms
    m.intercept = scalar("intercept");
    std::string line;
    if (!std::getline(in, line) || line != "feature,mean,scale,weight") throw FormatError("model file: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string idx, mu, sd, w;
        if (!std::getline(ls, idx, ',') || !std::getline(ls, mu, ',') || !std::getline(ls, sd, ',') ||
            !std::getline(ls, w)) {
            throw FormatError("model file: bad row '" + line + "'");
        }
        m.mean.push_back(std::stod(mu));
        m.scale.push_back(std::stod(sd));
        m.weights.push_back(std::stod(w));
    }
    return m;
}

}  // namespace reiqa
