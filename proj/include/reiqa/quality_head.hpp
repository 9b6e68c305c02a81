#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reiqa/encoder.hpp"

namespace reiqa {

/// Pooled backbone features of both encoders at full and half scale:
/// [content@1 | content@0.5 | quality@1 | quality@0.5]. The content encoder
/// is optional; without it only the quality half is produced.
std::vector<double> extract(const Encoder* content, const Encoder& quality, const Image& img);

int feature_dim(const Encoder* content, const Encoder& quality);

/// extract() for many images, one row each. Rows are computed independently,
/// so the result does not depend on threads.
Matrix extract_all(const Encoder* content, const Encoder& quality, std::span<const Image> images, int threads = 1);

/// Elementwise |ref - dist|, the regression input of full-reference mode.
Matrix fr_features(const Matrix& ref, const Matrix& dist);

/// Linear model fitted on standardized features. Predictions are made in the
/// raw feature space: raw_bias + raw_weights . x.
struct RidgeModel {
    double lambda = 0.0;
    std::vector<double> mean;     // per-feature training mean
    std::vector<double> scale;    // per-feature population std (1 where constant)
    std::vector<double> weights;  // coefficients on standardized features
    double intercept = 0.0;       // standardized-space intercept (= mean of y)

    std::vector<double> raw_weights() const;
    double raw_bias() const;
    std::size_t dim() const { return weights.size(); }
};

/// Closed-form ridge on standardized features with an unpenalized intercept.
/// Throws NumericFailure when the regularized system is singular.
RidgeModel fit_ridge(const Matrix& x, std::span<const double> y, double lambda);

/// Log-spaced grid from lo to hi inclusive; endpoints are exact.
std::vector<double> lambda_grid(int points = 13, double lo = 1e-3, double hi = 1e3);

struct LambdaSearch {
    RidgeModel model;
    std::vector<double> val_srcc;  // per grid point; NaN where the fit or metric failed
};

/// Fit every grid value on train and keep the one with the best validation
/// SRCC; ties go to the larger lambda.
LambdaSearch select_lambda(const Matrix& x_train, std::span<const double> y_train, const Matrix& x_val,
                           std::span<const double> y_val, std::span<const double> grid);

double predict(const RidgeModel& model, std::span<const double> feat);
std::vector<double> predict_all(const RidgeModel& model, const Matrix& x);
double predict_fr(const RidgeModel& model, std::span<const double> ref, std::span<const double> dist);

// Feature file: "RIQF", u32 rows, u32 dim, row-major float32, little-endian.
// A companion "<file>.csv" lists the image path of each row.
struct FeatureFile {
    Matrix values;
    std::vector<std::string> paths;
};

void save_features(const std::filesystem::path& path, const Matrix& values, std::span<const std::string> paths);
FeatureFile load_features(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const RidgeModel& model);
RidgeModel load_model(const std::filesystem::path& path);

}  // namespace reiqa
