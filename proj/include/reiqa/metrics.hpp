#pragma once

#include <span>
#include <vector>

namespace reiqa {

/// Pearson correlation of fractional ranks (ties share their average rank).
/// Throws DegenerateMetric when either input is constant.
double srcc(std::span<const double> x, std::span<const double> y);

/// Pearson correlation on raw values, two-pass. Throws DegenerateMetric on
/// zero variance.
double plcc(std::span<const double> x, std::span<const double> y);

/// 1-based ranks, ties averaged.
std::vector<double> fractional_ranks(std::span<const double> v);

/// Order-statistic median; mean of the two middle values for even sizes.
double median(std::vector<double> v);

}  // namespace reiqa
