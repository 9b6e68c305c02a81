#include "reiqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reiqa/error.hpp"

namespace reiqa {

namespace {

void check_inputs(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InvalidArgument("correlation inputs differ in length");
    if (x.size() < 2) throw InvalidArgument("correlation needs at least two points");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InvalidArgument("correlation inputs must be finite");
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateMetric("correlation of a constant input is undefined");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y);
    const auto rx = fractional_ranks(x);
    const auto ry = fractional_ranks(y);
    return pearson(rx, ry);
}

double plcc(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y);
    return pearson(x, y);
}

double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace reiqa
