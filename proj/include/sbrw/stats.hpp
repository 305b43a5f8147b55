#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace sbrw {

/// Two-sided interval.
struct Interval {
    double low = 0.0;
    double high = 0.0;

    [[nodiscard]] bool contains(double x) const noexcept { return low <= x && x <= high; }
    [[nodiscard]] bool overlaps(const Interval& other) const noexcept
    {
        return low <= other.high && other.low <= high;
    }
};

/// Point estimate with a confidence interval and the sample size behind it.
struct Estimate {
    double value = 0.0;
    Interval ci;
    double stderr_ = 0.0;
    std::uint64_t samples = 0;
};

/// Standard normal quantile.
double normal_quantile(double p);

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence = 0.95);

/// Frequency estimate with Wilson interval.
Estimate proportion_estimate(std::uint64_t successes, std::uint64_t trials, double confidence = 0.95);

/// Welford running mean/variance. Merge is exact in the counts and
/// commutative up to floating rounding; callers that need bit-exact
/// reproducibility merge in a fixed order.
class RunningStats {
public:
    void push(double x) noexcept;
    void merge(const RunningStats& other) noexcept;

    [[nodiscard]] std::uint64_t count() const noexcept { return n_; }
    [[nodiscard]] double mean() const noexcept { return mean_; }
    [[nodiscard]] double variance() const noexcept;
    [[nodiscard]] double stderr_of_mean() const noexcept;
    /// Normal-approximation interval for the mean.
    [[nodiscard]] Estimate estimate(double confidence = 0.95) const;

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_ = 0.0;
};

/// Ordinary least squares y = intercept + slope * x. Needs >= 3 points.
SlopeFit fit_line(std::span<const Point> points);

/// Least squares on (log x, log y). Ordinates and abscissae must be positive.
SlopeFit fit_loglog_slope(std::span<const Point> points);

/// Kolmogorov survival function Q_KS(lambda) = P(K > lambda).
double kolmogorov_survival(double lambda);

struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
};

/// One-sample KS distance against a continuous CDF.
KsResult ks_one_sample(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Two-sample KS test (asymptotic p-value with the Stephens correction).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Sample quantile by linear interpolation of order statistics (type 7).
double quantile(std::vector<double> values, double q);

} // namespace sbrw
