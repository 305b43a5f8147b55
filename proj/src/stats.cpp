#include "sbrw/stats.hpp"

#include "sbrw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

namespace sbrw {

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normal_quantile: p must lie in (0,1)");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence)
{
    if (trials == 0) {
        throw DomainError("wilson_interval: trials must be >= 1");
    }
    if (successes > trials) {
        throw DomainError("wilson_interval: successes exceed trials");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw DomainError("wilson_interval: confidence must lie in (0,1)");
    }
    const double z = normal_quantile(0.5 + confidence / 2.0);
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    Interval ci{centre - half, centre + half};
    // Exact endpoints at the boundary counts.
    if (successes == 0) ci.low = 0.0;
    if (successes == trials) ci.high = 1.0;
    ci.low = std::max(0.0, ci.low);
    ci.high = std::min(1.0, ci.high);
    return ci;
}

Estimate proportion_estimate(std::uint64_t successes, std::uint64_t trials, double confidence)
{
    Estimate e;
    e.samples = trials;
    e.value = static_cast<double>(successes) / static_cast<double>(trials);
    e.ci = wilson_interval(successes, trials, confidence);
    e.stderr_ = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(trials));
    return e;
}

void RunningStats::push(double x) noexcept
{
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& other) noexcept
{
    if (other.n_ == 0) return;
    if (n_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(other.n_);
    const double delta = other.mean_ - mean_;
    const double total = na + nb;
    mean_ += delta * nb / total;
    m2_ += other.m2_ + delta * delta * na * nb / total;
    n_ += other.n_;
}

double RunningStats::variance() const noexcept
{
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
}

double RunningStats::stderr_of_mean() const noexcept
{
    return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

Estimate RunningStats::estimate(double confidence) const
{
    Estimate e;
    e.value = mean_;
    e.samples = n_;
    e.stderr_ = stderr_of_mean();
    const double z = normal_quantile(0.5 + confidence / 2.0);
    e.ci = {mean_ - z * e.stderr_, mean_ + z * e.stderr_};
    return e;
}

SlopeFit fit_line(std::span<const Point> points)
{
    if (points.size() < 3) {
        throw DomainError("fit_line: need at least 3 points");
    }
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& p : points) {
        sxx += (p.x - mx) * (p.x - mx);
        sxy += (p.x - mx) * (p.y - my);
    }
    if (sxx <= 0.0) {
        throw DomainError("fit_line: abscissae are all equal");
    }
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (const auto& p : points) {
        const double r = p.y - fit.intercept - fit.slope * p.x;
        rss += r * r;
    }
    fit.stderr_ = std::sqrt(rss / (n - 2.0) / sxx);
    return fit;
}

SlopeFit fit_loglog_slope(std::span<const Point> points)
{
    std::vector<Point> logged;
    logged.reserve(points.size());
    for (const auto& p : points) {
        if (!(p.y > 0.0)) {
            throw DomainError("fit_loglog_slope: nonpositive ordinate " + std::to_string(p.y));
        }
        if (!(p.x > 0.0)) {
            throw DomainError("fit_loglog_slope: nonpositive abscissa " + std::to_string(p.x));
        }
        logged.push_back({std::log(p.x), std::log(p.y)});
    }
    return fit_line(logged);
}

double kolmogorov_survival(double lambda)
{
    if (lambda <= 0.0) return 1.0;
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_one_sample(std::vector<double> samples, const std::function<double(double)>& cdf)
{
    if (samples.empty()) {
        throw InsufficientData("ks_one_sample: no samples");
    }
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty()) {
        throw InsufficientData("ks_two_sample: empty sample");
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

double quantile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw InsufficientData("quantile: empty sample");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw DomainError("quantile: q must lie in [0,1]");
    }
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

} // namespace sbrw
