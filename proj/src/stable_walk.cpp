#include "sbrw/stable_walk.hpp"

#include "sbrw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sbrw {

double StepLaw::density(double s) const noexcept
{
    if (s >= x_m) return p_r * alpha * std::pow(x_m, alpha) * std::pow(s, -(alpha + 1.0));
    if (s >= -d && s <= 0.0) return (1.0 - p_r) / d;
    return 0.0;
}

double StepLaw::cdf(double s) const noexcept
{
    if (s < -d) return 0.0;
    if (s <= 0.0) return (1.0 - p_r) * (s + d) / d;
    if (s < x_m) return 1.0 - p_r;
    return 1.0 - c * std::pow(s, -alpha);
}

double StepLaw::upper_tail(double y) const noexcept
{
    if (y <= 0.0) return 1.0 - cdf(y);
    if (y <= x_m) return p_r;
    return c * std::pow(y, -alpha);
}

double StepLaw::inverse_cdf_draw(double u) const noexcept
{
    // Right component occupies the top p_r of the unit interval.
    if (u > 1.0 - p_r) {
        const double w = (1.0 - u) / p_r; // in (0, 1]
        return x_m * std::pow(w, -1.0 / alpha);
    }
    const double w = u / (1.0 - p_r); // in (0, 1)
    return -d * (1.0 - w);
}

StepLaw make_step_law(double alpha, double x_m, double d)
{
    if (!(alpha > 1.0 && alpha < 2.0)) {
        throw DomainError("alpha must lie in (1,2), got " + std::to_string(alpha));
    }
    if (!(x_m > 0.0) || !std::isfinite(x_m)) {
        throw DomainError("x_m must be > 0, got " + std::to_string(x_m));
    }
    if (!(d > 0.0) || !std::isfinite(d)) {
        throw DomainError("d must be > 0, got " + std::to_string(d));
    }
    StepLaw law;
    law.alpha = alpha;
    law.x_m = x_m;
    law.d = d;
    const double right_mean = x_m * alpha / (alpha - 1.0);
    law.p_r = (d / 2.0) / (d / 2.0 + right_mean);
    law.c = law.p_r * std::pow(x_m, alpha);
    return law;
}

StepLaw default_step_law()
{
    return make_step_law(1.5, 1.0, 2.0);
}

double sample_step(const StepLaw& law, Stream& stream)
{
    return law.inverse_cdf_draw(stream.uniform());
}

WalkPath walk_from_steps(std::span<const double> steps)
{
    WalkPath path;
    path.steps.assign(steps.begin(), steps.end());
    path.sums.resize(steps.size() + 1);
    path.running_min.resize(steps.size() + 1);
    path.sums[0] = 0.0;
    path.running_min[0] = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        path.sums[i + 1] = path.sums[i] + steps[i];
        path.running_min[i + 1] = std::min(path.running_min[i], path.sums[i + 1]);
    }
    return path;
}

WalkPath walk_path(const StepLaw& law, std::size_t n, Stream& stream)
{
    std::vector<double> steps(n);
    for (auto& s : steps) s = sample_step(law, stream);
    return walk_from_steps(steps);
}

std::string_view to_string(BallotKind kind) noexcept
{
    switch (kind) {
    case BallotKind::stay_above: return "stay_above";
    case BallotKind::stay_below: return "stay_below";
    case BallotKind::end_below_stay_above: return "end_below_stay_above";
    case BallotKind::window_split: return "window_split";
    case BallotKind::late_crossing: return "late_crossing";
    }
    return "unknown";
}

BallotKind ballot_kind_from_string(std::string_view name)
{
    for (auto k : {BallotKind::stay_above, BallotKind::stay_below, BallotKind::end_below_stay_above,
                   BallotKind::window_split, BallotKind::late_crossing}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown ballot kind: " + std::string(name));
}

namespace {

struct Required {
    bool a, b, u, v, lambda;
};

Required required_params(BallotKind kind)
{
    switch (kind) {
    case BallotKind::stay_above:
    case BallotKind::stay_below: return {true, false, false, false, false};
    case BallotKind::end_below_stay_above: return {true, true, false, false, false};
    case BallotKind::window_split: return {true, true, true, true, true};
    case BallotKind::late_crossing: return {true, true, false, false, true};
    }
    return {};
}

void check_params(BallotKind kind, const BallotParams& p)
{
    const Required req = required_params(kind);
    auto check = [&](bool needed, const std::optional<double>& field, const char* name) {
        if (needed && !field) {
            throw ConfigError(std::string("ballot kind ") + std::string(to_string(kind)) + " requires parameter " +
                              name);
        }
        if (!needed && field) {
            throw ConfigError(std::string("ballot kind ") + std::string(to_string(kind)) +
                              " does not take parameter " + name);
        }
    };
    check(req.a, p.a, "a");
    check(req.b, p.b, "b");
    check(req.u, p.u, "u");
    check(req.v, p.v, "v");
    check(req.lambda, p.lambda, "lambda");

    if (p.a && !(*p.a >= 0.0)) throw DomainError("ballot: a must be >= 0");
    if (p.b && p.a && !(*p.b >= -*p.a)) throw DomainError("ballot: b must be >= -a");
    if (p.u && p.v && !(0.0 <= *p.u && *p.u <= *p.v)) throw DomainError("ballot: need 0 <= u <= v");
    if (p.lambda && !(*p.lambda > 0.0 && *p.lambda < 1.0)) throw DomainError("ballot: lambda must lie in (0,1)");
}

// floor(lambda * n) with the convention that non-integer bounds round down.
std::size_t split_index(double lambda, std::size_t n)
{
    return static_cast<std::size_t>(std::floor(lambda * static_cast<double>(n)));
}

} // namespace

bool ballot_event(BallotKind kind, const BallotParams& p, const WalkPath& path)
{
    const std::size_t n = path.length();
    const auto& s = path.sums;
    switch (kind) {
    case BallotKind::stay_above: return path.running_min[n] >= -*p.a;
    case BallotKind::stay_below: return *std::max_element(s.begin(), s.end()) <= *p.a;
    case BallotKind::end_below_stay_above: return s[n] <= *p.b && path.running_min[n] >= -*p.a;
    case BallotKind::window_split: {
        const std::size_t m = split_index(*p.lambda, n);
        if (path.running_min[m] < -*p.a) return false;
        for (std::size_t i = m; i <= n; ++i) {
            if (s[i] < *p.b) return false;
        }
        return s[n] >= *p.b + *p.u && s[n] <= *p.b + *p.v;
    }
    case BallotKind::late_crossing: {
        const std::size_t m = split_index(*p.lambda, n);
        if (path.running_min[n] < -*p.a) return false;
        for (std::size_t i = m; i < n; ++i) {
            if (!(s[i] > *p.b)) return false;
        }
        return s[n] <= *p.b;
    }
    }
    return false;
}

namespace {

// Streaming evaluation with early exit; must agree with ballot_event on full paths.
bool ballot_trial(const StepLaw& law, BallotKind kind, const BallotParams& p, std::size_t n, Stream stream)
{
    double s = 0.0;
    switch (kind) {
    case BallotKind::stay_above: {
        const double floor_level = -*p.a;
        for (std::size_t i = 0; i < n; ++i) {
            s += sample_step(law, stream);
            if (s < floor_level) return false;
        }
        return true;
    }
    case BallotKind::stay_below: {
        const double cap = *p.a;
        for (std::size_t i = 0; i < n; ++i) {
            s += sample_step(law, stream);
            if (s > cap) return false;
        }
        return true;
    }
    case BallotKind::end_below_stay_above: {
        const double floor_level = -*p.a;
        for (std::size_t i = 0; i < n; ++i) {
            s += sample_step(law, stream);
            if (s < floor_level) return false;
        }
        return s <= *p.b;
    }
    case BallotKind::window_split: {
        const std::size_t m = split_index(*p.lambda, n);
        const double floor_level = -*p.a;
        if (m == 0 && s < *p.b) return false;
        for (std::size_t i = 1; i <= n; ++i) {
            s += sample_step(law, stream);
            if (i <= m && s < floor_level) return false;
            if (i >= m && s < *p.b) return false;
        }
        return s >= *p.b + *p.u && s <= *p.b + *p.v;
    }
    case BallotKind::late_crossing: {
        const std::size_t m = split_index(*p.lambda, n);
        const double floor_level = -*p.a;
        if (m == 0 && n > 0 && !(s > *p.b)) return false;
        for (std::size_t i = 1; i <= n; ++i) {
            s += sample_step(law, stream);
            if (s < floor_level) return false;
            if (i >= m && i < n && !(s > *p.b)) return false;
        }
        return s <= *p.b;
    }
    }
    return false;
}

} // namespace

Estimate ballot_probability(const StepLaw& law, BallotKind kind, const BallotParams& params, std::size_t n,
                            std::size_t reps, const Stream& stream)
{
    check_params(kind, params);
    if (reps == 0) {
        throw ConfigError("ballot_probability: reps must be >= 1");
    }
    std::uint64_t hits = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        if (ballot_trial(law, kind, params, n, stream.split(r))) ++hits;
    }
    return proportion_estimate(hits, reps);
}

TailIndexFit fit_tail_index(std::span<const double> samples, std::size_t k_order)
{
    std::vector<double> positive;
    positive.reserve(samples.size());
    for (double x : samples) {
        if (x > 0.0) positive.push_back(x);
    }
    if (k_order == 0) {
        throw DomainError("fit_tail_index: k_order must be >= 1");
    }
    if (positive.size() <= k_order) {
        throw InsufficientData("fit_tail_index: need more than k_order = " + std::to_string(k_order) +
                               " positive samples, have " + std::to_string(positive.size()));
    }
    // Top k+1 order statistics, largest first.
    std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(k_order), positive.end(),
                     std::greater<>());
    const double threshold = positive[k_order];
    double sum_log = 0.0;
    for (std::size_t i = 0; i < k_order; ++i) {
        sum_log += std::log(positive[i] / threshold);
    }
    if (!(sum_log > 0.0)) {
        throw InsufficientData("fit_tail_index: zero log-spacings (degenerate sample)");
    }
    TailIndexFit fit;
    fit.k_order = k_order;
    fit.alpha_hat = static_cast<double>(k_order) / sum_log;
    fit.stderr_ = fit.alpha_hat / std::sqrt(static_cast<double>(k_order));
    return fit;
}

TailIndexFit fit_tail_index_weighted(std::span<const double> samples, std::span<const double> weights,
                                     double threshold)
{
    if (samples.size() != weights.size()) {
        throw DomainError("fit_tail_index_weighted: samples and weights differ in length");
    }
    if (!(threshold > 0.0)) {
        throw DomainError("fit_tail_index_weighted: threshold must be > 0");
    }
    double w_sum = 0.0, w2_sum = 0.0, wl_sum = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i] > threshold && weights[i] > 0.0) {
            w_sum += weights[i];
            w2_sum += weights[i] * weights[i];
            wl_sum += weights[i] * std::log(samples[i] / threshold);
            ++k;
        }
    }
    if (k < 2 || !(wl_sum > 0.0)) {
        throw InsufficientData("fit_tail_index_weighted: fewer than 2 exceedances");
    }
    TailIndexFit fit;
    fit.k_order = k;
    fit.alpha_hat = w_sum / wl_sum;
    // Effective sample size for the weighted mean of log-excesses.
    const double n_eff = w_sum * w_sum / w2_sum;
    fit.stderr_ = fit.alpha_hat / std::sqrt(n_eff);
    return fit;
}

} // namespace sbrw
