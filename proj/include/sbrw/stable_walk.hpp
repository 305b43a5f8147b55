#pragma once

#include "sbrw/rng.hpp"
#include "sbrw/stats.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace sbrw {

/// Law of one increment of the associated walk: a Pareto(alpha) right
/// component on [x_m, inf) with mass p_r and a uniform left component on
/// [-d, 0]. The mass split is fixed by requiring mean zero.
///
/// P(S_1 >= y) = c * y^-alpha exactly for y >= x_m, with c = p_r * x_m^alpha,
/// and P(S_1 <= -y) = 0 for y > d. The scale c_0 of the limiting stable
/// characteristic exponent is not derived from c.
struct StepLaw {
    double alpha = 1.5;
    double x_m = 1.0;
    double d = 2.0;
    double p_r = 0.25;
    double c = 0.25;

    [[nodiscard]] double density(double s) const noexcept;
    [[nodiscard]] double cdf(double s) const noexcept;
    /// P(S_1 >= y).
    [[nodiscard]] double upper_tail(double y) const noexcept;
    /// Step for a given uniform u in (0,1); sample_step is this applied to one draw.
    [[nodiscard]] double inverse_cdf_draw(double u) const noexcept;
};

/// Validates 1 < alpha < 2, x_m > 0, d > 0 and calibrates p_r for mean zero.
/// Throws DomainError naming the violated bound.
StepLaw make_step_law(double alpha, double x_m, double d);

/// Default law used across the toolkit: alpha = 1.5, x_m = 1, d = 2.
StepLaw default_step_law();

/// One increment; consumes exactly one uniform from the stream.
double sample_step(const StepLaw& law, Stream& stream);

/// A path S_0 = 0, ..., S_n with its running minimum.
struct WalkPath {
    std::vector<double> steps;
    std::vector<double> sums;        // S_0 .. S_n
    std::vector<double> running_min; // min_{j <= i} S_j

    [[nodiscard]] std::size_t length() const noexcept { return steps.size(); }
};

/// Builds a path from given increments.
WalkPath walk_from_steps(std::span<const double> steps);

WalkPath walk_path(const StepLaw& law, std::size_t n, Stream& stream);

/// The five fluctuation events for the associated walk.
enum class BallotKind {
    stay_above,        // P(min_{i<=n} S_i >= -a)
    stay_below,        // P(min_{i<=n} (-S_i) >= -a), i.e. max S_i <= a
    end_below_stay_above, // P(S_n <= b, min S >= -a)
    window_split,      // P(min_{i<=[lambda n]} S_i >= -a, min_{[lambda n]<=i<=n} S_i >= b, S_n in [b+u, b+v])
    late_crossing,     // P(min S >= -a, min_{[lambda n]<=i<n} S_i > b, S_n <= b)
};

std::string_view to_string(BallotKind kind) noexcept;
BallotKind ballot_kind_from_string(std::string_view name);

/// Event parameters. Which fields are required depends on the kind; a field
/// supplied for a kind that does not use it is a configuration error too.
struct BallotParams {
    std::optional<double> a;
    std::optional<double> b;
    std::optional<double> u;
    std::optional<double> v;
    std::optional<double> lambda;
};

/// Evaluates the event on a single path (length n = path.length()).
bool ballot_event(BallotKind kind, const BallotParams& params, const WalkPath& path);

/// Monte Carlo frequency with a 95% Wilson interval. Replicate r uses
/// stream.split(r), so estimates for different parameters share increments.
Estimate ballot_probability(const StepLaw& law, BallotKind kind, const BallotParams& params,
                            std::size_t n, std::size_t reps, const Stream& stream);

struct TailIndexFit {
    double alpha_hat = 0.0;
    double stderr_ = 0.0;
    std::size_t k_order = 0;
};

/// Hill estimator over the k largest order statistics:
/// alpha_hat = k / sum_{i<k} log(X_(i) / X_(k)). Nonpositive samples are dropped.
TailIndexFit fit_tail_index(std::span<const double> samples, std::size_t k_order);

/// Weighted Hill estimator above a fixed threshold:
/// 1/alpha_hat = sum w_i log(x_i/threshold) / sum w_i over x_i > threshold.
TailIndexFit fit_tail_index_weighted(std::span<const double> samples, std::span<const double> weights,
                                     double threshold);

} // namespace sbrw
