#pragma once

#include "sbrw/forward_sim.hpp"
#include "sbrw/reproduction.hpp"

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sbrw {

/// A brood drawn under the tilted measure together with the spine child.
/// The spine child is child number `ordinal` of cluster `cluster`.
struct TiltedBrood {
    Brood brood;
    std::size_t cluster = 0;
    double ordinal = 0.0;
};

/// BroodLaw: location Y ~ p, size-biased rounding of lambda(Y), spine child
/// uniform among the N co-located children. Dyadic toy: sign pattern tilted
/// by e^{-x_1} + e^{-x_2}, spine child chosen proportionally to e^{-x_i}.
/// Offsets are relative to a parent at 0.
TiltedBrood tilted_brood(const ReproductionLaw& law, Stream& stream);

/// Spine path under the tilted measure with the brood of every spine particle.
/// broods[i] is the brood of the spine particle of generation i (absolute positions).
struct SpineRealization {
    std::vector<double> spine_positions; // V(w_0) = 0, ..., V(w_n)
    std::vector<Brood> broods;
    std::vector<std::size_t> chosen_cluster;
    std::vector<double> chosen_ordinal;

    [[nodiscard]] std::size_t length() const noexcept { return broods.size(); }
    [[nodiscard]] double increment(std::size_t i) const { return spine_positions.at(i + 1) - spine_positions.at(i); }
    /// Brothers of the spine particle of generation i + 1 as (position, multiplicity) pairs.
    [[nodiscard]] std::vector<Cluster> brothers(std::size_t i) const;
};

void to_json(nlohmann::json& j, const SpineRealization& r);

SpineRealization sample_spine(const ReproductionLaw& law, std::size_t n, Stream& stream);
SpineRealization sample_spine(const ReproductionLaw& law, std::size_t n, std::uint64_t seed);

/// Population of generation n made of the spine and its brothers' subtrees
/// grown forward under P. A brother born at generation j has n - j
/// generations to grow; depth_budget bounds that, and brothers whose
/// subtree would need more are dropped and counted as truncated.
Generation grow_spine_tree(const SpineRealization& r, const ReproductionLaw& law, const TruncationPolicy& policy,
                           std::size_t depth_budget, std::uint64_t seed);

/// Barrier constants for the events A_k, B_k.
struct BarrierSpec {
    std::size_t n = 0;
    double lambda = 0.0;
    double K = 5.0;
    double c_prime = 10.0;
    double alpha = 1.5;
    double gamma = 0.0; // 1 / (alpha (alpha + 1))

    /// floor(alpha n / 4).
    [[nodiscard]] std::size_t early_end() const noexcept;
    /// floor(alpha n), the last admissible k.
    [[nodiscard]] std::size_t k_max() const noexcept;
    /// (1/alpha) log n - lambda.
    [[nodiscard]] double level() const noexcept;
    /// a_i for i <= k.
    [[nodiscard]] double a(std::size_t i) const noexcept;
    /// b_i^{(k,n)}.
    [[nodiscard]] double b(std::size_t i, std::size_t k) const noexcept;
    /// 0 <= lambda <= (1/(2 alpha)) log n.
    [[nodiscard]] bool admissible() const noexcept;
};

/// Throws DomainError for n == 0, lambda < 0, K < 0, c_prime <= 0 or alpha outside (1,2).
BarrierSpec make_barrier_spec(std::size_t n, double lambda, double alpha, double K = 5.0, double c_prime = 10.0);

struct EventAB {
    bool in_A = false;
    bool in_B = false;
    /// Terminal window V(x_k) <= level + K.
    bool window_ok = false;
    /// V(x_i) >= a_i for 0 <= i <= k.
    bool barrier_ok = false;
};

/// log of sum over `brothers` of (1 + (V - a)_+) e^{-(V - a)}; -inf when empty.
double log_brother_sum(const std::vector<Cluster>& brothers, double a);

/// A_k and B_k along the spine path taken as the candidate particle.
/// Throws DomainError unless n < k <= floor(alpha n) and k <= r.length().
EventAB event_AB(const SpineRealization& r, const BarrierSpec& spec, std::size_t k);

enum class BarrierMode {
    /// Indicator of the union of A_k and B_k over full trees, with exact
    /// pruning and a keep-lowest population cap (biased when the cap binds).
    forward,
    /// sum_k E[#{|x| = k : x in A_k}] by the many-to-one formula.
    first_moment,
};

std::string_view to_string(BarrierMode mode) noexcept;
BarrierMode barrier_mode_from_string(std::string_view name);

struct BarrierEstimate {
    BarrierMode mode = BarrierMode::first_moment;
    Estimate estimate;
    bool admissible = true;
    /// Replicates in which the population cap removed particles (forward mode).
    std::uint64_t capped_replicates = 0;
};

struct BarrierRunLimits {
    std::size_t max_n_forward = 256;
    std::size_t max_population = 2000;
};

/// Replicate r uses stream.split(r); estimates for different lambda are coupled.
/// Throws BudgetExceeded in forward mode when n > limits.max_n_forward.
BarrierEstimate estimate_barrier_event(const ReproductionLaw& law, const BarrierSpec& spec, std::size_t reps,
                                       BarrierMode mode, const Stream& stream, const BarrierRunLimits& limits = {});

/// Functionals of the spine path for the tilted-measure estimator. Each
/// depends on the end position and running minimum only, so the forward
/// engine can evaluate sum_x e^{-V(x)} phi(x) for the same entry.
enum class SpineFunctional {
    one,              // 1
    spine_min_above,  // 1{min_i V(w_i) >= -level}
    terminal_exp_neg, // exp(-(V(w_n))_+)
};

struct SpineFunctionalSpec {
    SpineFunctional id = SpineFunctional::one;
    double level = 0.0;
};

std::string_view to_string(SpineFunctional id) noexcept;
SpineFunctional spine_functional_from_string(std::string_view name);
std::vector<SpineFunctionalSpec> spine_functional_catalog();

double evaluate_spine_functional(const SpineFunctionalSpec& phi, double path_min, double end) noexcept;

/// E_Q[phi] from reps spines; replicate r uses stream.split(r).
Estimate size_biased_functional(const ReproductionLaw& law, std::size_t n, const SpineFunctionalSpec& phi,
                                std::size_t reps, const Stream& stream);

/// sum over particles of weight e^{-V} phi for a forward generation.
double forward_weighted_functional(const Generation& gen, const SpineFunctionalSpec& phi) noexcept;

} // namespace sbrw
