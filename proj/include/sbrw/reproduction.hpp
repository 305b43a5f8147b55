#pragma once

#include "sbrw/rng.hpp"
#include "sbrw/stable_walk.hpp"
#include "sbrw/stats.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace sbrw {

/// `count` co-located children at `position`. `offset_weight` is
/// count * exp(-offset) with offset = position - parent position, computed
/// without overflow (it stays finite when count does not).
struct Cluster {
    double position = 0.0;
    double offset = 0.0;
    double count = 0.0;
    double offset_weight = 0.0;
};

/// One brood: at most two clusters (BroodLaw uses one, the dyadic toy two).
struct Brood {
    std::array<Cluster, 2> clusters{};
    std::size_t size = 0;

    [[nodiscard]] bool empty() const noexcept { return size == 0; }
    [[nodiscard]] std::span<const Cluster> view() const noexcept { return {clusters.data(), size}; }
    /// Total number of children.
    [[nodiscard]] double total_count() const noexcept;
    /// X = sum over children of exp(-offset).
    [[nodiscard]] double offset_weight() const noexcept;
};

/// Brood law built on a step law: a brood lands at a single location Y drawn
/// from h(y) = p(y) e^y / lambda(y) (total mass Z <= 1, otherwise empty) and
/// contains N children, N the randomized rounding of lambda(Y) = max(1, e^Y).
/// The e^{-V}-weighted intensity of children is then exactly p.
struct BroodLaw {
    StepLaw base;
    double mass = 0.0;      // Z
    double left_mass = 0.0; // mass of h on [-d, 0]
    double right_mass = 0.0; // mass of h on [x_m, inf)

    [[nodiscard]] static double expected_size(double y) noexcept;
    [[nodiscard]] double location_density(double y) const noexcept;
};

/// Two children, each displaced by -u with probability theta and +u otherwise,
/// u = arccosh 2, theta = (2 - sqrt 3)/4. Boundary case holds exactly; the
/// displacement law has bounded support.
struct DyadicToyLaw {
    double u = 0.0;
    double theta = 0.0;
};

using ReproductionLaw = std::variant<BroodLaw, DyadicToyLaw>;

/// Throws NumericError if the quadrature for Z misses its tolerance.
BroodLaw make_brood_law(const StepLaw& base);
DyadicToyLaw make_dyadic_toy();

std::string law_name(const ReproductionLaw& law);

/// Sample one brood of a parent at `parent_position`.
Brood sample_brood(const BroodLaw& law, double parent_position, Stream& stream);
Brood sample_brood(const DyadicToyLaw& law, double parent_position, Stream& stream);
Brood sample_brood(const ReproductionLaw& law, double parent_position, Stream& stream);

/// One increment of the walk associated with the law by the many-to-one formula.
double sample_associated_step(const ReproductionLaw& law, Stream& stream);

/// Tail index used by the law (the dyadic toy has none; 1.5 is used for its moment rows).
double law_alpha(const ReproductionLaw& law) noexcept;

/// Largest left displacement of a single child (d or u).
double max_left_step(const ReproductionLaw& law) noexcept;

struct ConditionRow {
    std::string name;
    double estimate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double stderr_ = 0.0;
    std::uint64_t reps = 0;
    std::uint64_t seed = 0;
    std::string note;
};

struct ConditionReport {
    std::string law;
    std::vector<ConditionRow> rows;

    /// Row lookup by name; throws ConfigError if absent.
    [[nodiscard]] const ConditionRow& row(std::string_view name) const;
};

void to_json(nlohmann::json& j, const ConditionRow& row);
void to_json(nlohmann::json& j, const ConditionReport& report);

/// Monte Carlo report on the boundary, tail and moment conditions. Requires reps >= 10^4.
ConditionReport check_conditions(const ReproductionLaw& law, std::size_t reps, std::span<const double> y_grid,
                                 const Stream& stream);

/// Closed catalog of path functionals g for the many-to-one identity
/// E[sum_{|x|=n} g(V(x_1..x_n))] = E[e^{S_n} g(S_1..S_n)].
/// Every entry keeps e^{s_n} g bounded.
enum class PathFunctional {
    unit_weight,      // e^{-s_n}
    barrier_weight,   // 1{min_i s_i >= -level} e^{-s_n}
    leaf_nonpositive, // 1{s_n <= 0}
    count_below,      // 1{s_n <= level}
};

struct PathFunctionalSpec {
    PathFunctional id = PathFunctional::unit_weight;
    double level = 0.0;
};

std::string_view to_string(PathFunctional id) noexcept;
/// Throws ConfigError for names outside the catalog.
PathFunctional path_functional_from_string(std::string_view name);
std::vector<PathFunctionalSpec> path_functional_catalog();

/// g evaluated at the end of a path with running minimum `path_min` and end `end`.
double evaluate_path_functional(const PathFunctionalSpec& g, double path_min, double end) noexcept;
/// e^{s_n} g, the walk-side integrand.
double walk_side_integrand(const PathFunctionalSpec& g, double path_min, double end) noexcept;

struct ManyToOneResult {
    Estimate tree_side;
    Estimate walk_side;
    bool consistent = false;
};

/// Tree side: depth-first forward trees where each cluster of N co-located
/// children is represented by min(N, representatives) subtrees of weight
/// N / min(N, representatives); unbiased for the sum's expectation.
/// Walk side: associated-walk Monte Carlo. Consistent means overlapping 95% CIs.
ManyToOneResult many_to_one_check(const ReproductionLaw& law, const PathFunctionalSpec& g, std::size_t n,
                                  std::size_t reps, const Stream& stream, std::size_t representatives = 4);

/// Exact E[sum_{|x|=n} g] for the dyadic toy by enumerating every sign
/// configuration of the full tree (n <= 3).
double dyadic_tree_expectation(const DyadicToyLaw& law, const PathFunctionalSpec& g, std::size_t n);

/// Exact E[e^{S_n} g(S)] for the dyadic toy by enumerating all 2^n walks.
double dyadic_walk_expectation(const DyadicToyLaw& law, const PathFunctionalSpec& g, std::size_t n);

} // namespace sbrw
