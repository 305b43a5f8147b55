#include "sbrw/reproduction.hpp"

#include "sbrw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace sbrw {

namespace {

// Above this offset exp(offset) overflows; N e^{-Y} is then 1 to double precision.
constexpr double kOverflowOffset = 700.0;

Cluster make_cluster(double parent, double offset, double count, double offset_weight)
{
    return {parent + offset, offset, count, offset_weight};
}

} // namespace

double Brood::total_count() const noexcept
{
    double total = 0.0;
    for (const auto& c : view()) total += c.count;
    return total;
}

double Brood::offset_weight() const noexcept
{
    double total = 0.0;
    for (const auto& c : view()) total += c.offset_weight;
    return total;
}

double BroodLaw::expected_size(double y) noexcept
{
    return std::max(1.0, std::exp(y));
}

double BroodLaw::location_density(double y) const noexcept
{
    const double p = base.density(y);
    if (p == 0.0) return 0.0;
    // p(y) e^y / max(1, e^y) = p(y) min(e^y, 1)
    return p * std::min(1.0, std::exp(y));
}

BroodLaw make_brood_law(const StepLaw& base)
{
    // Revalidates the base parameters.
    const StepLaw checked = make_step_law(base.alpha, base.x_m, base.d);
    BroodLaw law;
    law.base = checked;

    constexpr double tol = 1e-10;
    auto h = [&law](double y) { return law.location_density(y); };

    double left_err = 0.0;
    const double left =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(h, -checked.d, 0.0, 15, tol, &left_err);
    // Half-line with a power tail: double-exponential rule.
    double right_err = 0.0;
    boost::math::quadrature::exp_sinh<double> half_line;
    const double right = half_line.integrate(h, checked.x_m, std::numeric_limits<double>::infinity(), tol,
                                             &right_err);

    const double total = left + right;
    if (!(left_err <= 1e-8 * std::max(left, 1e-300)) || !(right_err <= 1e-8 * std::max(right, 1e-300)) ||
        !std::isfinite(total)) {
        throw NumericError("make_brood_law: quadrature for the brood mass did not reach relative tolerance 1e-8");
    }
    law.left_mass = left;
    law.right_mass = right;
    law.mass = total;
    if (!(law.mass > 0.0 && law.mass <= 1.0 + 1e-12)) {
        throw NumericError("make_brood_law: brood mass outside (0,1]");
    }
    law.mass = std::min(law.mass, 1.0);
    return law;
}

DyadicToyLaw make_dyadic_toy()
{
    DyadicToyLaw law;
    law.u = std::log(2.0 + std::sqrt(3.0));
    law.theta = (2.0 - std::sqrt(3.0)) / 4.0;
    return law;
}

std::string law_name(const ReproductionLaw& law)
{
    return std::holds_alternative<BroodLaw>(law) ? "brood" : "dyadic_toy";
}

Brood sample_brood(const BroodLaw& law, double parent_position, Stream& stream)
{
    Brood brood;
    const double u1 = stream.uniform();
    const double u2 = stream.uniform();
    if (u1 >= law.mass) return brood;

    const StepLaw& b = law.base;
    double y = 0.0;
    if (u1 < law.left_mass) {
        // Density proportional to e^y on [-d, 0].
        const double w = u1 / law.left_mass;
        const double lo = std::exp(-b.d);
        y = std::log(lo + w * (1.0 - lo));
        brood.clusters[0] = make_cluster(parent_position, y, 1.0, std::exp(-y));
        brood.size = 1;
        return brood;
    }
    const double w = std::clamp((law.mass - u1) / law.right_mass, 0x1.0p-60, 1.0);
    y = b.x_m * std::pow(w, -1.0 / b.alpha);
    if (y >= kOverflowOffset) {
        const double count = std::exp(std::min(y, 709.0));
        brood.clusters[0] = make_cluster(parent_position, y, count, 1.0);
        brood.size = 1;
        return brood;
    }
    const double lambda = std::exp(y);
    const double m = std::floor(lambda);
    const double frac = lambda - m;
    const double n = m + (u2 < frac ? 1.0 : 0.0);
    brood.clusters[0] = make_cluster(parent_position, y, n, n * std::exp(-y));
    brood.size = 1;
    return brood;
}

Brood sample_brood(const DyadicToyLaw& law, double parent_position, Stream& stream)
{
    Brood brood;
    for (std::size_t i = 0; i < 2; ++i) {
        const double offset = stream.uniform() < law.theta ? -law.u : law.u;
        brood.clusters[i] = make_cluster(parent_position, offset, 1.0, std::exp(-offset));
    }
    brood.size = 2;
    return brood;
}

Brood sample_brood(const ReproductionLaw& law, double parent_position, Stream& stream)
{
    return std::visit([&](const auto& l) { return sample_brood(l, parent_position, stream); }, law);
}

double sample_associated_step(const ReproductionLaw& law, Stream& stream)
{
    if (const auto* brood = std::get_if<BroodLaw>(&law)) {
        return sample_step(brood->base, stream);
    }
    const auto& toy = std::get<DyadicToyLaw>(law);
    return stream.uniform() < 0.5 ? -toy.u : toy.u;
}

double law_alpha(const ReproductionLaw& law) noexcept
{
    if (const auto* brood = std::get_if<BroodLaw>(&law)) return brood->base.alpha;
    return 1.5;
}

double max_left_step(const ReproductionLaw& law) noexcept
{
    if (const auto* brood = std::get_if<BroodLaw>(&law)) return brood->base.d;
    return std::get<DyadicToyLaw>(law).u;
}

// ---------------------------------------------------------------------------
// Condition report

const ConditionRow& ConditionReport::row(std::string_view name) const
{
    for (const auto& r : rows) {
        if (r.name == name) return r;
    }
    throw ConfigError("condition report has no row " + std::string(name));
}

void to_json(nlohmann::json& j, const ConditionRow& row)
{
    j = nlohmann::json{{"name", row.name},   {"estimate", row.estimate}, {"ci_low", row.ci_low},
                       {"ci_high", row.ci_high}, {"stderr", row.stderr_},   {"reps", row.reps},
                       {"seed", row.seed},   {"note", row.note}};
}

void to_json(nlohmann::json& j, const ConditionReport& report)
{
    j = nlohmann::json{{"law", report.law}, {"rows", report.rows}};
}

namespace {

ConditionRow mean_row(std::string name, const RunningStats& stats, std::uint64_t seed, std::string note = {})
{
    const Estimate e = stats.estimate();
    return {std::move(name), e.value, e.ci.low, e.ci.high, e.stderr_, stats.count(), seed, std::move(note)};
}

double log_plus(double x)
{
    return x > 1.0 ? std::log(x) : 0.0;
}

} // namespace

ConditionReport check_conditions(const ReproductionLaw& law, std::size_t reps, std::span<const double> y_grid,
                                 const Stream& stream)
{
    if (reps < 10000) {
        throw ConfigError("check_conditions: reps must be >= 10^4");
    }
    if (y_grid.size() < 3) {
        throw ConfigError("check_conditions: y_grid needs at least 3 points");
    }
    const bool is_toy = std::holds_alternative<DyadicToyLaw>(law);
    const double alpha = law_alpha(law);
    const std::uint64_t seed = stream.key();

    RunningStats mass, mean_pos, x_moment, xt_moment, x_moment_half, xt_moment_half;
    std::vector<RunningStats> right_tail(y_grid.size()), left_tail(y_grid.size());
    const std::array<double, 3> caps{1e2, 1e4, 1e6};
    std::array<RunningStats, 3> capped_size;
    std::vector<double> tail_samples, tail_weights;

    for (std::size_t r = 0; r < reps; ++r) {
        Stream s = stream.split(r);
        const Brood brood = sample_brood(law, 0.0, s);
        double x = 0.0, x_tilde = 0.0, weighted_pos = 0.0;
        for (const auto& c : brood.view()) {
            x += c.offset_weight;
            weighted_pos += c.offset * c.offset_weight;
            if (c.offset > 0.0) x_tilde += c.offset * c.offset_weight;
            if (c.offset > 0.0) {
                tail_samples.push_back(c.offset);
                tail_weights.push_back(c.offset_weight);
            }
        }
        for (std::size_t i = 0; i < y_grid.size(); ++i) {
            double above = 0.0, below = 0.0;
            for (const auto& c : brood.view()) {
                if (c.offset >= y_grid[i]) above += c.offset_weight;
                if (c.offset <= -y_grid[i]) below += c.offset_weight;
            }
            right_tail[i].push(above);
            left_tail[i].push(below);
        }
        const double total = brood.total_count();
        for (std::size_t i = 0; i < caps.size(); ++i) capped_size[i].push(std::min(total, caps[i]));

        mass.push(x);
        mean_pos.push(weighted_pos);
        const double xm = x * std::pow(log_plus(x), alpha);
        const double xtm = x_tilde * std::pow(log_plus(x_tilde), alpha - 1.0);
        x_moment.push(xm);
        xt_moment.push(xtm);
        if (r < reps / 2) {
            x_moment_half.push(xm);
            xt_moment_half.push(xtm);
        }
    }

    ConditionReport report;
    report.law = law_name(law);
    report.rows.push_back(mean_row("mean_weight", mass, seed, "target 1"));
    report.rows.push_back(mean_row("mean_weighted_position", mean_pos, seed, "target 0"));

    // Right tail: regress log E[sum 1{V>=y} e^{-V}] on log y.
    std::vector<Point> pts;
    for (std::size_t i = 0; i < y_grid.size(); ++i) {
        if (right_tail[i].mean() > 0.0 && y_grid[i] > 0.0) pts.push_back({y_grid[i], right_tail[i].mean()});
    }
    if (is_toy) {
        ConditionRow row{"right_tail_slope", 0.0, 0.0, 0.0, 0.0, reps, seed,
                         "exact zero beyond u: violates the stable right-tail condition by design"};
        row.estimate = right_tail.back().mean();
        report.rows.push_back(row);
    } else if (pts.size() >= 3) {
        const SlopeFit fit = fit_loglog_slope(pts);
        const double z = normal_quantile(0.975);
        report.rows.push_back({"right_tail_slope", fit.slope, fit.slope - z * fit.stderr_,
                               fit.slope + z * fit.stderr_, fit.stderr_, reps, seed, "target -alpha"});
    } else {
        report.rows.push_back({"right_tail_slope", std::nan(""), 0.0, 0.0, 0.0, reps, seed, "too few exceedances"});
    }

    if (!is_toy) {
        const auto& brood = std::get<BroodLaw>(law);
        const double threshold = std::max(brood.base.x_m, y_grid.front());
        const TailIndexFit hill = fit_tail_index_weighted(tail_samples, tail_weights, threshold);
        const double z = normal_quantile(0.975);
        report.rows.push_back({"right_tail_hill", hill.alpha_hat, hill.alpha_hat - z * hill.stderr_,
                               hill.alpha_hat + z * hill.stderr_, hill.stderr_, reps, seed,
                               "weighted Hill estimate, target alpha"});
    }

    {
        const RunningStats& lt = left_tail.back();
        ConditionRow row = mean_row("left_tail", lt, seed, "E[sum 1{V<=-y} e^{-V}] at the largest grid y");
        if (lt.mean() == 0.0) row.note += "; exact zero";
        report.rows.push_back(row);
    }
    report.rows.push_back(mean_row("moment_x", x_moment, seed, "E[X (log+ X)^alpha]"));
    report.rows.push_back(mean_row("moment_x_tilde", xt_moment, seed, "E[X~ (log+ X~)^(alpha-1)]"));
    report.rows.push_back(mean_row("moment_x_half", x_moment_half, seed, "first half of the replicates"));
    report.rows.push_back(mean_row("moment_x_tilde_half", xt_moment_half, seed, "first half of the replicates"));
    const std::array<const char*, 3> cap_names{"mean_size_cap_1e2", "mean_size_cap_1e4", "mean_size_cap_1e6"};
    for (std::size_t i = 0; i < caps.size(); ++i) {
        report.rows.push_back(mean_row(cap_names[i], capped_size[i], seed, "E[min(N, cap)]"));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Many-to-one

std::string_view to_string(PathFunctional id) noexcept
{
    switch (id) {
    case PathFunctional::unit_weight: return "unit_weight";
    case PathFunctional::barrier_weight: return "barrier_weight";
    case PathFunctional::leaf_nonpositive: return "leaf_nonpositive";
    case PathFunctional::count_below: return "count_below";
    }
    return "unknown";
}

PathFunctional path_functional_from_string(std::string_view name)
{
    for (auto id : {PathFunctional::unit_weight, PathFunctional::barrier_weight, PathFunctional::leaf_nonpositive,
                    PathFunctional::count_below}) {
        if (to_string(id) == name) return id;
    }
    throw ConfigError("functional not in catalog: " + std::string(name));
}

std::vector<PathFunctionalSpec> path_functional_catalog()
{
    return {{PathFunctional::unit_weight, 0.0},
            {PathFunctional::barrier_weight, 1.0},
            {PathFunctional::leaf_nonpositive, 0.0},
            {PathFunctional::count_below, 1.0}};
}

double evaluate_path_functional(const PathFunctionalSpec& g, double path_min, double end) noexcept
{
    switch (g.id) {
    case PathFunctional::unit_weight: return std::exp(-end);
    case PathFunctional::barrier_weight: return path_min >= -g.level ? std::exp(-end) : 0.0;
    case PathFunctional::leaf_nonpositive: return end <= 0.0 ? 1.0 : 0.0;
    case PathFunctional::count_below: return end <= g.level ? 1.0 : 0.0;
    }
    return 0.0;
}

double walk_side_integrand(const PathFunctionalSpec& g, double path_min, double end) noexcept
{
    switch (g.id) {
    case PathFunctional::unit_weight: return 1.0;
    case PathFunctional::barrier_weight: return path_min >= -g.level ? 1.0 : 0.0;
    case PathFunctional::leaf_nonpositive: return end <= 0.0 ? std::exp(end) : 0.0;
    case PathFunctional::count_below: return end <= g.level ? std::exp(end) : 0.0;
    }
    return 0.0;
}

namespace {

// Weighted depth-first sum of g over generation-n descendants.
double tree_sum(const ReproductionLaw& law, const PathFunctionalSpec& g, std::size_t depth_left, double position,
                double path_min, double log_weight, std::uint64_t key, std::size_t representatives)
{
    // weight * g = exp(log_weight - s_n) * (e^{s_n} g); the second factor is bounded.
    if (depth_left == 0) return std::exp(log_weight - position) * walk_side_integrand(g, path_min, position);
    Stream s(key);
    const Brood brood = sample_brood(law, position, s);
    double total = 0.0;
    std::uint64_t ordinal = 0;
    for (const auto& c : brood.view()) {
        const double reps = std::min(c.count, static_cast<double>(representatives));
        const auto k = static_cast<std::uint64_t>(reps);
        const double child_lw = log_weight + std::log(c.count / reps);
        const double child_min = std::min(path_min, c.position);
        for (std::uint64_t i = 0; i < k; ++i, ++ordinal) {
            total += tree_sum(law, g, depth_left - 1, c.position, child_min, child_lw, combine_keys(key, ordinal),
                              representatives);
        }
    }
    return total;
}

} // namespace

ManyToOneResult many_to_one_check(const ReproductionLaw& law, const PathFunctionalSpec& g, std::size_t n,
                                  std::size_t reps, const Stream& stream, std::size_t representatives)
{
    if (n == 0 || n > 10) {
        throw DomainError("many_to_one_check: n must lie in [1, 10]");
    }
    if (reps < 2) {
        throw ConfigError("many_to_one_check: reps must be >= 2");
    }
    if (representatives == 0) {
        throw ConfigError("many_to_one_check: representatives must be >= 1");
    }
    const Stream tree_stream = stream.split(0);
    const Stream walk_stream = stream.split(1);

    RunningStats tree, walk;
    for (std::size_t r = 0; r < reps; ++r) {
        tree.push(tree_sum(law, g, n, 0.0, 0.0, 0.0, tree_stream.split(r).key(), representatives));

        Stream s = walk_stream.split(r);
        double pos = 0.0, lo = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            pos += sample_associated_step(law, s);
            lo = std::min(lo, pos);
        }
        walk.push(walk_side_integrand(g, lo, pos));
    }
    ManyToOneResult result;
    result.tree_side = tree.estimate();
    result.walk_side = walk.estimate();
    result.consistent = result.tree_side.ci.overlaps(result.walk_side.ci);
    return result;
}

double dyadic_tree_expectation(const DyadicToyLaw& law, const PathFunctionalSpec& g, std::size_t n)
{
    if (n == 0 || n > 3) {
        throw DomainError("dyadic_tree_expectation: n must lie in [1, 3]");
    }
    // Nodes in heap order: node i has children 2i+1, 2i+2; root is 0.
    const std::size_t nodes = (std::size_t{1} << (n + 1)) - 1;
    const std::size_t signs = nodes - 1; // every non-root node carries a sign
    const std::size_t first_leaf = (std::size_t{1} << n) - 1;
    double expectation = 0.0;
    std::vector<double> pos(nodes), lo(nodes);
    for (std::uint64_t config = 0; config < (std::uint64_t{1} << signs); ++config) {
        double prob = 1.0;
        pos[0] = 0.0;
        lo[0] = 0.0;
        for (std::size_t node = 1; node < nodes; ++node) {
            const bool down = (config >> (node - 1)) & 1U;
            prob *= down ? law.theta : 1.0 - law.theta;
            const std::size_t parent = (node - 1) / 2;
            pos[node] = pos[parent] + (down ? -law.u : law.u);
            lo[node] = std::min(lo[parent], pos[node]);
        }
        double sum = 0.0;
        for (std::size_t leaf = first_leaf; leaf < nodes; ++leaf) {
            sum += evaluate_path_functional(g, lo[leaf], pos[leaf]);
        }
        expectation += prob * sum;
    }
    return expectation;
}

double dyadic_walk_expectation(const DyadicToyLaw& law, const PathFunctionalSpec& g, std::size_t n)
{
    if (n > 30) {
        throw DomainError("dyadic_walk_expectation: n must be <= 30");
    }
    double expectation = 0.0;
    const double prob = std::ldexp(1.0, -static_cast<int>(n));
    for (std::uint64_t signs = 0; signs < (std::uint64_t{1} << n); ++signs) {
        double s = 0.0, lo = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += ((signs >> i) & 1U) ? -law.u : law.u;
            lo = std::min(lo, s);
        }
        expectation += prob * walk_side_integrand(g, lo, s);
    }
    return expectation;
}

} // namespace sbrw
