#include "sbrw/spine_sim.hpp"

#include "sbrw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sbrw {

namespace {

constexpr double kOverflowOffset = 700.0;

TiltedBrood tilted_brood_impl(const BroodLaw& law, Stream& stream)
{
    const double y = sample_step(law.base, stream);
    const double u_size = stream.uniform();
    const double u_pick = stream.uniform();
    TiltedBrood t;
    double count = 1.0;
    double weight = std::exp(-y);
    if (y >= kOverflowOffset) {
        count = std::exp(std::min(y, 709.0));
        weight = 1.0;
    } else if (y > 0.0) {
        const double lambda = std::exp(y);
        const double m = std::floor(lambda);
        const double frac = lambda - m;
        count = u_size < (m + 1.0) * frac / lambda ? m + 1.0 : m;
        weight = count * std::exp(-y);
    }
    t.brood.clusters[0] = {y, y, count, weight};
    t.brood.size = 1;
    t.cluster = 0;
    t.ordinal = std::min(std::floor(u_pick * count), count - 1.0);
    return t;
}

TiltedBrood tilted_brood_impl(const DyadicToyLaw& law, Stream& stream)
{
    const double th = law.theta;
    const double up = std::exp(law.u);
    const double down = std::exp(-law.u);
    // Outcomes (x_1, x_2) in order (-,-), (-,+), (+,-), (+,+) tilted by e^{-x_1} + e^{-x_2}.
    const double p_mm = th * th * 2.0 * up;
    const double p_mp = th * (1.0 - th) * (up + down);
    const double p_pm = p_mp;
    const double u = stream.uniform();
    bool first_down = false;
    bool second_down = false;
    if (u < p_mm) {
        first_down = second_down = true;
    } else if (u < p_mm + p_mp) {
        first_down = true;
    } else if (u < p_mm + p_mp + p_pm) {
        second_down = true;
    }
    const double x1 = first_down ? -law.u : law.u;
    const double x2 = second_down ? -law.u : law.u;
    TiltedBrood t;
    t.brood.clusters[0] = {x1, x1, 1.0, std::exp(-x1)};
    t.brood.clusters[1] = {x2, x2, 1.0, std::exp(-x2)};
    t.brood.size = 2;
    const double pick_first = std::exp(-x1) / (std::exp(-x1) + std::exp(-x2));
    t.cluster = stream.uniform() < pick_first ? 0 : 1;
    t.ordinal = 0.0;
    return t;
}

} // namespace

TiltedBrood tilted_brood(const ReproductionLaw& law, Stream& stream)
{
    return std::visit([&](const auto& l) { return tilted_brood_impl(l, stream); }, law);
}

std::vector<Cluster> SpineRealization::brothers(std::size_t i) const
{
    const Brood& b = broods.at(i);
    std::vector<Cluster> out;
    for (std::size_t c = 0; c < b.size; ++c) {
        Cluster cl = b.clusters[c];
        if (c == chosen_cluster.at(i)) {
            cl.count -= 1.0;
            if (cl.count <= 0.0) continue;
            cl.offset_weight = cl.count * std::exp(-cl.offset);
        }
        out.push_back(cl);
    }
    return out;
}

void to_json(nlohmann::json& j, const SpineRealization& r)
{
    nlohmann::json sizes = nlohmann::json::array();
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& b : r.broods) {
        sizes.push_back(b.total_count());
        nlohmann::json cs = nlohmann::json::array();
        for (const auto& c : b.view()) cs.push_back({{"position", c.position}, {"count", c.count}});
        clusters.push_back(cs);
    }
    j = nlohmann::json{{"spine_positions", r.spine_positions},
                       {"brood_sizes", sizes},
                       {"broods", clusters},
                       {"chosen_cluster", r.chosen_cluster},
                       {"chosen_ordinal", r.chosen_ordinal}};
}

SpineRealization sample_spine(const ReproductionLaw& law, std::size_t n, Stream& stream)
{
    if (n == 0) throw DomainError("sample_spine: n must be >= 1");
    SpineRealization r;
    r.spine_positions.reserve(n + 1);
    r.spine_positions.push_back(0.0);
    double pos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        TiltedBrood t = tilted_brood(law, stream);
        for (std::size_t c = 0; c < t.brood.size; ++c) t.brood.clusters[c].position += pos;
        pos += t.brood.clusters[t.cluster].offset;
        r.spine_positions.push_back(pos);
        r.broods.push_back(t.brood);
        r.chosen_cluster.push_back(t.cluster);
        r.chosen_ordinal.push_back(t.ordinal);
    }
    return r;
}

SpineRealization sample_spine(const ReproductionLaw& law, std::size_t n, std::uint64_t seed)
{
    Stream stream(seed);
    return sample_spine(law, n, stream);
}

Generation grow_spine_tree(const SpineRealization& r, const ReproductionLaw& law, const TruncationPolicy& policy,
                           std::size_t depth_budget, std::uint64_t seed)
{
    validate(policy);
    const std::size_t n = r.length();
    Generation out;
    out.gen_index = n;
    double spine_min = 0.0;
    for (double v : r.spine_positions) spine_min = std::min(spine_min, v);
    out.positions.push_back(r.spine_positions.back());
    out.parent_index.push_back(0);
    out.path_min.push_back(spine_min);
    out.log_weights.push_back(0.0);
    out.keys.push_back(combine_keys(seed, 0));

    double running_min = 0.0;
    const auto per_cluster = policy.representatives > 0 ? policy.representatives : policy.max_population;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t remaining = n - i - 1;
        for (const auto& c : r.brothers(i)) {
            if (remaining > depth_budget) {
                out.truncated_count += c.count;
                out.truncated_weight += c.count * std::exp(-c.position);
                continue;
            }
            const auto keep = static_cast<std::size_t>(std::min(c.count, static_cast<double>(per_cluster)));
            Generation g;
            g.gen_index = i + 1;
            const double lw = policy.representatives > 0 ? std::log(c.count / static_cast<double>(keep)) : 0.0;
            if (policy.representatives == 0 && static_cast<double>(keep) < c.count) {
                out.truncated_count += c.count - static_cast<double>(keep);
                out.truncated_weight += (c.count - static_cast<double>(keep)) * std::exp(-c.position);
            }
            for (std::size_t k = 0; k < keep; ++k) {
                g.positions.push_back(c.position);
                g.parent_index.push_back(0);
                g.path_min.push_back(std::min(running_min, c.position));
                g.log_weights.push_back(lw);
                g.keys.push_back(combine_keys(combine_keys(seed, i + 1), out.keys.size() + k));
            }
            for (std::size_t s = 0; s < remaining && !g.extinct(); ++s) {
                g = step_generation(g, law, policy);
                out.truncated_count += g.truncated_count;
                out.truncated_weight += g.truncated_weight;
            }
            for (std::size_t k = 0; k < g.size(); ++k) {
                out.positions.push_back(g.positions[k]);
                out.parent_index.push_back(0);
                out.path_min.push_back(g.path_min[k]);
                out.log_weights.push_back(g.log_weights[k]);
                out.keys.push_back(g.keys[k]);
            }
        }
        running_min = std::min(running_min, r.spine_positions[i + 1]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Barrier events

std::size_t BarrierSpec::early_end() const noexcept
{
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n) / 4.0));
}

std::size_t BarrierSpec::k_max() const noexcept
{
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n)));
}

double BarrierSpec::level() const noexcept
{
    return std::log(static_cast<double>(n)) / alpha - lambda;
}

double BarrierSpec::a(std::size_t i) const noexcept
{
    return i > early_end() ? level() : 0.0;
}

double BarrierSpec::b(std::size_t i, std::size_t k) const noexcept
{
    if (i <= early_end()) return std::pow(static_cast<double>(i), gamma / 2.0);
    if (i > k) return 0.0;
    return std::pow(static_cast<double>(k - i), gamma / 2.0);
}

bool BarrierSpec::admissible() const noexcept
{
    return lambda >= 0.0 && lambda <= std::log(static_cast<double>(n)) / (2.0 * alpha);
}

BarrierSpec make_barrier_spec(std::size_t n, double lambda, double alpha, double K, double c_prime)
{
    if (n == 0) throw DomainError("barrier spec: n must be >= 1");
    if (!(lambda >= 0.0)) throw DomainError("barrier spec: lambda must be >= 0");
    if (!(K >= 0.0)) throw DomainError("barrier spec: K must be >= 0");
    if (!(c_prime > 0.0)) throw DomainError("barrier spec: c_prime must be > 0");
    if (!(alpha > 1.0 && alpha < 2.0)) throw DomainError("barrier spec: alpha must lie in (1,2)");
    BarrierSpec s;
    s.n = n;
    s.lambda = lambda;
    s.K = K;
    s.c_prime = c_prime;
    s.alpha = alpha;
    s.gamma = 1.0 / (alpha * (alpha + 1.0));
    return s;
}

double log_brother_sum(const std::vector<Cluster>& brothers, double a)
{
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double> logs;
    logs.reserve(brothers.size());
    for (const auto& c : brothers) {
        if (c.count <= 0.0) continue;
        const double excess = c.position - a;
        const double l = std::log(c.count) + std::log1p(std::max(excess, 0.0)) - excess;
        logs.push_back(l);
        hi = std::max(hi, l);
    }
    if (logs.empty()) return -std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (double l : logs) s += std::exp(l - hi);
    return hi + std::log(s);
}

EventAB event_AB(const SpineRealization& r, const BarrierSpec& spec, std::size_t k)
{
    if (k <= spec.n || k > spec.k_max()) {
        throw DomainError("event_AB: k must satisfy n < k <= floor(alpha n)");
    }
    if (k > r.length()) throw DomainError("event_AB: realization shorter than k");
    EventAB e;
    e.barrier_ok = true;
    for (std::size_t i = 0; i <= k; ++i) {
        if (r.spine_positions[i] < spec.a(i)) {
            e.barrier_ok = false;
            break;
        }
    }
    e.window_ok = r.spine_positions[k] <= spec.level() + spec.K;
    e.in_A = e.barrier_ok && e.window_ok;
    e.in_B = true;
    const double log_c = std::log(spec.c_prime);
    for (std::size_t i = 0; i < k; ++i) {
        if (log_brother_sum(r.brothers(i), spec.a(i)) > log_c - spec.b(i, k)) {
            e.in_B = false;
            break;
        }
    }
    return e;
}

std::string_view to_string(BarrierMode mode) noexcept
{
    return mode == BarrierMode::forward ? "forward" : "first_moment";
}

BarrierMode barrier_mode_from_string(std::string_view name)
{
    if (name == "forward") return BarrierMode::forward;
    if (name == "first_moment") return BarrierMode::first_moment;
    throw ConfigError("unknown barrier mode: " + std::string(name));
}

namespace {

double first_moment_replicate(const ReproductionLaw& law, const BarrierSpec& spec, Stream& s)
{
    const std::size_t k_max = spec.k_max();
    const double top = spec.level() + spec.K;
    double pos = 0.0;
    double acc = 0.0;
    for (std::size_t i = 1; i <= k_max; ++i) {
        pos += sample_associated_step(law, s);
        if (pos < spec.a(i)) break;
        if (i > spec.n && pos <= top) acc += std::exp(pos);
    }
    return acc;
}

struct BarrierParticle {
    double position;
    std::size_t k_limit; // largest k still compatible with the B constraints
    std::uint64_t key;
};

// Keeps the `cap` lowest particles (ties broken by key).
void keep_lowest(std::vector<BarrierParticle>& particles, std::size_t cap, bool& capped)
{
    if (particles.size() <= cap) return;
    capped = true;
    std::nth_element(particles.begin(), particles.begin() + static_cast<std::ptrdiff_t>(cap), particles.end(),
                     [](const BarrierParticle& x, const BarrierParticle& y) {
                         return x.position < y.position || (x.position == y.position && x.key < y.key);
                     });
    particles.resize(cap);
}

// One tree; returns (event occurred, cap was hit).
std::pair<bool, bool> forward_replicate(const ReproductionLaw& law, const BarrierSpec& spec, std::uint64_t root_key,
                                        std::size_t max_population)
{
    const std::size_t k_max = spec.k_max();
    const double top = spec.level() + spec.K;
    const double drop = max_left_step(law);
    const double log_c = std::log(spec.c_prime);
    const double two_over_gamma = 2.0 / spec.gamma;
    bool capped = false;

    std::vector<BarrierParticle> current{{0.0, k_max, root_key}};
    std::vector<BarrierParticle> next;
    std::vector<Cluster> brothers;
    for (std::size_t j = 0; j < k_max && !current.empty(); ++j) {
        next.clear();
        const double a_j = spec.a(j);
        const double a_child = spec.a(j + 1);
        for (const auto& p : current) {
            Stream s(p.key);
            const Brood brood = sample_brood(law, p.position, s);
            std::uint64_t ordinal = 0;
            for (std::size_t c = 0; c < brood.size; ++c) {
                const Cluster& cl = brood.clusters[c];
                const std::uint64_t first = ordinal;
                ordinal += static_cast<std::uint64_t>(std::min(cl.count, 4.0e18));
                if (cl.position < a_child) continue;
                brothers.clear();
                for (std::size_t o = 0; o < brood.size; ++o) {
                    Cluster b = brood.clusters[o];
                    if (o == c) b.count -= 1.0;
                    brothers.push_back(b);
                }
                const double room = log_c - log_brother_sum(brothers, a_j);
                std::size_t k_limit = p.k_limit;
                if (j <= spec.early_end()) {
                    if (room < spec.b(j, k_max)) continue;
                } else {
                    if (room < 0.0) continue;
                    const double reach = static_cast<double>(j) + std::pow(room, two_over_gamma);
                    if (reach < static_cast<double>(k_limit)) k_limit = static_cast<std::size_t>(std::floor(reach));
                }
                const std::size_t child_gen = j + 1;
                if (k_limit < std::max(child_gen, spec.n + 1)) continue;
                if (cl.position - drop * static_cast<double>(k_limit - child_gen) > top) continue;
                if (child_gen > spec.n && cl.position <= top) return {true, capped};
                const auto copies = static_cast<std::size_t>(std::min(cl.count, static_cast<double>(max_population)));
                for (std::size_t m = 0; m < copies; ++m) {
                    next.push_back({cl.position, k_limit, combine_keys(p.key, first + m)});
                }
            }
            // Bound memory while the generation is being built.
            if (next.size() > 2 * max_population) keep_lowest(next, max_population, capped);
        }
        keep_lowest(next, max_population, capped);
        std::swap(current, next);
    }
    return {false, capped};
}

} // namespace

BarrierEstimate estimate_barrier_event(const ReproductionLaw& law, const BarrierSpec& spec, std::size_t reps,
                                       BarrierMode mode, const Stream& stream, const BarrierRunLimits& limits)
{
    if (reps == 0) throw ConfigError("estimate_barrier_event: reps must be >= 1");
    BarrierEstimate out;
    out.mode = mode;
    out.admissible = spec.admissible();
    if (mode == BarrierMode::first_moment) {
        RunningStats stats;
        for (std::size_t r = 0; r < reps; ++r) {
            Stream s = stream.split(r);
            stats.push(first_moment_replicate(law, spec, s));
        }
        out.estimate = stats.estimate();
        return out;
    }
    if (spec.n > limits.max_n_forward) {
        throw BudgetExceeded("estimate_barrier_event: forward mode refused for n = " + std::to_string(spec.n) +
                                 " above the limit " + std::to_string(limits.max_n_forward),
                             static_cast<double>(spec.n), static_cast<double>(limits.max_n_forward));
    }
    std::uint64_t hits = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        const auto [hit, capped] = forward_replicate(law, spec, stream.split(r).key(), limits.max_population);
        hits += hit ? 1 : 0;
        out.capped_replicates += capped ? 1 : 0;
    }
    out.estimate = proportion_estimate(hits, reps);
    return out;
}

// ---------------------------------------------------------------------------
// Size-biased functionals

std::string_view to_string(SpineFunctional id) noexcept
{
    switch (id) {
    case SpineFunctional::one: return "one";
    case SpineFunctional::spine_min_above: return "spine_min_above";
    case SpineFunctional::terminal_exp_neg: return "terminal_exp_neg";
    }
    return "unknown";
}

SpineFunctional spine_functional_from_string(std::string_view name)
{
    for (auto id : {SpineFunctional::one, SpineFunctional::spine_min_above, SpineFunctional::terminal_exp_neg}) {
        if (to_string(id) == name) return id;
    }
    throw ConfigError("functional not in catalog: " + std::string(name));
}

std::vector<SpineFunctionalSpec> spine_functional_catalog()
{
    return {{SpineFunctional::one, 0.0}, {SpineFunctional::spine_min_above, 1.0}, {SpineFunctional::terminal_exp_neg, 0.0}};
}

double evaluate_spine_functional(const SpineFunctionalSpec& phi, double path_min, double end) noexcept
{
    switch (phi.id) {
    case SpineFunctional::one: return 1.0;
    case SpineFunctional::spine_min_above: return path_min >= -phi.level ? 1.0 : 0.0;
    case SpineFunctional::terminal_exp_neg: return std::exp(-std::max(end, 0.0));
    }
    return 0.0;
}

Estimate size_biased_functional(const ReproductionLaw& law, std::size_t n, const SpineFunctionalSpec& phi,
                                std::size_t reps, const Stream& stream)
{
    if (reps == 0) throw ConfigError("size_biased_functional: reps must be >= 1");
    RunningStats stats;
    for (std::size_t r = 0; r < reps; ++r) {
        Stream s = stream.split(r);
        const SpineRealization spine = sample_spine(law, n, s);
        const double lo = *std::min_element(spine.spine_positions.begin(), spine.spine_positions.end());
        stats.push(evaluate_spine_functional(phi, lo, spine.spine_positions.back()));
    }
    return stats.estimate();
}

double forward_weighted_functional(const Generation& gen, const SpineFunctionalSpec& phi) noexcept
{
    double total = 0.0;
    for (std::size_t i = 0; i < gen.size(); ++i) {
        total += std::exp(gen.log_weights[i] - gen.positions[i]) *
                 evaluate_spine_functional(phi, gen.path_min[i], gen.positions[i]);
    }
    return total;
}

} // namespace sbrw
