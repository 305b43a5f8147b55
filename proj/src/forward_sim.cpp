#include "sbrw/forward_sim.hpp"

#include "sbrw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

namespace sbrw {

namespace {

constexpr double kMaxCount = std::numeric_limits<double>::max();

double saturating_add(double a, double b) noexcept
{
    const double s = a + b;
    return std::isfinite(s) ? s : kMaxCount;
}

struct Candidate {
    double position;
    double count;  // children in the cluster
    double log_weight; // log multiplicity of each represented child
    std::size_t keep; // represented children
    std::uint32_t parent;
    std::uint32_t first_ordinal; // brood ordinal of the cluster's first child
};

} // namespace

std::string_view to_string(CeilingKind kind) noexcept
{
    switch (kind) {
    case CeilingKind::logarithmic: return "logarithmic";
    case CeilingKind::constant: return "constant";
    case CeilingKind::none: return "none";
    }
    return "unknown";
}

CeilingKind ceiling_kind_from_string(std::string_view name)
{
    for (auto k : {CeilingKind::logarithmic, CeilingKind::constant, CeilingKind::none}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown ceiling kind: " + std::string(name));
}

double TruncationPolicy::ceiling(std::size_t n) const noexcept
{
    switch (ceiling_kind) {
    case CeilingKind::logarithmic: return ceiling_scale * (1.0 + std::log1p(static_cast<double>(n)));
    case CeilingKind::constant: return ceiling_scale;
    case CeilingKind::none: return std::numeric_limits<double>::infinity();
    }
    return std::numeric_limits<double>::infinity();
}

void validate(const TruncationPolicy& policy)
{
    if (policy.max_population == 0) throw DomainError("truncation policy: max_population must be >= 1");
    if (policy.max_population > std::numeric_limits<std::uint32_t>::max()) {
        throw DomainError("truncation policy: max_population must fit in 32 bits");
    }
    if (policy.ceiling_kind == CeilingKind::logarithmic && !(policy.ceiling_scale > 0.0)) {
        throw DomainError("truncation policy: logarithmic ceiling needs a positive scale");
    }
    if (policy.ceiling_kind == CeilingKind::constant && !std::isfinite(policy.ceiling_scale)) {
        throw DomainError("truncation policy: constant ceiling must be finite");
    }
}

Generation root_generation(std::uint64_t key)
{
    Generation g;
    g.positions = {0.0};
    g.parent_index = {0};
    g.path_min = {0.0};
    g.log_weights = {0.0};
    g.keys = {key};
    return g;
}

Generation step_generation(const Generation& gen, const ReproductionLaw& law, const TruncationPolicy& policy)
{
    validate(policy);
    if (gen.extinct()) throw DomainError("step_generation: population is empty");
    const double ceiling = policy.ceiling(gen.gen_index + 1);
    const double current_min = *std::min_element(gen.positions.begin(), gen.positions.end());
    if (!(ceiling > current_min)) {
        throw DomainError("step_generation: ceiling C(n+1) must exceed the current minimum");
    }

    Generation next;
    next.gen_index = gen.gen_index + 1;
    std::vector<Candidate> candidates;
    candidates.reserve(gen.size() * 2);
    double kept_total = 0.0;

    for (std::size_t i = 0; i < gen.size(); ++i) {
        Stream stream(gen.keys[i]);
        const Brood brood = sample_brood(law, gen.positions[i], stream);
        const double lw = gen.log_weights[i];
        const double w = std::exp(lw);
        double ordinal = 0.0;
        for (const auto& c : brood.view()) {
            const auto first = static_cast<std::uint32_t>(std::min(ordinal, 4.0e9));
            ordinal += c.count;
            if (c.position > ceiling) {
                next.truncated_count = saturating_add(next.truncated_count, w * c.count);
                next.truncated_weight += std::exp(lw + std::log(c.offset_weight) - gen.positions[i]);
                continue;
            }
            std::size_t keep = 0;
            double child_lw = lw;
            if (policy.representatives > 0) {
                keep = static_cast<std::size_t>(std::min(c.count, static_cast<double>(policy.representatives)));
                child_lw = lw + std::log(c.count / static_cast<double>(keep));
            } else {
                keep = static_cast<std::size_t>(std::min(c.count, static_cast<double>(policy.max_population)));
                if (static_cast<double>(keep) < c.count) {
                    const double dropped = c.count - static_cast<double>(keep);
                    next.truncated_count = saturating_add(next.truncated_count, w * dropped);
                    next.truncated_weight += std::exp(lw + std::log(dropped) - c.position);
                }
            }
            candidates.push_back({c.position, c.count, child_lw, keep, static_cast<std::uint32_t>(i), first});
            kept_total += static_cast<double>(keep);
        }
    }

    if (kept_total > static_cast<double>(policy.max_population)) {
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            return std::tie(a.position, a.parent, a.first_ordinal) < std::tie(b.position, b.parent, b.first_ordinal);
        });
        std::size_t room = policy.max_population;
        for (auto& c : candidates) {
            const std::size_t take = std::min(room, c.keep);
            const double dropped = static_cast<double>(c.keep - take);
            if (dropped > 0.0) {
                next.truncated_count = saturating_add(next.truncated_count, dropped * std::exp(c.log_weight));
                next.truncated_weight += std::exp(std::log(dropped) + c.log_weight - c.position);
            }
            c.keep = take;
            room -= take;
        }
    }

    std::size_t total = 0;
    for (const auto& c : candidates) total += c.keep;
    next.positions.reserve(total);
    next.parent_index.reserve(total);
    next.path_min.reserve(total);
    next.log_weights.reserve(total);
    next.keys.reserve(total);
    for (const auto& c : candidates) {
        const double pmin = std::min(gen.path_min[c.parent], c.position);
        for (std::size_t k = 0; k < c.keep; ++k) {
            next.positions.push_back(c.position);
            next.parent_index.push_back(c.parent);
            next.path_min.push_back(pmin);
            next.log_weights.push_back(c.log_weight);
            next.keys.push_back(combine_keys(gen.keys[c.parent], std::uint64_t{c.first_ordinal} + k));
        }
    }
    return next;
}

GenStats summarize(const Generation& gen, double beta)
{
    GenStats s;
    s.n = gen.gen_index;
    s.M_n = std::numeric_limits<double>::infinity();
    s.truncated_count = gen.truncated_count;
    s.truncated_weight = gen.truncated_weight;
    for (std::size_t i = 0; i < gen.size(); ++i) {
        const double v = gen.positions[i];
        const double lw = gen.log_weights[i];
        const double e = std::exp(lw - v);
        s.M_n = std::min(s.M_n, v);
        s.W_n += e;
        if (gen.path_min[i] >= -beta) s.W_n_beta += e;
        s.D_n += v * e;
        s.population = saturating_add(s.population, std::exp(lw));
    }
    return s;
}

std::vector<GenStats> run_forward(const ReproductionLaw& law, std::size_t n_max, const TruncationPolicy& policy,
                                  double beta, std::uint64_t seed)
{
    if (n_max == 0) throw ConfigError("run_forward: n_max must be >= 1");
    validate(policy);
    std::vector<GenStats> out;
    out.reserve(n_max);
    Generation gen = root_generation(mix64(seed));
    for (std::size_t n = 1; n <= n_max; ++n) {
        gen = step_generation(gen, law, policy);
        out.push_back(summarize(gen, beta));
        if (gen.extinct()) break;
    }
    return out;
}

std::uint64_t replica_seed(std::uint64_t master_seed, std::uint64_t replica) noexcept
{
    return replica_stream(master_seed, replica).key();
}

SurvivalResult survival_runs(const ReproductionLaw& law, std::size_t n_max, const TruncationPolicy& policy,
                             double beta, std::uint64_t master_seed, std::size_t want)
{
    if (want == 0) throw ConfigError("survival_runs: want must be >= 1");
    constexpr std::uint64_t kProbe = 10000;
    constexpr double kMinRate = 1e-3;
    SurvivalResult result;
    while (result.runs.size() < want) {
        const std::uint64_t replica = result.attempts++;
        const std::uint64_t seed = replica_seed(master_seed, replica);
        ForwardRun run{replica, seed, run_forward(law, n_max, policy, beta, seed)};
        if (run.survived(n_max)) result.runs.push_back(std::move(run));
        if (result.attempts >= kProbe &&
            static_cast<double>(result.runs.size()) < kMinRate * static_cast<double>(result.attempts)) {
            throw InsufficientData("survival_runs: " + std::to_string(result.runs.size()) + " survivors in " +
                                   std::to_string(result.attempts) + " attempts, below the 1e-3 floor");
        }
    }
    result.survival_rate = proportion_estimate(result.runs.size(), result.attempts);
    return result;
}

} // namespace sbrw
