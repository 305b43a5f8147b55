#include "presets.hpp"

#include "sbrw/errors.hpp"
#include "sbrw/law_recursion.hpp"
#include "sbrw/spine_sim.hpp"
#include "sbrw/stable_walk.hpp"
#include "sbrw/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace sbrw::detail {

namespace {

/// What one job contributes. Jobs are merged in index order.
struct Piece {
    std::vector<DataPoint> points;
    std::vector<RunningStats> stats;
    std::vector<std::uint64_t> counts;
    nlohmann::json extra;
};

struct Job {
    std::string label;
    std::function<Piece()> run;
};

std::vector<std::optional<Piece>> run_jobs(Runner& runner, const std::vector<Job>& jobs)
{
    return runner.map<Piece>(
        jobs.size(), [&](std::size_t i) { return jobs[i].run(); }, [&](std::size_t i) { return jobs[i].label; });
}

DataPoint make_point(std::string series, double x, const Estimate& e)
{
    return {std::move(series), x, e.value, e.ci.low, e.ci.high, e.samples};
}

/// Deterministic value: the interval collapses to the point.
DataPoint exact_point(std::string series, double x, double v)
{
    return {std::move(series), x, v, v, v, 0};
}

std::string run_row(const GenStats& s, std::uint64_t replica, std::uint64_t seed)
{
    return fmt::format("{},{},{},{},{},{},{},{},{}", s.n, format_double(s.M_n), format_double(s.W_n),
                       format_double(s.W_n_beta), format_double(s.D_n), format_double(s.population),
                       format_double(s.truncated_count), replica, seed);
}

const BroodLaw& require_brood(const ReproductionLaw& law, const std::string& what)
{
    const auto* brood = std::get_if<BroodLaw>(&law);
    if (brood == nullptr) throw ConfigError(what + " needs the brood law family");
    return *brood;
}

/// Chunks of replicas for parallel jobs. The chunking depends on the replica
/// count only, never on the worker count.
std::vector<std::pair<std::size_t, std::size_t>> chunks(std::size_t reps, std::size_t size)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t lo = 0; lo < reps; lo += size) out.emplace_back(lo, std::min(reps, lo + size));
    return out;
}

/// Median with a distribution-free 95% interval from order statistics.
Estimate median_estimate(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto m = static_cast<double>(v.size());
    const double z = normal_quantile(0.975);
    const double half = z * std::sqrt(m) / 2.0;
    const auto lo = static_cast<std::size_t>(std::clamp(std::floor(m / 2.0 - half), 0.0, m - 1.0));
    const auto hi = static_cast<std::size_t>(std::clamp(std::ceil(m / 2.0 + half) - 1.0, 0.0, m - 1.0));
    Estimate e;
    e.value = quantile(v, 0.5);
    e.ci = {v[lo], v[hi]};
    e.samples = v.size();
    return e;
}

// ---------------------------------------------------------------------------
// Surviving forward runs

struct Survivor {
    std::uint64_t replica = 0;
    std::uint64_t seed = 0;
    std::vector<GenStats> at_schedule; // stats at each n of the schedule
    std::vector<double> features;
};

struct SurvivorSet {
    std::vector<Survivor> runs;
    std::uint64_t attempts = 0;
    bool complete = true;
};

using FeatureFn = std::function<std::vector<double>(const std::vector<GenStats>&)>;

/// Attempts 0, 1, 2, ... in blocks until `want` runs survive to the last n
/// of the schedule; the first `want` survivors in attempt order are kept, so
/// the set does not depend on the worker count. A block with unfinished
/// attempts ends the search.
SurvivorSet collect_survivors(const ExperimentConfig& c, Runner& runner, const ReproductionLaw& law,
                              std::size_t want, const FeatureFn& features)
{
    const std::size_t n_max = c.n_schedule.back();
    SurvivorSet out;
    while (out.runs.size() < want) {
        const std::size_t need = want - out.runs.size();
        const double rate =
            out.attempts == 0 ? 0.3
                              : std::max(0.05, static_cast<double>(out.runs.size()) / static_cast<double>(out.attempts));
        const auto block = static_cast<std::size_t>(std::ceil(static_cast<double>(need) / rate * 1.1)) + 8;
        const std::uint64_t base = out.attempts;
        auto results = runner.map<std::optional<Survivor>>(
            block,
            [&](std::size_t i) -> std::optional<Survivor> {
                const std::uint64_t replica = base + i;
                const std::uint64_t seed = replica_seed(c.master_seed, replica);
                const auto stats = run_forward(law, n_max, c.truncation, c.beta_grid.front(), seed);
                ForwardRun run{replica, seed, stats};
                if (!run.survived(n_max)) return std::nullopt;
                Survivor s{replica, seed, {}, features ? features(stats) : std::vector<double>{}};
                for (const auto n : c.n_schedule) s.at_schedule.push_back(stats[n - 1]);
                return s;
            },
            [&](std::size_t i) { return fmt::format("attempt {}", base + i); });
        for (std::size_t i = 0; i < results.size() && out.runs.size() < want; ++i) {
            if (!results[i]) {
                out.complete = false;
                break;
            }
            out.attempts = base + i + 1;
            if (*results[i]) out.runs.push_back(std::move(**results[i]));
        }
        if (!out.complete) break;
        if (out.attempts >= 10000 && static_cast<double>(out.runs.size()) < 1e-3 * static_cast<double>(out.attempts)) {
            throw InsufficientData(fmt::format("{} survivors in {} attempts, below the 1e-3 floor", out.runs.size(),
                                               out.attempts));
        }
    }
    return out;
}

void survivor_summary(PresetOutput& out, const ExperimentConfig& c, const SurvivorSet& set)
{
    out.extra["surviving_runs"] = set.runs.size();
    out.extra["attempts"] = set.attempts;
    if (set.attempts > 0) {
        const Estimate rate = proportion_estimate(set.runs.size(), set.attempts);
        out.points.push_back(make_point("survival_rate", static_cast<double>(c.n_schedule.back()), rate));
    }
    for (const auto& run : set.runs) {
        for (const auto& s : run.at_schedule) out.run_rows.push_back(run_row(s, run.replica, run.seed));
    }
}

LawRecursion make_recursion(const ExperimentConfig& c, const ReproductionLaw& law, LawTarget target)
{
    const BroodLaw& brood = require_brood(law, "the recursion engine");
    const LawGrid grid = default_law_grid(brood.base, c.n_schedule.back(), c.grid_dx);
    return LawRecursion(brood, grid, target);
}

nlohmann::json grid_json(const LawRecursion& rec)
{
    return {{"dx", rec.grid().dx}, {"x_lo", rec.grid().x_lo}, {"x_hi", rec.grid().x_hi}};
}

void require_schedule(const ExperimentConfig& c, std::size_t at_least)
{
    if (c.n_schedule.size() < at_least) {
        throw ConfigError(fmt::format("preset {} needs at least {} schedule points", c.preset, at_least));
    }
}

} // namespace

// ---------------------------------------------------------------------------

PresetOutput run_check_conditions(const ExperimentConfig& c, Runner& runner)
{
    const ReproductionLaw law = make_law(c.law);
    const std::vector<double> y_grid{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    std::vector<Job> jobs;
    jobs.push_back({"conditions", [&] {
                        Piece p;
                        const ConditionReport rep =
                            check_conditions(law, c.replicas, y_grid, replica_stream(c.master_seed, 0));
                        for (const auto& row : rep.rows) {
                            if (!std::isfinite(row.estimate)) continue;
                            p.points.push_back({row.name, 0.0, row.estimate, row.ci_low, row.ci_high, row.reps});
                        }
                        p.extra = rep;
                        return p;
                    }});
    if (const auto* brood = std::get_if<BroodLaw>(&law)) {
        jobs.push_back({"step_ks", [&, brood] {
                            Piece p;
                            Stream s = replica_stream(c.master_seed, 1);
                            std::vector<double> xs(kStepKsSamples);
                            for (auto& x : xs) x = sample_step(brood->base, s);
                            const StepLaw base = brood->base;
                            const KsResult ks = ks_one_sample(std::move(xs), [&](double v) { return base.cdf(v); });
                            p.points.push_back(exact_point("step_ks_distance", 0.0, ks.statistic));
                            p.points.push_back(exact_point("step_ks_p_value", 0.0, ks.p_value));
                            p.points.back().samples = p.points.front().samples = kStepKsSamples;
                            return p;
                        }});
    }
    PresetOutput out;
    const auto results = run_jobs(runner, jobs);
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i]) continue;
        out.points.insert(out.points.end(), results[i]->points.begin(), results[i]->points.end());
        if (i == 0) out.extra["condition_report"] = results[i]->extra;
    }
    out.extra["y_grid"] = y_grid;
    return out;
}

PresetOutput run_mto_oracle(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 1);
    if (c.truncation.representatives == 0) throw ConfigError("mto-oracle needs representatives >= 1");
    const ReproductionLaw law = make_law(c.law);
    const DyadicToyLaw toy = make_dyadic_toy();
    std::vector<Job> jobs;

    jobs.push_back({"dyadic_exact", [&] {
                        Piece p;
                        for (const auto& g : path_functional_catalog()) {
                            for (std::size_t n = 1; n <= 3; ++n) {
                                const std::string key = fmt::format("{}:n={}", to_string(g.id), n);
                                p.points.push_back(exact_point("dyadic_tree:" + key, static_cast<double>(n),
                                                               dyadic_tree_expectation(toy, g, n)));
                                p.points.push_back(exact_point("dyadic_walk:" + key, static_cast<double>(n),
                                                               dyadic_walk_expectation(toy, g, n)));
                            }
                        }
                        return p;
                    }});

    for (const auto n : c.n_schedule) {
        for (const auto& g : path_functional_catalog()) {
            jobs.push_back({fmt::format("many_to_one {} n={}", to_string(g.id), n), [&, n, g] {
                                Piece p;
                                const auto r = many_to_one_check(law, g, n, c.replicas,
                                                                 replica_stream(c.master_seed, 100 + n),
                                                                 c.truncation.representatives);
                                const std::string key = fmt::format("{}:n={}", to_string(g.id), n);
                                p.points.push_back(make_point("mto_tree:" + key, static_cast<double>(n), r.tree_side));
                                p.points.push_back(make_point("mto_walk:" + key, static_cast<double>(n), r.walk_side));
                                return p;
                            }});
        }
    }

    const auto phis = spine_functional_catalog();
    const auto x_spine = static_cast<double>(kSpineCheckN);
    jobs.push_back({"spine_functionals", [&] {
                        Piece p;
                        for (const auto& phi : phis) {
                            const Estimate e = size_biased_functional(law, kSpineCheckN, phi, c.replicas,
                                                                      replica_stream(c.master_seed, 200));
                            p.points.push_back(make_point(fmt::format("spine_phi:{}", to_string(phi.id)), x_spine, e));
                        }
                        return p;
                    }});

    // Forward side of the change of measure, then the ceiling comparison:
    // in the latter, tree r starts from the same root key for every ceiling.
    const std::size_t forward_first = jobs.size();
    for (const auto& [lo, hi] : chunks(c.replicas, 10000)) {
        jobs.push_back({fmt::format("forward_phi replicas {}..{}", lo, hi - 1), [&, lo = lo, hi = hi] {
                            Piece p;
                            p.stats.resize(phis.size());
                            for (std::size_t r = lo; r < hi; ++r) {
                                Generation gen = root_generation(replica_stream(c.master_seed, 600).split(r).key());
                                for (std::size_t k = 0; k < kSpineCheckN && !gen.extinct(); ++k) {
                                    gen = step_generation(gen, law, c.truncation);
                                }
                                for (std::size_t j = 0; j < phis.size(); ++j) {
                                    p.stats[j].push(gen.extinct() ? 0.0 : forward_weighted_functional(gen, phis[j]));
                                }
                            }
                            return p;
                        }});
    }
    const std::size_t bias_first = jobs.size();
    for (const auto& [lo, hi] : chunks(kBiasReplicas, 10000)) {
        jobs.push_back({fmt::format("ceiling_bias replicas {}..{}", lo, hi - 1), [&, lo = lo, hi = hi] {
                            Piece p;
                            p.stats.resize(kBiasCeilings.size());
                            for (std::size_t r = lo; r < hi; ++r) {
                                const std::uint64_t key = replica_stream(c.master_seed, 700).split(r).key();
                                auto w_n = [&](const TruncationPolicy& pol) {
                                    Generation g = root_generation(key);
                                    for (std::size_t k = 0; k < kBiasN && !g.extinct(); ++k) {
                                        g = step_generation(g, law, pol);
                                    }
                                    return g.extinct() ? 0.0 : summarize(g, 0.0).W_n;
                                };
                                TruncationPolicy pol = c.truncation;
                                pol.ceiling_kind = CeilingKind::none;
                                const double full = w_n(pol);
                                for (std::size_t j = 0; j < kBiasCeilings.size(); ++j) {
                                    pol.ceiling_kind = CeilingKind::constant;
                                    pol.ceiling_scale = kBiasCeilings[j];
                                    p.stats[j].push(full - w_n(pol));
                                }
                            }
                            return p;
                        }});
    }
    const std::size_t forward_end = jobs.size();

    jobs.push_back({"spine_ks", [&] {
                        Piece p;
                        const std::size_t spines = kSpineKsSamples / kSpineCheckN;
                        const Stream base = replica_stream(c.master_seed, 300);
                        std::vector<double> inc, direct;
                        inc.reserve(kSpineKsSamples);
                        for (std::size_t r = 0; r < spines; ++r) {
                            Stream s = base.split(r);
                            const SpineRealization sp = sample_spine(law, kSpineCheckN, s);
                            for (std::size_t i = 0; i < sp.length(); ++i) inc.push_back(sp.increment(i));
                        }
                        Stream s = replica_stream(c.master_seed, 301);
                        direct.reserve(kSpineKsSamples);
                        for (std::size_t i = 0; i < kSpineKsSamples; ++i) direct.push_back(sample_associated_step(law, s));
                        const KsResult ks = ks_two_sample(std::move(inc), std::move(direct));
                        p.points.push_back(exact_point("spine_ks_distance", 0.0, ks.statistic));
                        p.points.push_back(exact_point("spine_ks_p_value", 0.0, ks.p_value));
                        for (auto& pt : p.points) pt.samples = kSpineKsSamples;
                        return p;
                    }});

    const auto results = run_jobs(runner, jobs);
    PresetOutput out;
    std::vector<RunningStats> forward(phis.size()), bias(kBiasCeilings.size());
    bool forward_complete = true;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const bool is_forward = i >= forward_first && i < forward_end;
        if (!results[i]) {
            if (is_forward) forward_complete = false;
            continue;
        }
        if (is_forward) {
            auto& into = i < bias_first ? forward : bias;
            for (std::size_t j = 0; j < into.size(); ++j) into[j].merge(results[i]->stats[j]);
            continue;
        }
        out.points.insert(out.points.end(), results[i]->points.begin(), results[i]->points.end());
    }
    if (forward.front().count() > 0) {
        for (std::size_t j = 0; j < phis.size(); ++j) {
            out.points.push_back(
                make_point(fmt::format("forward_phi:{}", to_string(phis[j].id)), x_spine, forward[j].estimate()));
        }
    }
    if (bias.front().count() > 0) {
        for (std::size_t j = 0; j < kBiasCeilings.size(); ++j) {
            // E[W_n - W_n^C] = 1 - E[W_n^C] because E[W_n] = 1; the coupled
            // difference is nonnegative pathwise and far less noisy than 1 - mean.
            out.points.push_back(make_point("ceiling_bias", kBiasCeilings[j], bias[j].estimate()));
        }
    }
    out.extra["forward_complete"] = forward_complete;
    out.extra["change_of_measure_generation"] = kSpineCheckN;
    out.extra["bias_generation"] = kBiasN;
    out.extra["bias_replicas"] = kBiasReplicas;
    out.extra["bias_ceilings"] = kBiasCeilings;
    return out;
}

PresetOutput run_lemma21(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 3);
    const ReproductionLaw law = make_law(c.law);
    const StepLaw base = require_brood(law, "lemma21").base;
    const std::vector<BallotKind> kinds{BallotKind::stay_above, BallotKind::stay_below};
    std::vector<Job> jobs;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (const auto n : c.n_schedule) {
            jobs.push_back({fmt::format("{} n={}", to_string(kinds[k]), n), [&, k, n] {
                                Piece p;
                                BallotParams params;
                                params.a = c.ballot_a;
                                const Estimate e = ballot_probability(base, kinds[k], params, n, c.replicas,
                                                                      replica_stream(c.master_seed, k));
                                p.points.push_back(make_point(std::string(to_string(kinds[k])), static_cast<double>(n), e));
                                return p;
                            }});
        }
    }
    PresetOutput out;
    for (const auto& r : run_jobs(runner, jobs)) {
        if (r) out.points.insert(out.points.end(), r->points.begin(), r->points.end());
    }
    out.extra["a"] = c.ballot_a;
    return out;
}

PresetOutput run_lemma32(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 1);
    const ReproductionLaw law = make_law(c.law);
    const double alpha = law_alpha(law);
    std::vector<Job> jobs;
    for (const auto n : c.n_schedule) {
        for (const double lambda : c.lambda_grid) {
            jobs.push_back({fmt::format("first_moment n={} lambda={}", n, lambda), [&, n, lambda] {
                                Piece p;
                                const BarrierSpec spec = make_barrier_spec(n, lambda, alpha, c.barrier.K, c.barrier.c_prime);
                                const BarrierEstimate e =
                                    estimate_barrier_event(law, spec, c.replicas, BarrierMode::first_moment,
                                                           replica_stream(c.master_seed, 400 + n));
                                p.points.push_back(make_point(fmt::format("first_moment:n={}", n), lambda, e.estimate));
                                p.extra = {{"series", fmt::format("first_moment:n={}", n)},
                                           {"lambda", lambda},
                                           {"admissible", e.admissible}};
                                return p;
                            }});
        }
    }
    const BarrierRunLimits limits{256, c.barrier.max_population};
    for (const double lambda : c.barrier.forward_lambda_grid) {
        const std::size_t n = c.barrier.forward_n;
        jobs.push_back({fmt::format("forward n={} lambda={}", n, lambda), [&, n, lambda] {
                            Piece p;
                            const BarrierSpec spec = make_barrier_spec(n, lambda, alpha, c.barrier.K, c.barrier.c_prime);
                            const BarrierEstimate e =
                                estimate_barrier_event(law, spec, c.barrier.forward_replicas, BarrierMode::forward,
                                                       replica_stream(c.master_seed, 500), limits);
                            p.points.push_back(make_point(fmt::format("forward:n={}", n), lambda, e.estimate));
                            p.extra = {{"series", fmt::format("forward:n={}", n)},
                                       {"lambda", lambda},
                                       {"admissible", e.admissible},
                                       {"capped_replicates", e.capped_replicates}};
                            return p;
                        }});
    }
    PresetOutput out;
    nlohmann::json flags = nlohmann::json::array();
    for (const auto& r : run_jobs(runner, jobs)) {
        if (!r) continue;
        out.points.insert(out.points.end(), r->points.begin(), r->points.end());
        flags.push_back(r->extra);
    }
    out.extra["points"] = flags;
    out.extra["note"] = "lambda above (1/(2 alpha)) log n is outside the admissible range; such points are flagged";
    return out;
}

PresetOutput run_lemma41(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 1);
    if (c.lambda_grid.size() < 3) throw ConfigError("lemma41 needs at least 3 lambda values");
    const ReproductionLaw law = make_law(c.law);
    const double alpha = law_alpha(law);
    auto threshold = [&](std::size_t n, double lambda) {
        return (1.0 + 1.0 / alpha) * std::log(static_cast<double>(n)) - lambda;
    };
    PresetOutput out;
    if (c.engine == "recursion") {
        std::vector<Job> jobs{{"recursion", [&] {
                                   Piece p;
                                   LawRecursion rec = make_recursion(c, law, LawTarget::minimum);
                                   for (const auto n : c.n_schedule) {
                                       rec.advance_to(n);
                                       for (const double lambda : c.lambda_grid) {
                                           p.points.push_back(exact_point(fmt::format("tail:n={}", n), lambda,
                                                                          rec.value(threshold(n, lambda)) / rec.limit()));
                                       }
                                       p.points.push_back(exact_point("survival", static_cast<double>(n), rec.limit()));
                                   }
                                   p.extra = grid_json(rec);
                                   return p;
                               }}};
        for (const auto& r : run_jobs(runner, jobs)) {
            if (!r) continue;
            out.points = r->points;
            out.extra["grid"] = r->extra;
        }
        out.extra["engine"] = "recursion";
        return out;
    }
    const SurvivorSet set = collect_survivors(c, runner, law, c.replicas, nullptr);
    for (std::size_t j = 0; j < c.n_schedule.size(); ++j) {
        const std::size_t n = c.n_schedule[j];
        for (const double lambda : c.lambda_grid) {
            std::uint64_t hits = 0;
            for (const auto& run : set.runs) hits += run.at_schedule[j].M_n < threshold(n, lambda) ? 1 : 0;
            out.points.push_back(make_point(fmt::format("tail:n={}", n), lambda, proportion_estimate(hits, set.runs.size())));
        }
        DataPoint count = exact_point("surviving_runs", static_cast<double>(n), static_cast<double>(set.runs.size()));
        count.samples = set.attempts;
        out.points.push_back(count);
    }
    survivor_summary(out, c, set);
    out.extra["engine"] = "forward";
    return out;
}

PresetOutput run_median_mn(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 3);
    const ReproductionLaw law = make_law(c.law);
    PresetOutput out;
    if (c.engine == "recursion") {
        std::vector<Job> jobs{{"recursion", [&] {
                                   Piece p;
                                   LawRecursion rec = make_recursion(c, law, LawTarget::minimum);
                                   for (const auto n : c.n_schedule) {
                                       rec.advance_to(n);
                                       p.points.push_back(exact_point("median_M", static_cast<double>(n),
                                                                      rec.conditional_quantile(0.5)));
                                       p.points.push_back(exact_point("survival", static_cast<double>(n), rec.limit()));
                                   }
                                   p.extra = grid_json(rec);
                                   return p;
                               }}};
        for (const auto& r : run_jobs(runner, jobs)) {
            if (!r) continue;
            out.points = r->points;
            out.extra["grid"] = r->extra;
        }
        out.extra["engine"] = "recursion";
        return out;
    }
    const SurvivorSet set = collect_survivors(c, runner, law, c.replicas, nullptr);
    if (!set.runs.empty()) {
        for (std::size_t j = 0; j < c.n_schedule.size(); ++j) {
            std::vector<double> m;
            for (const auto& run : set.runs) m.push_back(run.at_schedule[j].M_n);
            out.points.push_back(make_point("median_M", static_cast<double>(c.n_schedule[j]), median_estimate(m)));
        }
    }
    survivor_summary(out, c, set);
    out.extra["engine"] = "forward";
    return out;
}

PresetOutput run_wn_decay(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 3);
    const ReproductionLaw law = make_law(c.law);
    PresetOutput out;
    if (c.engine == "recursion") {
        std::vector<Job> jobs{{"recursion", [&] {
                                   Piece p;
                                   LawRecursion rec = make_recursion(c, law, LawTarget::additive_laplace);
                                   for (const auto n : c.n_schedule) {
                                       rec.advance_to(n);
                                       p.points.push_back(exact_point("log_W_scale", static_cast<double>(n),
                                                                      -rec.conditional_quantile(0.5)));
                                       p.points.push_back(exact_point("survival", static_cast<double>(n), rec.limit()));
                                   }
                                   p.extra = grid_json(rec);
                                   return p;
                               }}};
        for (const auto& r : run_jobs(runner, jobs)) {
            if (!r) continue;
            out.points = r->points;
            out.extra["grid"] = r->extra;
        }
        out.extra["engine"] = "recursion";
        out.extra["scale"] = "-x_n where E[exp(-e^{x_n} W_n) | survival] = 1/2";
        return out;
    }
    const SurvivorSet set = collect_survivors(c, runner, law, c.replicas, nullptr);
    if (!set.runs.empty()) {
        for (std::size_t j = 0; j < c.n_schedule.size(); ++j) {
            std::vector<double> w;
            for (const auto& run : set.runs) w.push_back(run.at_schedule[j].W_n);
            Estimate e = median_estimate(w);
            e = {std::log(e.value), {std::log(e.ci.low), std::log(e.ci.high)}, 0.0, e.samples};
            out.points.push_back(make_point("log_W_scale", static_cast<double>(c.n_schedule[j]), e));
        }
    }
    survivor_summary(out, c, set);
    out.extra["engine"] = "forward";
    out.extra["scale"] = "log median W_n over surviving runs";
    return out;
}

PresetOutput run_wn_max(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 1);
    if (c.lambda_grid.empty()) throw ConfigError("wn-max needs a lambda grid");
    const ReproductionLaw law = make_law(c.law);
    const double alpha = law_alpha(law);
    const std::size_t horizon = 2 * c.n_schedule.back();
    const std::size_t cells = c.n_schedule.size() * c.beta_grid.size() * c.lambda_grid.size();
    std::vector<Job> jobs;
    for (const auto& [lo, hi] : chunks(c.replicas, 250)) {
        jobs.push_back({fmt::format("replicas {}..{}", lo, hi - 1), [&, lo = lo, hi = hi] {
                            Piece p;
                            p.counts.assign(cells, 0);
                            for (std::size_t r = lo; r < hi; ++r) {
                                const std::uint64_t seed = replica_seed(c.master_seed, r);
                                for (std::size_t b = 0; b < c.beta_grid.size(); ++b) {
                                    const auto stats = run_forward(law, horizon, c.truncation, c.beta_grid[b], seed);
                                    for (std::size_t j = 0; j < c.n_schedule.size(); ++j) {
                                        const std::size_t n = c.n_schedule[j];
                                        double mx = 0.0;
                                        for (std::size_t k = n; k <= 2 * n && k <= stats.size(); ++k) {
                                            mx = std::max(mx, std::pow(static_cast<double>(k), 1.0 / alpha) *
                                                                  stats[k - 1].W_n_beta);
                                        }
                                        for (std::size_t l = 0; l < c.lambda_grid.size(); ++l) {
                                            const std::size_t cell = (j * c.beta_grid.size() + b) * c.lambda_grid.size() + l;
                                            if (mx > c.lambda_grid[l]) ++p.counts[cell];
                                        }
                                    }
                                }
                            }
                            return p;
                        }});
    }
    std::vector<std::uint64_t> counts(cells, 0);
    std::uint64_t reps = 0;
    const auto results = run_jobs(runner, jobs);
    const auto parts = chunks(c.replicas, 250);
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i]) continue;
        reps += parts[i].second - parts[i].first;
        for (std::size_t k = 0; k < cells; ++k) counts[k] += results[i]->counts[k];
    }
    PresetOutput out;
    if (reps == 0) return out;
    for (std::size_t j = 0; j < c.n_schedule.size(); ++j) {
        for (std::size_t b = 0; b < c.beta_grid.size(); ++b) {
            const std::string series = fmt::format("tail:n={}:beta={}", c.n_schedule[j], format_double(c.beta_grid[b]));
            for (std::size_t l = 0; l < c.lambda_grid.size(); ++l) {
                const std::size_t cell = (j * c.beta_grid.size() + b) * c.lambda_grid.size() + l;
                out.points.push_back(make_point(series, c.lambda_grid[l], proportion_estimate(counts[cell], reps)));
            }
        }
    }
    out.extra["window"] = "max over n <= k <= 2n of k^{1/alpha} W_k^beta, all runs (extinct runs count as 0)";
    return out;
}

PresetOutput run_integral_test(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 1);
    const ReproductionLaw law = make_law(c.law);
    const double alpha = law_alpha(law);
    const std::size_t n_max = c.n_schedule.back();
    if (n_max <= kEnvelopeStart) throw ConfigError("integral-test needs n > 16");
    // features: dips with f = log log k, dips with f = 2 log log k
    const FeatureFn dips = [&](const std::vector<GenStats>& stats) {
        std::vector<double> f(2, 0.0);
        for (std::size_t k = kEnvelopeStart; k <= n_max; ++k) {
            const double lk = std::log(static_cast<double>(k));
            const double center = lk / alpha;
            const double ll = std::log(lk);
            if (stats[k - 1].M_n < center - ll) f[0] += 1.0;
            if (stats[k - 1].M_n < center - 2.0 * ll) f[1] += 1.0;
        }
        return f;
    };
    const SurvivorSet set = collect_survivors(c, runner, law, c.replicas, dips);
    PresetOutput out;
    const std::vector<std::string> names{"loglog", "2loglog"};
    for (std::size_t i = 0; i < 2 && !set.runs.empty(); ++i) {
        RunningStats st;
        std::uint64_t with_dip = 0;
        for (const auto& run : set.runs) {
            st.push(run.features[i]);
            with_dip += run.features[i] > 0.0 ? 1 : 0;
        }
        out.points.push_back(make_point("mean_dips:" + names[i], static_cast<double>(n_max), st.estimate()));
        out.points.push_back(make_point("runs_with_dip:" + names[i], static_cast<double>(n_max),
                                        proportion_estimate(with_dip, set.runs.size())));
    }
    survivor_summary(out, c, set);
    out.extra["qualitative"] = true;
    out.extra["note"] = "counts only; the divergent and convergent cases differ in a tail statement that a finite "
                        "horizon cannot resolve";
    return out;
}

PresetOutput run_lower_envelope(const ExperimentConfig& c, Runner& runner)
{
    require_schedule(c, 1);
    const ReproductionLaw law = make_law(c.law);
    const double alpha = law_alpha(law);
    const std::size_t n_max = c.n_schedule.back();
    if (n_max <= kEnvelopeStart) throw ConfigError("lower-envelope needs n > 16");
    auto ratio = [&](const GenStats& s) {
        const double lk = std::log(static_cast<double>(s.n));
        return (s.M_n - lk / alpha) / std::log(lk);
    };
    const FeatureFn envelope = [&](const std::vector<GenStats>& stats) {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t k = kEnvelopeStart; k <= n_max; ++k) lo = std::min(lo, ratio(stats[k - 1]));
        return std::vector<double>{lo, ratio(stats[n_max - 1])};
    };
    const SurvivorSet set = collect_survivors(c, runner, law, c.replicas, envelope);
    PresetOutput out;
    const std::vector<std::string> names{"min_ratio", "final_ratio"};
    for (std::size_t i = 0; i < 2 && !set.runs.empty(); ++i) {
        std::vector<double> v;
        for (const auto& run : set.runs) v.push_back(run.features[i]);
        for (const double q : {0.1, 0.25, 0.5, 0.75, 0.9}) {
            DataPoint p = exact_point(names[i], q, quantile(v, q));
            p.samples = v.size();
            out.points.push_back(p);
        }
    }
    survivor_summary(out, c, set);
    out.extra["qualitative"] = true;
    out.extra["note"] = "quantiles of (M_k - (1/alpha) log k) / log log k over surviving runs; no constant is claimed";
    return out;
}

} // namespace sbrw::detail
