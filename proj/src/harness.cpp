#include "sbrw/harness.hpp"

#include "presets.hpp"
#include "sbrw/errors.hpp"
#include "sbrw/law_recursion.hpp"
#include "sbrw/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace sbrw {

namespace {

const std::vector<PresetInfo>& preset_table()
{
    static const std::vector<PresetInfo> table{
        {"check-conditions", false, "boundary, stable-tail and moment conditions of the brood law"},
        {"mto-oracle", false, "many-to-one identity, change of measure, truncation bias and spine increments"},
        {"lemma21", false, "ballot scaling of the associated walk"},
        {"lemma32", false, "e^{-lambda} scaling of the barrier event"},
        {"lemma41", false, "lower tail of M_n below (1+1/alpha) log n"},
        {"median-mn", false, "median of M_n against log n"},
        {"wn-decay", false, "scale of W_n against log n"},
        {"wn-max", false, "tail of max_k k^{1/alpha} W_k^beta, report only"},
        {"integral-test", true, "dip counts below (1/alpha) log n - f(n) for two f"},
        {"lower-envelope", true, "normalized lower excursions of M_n"},
    };
    return table;
}

double sample_mean_stderr(const DataPoint& p)
{
    return (p.ci_high - p.ci_low) / (2.0 * normal_quantile(0.975));
}

/// Points grouped by series, in stored order.
std::map<std::string, std::vector<DataPoint>> by_series(const std::vector<DataPoint>& points)
{
    std::map<std::string, std::vector<DataPoint>> out;
    for (const auto& p : points) out[p.series].push_back(p);
    return out;
}

const DataPoint* find_point(const std::map<std::string, std::vector<DataPoint>>& s, const std::string& series)
{
    const auto it = s.find(series);
    if (it == s.end() || it->second.empty()) return nullptr;
    return &it->second.front();
}

RuleOutcome missing_rule(const std::string& id, const std::string& description)
{
    return {id, description + " (no data)", std::nan(""), 0.0, 0.0, false, false};
}

RuleOutcome within(const std::string& id, const std::string& description, double value, double target, double tol)
{
    return {id, description, value, target, tol, std::abs(value - target) <= tol, false};
}

/// Interval gap: 0 when the two intervals overlap.
double interval_gap(const DataPoint& a, const DataPoint& b)
{
    return std::max(0.0, std::max(a.ci_low, b.ci_low) - std::min(a.ci_high, b.ci_high));
}

RuleOutcome overlap_rule(const std::string& id, const std::string& description, const DataPoint& a,
                         const DataPoint& b)
{
    const double gap = interval_gap(a, b);
    const bool finite = std::isfinite(a.ci_low) && std::isfinite(a.ci_high) && std::isfinite(b.ci_low) &&
                        std::isfinite(b.ci_high);
    return {id, description, finite ? gap : std::nan(""), 0.0, 0.0, finite && gap == 0.0, false};
}

/// Slope of y on x (ln x when log_x) for one series.
std::optional<SlopeFit> series_slope(const std::vector<DataPoint>& pts, bool log_x, bool log_y)
{
    std::vector<Point> xy;
    for (const auto& p : pts) {
        if (log_y && !(p.estimate > 0.0)) continue;
        if (log_x && !(p.x > 0.0)) continue;
        xy.push_back({log_x ? std::log(p.x) : p.x, log_y ? std::log(p.estimate) : p.estimate});
    }
    if (xy.size() < 3) return std::nullopt;
    return fit_line(xy);
}

void slope_rule(std::vector<RuleOutcome>& rules, const std::map<std::string, std::vector<DataPoint>>& s,
                const std::string& series, const std::string& id, const std::string& description, bool log_x,
                bool log_y, double target, double tol, bool report_only = false)
{
    const auto it = s.find(series);
    const auto fit = it == s.end() ? std::nullopt : series_slope(it->second, log_x, log_y);
    if (!fit) {
        rules.push_back(missing_rule(id, description));
        return;
    }
    RuleOutcome r = within(id, description, fit->slope, target, tol);
    if (report_only) {
        r.report_only = true;
        r.pass = true;
    }
    rules.push_back(r);
}

std::vector<RuleOutcome> verdict_check_conditions(const ExperimentConfig& c,
                                                  const std::map<std::string, std::vector<DataPoint>>& s)
{
    std::vector<RuleOutcome> rules;
    const bool toy = c.law.family == "dyadic_toy";
    const double sig = tolerance(c, "boundary_sigmas");
    for (const auto& [name, target] : {std::pair<std::string, double>{"mean_weight", 1.0}, {"mean_weighted_position", 0.0}}) {
        const DataPoint* p = find_point(s, name);
        const std::string desc = fmt::format("E[{}] within {} stderr of {}", name, sig, target);
        if (p == nullptr) {
            rules.push_back(missing_rule("boundary_" + name, desc));
            continue;
        }
        const double se = sample_mean_stderr(*p);
        const double z = se > 0.0 ? (p->estimate - target) / se : (p->estimate == target ? 0.0 : INFINITY);
        rules.push_back(within("boundary_" + name, desc + " (value is the z-score)", z, 0.0, sig));
    }
    const double alpha = c.law.alpha;
    if (const DataPoint* p = find_point(s, "right_tail_hill")) {
        rules.push_back(within("tail_hill", "weighted Hill index of the right tail equals alpha", p->estimate, alpha,
                               tolerance(c, "hill_alpha")));
    } else if (!toy) {
        rules.push_back(missing_rule("tail_hill", "weighted Hill index"));
    }
    if (const DataPoint* p = find_point(s, "right_tail_slope")) {
        RuleOutcome r = within("tail_slope", "log-log slope of the weighted right tail equals -alpha", p->estimate,
                               -alpha, tolerance(c, "tail_slope"));
        if (toy) {
            r.report_only = true;
            r.pass = true;
            r.description = "toy law has no stable right tail; report only";
        }
        rules.push_back(r);
    }
    if (const DataPoint* p = find_point(s, "step_ks_distance")) {
        const double tol = tolerance(c, "ks_distance");
        rules.push_back({"step_ks", "KS distance of step samples to the exact CDF", p->estimate, 0.0, tol,
                         p->estimate < tol, false});
    } else if (!toy) {
        rules.push_back(missing_rule("step_ks", "KS distance of step samples"));
    }
    const double msig = tolerance(c, "moment_sigmas");
    for (const std::string name : {"moment_x", "moment_x_tilde"}) {
        const DataPoint* full = find_point(s, name);
        const DataPoint* half = find_point(s, name + "_half");
        const std::string desc = fmt::format("{} agrees with its first-half estimate within {} stderr", name, msig);
        if (full == nullptr || half == nullptr) {
            rules.push_back(missing_rule(name + "_stable", desc));
            continue;
        }
        const double se = std::hypot(sample_mean_stderr(*full), sample_mean_stderr(*half));
        const double diff = full->estimate - half->estimate;
        const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : INFINITY);
        rules.push_back(within(name + "_stable", desc + " (value is the z-score)", z, 0.0, msig));
    }
    return rules;
}

std::vector<RuleOutcome> verdict_mto(const ExperimentConfig& c, const std::map<std::string, std::vector<DataPoint>>& s)
{
    std::vector<RuleOutcome> rules;
    const double tol = tolerance(c, "dyadic_exact");
    const double target = (9.0 - 4.0 * std::sqrt(3.0)) / 4.0;
    if (const DataPoint* p = find_point(s, "dyadic_tree:leaf_nonpositive:n=2")) {
        rules.push_back(within("dyadic_closed_form", "toy tree expectation of #{V <= 0} at n = 2 equals (9-4 sqrt 3)/4",
                               p->estimate, target, tol));
    } else {
        rules.push_back(missing_rule("dyadic_closed_form", "toy closed form"));
    }
    double worst = 0.0;
    bool any = false;
    for (const auto& [series, pts] : s) {
        if (series.rfind("dyadic_tree:", 0) != 0) continue;
        const DataPoint* w = find_point(s, "dyadic_walk:" + series.substr(12));
        if (w == nullptr) continue;
        worst = std::max(worst, std::abs(pts.front().estimate - w->estimate));
        any = true;
    }
    if (any) {
        rules.push_back(within("dyadic_identity", "toy tree and walk sides agree for every functional, n <= 3", worst,
                               0.0, tol));
    } else {
        rules.push_back(missing_rule("dyadic_identity", "toy identity"));
    }
    for (const auto& [series, pts] : s) {
        if (series.rfind("mto_tree:", 0) != 0) continue;
        const std::string key = series.substr(9);
        const DataPoint* w = find_point(s, "mto_walk:" + key);
        if (w == nullptr) {
            rules.push_back(missing_rule("mto:" + key, "tree/walk overlap"));
            continue;
        }
        rules.push_back(overlap_rule("mto:" + key, "tree-side and walk-side 95% intervals overlap", pts.front(), *w));
    }
    for (const auto& [series, pts] : s) {
        if (series.rfind("spine_phi:", 0) != 0) continue;
        const std::string key = series.substr(10);
        const DataPoint* f = find_point(s, "forward_phi:" + key);
        if (f == nullptr) {
            rules.push_back(missing_rule("change_of_measure:" + key, "spine/forward overlap"));
            continue;
        }
        rules.push_back(overlap_rule("change_of_measure:" + key, "E_Q[phi] and E_P[W_n phi] 95% intervals overlap",
                                     pts.front(), *f));
    }
    if (const DataPoint* p = find_point(s, "spine_phi:one")) {
        rules.push_back({"martingale_one", "spine estimate of E_P[W_n] is exactly 1", p->estimate, 1.0, 0.0,
                         p->estimate == 1.0, false});
    } else {
        rules.push_back(missing_rule("martingale_one", "spine estimate of E_P[W_n]"));
    }
    {
        const auto it = s.find("ceiling_bias");
        if (it == s.end() || it->second.size() < 2) {
            rules.push_back(missing_rule("ceiling_bias_monotone", "truncation bias"));
        } else {
            double worst_step = -INFINITY;
            for (std::size_t i = 1; i < it->second.size(); ++i) {
                worst_step = std::max(worst_step, it->second[i].estimate - it->second[i - 1].estimate);
            }
            rules.push_back({"ceiling_bias_monotone",
                             "bias E[W_n - W_n^C] strictly decreases as the ceiling C rises (value: largest increment)",
                             worst_step, 0.0, 0.0, worst_step < 0.0, false});
        }
    }
    if (const DataPoint* p = find_point(s, "spine_ks_p_value")) {
        const double tol_p = tolerance(c, "ks_p_value");
        rules.push_back({"spine_ks", "two-sample KS p-value, spine increments against step samples", p->estimate,
                         tol_p, 0.0, p->estimate > tol_p, false});
    } else {
        rules.push_back(missing_rule("spine_ks", "spine KS"));
    }
    return rules;
}

std::vector<RuleOutcome> verdict_lemma21(const ExperimentConfig& c,
                                         const std::map<std::string, std::vector<DataPoint>>& s)
{
    std::vector<RuleOutcome> rules;
    const double a = c.law.alpha;
    const double tol = tolerance(c, "slope");
    slope_rule(rules, s, "stay_above", "slope_stay_above", "log-log slope of P(min S >= -a) equals -1/alpha", true,
               true, -1.0 / a, tol);
    slope_rule(rules, s, "stay_below", "slope_stay_below", "log-log slope of P(max S <= a) equals -(1-1/alpha)", true,
               true, -(1.0 - 1.0 / a), tol);
    return rules;
}

std::vector<RuleOutcome> verdict_lemma32(const ExperimentConfig& c,
                                         const std::map<std::string, std::vector<DataPoint>>& s)
{
    std::vector<RuleOutcome> rules;
    const double tol = tolerance(c, "slope");
    for (const auto n : c.n_schedule) {
        const std::string series = fmt::format("first_moment:n={}", n);
        slope_rule(rules, s, series, "first_moment_slope:n=" + std::to_string(n),
                   "slope of log E-hat in lambda equals -1", false, true, -1.0, tol);
    }
    const std::string fseries = fmt::format("forward:n={}", c.barrier.forward_n);
    const auto it = s.find(fseries);
    if (it == s.end() || it->second.size() < 2) {
        rules.push_back(missing_rule("forward_monotone", "forward estimates nonincreasing in lambda"));
    } else {
        double worst = -INFINITY;
        for (std::size_t i = 1; i < it->second.size(); ++i) {
            worst = std::max(worst, it->second[i].estimate - it->second[i - 1].estimate);
        }
        rules.push_back({"forward_monotone:n=" + std::to_string(c.barrier.forward_n),
                         "forward estimates nonincreasing in lambda (value: largest increment)", worst, 0.0, 0.0,
                         worst <= 0.0, false});
    }
    return rules;
}

std::vector<RuleOutcome> verdict_lemma41(const ExperimentConfig& c,
                                         const std::map<std::string, std::vector<DataPoint>>& s)
{
    std::vector<RuleOutcome> rules;
    for (const auto n : c.n_schedule) {
        slope_rule(rules, s, fmt::format("tail:n={}", n), "tail_slope:n=" + std::to_string(n),
                   "slope in lambda of log P(M_n < (1+1/alpha) log n - lambda | survival) equals -1", false, true,
                   -1.0, tolerance(c, "slope"));
    }
    if (c.engine == "forward") {
        const double need = tolerance(c, "min_surviving_runs");
        for (const auto n : c.n_schedule) {
            const auto it = s.find("surviving_runs");
            double have = 0.0;
            if (it != s.end()) {
                for (const auto& p : it->second) {
                    if (p.x == static_cast<double>(n)) have = p.estimate;
                }
            }
            rules.push_back({"surviving_runs:n=" + std::to_string(n), "surviving runs behind the tail estimate", have,
                             need, 0.0, have >= need, false});
        }
    }
    return rules;
}

std::vector<RuleOutcome> verdict_median(const ExperimentConfig& c,
                                        const std::map<std::string, std::vector<DataPoint>>& s)
{
    std::vector<RuleOutcome> rules;
    const bool toy = c.law.family == "dyadic_toy";
    slope_rule(rules, s, "median_M", "median_slope",
               toy ? "toy law: slope of median M_n on log n, report only"
                   : "slope of median M_n on log n equals 1 + 1/alpha",
               true, false, toy ? 0.0 : 1.0 + 1.0 / c.law.alpha, tolerance(c, "slope"), toy);
    return rules;
}

std::vector<RuleOutcome> verdict_wn_decay(const ExperimentConfig& c,
                                          const std::map<std::string, std::vector<DataPoint>>& s)
{
    std::vector<RuleOutcome> rules;
    const bool toy = c.law.family == "dyadic_toy";
    slope_rule(rules, s, "log_W_scale", "log_w_slope",
               toy ? "toy law: slope of log W_n scale on log n, report only"
                   : "slope of the log scale of W_n on log n equals -1/alpha",
               true, false, toy ? 0.0 : -1.0 / c.law.alpha, tolerance(c, "slope"), toy);
    return rules;
}

std::vector<RuleOutcome> verdict_wn_max(const std::vector<DataPoint>& points)
{
    // One report per tail series, in the order the series were stored.
    std::vector<std::string> order;
    std::map<std::string, double> worst;
    for (const auto& p : points) {
        if (p.series.rfind("tail:", 0) != 0) continue;
        if (!worst.count(p.series)) order.push_back(p.series);
        worst[p.series] = std::max(worst[p.series], p.x * p.estimate);
    }
    std::vector<RuleOutcome> rules;
    for (const auto& series : order) {
        rules.push_back({"lambda_times_tail:" + series.substr(5), "max over lambda of lambda * P(max > lambda)",
                         worst[series], 0.0, 0.0, true, true});
    }
    return rules;
}

} // namespace

const PresetInfo& preset_info(const std::string& id)
{
    for (const auto& p : preset_table()) {
        if (p.id == id) return p;
    }
    throw ConfigError("unknown preset: " + id);
}

Orchestrated orchestrate(std::size_t count, std::size_t workers, const std::function<TaskOutput(std::size_t)>& task,
                         const OrchestrateOptions& options)
{
    if (workers == 0) throw ConfigError("orchestrate: worker count must be >= 1");
    Orchestrated out;
    out.outputs.resize(count);
    std::vector<char> done(count, 0);
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&](std::size_t w) {
        for (std::size_t i = w; i < count; i += workers) {
            if (options.fail_before && options.fail_before(i)) return;
            {
                std::lock_guard lock(error_mutex);
                if (error) return;
            }
            try {
                out.outputs[i] = task(i);
                done[i] = 1;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    if (workers == 1 || count <= 1) {
        worker(0);
        for (std::size_t w = 1; w < workers; ++w) worker(w);
    } else {
        std::vector<std::thread> threads;
        const std::size_t used = std::min(workers, count);
        threads.reserve(used);
        for (std::size_t w = 0; w < used; ++w) threads.emplace_back(worker, w);
        for (auto& t : threads) t.join();
    }
    if (error) std::rethrow_exception(error);
    for (std::size_t i = 0; i < count; ++i) {
        if (!done[i]) {
            out.outputs[i].reset();
            out.missing.push_back(i);
        }
    }
    return out;
}

double estimate_cost(const ExperimentConfig& c)
{
    validate(c);
    const auto reps = static_cast<double>(c.replicas);
    const double n_max = c.n_schedule.empty() ? 0.0 : static_cast<double>(c.n_schedule.back());
    const double pop = static_cast<double>(c.truncation.max_population);
    // Worst case for forward runs: every attempted run reaches the cap, and a
    // third of the attempts survive.
    const double forward = reps / 0.3 * n_max * pop;
    auto recursion = [&](double n) {
        if (c.law.family != "brood") return 0.0;
        const StepLaw base = make_step_law(c.law.alpha, c.law.x_m, c.law.d);
        const LawGrid g = default_law_grid(base, static_cast<std::size_t>(n), c.grid_dx);
        const double cells = (g.x_hi - g.x_lo) / g.dx;
        return n * cells * cells / 2.0;
    };
    const std::string& p = c.preset;
    if (p == "check-conditions") return reps * 6.0 + static_cast<double>(detail::kStepKsSamples);
    if (p == "mto-oracle") {
        const double r = static_cast<double>(std::max<std::size_t>(c.truncation.representatives, 1));
        double tree = 0.0;
        for (const auto n : c.n_schedule) tree += std::pow(0.6 * r, static_cast<double>(n));
        const double spine_side = reps * std::pow(0.6 * r, static_cast<double>(detail::kSpineCheckN));
        const double bias = 4.0 * static_cast<double>(detail::kBiasReplicas) *
                            std::pow(0.6 * r, static_cast<double>(detail::kBiasN));
        return 4.0 * reps * tree + 4.0 * spine_side + bias + static_cast<double>(detail::kSpineKsSamples) * 2.0;
    }
    if (p == "lemma21") {
        double steps = 0.0;
        for (const auto n : c.n_schedule) steps += static_cast<double>(n);
        return 2.0 * reps * steps;
    }
    if (p == "lemma32") {
        double steps = 0.0;
        for (const auto n : c.n_schedule) steps += c.law.alpha * static_cast<double>(n);
        const double first = reps * steps * static_cast<double>(c.lambda_grid.size());
        const double fwd = static_cast<double>(c.barrier.forward_replicas) *
                           static_cast<double>(c.barrier.forward_lambda_grid.size()) * c.law.alpha *
                           static_cast<double>(c.barrier.forward_n) * static_cast<double>(c.barrier.max_population);
        return first + fwd;
    }
    if (p == "lemma41" || p == "median-mn" || p == "wn-decay") {
        return c.engine == "recursion" ? recursion(n_max) : forward;
    }
    if (p == "wn-max") return reps * 2.0 * n_max * pop * static_cast<double>(c.beta_grid.size());
    return forward; // integral-test, lower-envelope
}

std::vector<RuleOutcome> compute_verdict(const ExperimentConfig& config, const std::vector<DataPoint>& points)
{
    if (preset_info(config.preset).qualitative) return {};
    const auto s = by_series(points);
    const std::string& p = config.preset;
    if (p == "check-conditions") return verdict_check_conditions(config, s);
    if (p == "mto-oracle") return verdict_mto(config, s);
    if (p == "lemma21") return verdict_lemma21(config, s);
    if (p == "lemma32") return verdict_lemma32(config, s);
    if (p == "lemma41") return verdict_lemma41(config, s);
    if (p == "median-mn") return verdict_median(config, s);
    if (p == "wn-decay") return verdict_wn_decay(config, s);
    if (p == "wn-max") return verdict_wn_max(points);
    throw ConfigError("no verdict for preset " + p);
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t workers, const OrchestrateOptions& options)
{
    if (workers == 0) throw ConfigError("worker count must be >= 1");
    validate(config);
    const double cost = estimate_cost(config);
    if (cost > config.budget) {
        throw BudgetExceeded(fmt::format("preset {}: estimated cost {:.3g} particle steps exceeds the budget {:.3g}",
                                         config.preset, cost, config.budget),
                             cost, config.budget);
    }
    const auto start = std::chrono::steady_clock::now();
    detail::Runner runner(workers, options);
    detail::PresetOutput out;
    const std::string& p = config.preset;
    if (p == "check-conditions") out = detail::run_check_conditions(config, runner);
    else if (p == "mto-oracle") out = detail::run_mto_oracle(config, runner);
    else if (p == "lemma21") out = detail::run_lemma21(config, runner);
    else if (p == "lemma32") out = detail::run_lemma32(config, runner);
    else if (p == "lemma41") out = detail::run_lemma41(config, runner);
    else if (p == "median-mn") out = detail::run_median_mn(config, runner);
    else if (p == "wn-decay") out = detail::run_wn_decay(config, runner);
    else if (p == "wn-max") out = detail::run_wn_max(config, runner);
    else if (p == "integral-test") out = detail::run_integral_test(config, runner);
    else if (p == "lower-envelope") out = detail::run_lower_envelope(config, runner);
    else throw ConfigError("unknown preset: " + p);

    ExperimentResult result;
    result.config = config;
    result.points = std::move(out.points);
    result.run_rows = std::move(out.run_rows);
    result.extra = std::move(out.extra);
    result.extra["estimated_cost"] = cost;
    result.missing = runner.missing();
    if (!result.missing.empty()) result.extra["missing_labels"] = runner.missing_labels();
    result.verdict = compute_verdict(config, result.points);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace sbrw
