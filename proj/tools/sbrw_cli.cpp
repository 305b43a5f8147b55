// Command-line front end: sbrw <subcommand> [flags].

#include "sbrw/config.hpp"
#include "sbrw/errors.hpp"
#include "sbrw/forward_sim.hpp"
#include "sbrw/harness.hpp"
#include "sbrw/reproduction.hpp"
#include "sbrw/spine_sim.hpp"
#include "sbrw/stable_walk.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicas;
    std::size_t workers = 1;
    std::string out;
    std::optional<double> budget;
    std::string law = "brood";
    double alpha = 1.5;
};

void add_common(CLI::App& app, CommonFlags& f)
{
    app.add_option("--config", f.config_path, "JSON config file");
    app.add_option("--seed", f.seed, "master seed");
    app.add_option("--replicas", f.replicas, "replica count");
    app.add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", f.out, "output directory or file");
    app.add_option("--budget", f.budget, "particle-step budget");
}

void add_law(CLI::App& app, CommonFlags& f)
{
    app.add_option("--law", f.law, "brood or dyadic_toy");
    app.add_option("--alpha", f.alpha, "tail index of the step law");
}

sbrw::LawSpec law_spec(const CommonFlags& f)
{
    sbrw::LawSpec s;
    s.family = f.law;
    s.alpha = f.alpha;
    return s;
}

std::uint64_t seed_or_default(const CommonFlags& f)
{
    return f.seed.value_or(sbrw::ExperimentConfig{}.master_seed);
}

void emit(const std::string& text, const std::string& out)
{
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream file(out);
    if (!file) throw sbrw::ConfigError("cannot write " + out);
    file << text;
}

int cmd_check_conditions(const CommonFlags& f)
{
    const auto law = sbrw::make_law(law_spec(f));
    const std::vector<double> y_grid{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    const auto report = sbrw::check_conditions(law, f.replicas.value_or(100000), y_grid,
                                               sbrw::replica_stream(seed_or_default(f), 0));
    std::string text = fmt::format("conditions for {}\n", report.law);
    for (const auto& r : report.rows) {
        text += fmt::format("{:<26} {:>13.6g}  [{:.6g}, {:.6g}]  {}\n", r.name, r.estimate, r.ci_low, r.ci_high, r.note);
    }
    std::cout << text;
    if (!f.out.empty()) emit(nlohmann::json(report).dump(2) + "\n", f.out);
    return 0;
}

struct WalkFlags {
    std::size_t n = 100;
    std::string kind;
    std::optional<double> a, b, u, v, lambda;
};

int cmd_walk(const CommonFlags& f, const WalkFlags& w)
{
    const sbrw::StepLaw law = sbrw::make_step_law(f.alpha, 1.0, 2.0);
    if (w.kind.empty()) {
        sbrw::Stream s = sbrw::replica_stream(seed_or_default(f), 0);
        const auto path = sbrw::walk_path(law, w.n, s);
        std::string text = "i,S_i,min_S\n";
        for (std::size_t i = 0; i < path.sums.size(); ++i) {
            text += fmt::format("{},{},{}\n", i, sbrw::format_double(path.sums[i]),
                                sbrw::format_double(path.running_min[i]));
        }
        emit(text, f.out);
        return 0;
    }
    const sbrw::BallotParams params{w.a, w.b, w.u, w.v, w.lambda};
    const auto est = sbrw::ballot_probability(law, sbrw::ballot_kind_from_string(w.kind), params, w.n,
                                              f.replicas.value_or(100000), sbrw::replica_stream(seed_or_default(f), 0));
    emit(fmt::format("{} n={} p={} ci=[{}, {}] samples={}\n", w.kind, w.n, sbrw::format_double(est.value),
                     sbrw::format_double(est.ci.low), sbrw::format_double(est.ci.high), est.samples),
         f.out);
    return 0;
}

struct SimFlags {
    std::size_t n = 64;
    std::string ceiling = "logarithmic";
    double ceiling_scale = 20.0;
    std::size_t max_population = 100000;
    std::size_t representatives = 0;
    double beta = 1.0;
    bool survivors = false;
};

int cmd_simulate(const CommonFlags& f, const SimFlags& s)
{
    const auto law = sbrw::make_law(law_spec(f));
    sbrw::TruncationPolicy policy;
    policy.ceiling_kind = sbrw::ceiling_kind_from_string(s.ceiling);
    policy.ceiling_scale = s.ceiling_scale;
    policy.max_population = s.max_population;
    policy.representatives = s.representatives;
    const std::size_t reps = f.replicas.value_or(10);
    std::string text = sbrw::runs_csv_header() + "\n";
    auto append = [&](const sbrw::ForwardRun& run) {
        for (const auto& g : run.stats) {
            text += fmt::format("{},{},{},{},{},{},{},{},{}\n", g.n, sbrw::format_double(g.M_n),
                                sbrw::format_double(g.W_n), sbrw::format_double(g.W_n_beta),
                                sbrw::format_double(g.D_n), sbrw::format_double(g.population),
                                sbrw::format_double(g.truncated_count), run.replica, run.seed);
        }
    };
    if (s.survivors) {
        const auto res = sbrw::survival_runs(law, s.n, policy, s.beta, seed_or_default(f), reps);
        for (const auto& run : res.runs) append(run);
        std::cerr << fmt::format("survival rate {:.4f} [{:.4f}, {:.4f}] over {} attempts\n", res.survival_rate.value,
                                 res.survival_rate.ci.low, res.survival_rate.ci.high, res.attempts);
    } else {
        for (std::size_t r = 0; r < reps; ++r) {
            const std::uint64_t seed = sbrw::replica_seed(seed_or_default(f), r);
            append({r, seed, sbrw::run_forward(law, s.n, policy, s.beta, seed)});
        }
    }
    emit(text, f.out);
    return 0;
}

struct SpineFlags {
    std::size_t n = 20;
    std::string phi;
    double level = 1.0;
};

int cmd_spine(const CommonFlags& f, const SpineFlags& s)
{
    const auto law = sbrw::make_law(law_spec(f));
    if (s.phi.empty()) {
        const auto r = sbrw::sample_spine(law, s.n, seed_or_default(f));
        emit(nlohmann::json(r).dump(2) + "\n", f.out);
        return 0;
    }
    const sbrw::SpineFunctionalSpec phi{sbrw::spine_functional_from_string(s.phi), s.level};
    const auto est = sbrw::size_biased_functional(law, s.n, phi, f.replicas.value_or(100000),
                                                  sbrw::replica_stream(seed_or_default(f), 0));
    emit(fmt::format("E_Q[{}] n={} = {} ci=[{}, {}] samples={}\n", s.phi, s.n, sbrw::format_double(est.value),
                     sbrw::format_double(est.ci.low), sbrw::format_double(est.ci.high), est.samples),
         f.out);
    return 0;
}

int cmd_experiment(const CommonFlags& f, const std::string& preset)
{
    sbrw::ExperimentConfig config = f.config_path.empty() ? sbrw::default_config(preset) : sbrw::load_config(f.config_path);
    if (config.preset != preset) {
        throw sbrw::ConfigError("config file is for preset " + config.preset + ", not " + preset);
    }
    if (f.seed) config.master_seed = *f.seed;
    if (f.replicas) config.replicas = *f.replicas;
    if (f.budget) config.budget = *f.budget;
    if (!f.out.empty()) config.output_dir = f.out;
    sbrw::validate(config);
    const auto dir = sbrw::resolve_output_dir(config);
    const auto result = sbrw::run_experiment(config, f.workers);
    sbrw::write_result(result, dir);
    std::cout << sbrw::verdict_table(preset, result.verdict);
    std::cout << fmt::format("results in {} ({:.1f} s)\n", dir.string(), result.wall_seconds);
    if (!result.complete()) {
        std::cout << fmt::format("incomplete: {} tasks missing, see missing_replicas.json\n", result.missing.size());
        return 1;
    }
    for (const auto& r : result.verdict) {
        if (!r.pass) return 1;
    }
    return 0;
}

int cmd_verdict(const std::string& dir)
{
    const auto record = nlohmann::json::parse(std::ifstream(std::filesystem::path(dir) / "record.json"));
    const auto rules = sbrw::verdict_from_dir(dir);
    std::cout << sbrw::verdict_table(record.value("preset", std::string{}), rules);
    for (const auto& r : rules) {
        if (!r.pass) return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Stable branching random walk toolkit"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto* cc = app.add_subcommand("check-conditions", "Monte Carlo report on the brood-law conditions");
    add_common(*cc, flags);
    add_law(*cc, flags);

    WalkFlags wf;
    auto* walk = app.add_subcommand("walk", "sample a path or estimate a ballot probability");
    add_common(*walk, flags);
    walk->add_option("--alpha", flags.alpha, "tail index");
    walk->add_option("--n", wf.n, "path length");
    walk->add_option("--kind", wf.kind, "stay_above, stay_below, end_below_stay_above, window_split, late_crossing");
    walk->add_option("--a", wf.a);
    walk->add_option("--b", wf.b);
    walk->add_option("--u", wf.u);
    walk->add_option("--v", wf.v);
    walk->add_option("--lambda", wf.lambda);

    SimFlags sf;
    auto* sim = app.add_subcommand("simulate", "forward simulation, runs.csv to --out or stdout");
    add_common(*sim, flags);
    add_law(*sim, flags);
    sim->add_option("--n", sf.n, "generations");
    sim->add_option("--ceiling", sf.ceiling, "logarithmic, constant or none");
    sim->add_option("--ceiling-scale", sf.ceiling_scale);
    sim->add_option("--max-population", sf.max_population);
    sim->add_option("--representatives", sf.representatives);
    sim->add_option("--beta", sf.beta);
    sim->add_flag("--survivors", sf.survivors, "keep only runs surviving to n");

    SpineFlags spf;
    auto* spine = app.add_subcommand("spine", "spine realization as JSON, or E_Q[phi] with --phi");
    add_common(*spine, flags);
    add_law(*spine, flags);
    spine->add_option("--n", spf.n, "spine length");
    spine->add_option("--phi", spf.phi, "one, spine_min_above, terminal_exp_neg");
    spine->add_option("--level", spf.level);

    std::string preset;
    auto* exp = app.add_subcommand("experiment", "run a preset and write its result directory");
    add_common(*exp, flags);
    exp->add_option("preset", preset, "preset id")->required()->check(CLI::IsMember(sbrw::preset_ids()));

    std::string results_dir;
    auto* ver = app.add_subcommand("verdict", "recompute the verdict of a result directory");
    ver->add_option("results-dir", results_dir)->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*cc) return cmd_check_conditions(flags);
        if (*walk) return cmd_walk(flags, wf);
        if (*sim) return cmd_simulate(flags, sf);
        if (*spine) return cmd_spine(flags, spf);
        if (*exp) return cmd_experiment(flags, preset);
        if (*ver) return cmd_verdict(results_dir);
    } catch (const sbrw::BudgetExceeded& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return 3;
    } catch (const sbrw::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const sbrw::DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
