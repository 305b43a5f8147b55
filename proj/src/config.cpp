#include "sbrw/config.hpp"

#include "sbrw/errors.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace sbrw {

ReproductionLaw make_law(const LawSpec& spec)
{
    if (spec.family == "brood") return make_brood_law(make_step_law(spec.alpha, spec.x_m, spec.d));
    if (spec.family == "dyadic_toy") return make_dyadic_toy();
    throw ConfigError("unknown law family: " + spec.family);
}

const std::vector<std::string>& preset_ids()
{
    static const std::vector<std::string> ids{"check-conditions", "mto-oracle", "lemma21",        "lemma32",
                                              "lemma41",          "median-mn",  "wn-decay",       "wn-max",
                                              "integral-test",    "lower-envelope"};
    return ids;
}

std::vector<std::size_t> dyadic_schedule(unsigned j_min, unsigned j_max)
{
    std::vector<std::size_t> out;
    for (unsigned j = j_min; j <= j_max; ++j) out.push_back(std::size_t{1} << j);
    return out;
}

ExperimentConfig default_config(const std::string& preset)
{
    ExperimentConfig c;
    c.preset = preset;
    if (preset == "check-conditions") {
        c.replicas = 1000000;
        c.tolerances = {{"boundary_sigmas", 3.0}, {"hill_alpha", 0.1}, {"tail_slope", 0.1}, {"ks_distance", 0.005},
                        {"moment_sigmas", 2.0}};
    } else if (preset == "mto-oracle") {
        c.n_schedule = {4, 8};
        c.replicas = 1000000;
        c.truncation.representatives = 4;
        c.truncation.max_population = 1000000;
        c.truncation.ceiling_kind = CeilingKind::none;
        c.tolerances = {{"dyadic_exact", 1e-12}, {"ks_p_value", 0.01}};
    } else if (preset == "lemma21") {
        c.n_schedule = dyadic_schedule(6, 14);
        c.replicas = 100000;
        c.tolerances = {{"slope", 0.07}};
    } else if (preset == "lemma32") {
        c.n_schedule = {64, 128};
        c.lambda_grid = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
        c.replicas = 100000;
        c.tolerances = {{"slope", 0.2}};
    } else if (preset == "lemma41") {
        c.n_schedule = {256};
        c.lambda_grid = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
        c.replicas = 10000;
        c.truncation.max_population = 2000;
        c.tolerances = {{"slope", 0.2}, {"min_surviving_runs", 10000}};
    } else if (preset == "median-mn") {
        c.n_schedule = dyadic_schedule(5, 11);
        c.replicas = 200;
        c.truncation.max_population = 2000;
        c.tolerances = {{"slope", 0.15}};
    } else if (preset == "wn-decay") {
        c.n_schedule = dyadic_schedule(5, 11);
        c.replicas = 200;
        c.truncation.representatives = 4;
        c.truncation.max_population = 20000;
        c.tolerances = {{"slope", 0.1}};
    } else if (preset == "wn-max") {
        c.n_schedule = dyadic_schedule(3, 5);
        c.lambda_grid = {1.0, 2.0, 4.0, 8.0, 16.0};
        c.replicas = 2000;
        c.engine = "forward";
        c.truncation.representatives = 4;
        c.truncation.max_population = 20000;
    } else if (preset == "integral-test" || preset == "lower-envelope") {
        c.n_schedule = {512};
        c.replicas = 50;
        c.engine = "forward";
        c.truncation.max_population = 2000;
    } else {
        throw ConfigError("unknown preset: " + preset);
    }
    return c;
}

void validate(const ExperimentConfig& c)
{
    const auto& ids = preset_ids();
    if (std::find(ids.begin(), ids.end(), c.preset) == ids.end()) throw ConfigError("unknown preset: " + c.preset);
    if (c.replicas == 0) throw ConfigError("replicas must be >= 1");
    for (std::size_t i = 1; i < c.n_schedule.size(); ++i) {
        if (c.n_schedule[i] <= c.n_schedule[i - 1]) throw ConfigError("n_schedule must be strictly increasing");
    }
    if (!c.n_schedule.empty() && c.n_schedule.front() == 0) throw ConfigError("n_schedule entries must be >= 1");
    if (c.engine != "recursion" && c.engine != "forward") throw ConfigError("engine must be recursion or forward");
    if (!(c.grid_dx > 0.0)) throw DomainError("grid_dx must be positive");
    if (!(c.budget > 0.0)) throw ConfigError("budget must be positive");
    sbrw::validate(c.truncation);
    (void)make_law(c.law);
}

namespace {

nlohmann::json truncation_json(const TruncationPolicy& p)
{
    return {{"ceiling", std::string(to_string(p.ceiling_kind))},
            {"ceiling_scale", p.ceiling_scale},
            {"max_population", p.max_population},
            {"representatives", p.representatives}};
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

} // namespace

void to_json(nlohmann::json& j, const ExperimentConfig& c)
{
    j = nlohmann::json{
        {"preset", c.preset},
        {"law", {{"family", c.law.family}, {"alpha", c.law.alpha}, {"x_m", c.law.x_m}, {"d", c.law.d}}},
        {"n_schedule", c.n_schedule},
        {"lambda_grid", c.lambda_grid},
        {"beta_grid", c.beta_grid},
        {"replicas", c.replicas},
        {"master_seed", c.master_seed},
        {"truncation", truncation_json(c.truncation)},
        {"barrier",
         {{"K", c.barrier.K},
          {"c_prime", c.barrier.c_prime},
          {"forward_n", c.barrier.forward_n},
          {"forward_replicas", c.barrier.forward_replicas},
          {"forward_lambda_grid", c.barrier.forward_lambda_grid},
          {"max_population", c.barrier.max_population}}},
        {"ballot_a", c.ballot_a},
        {"engine", c.engine},
        {"grid_dx", c.grid_dx},
        {"tolerances", c.tolerances},
        {"output_dir", c.output_dir},
        {"budget", c.budget},
    };
}

ExperimentConfig config_from_json(const nlohmann::json& j)
{
    check_keys(j,
               {"preset", "law", "n_schedule", "lambda_grid", "beta_grid", "replicas", "master_seed", "truncation",
                "barrier", "ballot_a", "engine", "grid_dx", "tolerances", "output_dir", "budget"},
               "config");
    std::string preset = "check-conditions";
    read(j, "preset", preset);
    ExperimentConfig c = default_config(preset);
    if (j.contains("law")) {
        const auto& l = j.at("law");
        check_keys(l, {"family", "alpha", "x_m", "d"}, "law");
        read(l, "family", c.law.family);
        read(l, "alpha", c.law.alpha);
        read(l, "x_m", c.law.x_m);
        read(l, "d", c.law.d);
    }
    read(j, "n_schedule", c.n_schedule);
    read(j, "lambda_grid", c.lambda_grid);
    read(j, "beta_grid", c.beta_grid);
    read(j, "replicas", c.replicas);
    read(j, "master_seed", c.master_seed);
    if (j.contains("truncation")) {
        const auto& t = j.at("truncation");
        check_keys(t, {"ceiling", "ceiling_scale", "max_population", "representatives"}, "truncation");
        std::string kind(to_string(c.truncation.ceiling_kind));
        read(t, "ceiling", kind);
        c.truncation.ceiling_kind = ceiling_kind_from_string(kind);
        read(t, "ceiling_scale", c.truncation.ceiling_scale);
        read(t, "max_population", c.truncation.max_population);
        read(t, "representatives", c.truncation.representatives);
    }
    if (j.contains("barrier")) {
        const auto& b = j.at("barrier");
        check_keys(b, {"K", "c_prime", "forward_n", "forward_replicas", "forward_lambda_grid", "max_population"},
                   "barrier");
        read(b, "K", c.barrier.K);
        read(b, "c_prime", c.barrier.c_prime);
        read(b, "forward_n", c.barrier.forward_n);
        read(b, "forward_replicas", c.barrier.forward_replicas);
        read(b, "forward_lambda_grid", c.barrier.forward_lambda_grid);
        read(b, "max_population", c.barrier.max_population);
    }
    read(j, "ballot_a", c.ballot_a);
    read(j, "engine", c.engine);
    read(j, "grid_dx", c.grid_dx);
    if (j.contains("tolerances")) {
        std::map<std::string, double> extra;
        read(j, "tolerances", extra);
        for (const auto& [k, v] : extra) c.tolerances[k] = v;
    }
    read(j, "output_dir", c.output_dir);
    read(j, "budget", c.budget);
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

double tolerance(const ExperimentConfig& c, const std::string& rule)
{
    const auto it = c.tolerances.find(rule);
    if (it == c.tolerances.end()) throw ConfigError("no tolerance configured for rule " + rule);
    return it->second;
}

} // namespace sbrw
