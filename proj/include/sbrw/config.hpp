#pragma once

#include "sbrw/forward_sim.hpp"
#include "sbrw/reproduction.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sbrw {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSoftwareVersion = "0.1.0";
/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "SBRW_OUT_ROOT";

struct LawSpec {
    std::string family = "brood"; // "brood" or "dyadic_toy"
    double alpha = 1.5;
    double x_m = 1.0;
    double d = 2.0;
};

ReproductionLaw make_law(const LawSpec& spec);

struct BarrierConfig {
    double K = 5.0;
    double c_prime = 10.0;
    std::size_t forward_n = 64;
    std::size_t forward_replicas = 300;
    std::vector<double> forward_lambda_grid{0.0, 1.0, 2.0, 3.0};
    std::size_t max_population = 2000;
};

struct ExperimentConfig {
    std::string preset = "check-conditions";
    LawSpec law;
    std::vector<std::size_t> n_schedule;
    std::vector<double> lambda_grid;
    std::vector<double> beta_grid{1.0};
    std::size_t replicas = 1000;
    std::uint64_t master_seed = 20240601;
    TruncationPolicy truncation;
    BarrierConfig barrier;
    double ballot_a = 1.0;
    /// "recursion" (deterministic law recursion) or "forward" (Monte Carlo).
    std::string engine = "recursion";
    double grid_dx = 0.2;
    /// Verdict tolerances by rule id.
    std::map<std::string, double> tolerances;
    std::string output_dir;
    /// Pre-flight particle-step budget.
    double budget = 5e10;
};

/// Every known preset id in a fixed order.
const std::vector<std::string>& preset_ids();

/// Defaults for a preset; throws ConfigError for unknown ids.
ExperimentConfig default_config(const std::string& preset);

/// Throws ConfigError / DomainError on invalid settings.
void validate(const ExperimentConfig& config);

/// n_j = 2^j for j_min <= j <= j_max.
std::vector<std::size_t> dyadic_schedule(unsigned j_min, unsigned j_max);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys take the preset defaults; unknown keys are a ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);

double tolerance(const ExperimentConfig& c, const std::string& rule);

} // namespace sbrw
