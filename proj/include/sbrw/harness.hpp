#pragma once

#include "sbrw/config.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sbrw {

/// One row of points.csv. `series` names the curve, `x` its abscissa.
struct DataPoint {
    std::string series;
    double x = 0.0;
    double estimate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::uint64_t samples = 0;
};

/// Outcome of one verdict rule. Report-only rules never fail.
struct RuleOutcome {
    std::string id;
    std::string description;
    double value = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    bool report_only = false;
};

struct PresetInfo {
    std::string id;
    /// Qualitative presets emit counts and summaries only, never pass/fail rules.
    bool qualitative = false;
    std::string summary;
};

const PresetInfo& preset_info(const std::string& id);

/// Output of one orchestrated task.
struct TaskOutput {
    std::vector<DataPoint> points;
    /// Rows for runs.csv, already formatted.
    std::vector<std::string> run_rows;
    /// Per-task scalar features used by the preset's aggregation.
    std::vector<double> features;
    bool survived = true;
    nlohmann::json extra;
};

struct OrchestrateOptions {
    /// Fault injection: returning true makes the worker that owns the task
    /// stop before running it, leaving that task and its later ones unfinished.
    std::function<bool(std::size_t task)> fail_before;
};

struct Orchestrated {
    std::vector<std::optional<TaskOutput>> outputs; // by task index
    std::vector<std::size_t> missing;               // unfinished task indices, ascending
};

/// Runs tasks 0..count-1 on `workers` threads; task i goes to worker i % workers.
/// Outputs are stored by index, so merged results do not depend on the
/// worker count or completion order. Throws ConfigError if workers == 0.
Orchestrated orchestrate(std::size_t count, std::size_t workers, const std::function<TaskOutput(std::size_t)>& task,
                         const OrchestrateOptions& options = {});

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<DataPoint> points;
    std::vector<std::string> run_rows;
    nlohmann::json extra = nlohmann::json::object();
    std::vector<RuleOutcome> verdict;
    std::vector<std::size_t> missing;
    double wall_seconds = 0.0;

    [[nodiscard]] bool complete() const noexcept { return missing.empty(); }
};

/// Closed-form estimate of particle steps (or grid-cell updates) for a config.
double estimate_cost(const ExperimentConfig& config);

/// Runs a preset. Throws BudgetExceeded before any work if the estimated
/// cost exceeds config.budget.
ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t workers,
                                const OrchestrateOptions& options = {});

/// Verdict as a pure function of the stored points.
std::vector<RuleOutcome> compute_verdict(const ExperimentConfig& config, const std::vector<DataPoint>& points);

/// Writes record.json, points.csv, runs.csv (when present), timing.json and,
/// for incomplete runs, missing_replicas.json. Files are written atomically.
void write_result(const ExperimentResult& result, const std::filesystem::path& dir);

/// Reads record.json and points.csv from `dir` and recomputes the verdict.
std::vector<RuleOutcome> verdict_from_dir(const std::filesystem::path& dir);

std::string points_csv_header();
std::string runs_csv_header();
std::string format_double(double v);
std::string format_point(const DataPoint& p);
std::vector<DataPoint> parse_points_csv(const std::string& text);

/// Plain-text verdict table.
std::string verdict_table(const std::string& preset, const std::vector<RuleOutcome>& rules);

/// Output directory: config.output_dir, else $SBRW_OUT_ROOT/<preset>, else results/<preset>.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

} // namespace sbrw
