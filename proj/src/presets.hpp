#pragma once

// Internal interface between run_experiment and the preset runners.

#include "sbrw/harness.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sbrw::detail {

/// Wraps orchestrate with a running task offset, so every task of an
/// experiment has a global index and fault injection sees those indices.
class Runner {
public:
    Runner(std::size_t workers, OrchestrateOptions options) : workers_(workers), options_(std::move(options)) {}

    /// Runs fn(i) for i < count. Unfinished tasks come back empty and are
    /// recorded with their label.
    template <class T>
    std::vector<std::optional<T>> map(std::size_t count, const std::function<T(std::size_t)>& fn,
                                      const std::function<std::string(std::size_t)>& label)
    {
        std::vector<std::optional<T>> slots(count);
        const std::size_t offset = offset_;
        OrchestrateOptions shifted;
        if (options_.fail_before) {
            shifted.fail_before = [&](std::size_t i) { return options_.fail_before(offset + i); };
        }
        const Orchestrated done = orchestrate(
            count, workers_,
            [&](std::size_t i) {
                slots[i] = fn(i);
                return TaskOutput{};
            },
            shifted);
        for (std::size_t i : done.missing) {
            slots[i].reset();
            missing_.push_back(offset + i);
            missing_labels_.push_back(label(i));
        }
        offset_ += count;
        return slots;
    }

    [[nodiscard]] const std::vector<std::size_t>& missing() const noexcept { return missing_; }
    [[nodiscard]] const std::vector<std::string>& missing_labels() const noexcept { return missing_labels_; }

private:
    std::size_t workers_;
    OrchestrateOptions options_;
    std::size_t offset_ = 0;
    std::vector<std::size_t> missing_;
    std::vector<std::string> missing_labels_;
};

struct PresetOutput {
    std::vector<DataPoint> points;
    std::vector<std::string> run_rows;
    nlohmann::json extra = nlohmann::json::object();
};

PresetOutput run_check_conditions(const ExperimentConfig& c, Runner& runner);
PresetOutput run_mto_oracle(const ExperimentConfig& c, Runner& runner);
PresetOutput run_lemma21(const ExperimentConfig& c, Runner& runner);
PresetOutput run_lemma32(const ExperimentConfig& c, Runner& runner);
PresetOutput run_lemma41(const ExperimentConfig& c, Runner& runner);
PresetOutput run_median_mn(const ExperimentConfig& c, Runner& runner);
PresetOutput run_wn_decay(const ExperimentConfig& c, Runner& runner);
PresetOutput run_wn_max(const ExperimentConfig& c, Runner& runner);
PresetOutput run_integral_test(const ExperimentConfig& c, Runner& runner);
PresetOutput run_lower_envelope(const ExperimentConfig& c, Runner& runner);

/// Constant ceilings used for the truncation-bias check.
inline const std::vector<double> kBiasCeilings{10.0, 20.0, 30.0};
/// Generation of the change-of-measure check. Var W_n grows roughly like
/// 2.5^n for the default law, so larger n needs far more replicas.
inline constexpr std::size_t kSpineCheckN = 4;
/// Generation and replica count of the truncation-bias check.
inline constexpr std::size_t kBiasN = 10;
inline constexpr std::size_t kBiasReplicas = 100000;
/// Increments per side for the spine KS check.
inline constexpr std::size_t kSpineKsSamples = 100000;
/// Step samples for the exact-CDF KS check.
inline constexpr std::size_t kStepKsSamples = 1000000;
/// First generation inspected by the qualitative envelope presets.
inline constexpr std::size_t kEnvelopeStart = 16;

} // namespace sbrw::detail
