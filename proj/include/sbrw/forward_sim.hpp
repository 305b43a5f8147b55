#pragma once

#include "sbrw/reproduction.hpp"

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace sbrw {

enum class CeilingKind {
    /// C(n) = scale * (1 + log(1 + n)).
    logarithmic,
    /// C(n) = scale.
    constant,
    /// No ceiling; only the population cap applies.
    none,
};

std::string_view to_string(CeilingKind kind) noexcept;
CeilingKind ceiling_kind_from_string(std::string_view name);

/// Children born above C(n) are discarded; if a generation still exceeds
/// max_population, the lowest particles are kept.
///
/// With representatives = R > 0 a cluster of N co-located children is carried
/// by min(N, R) particles of weight N / min(N, R). Additive functionals stay
/// unbiased; M_n then refers to the represented particles only.
struct TruncationPolicy {
    CeilingKind ceiling_kind = CeilingKind::logarithmic;
    double ceiling_scale = 20.0;
    std::size_t max_population = 100000;
    std::size_t representatives = 0;

    [[nodiscard]] double ceiling(std::size_t n) const noexcept;
};

/// Throws DomainError on max_population == 0 or a nonpositive scale.
void validate(const TruncationPolicy& policy);

/// Living particles of generation `gen_index`. Each particle owns a random
/// key; its brood is drawn from Stream(key) and child number j of the brood
/// gets key combine_keys(key, j). Runs that differ only in truncation are
/// therefore coupled particle by particle.
struct Generation {
    std::size_t gen_index = 0;
    std::vector<double> positions;
    std::vector<std::uint32_t> parent_index;
    std::vector<double> path_min;
    /// log of the multiplicity each particle represents (0 without representatives).
    std::vector<double> log_weights;
    std::vector<std::uint64_t> keys;
    /// Children discarded while producing this generation (saturating).
    double truncated_count = 0.0;
    /// Their sum of multiplicity * exp(-position).
    double truncated_weight = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return positions.size(); }
    [[nodiscard]] bool extinct() const noexcept { return positions.empty(); }
};

/// One particle at 0 with the given key.
Generation root_generation(std::uint64_t key);

/// Next generation. Throws DomainError if the population is empty or if the
/// next ceiling does not exceed the current minimum.
Generation step_generation(const Generation& gen, const ReproductionLaw& law, const TruncationPolicy& policy);

struct GenStats {
    std::size_t n = 0;
    double M_n = 0.0;
    double W_n = 0.0;
    double W_n_beta = 0.0;
    double D_n = 0.0;
    double population = 0.0;
    double truncated_count = 0.0;
    double truncated_weight = 0.0;
};

GenStats summarize(const Generation& gen, double beta);

/// Statistics for generations 1..n_max, stopping after the first extinct
/// generation (whose M_n is +inf).
std::vector<GenStats> run_forward(const ReproductionLaw& law, std::size_t n_max, const TruncationPolicy& policy,
                                  double beta, std::uint64_t seed);

struct ForwardRun {
    std::uint64_t replica = 0;
    std::uint64_t seed = 0;
    std::vector<GenStats> stats;

    [[nodiscard]] bool survived(std::size_t n_max) const noexcept
    {
        return stats.size() == n_max && stats.back().population > 0.0;
    }
};

/// Seed of attempt `replica` under `master_seed`.
std::uint64_t replica_seed(std::uint64_t master_seed, std::uint64_t replica) noexcept;

struct SurvivalResult {
    std::vector<ForwardRun> runs; // surviving runs in attempt order
    std::uint64_t attempts = 0;
    Estimate survival_rate;
};

/// Attempts 0, 1, 2, ... until `want` runs survive to n_max.
/// Throws ConfigError if want == 0 and InsufficientData if the survival
/// rate is below 1e-3 after 10^4 attempts.
SurvivalResult survival_runs(const ReproductionLaw& law, std::size_t n_max, const TruncationPolicy& policy,
                             double beta, std::uint64_t master_seed, std::size_t want);

} // namespace sbrw
