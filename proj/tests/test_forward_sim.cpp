#include "sbrw/errors.hpp"
#include "sbrw/forward_sim.hpp"
#include "sbrw/law_recursion.hpp"
#include "sbrw/stats.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

using namespace sbrw;

namespace {

const BroodLaw& default_brood()
{
    static const BroodLaw law = make_brood_law(default_step_law());
    return law;
}

TruncationPolicy no_ceiling(std::size_t cap)
{
    TruncationPolicy p;
    p.ceiling_kind = CeilingKind::none;
    p.max_population = cap;
    return p;
}

} // namespace

TEST(StepGeneration, ToyRootHasTwoChildren)
{
    const DyadicToyLaw toy = make_dyadic_toy();
    for (std::uint64_t key = 0; key < 100; ++key) {
        const Generation g = step_generation(root_generation(key), toy, no_ceiling(10));
        ASSERT_EQ(g.size(), 2u);
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_NEAR(std::abs(g.positions[i]), toy.u, 1e-15);
            EXPECT_EQ(g.parent_index[i], 0u);
            EXPECT_EQ(g.path_min[i], std::min(0.0, g.positions[i]));
        }
    }
}

TEST(StepGeneration, Extinction)
{
    const ReproductionLaw law = default_brood();
    std::size_t extinct_runs = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto stats = run_forward(law, 20, no_ceiling(2000), 1.0, seed);
        ASSERT_FALSE(stats.empty());
        if (stats.back().population == 0.0) {
            ++extinct_runs;
            EXPECT_TRUE(std::isinf(stats.back().M_n));
            EXPECT_EQ(stats.back().W_n, 0.0);
            EXPECT_LT(stats.size(), 21u);
        }
    }
    EXPECT_GT(extinct_runs, 0u);
    EXPECT_THROW(step_generation(Generation{}, law, no_ceiling(10)), DomainError);
}

TEST(StepGeneration, CeilingBelowMinimumRejected)
{
    TruncationPolicy p;
    p.ceiling_kind = CeilingKind::constant;
    p.ceiling_scale = -5.0;
    EXPECT_THROW(step_generation(root_generation(1), default_brood(), p), DomainError);
    TruncationPolicy zero = no_ceiling(0);
    EXPECT_THROW(validate(zero), DomainError);
}

TEST(StepGeneration, ArraysConsistent)
{
    const ReproductionLaw law = default_brood();
    TruncationPolicy p;
    p.max_population = 500;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Generation g = root_generation(seed);
        for (int n = 0; n < 12 && !g.extinct(); ++n) {
            Generation next = step_generation(g, law, p);
            ASSERT_EQ(next.positions.size(), next.parent_index.size());
            ASSERT_EQ(next.positions.size(), next.path_min.size());
            ASSERT_EQ(next.positions.size(), next.keys.size());
            ASSERT_LE(next.size(), p.max_population);
            for (std::size_t i = 0; i < next.size(); ++i) {
                EXPECT_LE(next.path_min[i], next.positions[i]);
                EXPECT_EQ(next.path_min[i], std::min(g.path_min[next.parent_index[i]], next.positions[i]));
                EXPECT_LE(next.positions[i], p.ceiling(next.gen_index));
            }
            g = std::move(next);
        }
    }
}

TEST(RunForward, ToyMinimumAtOne)
{
    const DyadicToyLaw toy = make_dyadic_toy();
    const std::size_t reps = 200000;
    std::uint64_t low = 0;
    RunningStats w;
    for (std::size_t r = 0; r < reps; ++r) {
        const auto s = run_forward(toy, 1, no_ceiling(10), 1.0, replica_seed(4, r));
        low += s[0].M_n < 0.0 ? 1 : 0;
        w.push(s[0].W_n);
    }
    const double theta = toy.theta;
    const double exact = 1.0 - (1.0 - theta) * (1.0 - theta);
    EXPECT_NEAR(exact, 0.1295, 1e-4);
    EXPECT_TRUE(wilson_interval(low, reps, 0.999).contains(exact)) << low;
    EXPECT_LT(std::abs(w.mean() - 1.0), 3.0 * w.stderr_of_mean());
}

// Truncation only removes particles, and children keep their keys, so the
// truncated run's minimum dominates the full run's pathwise.
TEST(RunForward, TruncationRaisesMinimum)
{
    const ReproductionLaw law = default_brood();
    TruncationPolicy tight;
    tight.ceiling_kind = CeilingKind::constant;
    tight.ceiling_scale = 4.0;
    tight.max_population = 30;
    std::size_t compared = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        const auto full = run_forward(law, 5, no_ceiling(200000), 1.0, seed);
        bool exact = true;
        for (const auto& g : full) exact = exact && g.truncated_count == 0.0;
        if (!exact) continue;
        const auto cut = run_forward(law, 5, tight, 1.0, seed);
        for (std::size_t n = 0; n < cut.size(); ++n) {
            ASSERT_LT(n, full.size());
            EXPECT_GE(cut[n].M_n, full[n].M_n) << seed << " n=" << n + 1;
            EXPECT_LE(cut[n].W_n, full[n].W_n * (1 + 1e-12));
            ++compared;
        }
    }
    EXPECT_GT(compared, 200u);
}

TEST(RunForward, StatisticInvariants)
{
    const ReproductionLaw law = default_brood();
    TruncationPolicy p;
    p.max_population = 2000;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Generation g = root_generation(mix64(seed));
        for (int n = 0; n < 25; ++n) {
            g = step_generation(g, law, p);
            if (g.extinct()) break;
            const GenStats s = summarize(g, 1.0);
            EXPECT_GE(s.W_n, std::exp(-s.M_n) * (1 - 1e-12));
            EXPECT_LE(s.W_n_beta, s.W_n);
            EXPECT_TRUE(std::isfinite(s.W_n) && std::isfinite(s.D_n) && std::isfinite(s.M_n));
            double last = -1.0;
            for (double beta : {0.0, 0.5, 1.0, 2.0, 5.0, 50.0}) {
                const double wb = summarize(g, beta).W_n_beta;
                EXPECT_GE(wb, last);
                last = wb;
            }
        }
    }
}

TEST(RunForward, Deterministic)
{
    const ReproductionLaw law = default_brood();
    TruncationPolicy p;
    p.max_population = 1000;
    for (std::uint64_t seed : {1u, 2u, 99u}) {
        const auto a = run_forward(law, 30, p, 1.0, seed);
        const auto b = run_forward(law, 30, p, 1.0, seed);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].M_n, b[i].M_n);
            EXPECT_EQ(a[i].W_n, b[i].W_n);
            EXPECT_EQ(a[i].D_n, b[i].D_n);
            EXPECT_EQ(a[i].population, b[i].population);
        }
    }
}

TEST(RunForward, DerivativeMartingaleSettles)
{
    const ReproductionLaw law = default_brood();
    TruncationPolicy p;
    p.max_population = 3000;
    const auto res = survival_runs(law, 64, p, 1.0, 5, 150);
    std::vector<double> med;
    for (std::size_t n : {4, 8, 16, 32}) {
        std::vector<double> gaps;
        for (const auto& run : res.runs) gaps.push_back(std::abs(run.stats[2 * n - 1].D_n - run.stats[n - 1].D_n));
        med.push_back(quantile(gaps, 0.5));
    }
    for (std::size_t i = 1; i < med.size(); ++i) EXPECT_LT(med[i], med[i - 1]) << i;
}

TEST(SurvivalRuns, ToyAlwaysSurvives)
{
    const auto res = survival_runs(make_dyadic_toy(), 8, no_ceiling(1000), 1.0, 3, 20);
    EXPECT_EQ(res.attempts, 20u);
    EXPECT_EQ(res.survival_rate.value, 1.0);
    EXPECT_EQ(res.runs.size(), 20u);
}

TEST(SurvivalRuns, BroodRateStableAcrossSeeds)
{
    TruncationPolicy p;
    p.max_population = 500;
    const auto a = survival_runs(default_brood(), 20, p, 1.0, 1, 600);
    const auto b = survival_runs(default_brood(), 20, p, 1.0, 2, 600);
    for (const auto* r : {&a, &b}) {
        EXPECT_GT(r->survival_rate.value, 0.0);
        EXPECT_LT(r->survival_rate.value, 1.0);
        // Root death alone has probability 1 - Z.
        EXPECT_LT(r->survival_rate.value, default_brood().mass);
        for (const auto& run : r->runs) EXPECT_TRUE(run.survived(20));
    }
    const double se = std::hypot(a.survival_rate.stderr_, b.survival_rate.stderr_);
    EXPECT_LT(std::abs(a.survival_rate.value - b.survival_rate.value), 3.0 * se);
    EXPECT_THROW(survival_runs(default_brood(), 20, p, 1.0, 1, 0), ConfigError);
}

// Law recursion of P(M_1 <= x) against the closed form of the first brood.
TEST(LawRecursion, FirstGenerationClosedForm)
{
    const BroodLaw& law = default_brood();
    const double p_r = 0.25, d = 2.0;
    const auto exact = [&](double x) {
        if (x < -d) return 0.0;
        if (x <= 0.0) return (1.0 - p_r) / d * (std::exp(x) - std::exp(-d));
        const double left = (1.0 - p_r) / d * (1.0 - std::exp(-d));
        if (x < 1.0) return left;
        return left + p_r * (1.0 - std::pow(x, -1.5));
    };
    for (double dx : {0.2, 0.05}) {
        LawRecursion rec(law, default_law_grid(law.base, 4, dx), LawTarget::minimum);
        rec.advance_to(1);
        // Cell masses sit on grid points: first-order error where F moves
        // within a cell, second-order (interpolation of F e^{-x}) elsewhere.
        const double second = 0.05 * dx * dx;
        for (double x : {-1.8, -1.0, -0.2, 0.4, 1.0, 2.0, 5.0, 20.0}) {
            EXPECT_LE(std::abs(rec.value(x) - exact(x)), exact(x + dx) - exact(x - dx) + second) << x << " dx=" << dx;
        }
        const double top = rec.grid().x_hi;
        EXPECT_LE(std::abs(rec.limit() - exact(top)), exact(top) - exact(top - dx) + second);
    }
}

// Given survival, M_n from the recursion and from uncapped forward runs agree.
TEST(LawRecursion, MatchesForwardMinimum)
{
    const BroodLaw& law = default_brood();
    for (std::size_t n : {2, 3, 4}) {
        LawRecursion rec(law, default_law_grid(law.base, n, 0.05), LawTarget::minimum);
        rec.advance_to(n);
        std::vector<double> mins;
        for (std::uint64_t r = 0; mins.size() < 4000; ++r) {
            const auto s = run_forward(law, n, no_ceiling(100000), 1.0, replica_seed(700 + n, r));
            if (s.size() == n && s.back().population > 0.0 && s.back().M_n <= rec.grid().x_hi) mins.push_back(s.back().M_n);
        }
        const double limit = rec.limit();
        const auto ks = ks_one_sample(mins, [&](double x) { return std::min(1.0, rec.value(x) / limit); });
        EXPECT_GT(ks.p_value, 0.001) << "n=" << n << " D=" << ks.statistic;
    }
}
