#include "sbrw/errors.hpp"
#include "sbrw/reproduction.hpp"
#include "sbrw/stable_walk.hpp"
#include "sbrw/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

using namespace sbrw;

namespace {

const BroodLaw& default_brood()
{
    static const BroodLaw law = make_brood_law(default_step_law());
    return law;
}

// Exact mass of p over [lo, hi] for the default law, written out independently.
double step_mass(double lo, double hi)
{
    const double p_r = 0.25, d = 2.0, alpha = 1.5;
    double m = 0.0;
    const double l0 = std::max(lo, -d), h0 = std::min(hi, 0.0);
    if (h0 > l0) m += (1.0 - p_r) * (h0 - l0) / d;
    const double l1 = std::max(lo, 1.0);
    if (hi > l1) m += p_r * (std::pow(l1, -alpha) - (std::isinf(hi) ? 0.0 : std::pow(hi, -alpha)));
    return m;
}

} // namespace

TEST(BroodLaw, MassClosedForm)
{
    const BroodLaw& law = default_brood();
    const double d = 2.0, p_r = 0.25;
    const double z = p_r + (1.0 - p_r) * (1.0 - std::exp(-d)) / d;
    EXPECT_NEAR(law.mass, z, 1e-8);
    EXPECT_NEAR(law.mass, 0.5742, 1e-4);
}

TEST(BroodLaw, MassInUnitIntervalOnGrid)
{
    for (double alpha : {1.1, 1.5, 1.9}) {
        for (double x_m : {0.2, 1.0, 4.0}) {
            for (double d : {0.1, 1.0, 10.0}) {
                const BroodLaw law = make_brood_law(make_step_law(alpha, x_m, d));
                EXPECT_GT(law.mass, 0.0);
                EXPECT_LE(law.mass, 1.0);
                const double closed = law.base.p_r + (1.0 - law.base.p_r) * (1.0 - std::exp(-d)) / d;
                EXPECT_NEAR(law.mass, closed, 1e-8 * closed);
            }
        }
    }
}

TEST(BroodLaw, BoundaryConditionsByMonteCarlo)
{
    const BroodLaw& law = default_brood();
    const Stream stream(99);
    RunningStats w, v;
    for (std::size_t r = 0; r < 300000; ++r) {
        Stream s = stream.split(r);
        const Brood b = sample_brood(law, 3.0, s);
        double x = 0.0, xv = 0.0;
        for (const auto& c : b.view()) {
            ASSERT_NEAR(c.position - 3.0, c.offset, 1e-12);
            x += c.offset_weight;
            xv += c.offset * c.offset_weight;
        }
        EXPECT_LE(x, 1.0 + std::exp(2.0) + 1e-9);
        w.push(x);
        v.push(xv);
    }
    EXPECT_LT(std::abs(w.mean() - 1.0), 3.0 * w.stderr_of_mean());
    EXPECT_LT(std::abs(v.mean()), 3.0 * v.stderr_of_mean());
}

TEST(BroodLaw, IntensityMatchesStepDensity)
{
    const BroodLaw& law = default_brood();
    const std::vector<std::pair<double, double>> bins{
        {-2.0, -1.0}, {-1.0, 0.0}, {1.0, 1.5}, {1.5, 3.0}, {3.0, 10.0}, {10.0, INFINITY}};
    std::vector<RunningStats> acc(bins.size());
    const Stream stream(7);
    for (std::size_t r = 0; r < 400000; ++r) {
        Stream s = stream.split(r);
        const Brood b = sample_brood(law, 0.0, s);
        for (std::size_t i = 0; i < bins.size(); ++i) {
            double x = 0.0;
            for (const auto& c : b.view()) {
                if (c.offset >= bins[i].first && c.offset < bins[i].second) x += c.offset_weight;
            }
            acc[i].push(x);
        }
    }
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const Estimate e = acc[i].estimate(0.999);
        const double exact = step_mass(bins[i].first, bins[i].second);
        EXPECT_TRUE(e.ci.contains(exact)) << i << ": " << e.value << " vs " << exact;
    }
}

// E[N] is infinite, so E[min(N, cap)] keeps growing with the cap.
TEST(BroodLaw, CappedSizeGrows)
{
    const std::vector<double> grid{1, 2, 4, 8, 16};
    const ConditionReport rep = check_conditions(default_brood(), 200000, grid, Stream(5));
    const double a = rep.row("mean_size_cap_1e2").estimate;
    const double b = rep.row("mean_size_cap_1e4").estimate;
    const double c = rep.row("mean_size_cap_1e6").estimate;
    EXPECT_LT(a, b);
    EXPECT_LT(b, c);
    // P(N > cap) ~ p_r (log cap)^{-alpha}: each step adds at least several units.
    EXPECT_GT(b - a, 5.0);
    EXPECT_GT(c - b, 500.0);
}

TEST(BroodLaw, RandomizedRoundingPerBin)
{
    const BroodLaw& law = default_brood();
    std::map<int, RunningStats> diff;
    const Stream stream(31);
    for (std::size_t r = 0; r < 400000; ++r) {
        Stream s = stream.split(r);
        const Brood b = sample_brood(law, 0.0, s);
        if (b.empty()) continue;
        const Cluster& c = b.clusters[0];
        if (c.offset > 12.0) continue;
        const int bin = static_cast<int>(std::floor(c.offset * 4.0));
        diff[bin].push(c.count - std::max(1.0, std::exp(c.offset)));
    }
    int checked = 0;
    for (const auto& [bin, st] : diff) {
        if (st.count() < 200) continue;
        // |N - lambda| < 1, so the standard error is below 0.5/sqrt(count).
        EXPECT_LT(std::abs(st.mean()), 4.5 * 0.5 / std::sqrt(static_cast<double>(st.count()))) << bin;
        ++checked;
    }
    EXPECT_GT(checked, 10);
}

TEST(BroodLaw, EmptyBroodProbability)
{
    const BroodLaw& law = default_brood();
    std::uint64_t empty = 0;
    const std::size_t n = 200000;
    for (std::size_t r = 0; r < n; ++r) {
        Stream s(combine_keys(17, r));
        empty += sample_brood(law, 0.0, s).empty() ? 1 : 0;
    }
    EXPECT_TRUE(wilson_interval(empty, n, 0.999).contains(1.0 - law.mass));
}

TEST(DyadicToy, Constants)
{
    const DyadicToyLaw toy = make_dyadic_toy();
    EXPECT_NEAR(toy.u, 1.316958, 1e-6);
    EXPECT_NEAR(toy.theta, 0.066987, 1e-6);
    EXPECT_NEAR(std::cosh(toy.u), 2.0, 1e-12);
    EXPECT_NEAR(toy.theta, std::exp(-toy.u) / 4.0, 1e-12);
}

TEST(DyadicToy, BoundaryIdentitiesExact)
{
    const DyadicToyLaw t = make_dyadic_toy();
    const double mass = 2.0 * (t.theta * std::exp(t.u) + (1.0 - t.theta) * std::exp(-t.u));
    const double deriv = 2.0 * (t.theta * (-t.u) * std::exp(t.u) + (1.0 - t.theta) * t.u * std::exp(-t.u));
    EXPECT_NEAR(mass, 1.0, 1e-12);
    EXPECT_NEAR(deriv, 0.0, 1e-12);
    EXPECT_NEAR(2.0 * t.theta * std::exp(t.u), 0.5, 1e-12);
}

TEST(DyadicToy, BroodSupportAndW1Law)
{
    const DyadicToyLaw t = make_dyadic_toy();
    const double s3 = std::sqrt(3.0);
    const std::vector<double> support{2.0 * (2.0 + s3), std::exp(t.u) + std::exp(-t.u), 2.0 * (2.0 - s3)};
    const std::vector<double> probs{t.theta * t.theta, 2.0 * t.theta * (1.0 - t.theta), (1.0 - t.theta) * (1.0 - t.theta)};
    EXPECT_NEAR(support[1], 4.0, 1e-12);
    std::vector<std::uint64_t> hits(3, 0);
    const std::size_t n = 200000;
    for (std::size_t r = 0; r < n; ++r) {
        Stream s(combine_keys(5, r));
        const Brood b = sample_brood(t, 0.0, s);
        ASSERT_EQ(b.size, 2u);
        double w = 0.0;
        for (const auto& c : b.view()) {
            ASSERT_TRUE(std::abs(c.offset - t.u) < 1e-15 || std::abs(c.offset + t.u) < 1e-15);
            ASSERT_EQ(c.count, 1.0);
            w += c.offset_weight;
        }
        int matched = -1;
        for (int i = 0; i < 3; ++i) {
            if (std::abs(w - support[i]) < 1e-9) matched = i;
        }
        ASSERT_GE(matched, 0) << w;
        ++hits[matched];
    }
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(wilson_interval(hits[i], n, 0.999).contains(probs[i])) << i;
}

TEST(ManyToOne, DyadicClosedForm)
{
    const DyadicToyLaw t = make_dyadic_toy();
    const PathFunctionalSpec g{PathFunctional::leaf_nonpositive, 0.0};
    // Four leaves, each at or below 0 iff at least one of its two steps is -u.
    const double oracle = 4.0 * (2.0 * t.theta - t.theta * t.theta);
    EXPECT_NEAR(oracle, (9.0 - 4.0 * std::sqrt(3.0)) / 4.0, 1e-14);
    EXPECT_NEAR(dyadic_tree_expectation(t, g, 2), oracle, 1e-12);
    EXPECT_NEAR(dyadic_walk_expectation(t, g, 2), oracle, 1e-12);
}

TEST(ManyToOne, DyadicIdentityEveryFunctional)
{
    const DyadicToyLaw t = make_dyadic_toy();
    for (const auto& g : path_functional_catalog()) {
        for (std::size_t n = 1; n <= 3; ++n) {
            EXPECT_NEAR(dyadic_tree_expectation(t, g, n), dyadic_walk_expectation(t, g, n), 1e-12)
                << to_string(g.id) << " n=" << n;
        }
    }
    EXPECT_NEAR(dyadic_tree_expectation(t, {PathFunctional::unit_weight, 0.0}, 3), 1.0, 1e-12);
}

TEST(ManyToOne, BroodLawSmallN)
{
    const ReproductionLaw law = default_brood();
    for (const auto& g : path_functional_catalog()) {
        const auto r = many_to_one_check(law, g, 3, 400000, Stream(12));
        EXPECT_TRUE(r.consistent) << to_string(g.id) << " " << r.tree_side.value << " " << r.walk_side.value;
    }
    const auto unit = many_to_one_check(law, {PathFunctional::unit_weight, 0.0}, 2, 1000, Stream(1));
    EXPECT_EQ(unit.walk_side.value, 1.0);
}

// Walk side of the barrier functional is P(min S >= -a); compare with ballot_probability.
TEST(ManyToOne, BarrierAgreesWithBallot)
{
    const ReproductionLaw law = default_brood();
    const double a = 1.0;
    const auto r = many_to_one_check(law, {PathFunctional::barrier_weight, a}, 6, 40000, Stream(3));
    BallotParams p;
    p.a = a;
    const Estimate b = ballot_probability(default_step_law(), BallotKind::stay_above, p, 6, 40000, Stream(4));
    EXPECT_TRUE(r.walk_side.ci.overlaps(b.ci)) << r.walk_side.value << " " << b.value;
    EXPECT_TRUE(r.tree_side.ci.overlaps(b.ci)) << r.tree_side.value << " " << b.value;
}

TEST(ManyToOne, CatalogIsClosed)
{
    EXPECT_THROW(path_functional_from_string("exp_plus"), ConfigError);
    for (const auto& g : path_functional_catalog()) {
        EXPECT_EQ(path_functional_from_string(to_string(g.id)), g.id);
        // e^{s} g stays below max(1, e^{level}) on a wide range of end points.
        const double bound = std::max(1.0, std::exp(g.level));
        for (double s = -50; s <= 50; s += 0.5) EXPECT_LE(walk_side_integrand(g, std::min(s, 0.0), s), bound + 1e-12);
    }
}

TEST(Conditions, ToyFlagsTailByDesign)
{
    const std::vector<double> grid{1, 2, 4, 8};
    const ConditionReport rep = check_conditions(make_dyadic_toy(), 10000, grid, Stream(2));
    const ConditionRow& tail = rep.row("right_tail_slope");
    EXPECT_EQ(tail.estimate, 0.0);
    EXPECT_NE(tail.note.find("violates"), std::string::npos);
    for (const auto& row : rep.rows) {
        const bool half = row.name.find("_half") != std::string::npos;
        EXPECT_EQ(row.reps, half ? 5000u : 10000u) << row.name;
        EXPECT_EQ(row.seed, Stream(2).key()) << row.name;
    }
    EXPECT_NEAR(rep.row("mean_weight").estimate, 1.0, 4 * rep.row("mean_weight").stderr_);
}

TEST(Conditions, BroodTailAndMoments)
{
    const std::vector<double> grid{1, 2, 4, 8, 16, 32};
    const ConditionReport rep = check_conditions(default_brood(), 400000, grid, Stream(8));
    EXPECT_NEAR(rep.row("right_tail_slope").estimate, -1.5, 0.1);
    EXPECT_NEAR(rep.row("right_tail_hill").estimate, 1.5, 0.1);
    EXPECT_EQ(rep.row("left_tail").estimate, 0.0);
    for (const char* name : {"moment_x", "moment_x_tilde"}) {
        const ConditionRow& full = rep.row(name);
        const ConditionRow& half = rep.row(std::string(name) + "_half");
        EXPECT_TRUE(std::isfinite(full.estimate));
        // Half is a subsample of full: the difference has variance about stderr_half^2 / 2.
        EXPECT_LT(std::abs(full.estimate - half.estimate), 2.0 * half.stderr_) << name;
    }
    EXPECT_THROW((void)rep.row("nope"), ConfigError);
    EXPECT_THROW(check_conditions(default_brood(), 9999, grid, Stream(8)), ConfigError);
}
