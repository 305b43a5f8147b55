#include "sbrw/errors.hpp"
#include "sbrw/stable_walk.hpp"
#include "sbrw/stats.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

using namespace sbrw;

namespace {

// Closed-form CDF written out here rather than taken from StepLaw::cdf.
double reference_cdf(double alpha, double x_m, double d, double p_r, double s)
{
    if (s < -d) return 0.0;
    if (s <= 0.0) return (1.0 - p_r) * (s + d) / d;
    if (s < x_m) return 1.0 - p_r;
    return 1.0 - p_r * std::pow(x_m / s, alpha);
}

double numeric_mean(const StepLaw& law)
{
    using boost::math::quadrature::gauss_kronrod;
    using boost::math::quadrature::exp_sinh;
    const auto f = [&](double s) { return s * law.density(s); };
    const double left = gauss_kronrod<double, 61>::integrate(f, -law.d, 0.0, 15, 1e-14);
    exp_sinh<double> tail;
    const double right = tail.integrate(f, law.x_m, std::numeric_limits<double>::infinity(), 1e-13);
    return left + right;
}

} // namespace

TEST(StepLaw, DefaultCalibration)
{
    const StepLaw law = make_step_law(1.5, 1.0, 2.0);
    EXPECT_NEAR(law.p_r, 0.25, 1e-15);
    EXPECT_NEAR(law.c, 0.25, 1e-15);
    EXPECT_NEAR(numeric_mean(law), 0.0, 1e-10);
}

TEST(StepLaw, BalancedCase)
{
    const StepLaw law = make_step_law(1.5, 1.0, 6.0);
    EXPECT_NEAR(law.p_r, 0.5, 1e-15);
    EXPECT_NEAR(numeric_mean(law), 0.0, 1e-10);
}

TEST(StepLaw, RejectsOutOfRange)
{
    EXPECT_THROW(make_step_law(2.0, 1.0, 2.0), DomainError);
    EXPECT_THROW(make_step_law(1.0, 1.0, 2.0), DomainError);
    EXPECT_THROW(make_step_law(1.5, 0.0, 2.0), DomainError);
    EXPECT_THROW(make_step_law(1.5, 1.0, -1.0), DomainError);
    try {
        make_step_law(2.0, 1.0, 2.0);
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("alpha must lie in (1,2)"), std::string::npos);
    }
}

TEST(StepLaw, MeanZeroOverParameterGrid)
{
    for (double alpha : {1.1, 1.3, 1.5, 1.7, 1.9}) {
        for (double x_m : {0.5, 1.0, 3.0}) {
            for (double d : {0.5, 2.0, 7.0}) {
                const StepLaw law = make_step_law(alpha, x_m, d);
                EXPECT_NEAR(law.p_r * x_m * alpha / (alpha - 1.0), (1.0 - law.p_r) * d / 2.0, 1e-12);
                EXPECT_NEAR(numeric_mean(law), 0.0, 1e-9) << alpha << " " << x_m << " " << d;
                for (double y : {x_m, 2 * x_m, 10 * x_m, 1e4 * x_m}) {
                    EXPECT_NEAR(law.upper_tail(y), law.c * std::pow(y, -alpha), 1e-15);
                }
                EXPECT_EQ(law.cdf(-d - 1e-9), 0.0);
            }
        }
    }
}

TEST(SampleStep, MomentsTailAndSupport)
{
    const StepLaw law = default_step_law();
    Stream s(11);
    const std::size_t n = 1000000;
    RunningStats stats;
    std::size_t above10 = 0;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = sample_step(law, s);
        stats.push(x);
        above10 += x >= 10.0 ? 1 : 0;
        if ((x > 0.0 && x < law.x_m) || x < -law.d) ++bad;
    }
    EXPECT_EQ(bad, 0u);
    EXPECT_LT(std::abs(stats.mean()), 4.0 * std::sqrt(stats.variance()) / 1e3);
    const Interval ci = wilson_interval(above10, n, 0.999);
    EXPECT_TRUE(ci.contains(0.25 * std::pow(10.0, -1.5))) << above10;
}

TEST(SampleStep, OneUniformPerDraw)
{
    const StepLaw law = default_step_law();
    Stream s(3);
    for (int i = 0; i < 100; ++i) sample_step(law, s);
    EXPECT_EQ(s.draws(), 100u);
}

TEST(SampleStep, ExactCdfKs)
{
    const StepLaw law = default_step_law();
    Stream s(2024);
    std::vector<double> xs(1000000);
    for (auto& x : xs) x = sample_step(law, s);
    const auto ks = ks_one_sample(xs, [&](double v) { return reference_cdf(1.5, 1.0, 2.0, 0.25, v); });
    EXPECT_LT(ks.statistic, 0.005);
}

TEST(WalkPath, ZeroLength)
{
    const StepLaw law = default_step_law();
    Stream s(1);
    const WalkPath p = walk_path(law, 0, s);
    ASSERT_EQ(p.sums.size(), 1u);
    EXPECT_EQ(p.sums[0], 0.0);
    EXPECT_EQ(p.running_min[0], 0.0);
}

TEST(WalkPath, ForcedSteps)
{
    const std::vector<double> steps{1.0, -2.0};
    const WalkPath p = walk_from_steps(steps);
    EXPECT_DOUBLE_EQ(p.running_min[2], std::min({0.0, 1.0, 1.0 - 2.0}));
    EXPECT_DOUBLE_EQ(p.sums[2], -1.0);
}

TEST(WalkPath, DeterministicAndMinimumInvariants)
{
    const StepLaw law = default_step_law();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Stream a(seed);
        Stream b(seed);
        const WalkPath p = walk_path(law, 200, a);
        const WalkPath q = walk_path(law, 200, b);
        ASSERT_EQ(p.sums, q.sums);
        EXPECT_EQ(p.running_min[0], 0.0);
        for (std::size_t i = 1; i < p.sums.size(); ++i) {
            EXPECT_LE(p.running_min[i], p.running_min[i - 1]);
            EXPECT_DOUBLE_EQ(p.running_min[i], std::min(p.running_min[i - 1], p.sums[i]));
            const double step = p.steps[i - 1];
            EXPECT_TRUE((step >= -law.d && step <= 0.0) || step >= law.x_m);
        }
    }
}

TEST(Ballot, SingleStepStayAbove)
{
    const StepLaw law = default_step_law();
    BallotParams p;
    p.a = 0.0;
    const Estimate e = ballot_probability(law, BallotKind::stay_above, p, 1, 200000, Stream(5));
    EXPECT_TRUE(e.ci.contains(0.25)) << e.value;
}

TEST(Ballot, UnreachableBarrier)
{
    const StepLaw law = default_step_law();
    BallotParams p;
    p.a = 50 * law.d;
    const Estimate e = ballot_probability(law, BallotKind::stay_above, p, 50, 1000, Stream(5));
    EXPECT_EQ(e.value, 1.0);
}

TEST(Ballot, NoAtomAtZero)
{
    const StepLaw law = default_step_law();
    BallotParams p;
    p.a = 0.0;
    p.b = 0.0;
    const Estimate e = ballot_probability(law, BallotKind::end_below_stay_above, p, 1, 100000, Stream(5));
    EXPECT_EQ(e.value, 0.0);
}

TEST(Ballot, ParameterMismatchIsConfigError)
{
    const StepLaw law = default_step_law();
    BallotParams p;
    EXPECT_THROW(ballot_probability(law, BallotKind::stay_above, p, 4, 10, Stream(1)), ConfigError);
    p.a = 1.0;
    p.lambda = 0.5;
    EXPECT_THROW(ballot_probability(law, BallotKind::stay_above, p, 4, 10, Stream(1)), ConfigError);
    BallotParams w;
    w.a = 1.0;
    w.b = 0.0;
    w.u = 0.0;
    w.v = 1.0;
    EXPECT_THROW(ballot_probability(law, BallotKind::window_split, w, 4, 10, Stream(1)), ConfigError);
    EXPECT_THROW(ballot_kind_from_string("nope"), ConfigError);
}

// Coupled replicates: the event grows with a and b, so the counts do too.
TEST(Ballot, MonotoneInAAndB)
{
    const StepLaw law = default_step_law();
    const Stream stream(77);
    for (std::size_t n : {8, 32}) {
        double last = -1.0;
        for (double a : {0.0, 0.5, 1.0, 2.0, 4.0}) {
            BallotParams p;
            p.a = a;
            p.b = 0.0;
            const double v = ballot_probability(law, BallotKind::end_below_stay_above, p, n, 20000, stream).value;
            EXPECT_GE(v, last);
            last = v;
        }
        last = -1.0;
        for (double b : {-1.0, 0.0, 1.0, 3.0}) {
            BallotParams p;
            p.a = 1.0;
            p.b = b;
            const double v = ballot_probability(law, BallotKind::end_below_stay_above, p, n, 20000, stream).value;
            EXPECT_GE(v, last);
            last = v;
        }
    }
}

TEST(Ballot, WindowAndLateCrossingWellFormed)
{
    const StepLaw law = default_step_law();
    BallotParams w;
    w.a = 1.0;
    w.b = 0.0;
    w.u = 0.0;
    w.v = 2.0;
    w.lambda = 0.5;
    const Estimate e = ballot_probability(law, BallotKind::window_split, w, 16, 20000, Stream(9));
    EXPECT_GT(e.value, 0.0);
    EXPECT_LT(e.value, 1.0);
    BallotParams l;
    l.a = 1.0;
    l.b = 0.0;
    l.lambda = 0.5;
    const Estimate f = ballot_probability(law, BallotKind::late_crossing, l, 16, 20000, Stream(9));
    EXPECT_GT(f.value, 0.0);
    EXPECT_LT(f.value, 1.0);
}

TEST(Ballot, BitIdenticalEstimates)
{
    const StepLaw law = default_step_law();
    BallotParams p;
    p.a = 1.0;
    const Estimate a = ballot_probability(law, BallotKind::stay_below, p, 64, 5000, Stream(4));
    const Estimate b = ballot_probability(law, BallotKind::stay_below, p, 64, 5000, Stream(4));
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.ci.low, b.ci.low);
    EXPECT_EQ(a.ci.high, b.ci.high);
}

TEST(Hill, ExactPareto)
{
    std::mt19937_64 gen(123);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xs(1000000);
    for (auto& x : xs) x = std::pow(1.0 - u(gen), -1.0 / 1.5);
    const TailIndexFit fit = fit_tail_index(xs, 10000);
    EXPECT_GE(fit.alpha_hat, 1.45);
    EXPECT_LE(fit.alpha_hat, 1.55);
    EXPECT_NEAR(fit.stderr_, fit.alpha_hat / 100.0, 1e-12);
}

TEST(Hill, DegenerateSamples)
{
    std::vector<double> xs(1000, 2.0);
    EXPECT_THROW(fit_tail_index(xs, 10), InsufficientData);
    std::vector<double> few{1.0, 2.0, -3.0};
    EXPECT_THROW(fit_tail_index(few, 5), InsufficientData);
}

TEST(Hill, StepLawPositivePart)
{
    const StepLaw law = default_step_law();
    Stream s(8);
    std::vector<double> xs;
    while (xs.size() < 250000) {
        const double x = sample_step(law, s);
        if (x > 0.0) xs.push_back(x);
    }
    const TailIndexFit fit = fit_tail_index(xs, 5000);
    EXPECT_GE(fit.alpha_hat, 1.4);
    EXPECT_LE(fit.alpha_hat, 1.6);
}
