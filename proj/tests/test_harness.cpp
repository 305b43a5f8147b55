#include "sbrw/config.hpp"
#include "sbrw/errors.hpp"
#include "sbrw/harness.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

using namespace sbrw;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "sbrw_harness_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig small_lemma21()
{
    ExperimentConfig c = default_config("lemma21");
    c.n_schedule = {8, 16, 32};
    c.replicas = 2000;
    return c;
}

} // namespace

TEST(Config, RoundTripEveryPreset)
{
    for (const auto& id : preset_ids()) {
        const ExperimentConfig c = default_config(id);
        EXPECT_NO_THROW(validate(c)) << id;
        nlohmann::json j = c;
        const ExperimentConfig back = config_from_json(j);
        nlohmann::json j2 = back;
        EXPECT_EQ(j.dump(), j2.dump()) << id;
    }
}

TEST(Config, Rejections)
{
    EXPECT_THROW(default_config("lemma99"), ConfigError);
    ExperimentConfig c = small_lemma21();
    c.replicas = 0;
    EXPECT_THROW(validate(c), ConfigError);
    EXPECT_THROW(run_experiment(c, 1), ConfigError);
    c = small_lemma21();
    c.n_schedule = {8, 8, 16};
    EXPECT_THROW(validate(c), std::exception);
    nlohmann::json j = small_lemma21();
    j["bogus_key"] = 1;
    EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, MissingKeysTakeDefaults)
{
    const ExperimentConfig c = config_from_json(nlohmann::json{{"preset", "lemma32"}});
    nlohmann::json a = c;
    nlohmann::json b = default_config("lemma32");
    EXPECT_EQ(a.dump(), b.dump());
}

TEST(Schema, GoldenHeaders)
{
    EXPECT_EQ(points_csv_header(), "series,x,estimate,ci_low,ci_high,samples");
    EXPECT_EQ(runs_csv_header(), "n,M_n,W_n,W_n_beta,D_n,population,truncated_count,replica,seed");
}

TEST(Schema, PointsRoundTrip)
{
    const std::vector<DataPoint> pts{{"a", 1, 0.1, 0.05, 0.2, 10}, {"b:n=8", 2.5, -1e-300, -3, 1e300, 0}};
    std::string text = points_csv_header() + "\n";
    for (const auto& p : pts) text += format_point(p) + "\n";
    const auto back = parse_points_csv(text);
    ASSERT_EQ(back.size(), pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_EQ(back[i].series, pts[i].series);
        EXPECT_EQ(back[i].x, pts[i].x);
        EXPECT_EQ(back[i].estimate, pts[i].estimate);
        EXPECT_EQ(back[i].ci_low, pts[i].ci_low);
        EXPECT_EQ(back[i].ci_high, pts[i].ci_high);
        EXPECT_EQ(back[i].samples, pts[i].samples);
    }
}

TEST(Orchestrate, OrderIndependentOfWorkers)
{
    const auto task = [](std::size_t i) {
        TaskOutput t;
        t.features = {static_cast<double>(i * i)};
        return t;
    };
    const Orchestrated a = orchestrate(37, 1, task);
    const Orchestrated b = orchestrate(37, 4, task);
    ASSERT_EQ(a.outputs.size(), 37u);
    for (std::size_t i = 0; i < 37; ++i) EXPECT_EQ(a.outputs[i]->features, b.outputs[i]->features);
    EXPECT_TRUE(a.missing.empty());
    EXPECT_THROW(orchestrate(3, 0, task), ConfigError);
}

TEST(Orchestrate, KilledWorkerManifest)
{
    OrchestrateOptions opt;
    opt.fail_before = [](std::size_t i) { return i == 6; };
    const Orchestrated r = orchestrate(20, 4, [](std::size_t) { return TaskOutput{}; }, opt);
    // Worker 2 owns 2, 6, 10, 14, 18 and stops before 6.
    EXPECT_EQ(r.missing, (std::vector<std::size_t>{6, 10, 14, 18}));
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(r.outputs[i].has_value(), i % 4 != 2 || i < 6) << i;
}

TEST(RunExperiment, PartialResultManifest)
{
    OrchestrateOptions opt;
    opt.fail_before = [](std::size_t i) { return i >= 3; };
    const ExperimentResult r = run_experiment(small_lemma21(), 1, opt);
    EXPECT_EQ(r.missing, (std::vector<std::size_t>{3, 4, 5}));
    EXPECT_FALSE(r.complete());
    const fs::path dir = scratch("partial");
    write_result(r, dir);
    const auto manifest = nlohmann::json::parse(slurp(dir / "missing_replicas.json"));
    EXPECT_EQ(manifest.at("missing_tasks").get<std::vector<std::size_t>>(), r.missing);
    EXPECT_EQ(manifest.at("labels").size(), 3u);
    const auto record = nlohmann::json::parse(slurp(dir / "record.json"));
    EXPECT_FALSE(record.at("complete").get<bool>());

    // A complete rerun into the same directory removes the stale manifest.
    write_result(run_experiment(small_lemma21(), 1), dir);
    EXPECT_FALSE(fs::exists(dir / "missing_replicas.json"));
}

TEST(RunExperiment, ByteIdenticalAndWorkerInvariant)
{
    const ExperimentConfig c = small_lemma21();
    const fs::path a = scratch("det_a"), b = scratch("det_b"), w4 = scratch("det_w4");
    write_result(run_experiment(c, 1), a);
    write_result(run_experiment(c, 1), b);
    write_result(run_experiment(c, 4), w4);
    for (const char* f : {"points.csv", "record.json"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(w4 / f)) << f;
    }
    EXPECT_TRUE(fs::exists(a / "timing.json"));
}

TEST(RunExperiment, VerdictFromStoredData)
{
    ExperimentConfig c = default_config("check-conditions");
    c.replicas = 20000;
    const ExperimentResult r = run_experiment(c, 1);
    const fs::path dir = scratch("verdict");
    write_result(r, dir);
    const auto again = verdict_from_dir(dir);
    ASSERT_EQ(again.size(), r.verdict.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        EXPECT_EQ(again[i].id, r.verdict[i].id);
        EXPECT_EQ(again[i].pass, r.verdict[i].pass);
        EXPECT_EQ(again[i].value, r.verdict[i].value);
    }
    EXPECT_EQ(compute_verdict(c, r.points).size(), r.verdict.size());
}

TEST(RunExperiment, BudgetRefusal)
{
    ExperimentConfig c = small_lemma21();
    c.budget = 10.0;
    try {
        run_experiment(c, 1);
        FAIL() << "expected a budget refusal";
    } catch (const BudgetExceeded& e) {
        EXPECT_GT(e.estimate(), e.budget());
    }
    for (const auto& id : preset_ids()) {
        const ExperimentConfig d = default_config(id);
        EXPECT_LE(estimate_cost(d), d.budget) << id;
    }
}

TEST(RunExperiment, ToyMedianIsReportOnly)
{
    ExperimentConfig c = default_config("median-mn");
    c.law.family = "dyadic_toy";
    c.engine = "forward";
    c.n_schedule = {4, 8, 16};
    c.replicas = 30;
    c.truncation.max_population = 500;
    const ExperimentResult r = run_experiment(c, 1);
    ASSERT_EQ(r.verdict.size(), 1u);
    EXPECT_TRUE(r.verdict[0].report_only);
}

TEST(RunExperiment, QualitativePresetsHaveNoRules)
{
    for (const auto& id : preset_ids()) {
        if (!preset_info(id).qualitative) continue;
        EXPECT_TRUE(compute_verdict(default_config(id), {}).empty()) << id;
    }
    EXPECT_TRUE(preset_info("integral-test").qualitative);
    EXPECT_TRUE(preset_info("lower-envelope").qualitative);
}

TEST(Output, ResolveDirectory)
{
    ExperimentConfig c = small_lemma21();
    c.output_dir = "/tmp/explicit";
    EXPECT_EQ(resolve_output_dir(c), fs::path("/tmp/explicit"));
    c.output_dir.clear();
    ::setenv(kOutputRootEnv, "/tmp/root_from_env", 1);
    EXPECT_EQ(resolve_output_dir(c), fs::path("/tmp/root_from_env") / "lemma21");
    ::unsetenv(kOutputRootEnv);
    EXPECT_EQ(resolve_output_dir(c), fs::path("results") / "lemma21");
}

TEST(Output, VerdictTableMarksQualitative)
{
    const std::string t = verdict_table("lower-envelope", {});
    EXPECT_NE(t.find("qualitative"), std::string::npos);
    RuleOutcome ok{"r1", "d", 1, 1, 0.1, true, false};
    RuleOutcome bad{"r2", "d", 1, 2, 0.1, false, false};
    const std::string u = verdict_table("lemma21", {ok, bad});
    EXPECT_NE(u.find("PASS"), std::string::npos);
    EXPECT_NE(u.find("FAIL"), std::string::npos);
}
