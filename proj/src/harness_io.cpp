#include "sbrw/harness.hpp"

#include "sbrw/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace sbrw {

namespace fs = std::filesystem;

namespace {

void write_atomic(const fs::path& path, const std::string& text)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << text;
        if (!out) throw ConfigError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json rule_json(const RuleOutcome& r)
{
    return {{"id", r.id},         {"description", r.description}, {"value", r.value},
            {"target", r.target}, {"tolerance", r.tolerance},     {"pass", r.pass},
            {"report_only", r.report_only}};
}

} // namespace

std::string format_double(double v)
{
    return fmt::format("{}", v);
}

std::string points_csv_header()
{
    return "series,x,estimate,ci_low,ci_high,samples";
}

std::string runs_csv_header()
{
    return "n,M_n,W_n,W_n_beta,D_n,population,truncated_count,replica,seed";
}

std::string format_point(const DataPoint& p)
{
    return fmt::format("{},{},{},{},{},{}", p.series, format_double(p.x), format_double(p.estimate),
                       format_double(p.ci_low), format_double(p.ci_high), p.samples);
}

std::vector<DataPoint> parse_points_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != points_csv_header()) {
        throw ConfigError("points.csv: unexpected header");
    }
    std::vector<DataPoint> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 6) throw ConfigError("points.csv: expected 6 fields in line: " + line);
        DataPoint p;
        p.series = fields[0];
        p.x = std::strtod(fields[1].c_str(), nullptr);
        p.estimate = std::strtod(fields[2].c_str(), nullptr);
        p.ci_low = std::strtod(fields[3].c_str(), nullptr);
        p.ci_high = std::strtod(fields[4].c_str(), nullptr);
        p.samples = std::strtoull(fields[5].c_str(), nullptr, 10);
        out.push_back(p);
    }
    return out;
}

fs::path resolve_output_dir(const ExperimentConfig& config)
{
    if (!config.output_dir.empty()) return config.output_dir;
    const char* root = std::getenv(kOutputRootEnv);
    const fs::path base = root != nullptr && *root != '\0' ? fs::path(root) : fs::path("results");
    return base / config.preset;
}

void write_result(const ExperimentResult& result, const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());

    std::string points = points_csv_header() + "\n";
    for (const auto& p : result.points) points += format_point(p) + "\n";
    write_atomic(dir / "points.csv", points);

    if (!result.run_rows.empty()) {
        std::string runs = runs_csv_header() + "\n";
        for (const auto& r : result.run_rows) runs += r + "\n";
        write_atomic(dir / "runs.csv", runs);
    }

    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : result.verdict) rules.push_back(rule_json(r));
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : result.points) {
        pts.push_back({{"series", p.series},
                       {"x", p.x},
                       {"estimate", p.estimate},
                       {"ci_low", p.ci_low},
                       {"ci_high", p.ci_high},
                       {"samples", p.samples}});
    }
    const nlohmann::json record{{"schema_version", kSchemaVersion},
                                {"software_version", kSoftwareVersion},
                                {"preset", result.config.preset},
                                {"qualitative", preset_info(result.config.preset).qualitative},
                                {"config", result.config},
                                {"points", pts},
                                {"verdict", rules},
                                {"extra", result.extra},
                                {"complete", result.complete()},
                                {"missing_tasks", result.missing}};
    write_atomic(dir / "record.json", record.dump(2) + "\n");

    const nlohmann::json timing{{"preset", result.config.preset}, {"wall_seconds", result.wall_seconds}};
    write_atomic(dir / "timing.json", timing.dump(2) + "\n");

    if (!result.complete()) {
        nlohmann::json manifest{{"preset", result.config.preset}, {"missing_tasks", result.missing}};
        if (result.extra.contains("missing_labels")) manifest["labels"] = result.extra.at("missing_labels");
        write_atomic(dir / "missing_replicas.json", manifest.dump(2) + "\n");
    } else {
        fs::remove(dir / "missing_replicas.json", ec);
    }
}

std::vector<RuleOutcome> verdict_from_dir(const fs::path& dir)
{
    nlohmann::json record;
    try {
        record = nlohmann::json::parse(read_file(dir / "record.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("record.json is not valid JSON: " + std::string(e.what()));
    }
    if (!record.contains("config")) throw ConfigError("record.json has no config");
    const ExperimentConfig config = config_from_json(record.at("config"));
    return compute_verdict(config, parse_points_csv(read_file(dir / "points.csv")));
}

std::string verdict_table(const std::string& preset, const std::vector<RuleOutcome>& rules)
{
    std::string out = fmt::format("verdict for {}\n", preset);
    out += fmt::format("{:<34} {:>12} {:>12} {:>10}  {}\n", "rule", "value", "target", "tol", "result");
    for (const auto& r : rules) {
        const char* status = r.report_only ? "REPORT" : (r.pass ? "PASS" : "FAIL");
        out += fmt::format("{:<34} {:>12.5g} {:>12.5g} {:>10.3g}  {}\n", r.id, r.value, r.target, r.tolerance, status);
    }
    if (rules.empty()) out += "(qualitative preset: no pass/fail rules)\n";
    return out;
}

} // namespace sbrw
