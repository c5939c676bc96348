// synth: run, check and monitor STL-specified vehicle scenarios.

#include "stlcbf/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace stlcbf;

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("synth");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("SYNTH_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));
}

void emit_report(const RunReport& rep, const std::string& path) {
    if (path.empty())
        write_report(rep, std::cout);
    else
        write_report(rep, fs::path(path));
}

int config_failure(const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code(Outcome::ConfigError);
}

int run_one(const std::string& config, const std::string& trace_path, const std::string& report_path,
            const PipelineOptions& opts) {
    ScenarioConfig cfg;
    try {
        cfg = load_config(config);
    } catch (const std::exception& e) {
        return config_failure(e);
    }
    PipelineResult res = run_pipeline(cfg, opts);
    if (!trace_path.empty() && !res.trace.rows.empty()) write_trace_csv(res.trace, fs::path(trace_path));
    emit_report(res.report, report_path);
    if (!res.report.success()) std::cerr << res.report.message << '\n';
    return exit_code(res.report.outcome);
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Safe controller synthesis from STL specifications"};
    app.require_subcommand(1);

    std::string config, trace_path, report_path;
    double dt = 0.0;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "check, simulate and monitor a scenario");
    run->add_option("config", config, "scenario file")->required();
    run->add_option("--trace", trace_path, "trace CSV output");
    run->add_option("--report", report_path, "report output (stdout when omitted)");
    auto* dt_opt = run->add_option("--dt", dt, "override the integration step")->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("--seed", seed, "override the generator seed");

    auto* check = app.add_subcommand("check", "static compatibility check only");
    check->add_option("config", config, "scenario file")->required();
    check->add_option("--report", report_path, "report output (stdout when omitted)");

    std::string trace_in;
    auto* monitor = app.add_subcommand("monitor", "monitor a recorded trace offline");
    monitor->add_option("trace", trace_in, "trace CSV")->required();
    monitor->add_option("config", config, "scenario file")->required();
    monitor->add_option("--report", report_path, "report output (stdout when omitted)");

    std::vector<std::string> batch_configs;
    std::string out_dir = ".";
    auto* batch = app.add_subcommand("batch", "run independent scenarios concurrently");
    batch->add_option("configs", batch_configs, "scenario files")->required();
    batch->add_option("--out-dir", out_dir, "directory for <name>.csv and <name>.report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(Outcome::ConfigError);
    }

    try {
        if (*run) {
            PipelineOptions opts;
            if (*dt_opt) opts.dt = dt;
            if (*seed_opt) opts.seed = seed;
            return run_one(config, trace_path, report_path, opts);
        }
        if (*check) {
            ScenarioConfig cfg;
            try {
                cfg = load_config(config);
            } catch (const std::exception& e) {
                return config_failure(e);
            }
            PipelineOptions opts;
            opts.check_only = true;
            const PipelineResult res = run_pipeline(cfg, opts);
            emit_report(res.report, report_path);
            if (!res.report.success()) std::cerr << res.report.message << '\n';
            return exit_code(res.report.outcome);
        }
        if (*monitor) {
            ScenarioConfig cfg;
            try {
                cfg = load_config(config);
            } catch (const std::exception& e) {
                return config_failure(e);
            }
            Trace tr;
            try {
                tr = read_trace_csv(fs::path(trace_in));
            } catch (const std::exception& e) {
                std::cerr << "trace error: " << e.what() << '\n';
                return exit_code(Outcome::ConfigError);
            }
            const RunReport rep = monitor_recorded(tr, cfg);
            emit_report(rep, report_path);
            if (!rep.success()) std::cerr << rep.message << '\n';
            return exit_code(rep.outcome);
        }
        if (*batch) {
            fs::create_directories(out_dir);
            std::vector<std::future<int>> jobs;
            for (const auto& c : batch_configs) {
                const std::string stem = fs::path(c).stem().string();
                const std::string csv = (fs::path(out_dir) / (stem + ".csv")).string();
                const std::string rep = (fs::path(out_dir) / (stem + ".report")).string();
                jobs.push_back(std::async(std::launch::async, run_one, c, csv, rep, PipelineOptions{}));
            }
            int worst = 0;
            for (auto& j : jobs) worst = std::max(worst, j.get());
            return worst;
        }
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return exit_code(Outcome::InternalError);
    }
    return exit_code(Outcome::InternalError);
}
