// Command-line front end: run a scenario file, validate one, or list the
// shipped examples. Exit codes: 0 all checks pass, 1 a check failed,
// 2 configuration problem, 3 numerical/runtime failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gexp/config.hpp"
#include "gexp/runner.hpp"

namespace {

int run_command(const std::string& config, const std::string& out_dir,
                const std::vector<std::string>& overrides) {
    const gexp::Scenario scenario = gexp::parse_config(config, overrides);
    const gexp::RunReport report = gexp::run_scenario(scenario);
    const auto files = gexp::emit_report(report, out_dir);

    std::size_t checks = 0, failed = 0;
    for (const auto& [k, v] : report.summary) {
        if (k.size() > 7 && k.compare(k.size() - 7, 7, ".status") == 0 &&
            k.rfind("check.", 0) == 0) {
            ++checks;
            if (v == "fail") ++failed;
        }
    }
    std::cout << scenario.name << ": " << (report.all_pass ? "pass" : "FAIL") << " ("
              << checks - failed << "/" << checks << " checks, "
              << report.wall_seconds << " s)\n"
              << "  " << files.values.string() << "\n  " << files.summary.string() << "\n";
    return report.all_pass ? 0 : 1;
}

int validate_command(const std::string& config) {
    const gexp::Scenario scenario = gexp::parse_config(config);
    std::cout << scenario.name << ": valid (" << gexp::pipeline_name(scenario.pipeline)
              << " pipeline)\n";
    return 0;
}

int list_examples_command(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        std::cerr << "no such directory: " << dir << "\n";
        return 2;
    }
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        try {
            const gexp::Scenario s = gexp::parse_config(p.string());
            std::cout << p.string() << "  [" << gexp::pipeline_name(s.pipeline) << "] "
                      << s.name << "\n";
        } catch (const gexp::Error& e) {
            std::cout << p.string() << "  [invalid] " << e.what() << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynkin stopping games under nonlinear expectations on walk lattices"};
    app.require_subcommand(1);

    std::string config;
    std::string out_dir = "out";
    std::string examples_dir = "scenarios";
    std::vector<std::string> overrides;
    std::string seed_override;

    auto* run = app.add_subcommand("run", "run a scenario and emit its report files");
    run->add_option("config", config, "scenario file (JSON, // comments allowed)")
        ->required();
    run->add_option("--out", out_dir, "output directory (default: out)");
    run->add_option("--seed", seed_override, "override the scenario seed");
    run->add_option("--override", overrides, "override a config key, e.g. lattice.N=4")
        ->take_all();

    auto* validate = app.add_subcommand("validate", "parse and validate a scenario file");
    validate->add_option("config", config, "scenario file")->required();

    auto* list = app.add_subcommand("list-examples", "list scenario files in a directory");
    list->add_option("--dir", examples_dir, "directory to scan (default: scenarios)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (!seed_override.empty()) overrides.push_back("seed=" + seed_override);
            return run_command(config, out_dir, overrides);
        }
        if (validate->parsed()) return validate_command(config);
        return list_examples_command(examples_dir);
    } catch (const gexp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gexp::StepTooCoarse& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gexp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
