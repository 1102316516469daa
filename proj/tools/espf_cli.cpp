// espf: run scenarios, compare filters, inspect sparse grids.
#include <espf/runner.hpp>
#include <espf/scenario.hpp>
#include <espf/sparse_grid.hpp>
#include <espf/trace.hpp>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitSpec = 2;
constexpr int kExitNumerical = 3;

struct Loaded {
    espf::FlatConfig config;
    espf::ScenarioSpec spec;
};

Loaded load(const std::string &path, const std::vector<std::string> &overrides, std::optional<long> seed) {
    Loaded l{espf::FlatConfig::from_file(espf::resolve_scenario_path(path)), {}};
    for (const auto &w : l.config.warnings()) spdlog::warn("{}", w);
    for (const auto &o : overrides) l.config.apply_override(o);
    if (seed) l.config.set("seed", std::to_string(*seed));
    l.spec = espf::build_spec(l.config);
    return l;
}

espf::FilterChoice parse_filter(const std::string &name) {
    if (name == "espf") return {true, false};
    if (name == "ukf") return {false, true};
    return {true, true};
}

std::string fixed(std::optional<double> v, int digits) {
    if (!v) return "N/A";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
    return buf;
}

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("espf");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char *env = std::getenv("ESPF_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

int run_guarded(const std::function<void()> &body) {
    try {
        body();
        return 0;
    } catch (const espf::SpecError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSpec;
    } catch (const espf::ArgumentError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSpec;
    } catch (const espf::Error &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}

} // namespace

int main(int argc, char **argv) {
    configure_logging();

    CLI::App app{"Epistemic support-point filter and UKF scenario runner"};
    app.require_subcommand(1);

    std::vector<std::string> overrides;
    std::optional<long> seed;
    std::string filter = "both";

    auto *run = app.add_subcommand("run", "run one scenario and write trace.csv, summary.json, config_resolved.txt");
    std::string scenario, out_dir = ".";
    run->add_option("scenario", scenario, "scenario file or directory")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--set", overrides, "override key=value (repeatable)");
    run->add_option("--seed", seed, "noise seed");
    run->add_option("--filter", filter, "filters to run")->check(CLI::IsMember({"espf", "ukf", "both"}));

    auto *compare = app.add_subcommand("compare", "run ESPF and UKF and print a results table");
    std::vector<std::string> scenarios;
    compare->add_option("scenario", scenarios, "scenario files or directories")->required();
    compare->add_option("--set", overrides, "override key=value (repeatable)");
    compare->add_option("--seed", seed, "noise seed");

    auto *grid = app.add_subcommand("grid", "print the Smolyak point count, optionally the points");
    long dim = 0;
    int level = 0;
    std::optional<std::string> dump;
    grid->add_option("--dim", dim, "dimension")->required();
    grid->add_option("--level", level, "level")->required();
    grid->add_option("--dump", dump, "write points as CSV (to FILE, or stdout when omitted)")
        ->expected(0, 1)
        ->default_str("-");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitSpec;
    }

    if (*run) {
        return run_guarded([&] {
            const Loaded l = load(scenario, overrides, seed);
            const espf::RunTrace trace = espf::run(l.spec, parse_filter(filter));
            const espf::Summary summary = espf::metrics(trace, l.spec.final_window);
            espf::write_run_outputs(out_dir, trace, summary, l.spec.final_window, l.config.resolved_text());
            spdlog::info("{}: {} records written to {}", l.spec.name, trace.records.size(), out_dir);
        });
    }

    if (*compare) {
        return run_guarded([&] {
            std::cout << "scenario\tfilter\tfinal_rms_km\tavg_surprisal\tnecessity_retention_pct\n";
            for (const auto &path : scenarios) {
                const Loaded l = load(path, overrides, seed);
                const espf::RunTrace trace = espf::run(l.spec);
                const espf::Summary s = espf::metrics(trace, l.spec.final_window);
                std::cout << l.spec.name << "\tUKF\t" << fixed(s.ukf_final_rms, 4) << "\tN/A\tN/A\n";
                std::cout << l.spec.name << "\tESPF\t" << fixed(s.espf_final_rms, 4) << "\t"
                          << fixed(s.avg_surprisal, 3) << "\t" << fixed(s.retention, 1) << "\n";
            }
        });
    }

    return run_guarded([&] {
        const auto g = espf::smolyak_grid<double>(dim, level);
        std::cout << g.points.cols() << "\n";
        if (!dump) return;
        std::ofstream file;
        const bool to_stdout = dump->empty() || *dump == "-";
        if (!to_stdout) {
            file.open(*dump);
            if (!file) throw espf::ArgumentError("cannot write " + *dump);
        }
        std::ostream &out = to_stdout ? std::cout : file;
        char buf[32];
        for (espf::Index j = 0; j < g.points.cols(); ++j) {
            for (espf::Index d = 0; d < g.dim; ++d) {
                std::snprintf(buf, sizeof buf, "%.17g", g.points(d, j));
                out << (d ? "," : "") << buf;
            }
            out << "\n";
        }
    });
}
