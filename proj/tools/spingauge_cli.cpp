// Command-line entry point. Exit codes: 0 success, 1 validation failure,
// 2 numerical non-convergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "spingauge/spingauge.hpp"

namespace {

spingauge::SimulationConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw spingauge::ConfigError({"config file not found: " + path});
    std::stringstream ss;
    ss << in.rdbuf();
    return spingauge::parse_config_text(ss.str());
}

int dispatch(const std::string& cmd, const std::string& config_path, const std::string& out_dir,
             int workers, long long dense_cutoff) {
    using namespace spingauge;
    if (cmd == "selfcheck") {
        bool ok = selfcheck(std::cout);
        std::cout << (ok ? "selfcheck: all checks passed\n" : "selfcheck: FAILURES\n");
        return ok ? 0 : 1;
    }
    SimulationConfig cfg = load_config(config_path);
    if (dense_cutoff > 0) cfg.dense_cutoff = dense_cutoff;
    for (const std::string& w : cfg.warnings) std::cerr << "warning: " << w << "\n";

    RunResult res;
    if (cmd == "basis")
        res = run_basis(cfg, out_dir);
    else if (cmd == "spectrum")
        res = run_spectrum(cfg, out_dir);
    else if (cmd == "validate-effective")
        res = run_validate_effective(cfg, out_dir);
    else if (cmd == "evolve")
        res = run_evolve(cfg, out_dir);
    else if (cmd == "ramsey")
        res = run_ramsey_cmd(cfg, out_dir, workers);
    else if (cmd == "break")
        res = run_break(cfg, out_dir);
    else
        throw ConfigError({"unknown subcommand: " + cmd});

    for (const auto& p : res.outputs) std::cout << "wrote " << p.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spin-gauge lattice simulator: gauge sectors, effective-theory validation, "
                 "flux-tube and interferometry protocols"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    int workers = 1;
    long long dense_cutoff = 0;
    app.add_option("--config", config_path, "configuration file (JSON)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--workers", workers, "worker threads for independent runs");
    app.add_option("--dense-cutoff", dense_cutoff, "override the dense-diagonalization cutoff");

    for (const char* name : {"basis", "spectrum", "validate-effective", "evolve", "ramsey",
                             "break", "selfcheck"})
        app.add_subcommand(name);

    CLI11_PARSE(app, argc, argv);
    std::string cmd = app.get_subcommands().front()->get_name();

    try {
        return dispatch(cmd, config_path, out_dir, workers, dense_cutoff);
    } catch (const spingauge::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const spingauge::BudgetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const spingauge::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const spingauge::CutoffExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
