#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "consensus/runner.hpp"
#include "consensus/version.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw consensus::Error("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int do_run(const consensus::RunConfig& cfg, const std::string& out_dir) {
    consensus::RunOutcome outcome = consensus::run_config(cfg, out_dir);
    std::cout << "wrote " << outcome.out_dir.string() << "/{manifest.json, trajectory.csv, "
              << "weights.csv, report.json}\n";
    if (outcome.diverged)
        std::cout << "result: diverged\n";
    else if (outcome.convergence.converged)
        std::cout << "result: converged at t = " << outcome.convergence.t_conv << " s\n";
    else
        std::cout << "result: not converged within the horizon\n";
    for (const auto& w : outcome.monitor.warnings) std::cout << "warning: " << w << "\n";
    return outcome.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"consensus-lab: adaptive output-feedback consensus synthesis and simulation"};
    app.set_version_flag("--version", consensus::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    auto* run_cmd = app.add_subcommand("run", "simulate a configuration file");
    run_cmd->add_option("--config", config_path, "path to a config (or manifest) JSON")
        ->required();
    run_cmd->add_option("--out", out_dir, "output directory (overrides the config)");

    std::string preset_name;
    std::string preset_out;
    auto* preset_cmd = app.add_subcommand("preset", "run a built-in scenario");
    preset_cmd->add_option("name", preset_name, "preset name")->required();
    preset_cmd->add_option("--out", preset_out, "output directory (overrides the default)");
    bool emit_only = false;
    preset_cmd->add_flag("--emit-config", emit_only,
                         "print the preset's configuration instead of running it");

    std::string verify_path;
    auto* verify_cmd = app.add_subcommand("verify", "synthesize and check gains, no simulation");
    verify_cmd->add_option("--config", verify_path, "path to a config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            return do_run(consensus::parse_config(read_file(config_path)), out_dir);
        }
        if (*preset_cmd) {
            consensus::RunConfig cfg = consensus::preset(preset_name);
            if (emit_only) {
                std::cout << consensus::serialize_config(cfg);
                return 0;
            }
            return do_run(cfg, preset_out);
        }
        if (*verify_cmd) {
            consensus::json report =
                consensus::verify_config(consensus::parse_config(read_file(verify_path)));
            std::cout << report.dump(2) << "\n";
            return report["certificate"]["pass"].get<bool>() ? 0 : 1;
        }
    } catch (const consensus::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
