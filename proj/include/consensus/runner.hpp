#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "consensus/config.hpp"
#include "consensus/engine.hpp"
#include "consensus/version.hpp"

namespace consensus {

/// A validated configuration turned into everything the engine needs. The
/// canonical config echoes what actually runs: the leader swapped to node 1
/// and random initial conditions materialized into explicit arrays, so a
/// replay needs no drawing at all.
struct ResolvedRun {
    RunConfig canonical;
    ProtocolSpec spec;
    SimConfig sim;
    NetworkState init;
    GainSet gains;
    CertificateReport certificate;
    double lambda2_value = 0.0;
    std::string lambda2_kind; // "lambda2", "lambda2_min", or "follower_block_min_eig"
    int leader_relabeled_from = 0; // original 1-based label, 0 if untouched
};

namespace run_detail {

inline int permuted(int idx, int a, int b) {
    if (idx == a) return b;
    if (idx == b) return a;
    return idx;
}

/// Swap node labels a <-> b across every place the config mentions them.
inline void apply_swap(RunConfig& cfg, int a, int b) {
    auto swap_edges = [&](std::vector<std::pair<int, int>>& edges) {
        for (auto& [i, j] : edges) {
            i = permuted(i, a, b);
            j = permuted(j, a, b);
        }
    };
    swap_edges(cfg.graph.edges);
    if (cfg.graph.switching)
        for (auto& g : cfg.graph.switching->graphs) swap_edges(g);
    for (auto& [i, j, v] : cfg.protocol.gain_edge_overrides) {
        i = permuted(i, a, b);
        j = permuted(j, a, b);
        (void)v;
    }
    for (auto& [i, j, v] : cfg.protocol.weight_edge_overrides) {
        i = permuted(i, a, b);
        j = permuted(j, a, b);
        (void)v;
    }
    if (!cfg.protocol.gain_node_values.empty())
        std::swap(cfg.protocol.gain_node_values[a], cfg.protocol.gain_node_values[b]);
    if (!cfg.protocol.weight_node_values.empty())
        std::swap(cfg.protocol.weight_node_values[a], cfg.protocol.weight_node_values[b]);
    if (!cfg.init.x.empty()) std::swap(cfg.init.x[a], cfg.init.x[b]);
    if (!cfg.init.v.empty()) std::swap(cfg.init.v[a], cfg.init.v[b]);
    cfg.graph.leader = 0;
}

} // namespace run_detail

inline ResolvedRun resolve_run(RunConfig cfg) {
    // leader always sits at node 1 internally; relabel if the file put it
    // elsewhere, and reflect the swap in the canonical echo
    int relabeled_from = 0;
    if (cfg.graph.leader && *cfg.graph.leader != 0) {
        relabeled_from = *cfg.graph.leader + 1;
        run_detail::apply_swap(cfg, *cfg.graph.leader, 0);
    }

    // materialize random initial conditions so the echo replays exactly
    if (cfg.init.random) {
        SplitMix64 rng(cfg.init.seed);
        cfg.init.x.assign(cfg.graph.nodes, std::vector<double>(cfg.system.n(), 0.0));
        for (auto& row : cfg.init.x)
            for (double& e : row) e = rng.uniform(-1.0, 1.0);
        cfg.init.v.clear(); // protocol states start at zero
        cfg.init.random = false;
    }

    GainSet gains = design_gains(cfg.system, cfg.f_override);

    GraphSource source;
    if (cfg.graph.switching) {
        const auto& sw = *cfg.graph.switching;
        std::vector<CommGraph> graphs;
        for (const auto& edges : sw.graphs) graphs.emplace_back(cfg.graph.nodes, edges);
        source = SwitchingSignal(sw.dwell, std::move(graphs), sw.mode, sw.seed);
    } else {
        source = CommGraph(cfg.graph.nodes, cfg.graph.edges, cfg.graph.leader);
    }

    AdaptGains adapt;
    adapt.uniform = cfg.protocol.gain_uniform;
    adapt.edge_overrides = cfg.protocol.gain_edge_overrides;
    adapt.node_values = cfg.protocol.gain_node_values;

    ProtocolSpec spec = ProtocolSpec::make(cfg.protocol.variant, cfg.system, gains,
                                           std::move(source), adapt);

    NetworkState init = spec.zero_state();
    for (std::size_t i = 0; i < init.x.size(); ++i)
        for (std::size_t k = 0; k < cfg.system.n(); ++k) init.x[i](k, 0) = cfg.init.x[i][k];
    if (!cfg.init.v.empty())
        for (std::size_t i = 0; i < init.v.size(); ++i)
            for (std::size_t k = 0; k < cfg.system.n(); ++k)
                init.v[i](k, 0) = cfg.init.v[i][k];
    if (is_edge_variant(cfg.protocol.variant)) {
        for (auto& w : init.edge_weights) w = cfg.protocol.weight_uniform;
        for (auto [i, j, v] : cfg.protocol.weight_edge_overrides) {
            int idx = spec.pair_index(i, j);
            if (idx < 0)
                throw InactiveEdgeWeight("initial weight on pair (" + std::to_string(i + 1) +
                                         "," + std::to_string(j + 1) +
                                         ") never adjacent in any graph");
            init.edge_weights[idx] = v;
        }
    } else {
        if (cfg.protocol.weight_node_values.empty()) {
            for (auto& w : init.node_weights) w = cfg.protocol.weight_uniform;
        } else {
            if (cfg.protocol.weight_node_values.size() != init.node_weights.size())
                throw ValidationError("initial_weights", "needs one entry per agent");
            init.node_weights = cfg.protocol.weight_node_values;
        }
    }

    ResolvedRun r;
    r.certificate = verify_certificate(cfg.system, gains);
    r.canonical = std::move(cfg);
    r.spec = std::move(spec);
    r.sim = r.canonical.sim;
    r.init = std::move(init);
    r.gains = std::move(gains);
    r.leader_relabeled_from = relabeled_from;
    if (r.spec.switching()) {
        r.lambda2_value = lambda2_min(r.spec.all_graphs());
        r.lambda2_kind = "lambda2_min";
    } else if (is_leader_variant(r.spec.variant())) {
        auto part = leader_partition(r.spec.fixed_graph());
        r.lambda2_value = sym_eig(part.follower_block, 1e-12).values.front();
        r.lambda2_kind = "follower_block_min_eig";
    } else if (r.spec.agent_count() > 1) {
        r.lambda2_value = lambda2(r.spec.fixed_graph());
        r.lambda2_kind = "lambda2";
    } // single agent: no connectivity value to report
    return r;
}

namespace run_detail {

inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string trajectory_csv(const ProtocolSpec& spec, const Trajectory& traj) {
    const std::size_t nagents = spec.agent_count();
    const std::size_t n = spec.sys().n();
    std::string out = "t";
    for (std::size_t i = 1; i <= nagents; ++i)
        for (std::size_t k = 1; k <= n; ++k)
            out += ",x_" + std::to_string(i) + "_" + std::to_string(k);
    for (std::size_t i = 1; i <= nagents; ++i)
        for (std::size_t k = 1; k <= n; ++k)
            out += ",v_" + std::to_string(i) + "_" + std::to_string(k);
    out += ",err_max\n";
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
        out += fmt17(traj.times[s]);
        for (const auto& xi : traj.states[s].x)
            for (std::size_t k = 0; k < n; ++k) out += "," + fmt17(xi(k, 0));
        for (const auto& vi : traj.states[s].v)
            for (std::size_t k = 0; k < n; ++k) out += "," + fmt17(vi(k, 0));
        out += "," + fmt17(traj.metrics[s].consensus_error) + "\n";
    }
    return out;
}

inline std::string weights_csv(const ProtocolSpec& spec, const Trajectory& traj) {
    std::string out = "t";
    const bool edge = is_edge_variant(spec.variant());
    if (edge) {
        for (auto [i, j] : spec.edge_pairs())
            out += ",c_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
    } else {
        std::size_t first = is_leader_variant(spec.variant()) ? 1 : 0;
        for (std::size_t i = first; i < spec.agent_count(); ++i)
            out += ",d_" + std::to_string(i + 1);
    }
    out += "\n";
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
        out += fmt17(traj.times[s]);
        if (edge) {
            for (double w : traj.states[s].edge_weights) out += "," + fmt17(w);
        } else {
            std::size_t first = is_leader_variant(spec.variant()) ? 1 : 0;
            for (std::size_t i = first; i < spec.agent_count(); ++i)
                out += "," + fmt17(traj.states[s].node_weights[i]);
        }
        out += "\n";
    }
    return out;
}

} // namespace run_detail

struct RunOutcome {
    int exit_code = 1;
    bool diverged = false;
    ConvergenceReport convergence;
    MonitorReport monitor;
    std::filesystem::path out_dir;
};

inline json manifest_json(const ResolvedRun& r) {
    json m;
    m["software_version"] = kVersion;
    m["seed"] = r.canonical.sim.seed;
    if (!r.lambda2_kind.empty()) m[r.lambda2_kind] = r.lambda2_value;
    m["gains"] = {{"F", cfg_detail::matrix_to_json(r.gains.F)},
                  {"L", cfg_detail::matrix_to_json(r.gains.L)},
                  {"Gamma", cfg_detail::matrix_to_json(r.gains.Gamma)},
                  {"Q", cfg_detail::matrix_to_json(r.gains.Q)},
                  {"P_lyap", cfg_detail::matrix_to_json(r.gains.P_lyap)}};
    m["certificate"] = {{"hurwitz_margin", r.certificate.hurwitz_margin},
                        {"lmi_margin", r.certificate.lmi_margin},
                        {"gamma_ok", r.certificate.gamma_ok},
                        {"l_consistency", r.certificate.l_consistency},
                        {"pass", r.certificate.pass()}};
    if (r.leader_relabeled_from != 0)
        m["leader_relabeled_from"] = r.leader_relabeled_from;
    m["config"] = config_to_json(r.canonical);
    return m;
}

/// Execute a validated configuration end to end and emit manifest.json,
/// trajectory.csv, weights.csv, and report.json into the output directory.
/// Exit code contract: 0 converged, 2 not converged within the horizon,
/// 3 diverged. Configuration and synthesis failures throw before anything
/// is written (the CLI maps those to exit 1).
inline RunOutcome run_config(const RunConfig& cfg_in, const std::string& out_override = "") {
    ResolvedRun r = resolve_run(cfg_in);
    if (!out_override.empty()) r.canonical.output = out_override;

    Trajectory traj = simulate(r.spec, r.init, r.sim);
    ConvergenceReport conv = detect_convergence(traj, r.sim.convergence_tol);
    MonitorReport monitor = run_monitor(r.spec, traj);

    RunOutcome outcome;
    outcome.diverged = traj.diverged;
    outcome.convergence = conv;
    outcome.monitor = monitor;
    outcome.exit_code = traj.diverged ? 3 : (conv.converged ? 0 : 2);
    outcome.out_dir = r.canonical.output;

    std::filesystem::create_directories(outcome.out_dir);
    run_detail::write_file_atomic(outcome.out_dir / "manifest.json",
                                  manifest_json(r).dump(2) + "\n");
    run_detail::write_file_atomic(outcome.out_dir / "trajectory.csv",
                                  run_detail::trajectory_csv(r.spec, traj));
    run_detail::write_file_atomic(outcome.out_dir / "weights.csv",
                                  run_detail::weights_csv(r.spec, traj));

    json report;
    report["converged"] = conv.converged;
    if (conv.converged) report["t_conv"] = conv.t_conv;
    report["weight_settled"] = conv.weight_settled;
    report["initial_consensus_error"] = conv.initial_error;
    report["final_consensus_error"] = conv.final_error;
    report["diverged"] = traj.diverged;
    if (traj.diverged) report["divergence_time"] = traj.divergence_time;
    if (is_edge_variant(r.spec.variant())) {
        json fw = json::object();
        const auto& pairs = r.spec.edge_pairs();
        for (std::size_t p = 0; p < pairs.size(); ++p)
            fw["c_" + std::to_string(pairs[p].first + 1) + "_" +
               std::to_string(pairs[p].second + 1)] = conv.final_edge_weights[p];
        report["final_weights"] = std::move(fw);
    } else {
        json fw = json::object();
        std::size_t first = is_leader_variant(r.spec.variant()) ? 1 : 0;
        for (std::size_t i = first; i < r.spec.agent_count(); ++i)
            fw["d_" + std::to_string(i + 1)] = conv.final_node_weights[i];
        report["final_weights"] = std::move(fw);
    }
    json mon;
    mon["enabled"] = monitor.enabled;
    if (monitor.enabled) {
        mon["kind"] = monitor.kind;
        mon["weight_center"] = monitor.weight_center;
        mon["varsigma"] = monitor.varsigma;
        mon["descent_violations"] = monitor.descent_violations;
        if (monitor.descent_violations > 0) mon["worst_violation"] = monitor.worst_violation;
        mon["initial_value"] = monitor.values.front();
        mon["final_value"] = monitor.values.back();
    }
    mon["warnings"] = monitor.warnings;
    report["monitor"] = std::move(mon);
    report["exit_code"] = outcome.exit_code;
    run_detail::write_file_atomic(outcome.out_dir / "report.json", report.dump(2) + "\n");
    return outcome;
}

/// Certificate check without simulation.
inline json verify_config(const RunConfig& cfg) {
    ResolvedRun r = resolve_run(cfg);
    json out;
    out["certificate"] = {{"hurwitz_margin", r.certificate.hurwitz_margin},
                          {"lmi_margin", r.certificate.lmi_margin},
                          {"gamma_ok", r.certificate.gamma_ok},
                          {"l_consistency", r.certificate.l_consistency},
                          {"pass", r.certificate.pass()}};
    if (!r.lambda2_kind.empty()) out[r.lambda2_kind] = r.lambda2_value;
    out["gains"] = {{"F", cfg_detail::matrix_to_json(r.gains.F)},
                    {"L", cfg_detail::matrix_to_json(r.gains.L)}};
    return out;
}

// --- built-in scenarios ---------------------------------------------------

namespace presets {

inline LinearSystem third_order_integrators() {
    return {Mat{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}}, Mat{{0}, {0}, {1}}, Mat{{1, 0, 0}}};
}

inline Mat stabilizing_f() { return Mat{{-3.0, -6.5, -4.5}}; }

/// Built-in six-node demo topologies for the sec6 presets. Nothing about the
/// protocols depends on these particular graphs; any connected pair works.
/// These are well-connected (algebraic connectivity 4 and 3) so the demos
/// settle comfortably inside the default horizon.
inline std::string graph_one_edges() {
    // complete tripartite K_{2,2,2}: the complete graph minus the matching
    // {1-2, 3-4, 5-6}
    return "1 3\n1 4\n1 5\n1 6\n2 3\n2 4\n2 5\n2 6\n3 5\n3 6\n4 5\n4 6";
}

inline std::string graph_two_edges() {
    // circulant ring with diameter chords
    return "1 2\n2 3\n3 4\n4 5\n5 6\n1 6\n1 4\n2 5\n3 6";
}

} // namespace presets

inline RunConfig preset(const std::string& name) {
    json root;
    root["version"] = 1;
    root["system"] = {{"A", {{0, 1, 0}, {0, 0, 1}, {0, 0, 0}}},
                      {"B", {{0}, {0}, {1}}},
                      {"C", {{1, 0, 0}}}};
    root["gains"] = {{"F", {{-3.0, -6.5, -4.5}}}};
    root["sim"] = {{"step", 1e-3}, {"horizon", 30.0},    {"record_every", 100},
                   {"convergence_tol", 1e-3}, {"seed", 42}};
    root["init"] = {{"random", {{"seed", 42}}}};

    if (name == "sec6-switching-edge") {
        root["description"] =
            "Six third-order integrators, edge-adaptive protocol, random switching "
            "every 0.1 s between two built-in connected graphs";
        root["protocol"] = {{"variant", "switching-edge"}, {"kappa", 1.0}};
        root["graph"] = {{"nodes", 6},
                         {"switching",
                          {{"dwell", 0.1},
                           {"mode", "random"},
                           {"seed", 42},
                           {"graphs", {presets::graph_one_edges(), presets::graph_two_edges()}}}}};
        root["output"] = "out/sec6-switching-edge";
    } else if (name == "sec6-fixed-node") {
        root["description"] =
            "Six third-order integrators, node-adaptive protocol on a fixed "
            "built-in connected graph";
        root["protocol"] = {{"variant", "node-adaptive"}, {"tau", 1.0}};
        root["graph"] = {{"nodes", 6}, {"edges", presets::graph_one_edges()}};
        root["output"] = "out/sec6-fixed-node";
    } else if (name == "leader-edge-demo") {
        root["description"] = "Leader plus five followers, edge-adaptive tracking";
        root["protocol"] = {{"variant", "leader-edge"}, {"kappa", 1.0}};
        root["graph"] = {{"nodes", 6},
                         {"leader", 1},
                         {"edges", "1 2\n1 3\n1 4\n1 5\n1 6\n2 3\n3 4\n4 5\n5 6\n2 6"}};
        root["output"] = "out/leader-edge-demo";
    } else if (name == "leader-node-demo") {
        root["description"] = "Leader plus five followers, node-adaptive tracking";
        root["protocol"] = {{"variant", "leader-node"}, {"tau", 1.0}};
        root["graph"] = {{"nodes", 6},
                         {"leader", 1},
                         {"edges", "1 2\n1 3\n1 4\n1 5\n1 6\n2 3\n3 4\n4 5\n5 6\n2 6"}};
        root["output"] = "out/leader-node-demo";
    } else {
        throw UnknownPreset("unknown preset '" + name +
                            "'; available: sec6-switching-edge, sec6-fixed-node, "
                            "leader-edge-demo, leader-node-demo");
    }
    return config_from_json(root);
}

} // namespace consensus
