#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "consensus/engine.hpp"
#include "consensus/errors.hpp"
#include "consensus/protocols.hpp"

namespace consensus {

using nlohmann::json;

/// Edge-list text form: one edge per line, "i j", 1-based node indices.
inline std::vector<std::pair<int, int>> parse_edge_list(const std::string& text,
                                                        const std::string& field) {
    std::vector<std::pair<int, int>> edges;
    std::istringstream stream(text);
    std::string line;
    int lineno = 0;
    while (std::getline(stream, line)) {
        ++lineno;
        std::istringstream ls(line);
        int i = 0, j = 0;
        if (!(ls >> i)) continue; // blank line
        std::string rest;
        if (!(ls >> j) || (ls >> rest))
            throw ValidationError(field, "line " + std::to_string(lineno) +
                                             ": expected exactly two node indices");
        if (i < 1 || j < 1)
            throw ValidationError(field, "line " + std::to_string(lineno) +
                                             ": node indices are 1-based");
        edges.emplace_back(i - 1, j - 1);
    }
    return edges;
}

inline std::string format_edge_list(const std::vector<std::pair<int, int>>& edges) {
    std::ostringstream out;
    for (std::size_t k = 0; k < edges.size(); ++k) {
        if (k) out << '\n';
        out << edges[k].first + 1 << ' ' << edges[k].second + 1;
    }
    return out.str();
}

struct SwitchingCfg {
    double dwell = 0.1;
    SwitchMode mode = SwitchMode::Cyclic;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::pair<int, int>>> graphs; // 0-based edges
};

struct GraphCfg {
    int nodes = 0;
    std::vector<std::pair<int, int>> edges; // fixed graph, 0-based
    std::optional<int> leader;              // 0-based internally
    std::optional<SwitchingCfg> switching;
};

struct InitCfg {
    bool random = true;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> x; // explicit agent states
    std::vector<std::vector<double>> v; // explicit protocol states (may be empty)
};

struct ProtocolCfg {
    Variant variant = Variant::EdgeAdaptive;
    double gain_uniform = 1.0;
    std::vector<std::tuple<int, int, double>> gain_edge_overrides; // 0-based
    std::vector<double> gain_node_values;
    double weight_uniform = 0.0;
    std::vector<std::tuple<int, int, double>> weight_edge_overrides; // 0-based
    std::vector<double> weight_node_values;
};

struct RunConfig {
    int version = 1;
    std::string description;
    LinearSystem system;
    ProtocolCfg protocol;
    GraphCfg graph;
    std::optional<Mat> f_override;
    InitCfg init;
    SimConfig sim;
    std::string output = "out";
};

inline Variant variant_from_name(const std::string& name) {
    if (name == "edge-adaptive") return Variant::EdgeAdaptive;
    if (name == "node-adaptive") return Variant::NodeAdaptive;
    if (name == "leader-edge") return Variant::LeaderEdge;
    if (name == "leader-node") return Variant::LeaderNode;
    if (name == "switching-edge") return Variant::SwitchingEdge;
    throw ValidationError("protocol.variant", "unknown variant '" + name + "'");
}

namespace cfg_detail {

inline Mat matrix_from_json(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty())
        throw ValidationError(field, "expected a non-empty array of rows");
    std::size_t cols = 0;
    std::vector<std::vector<double>> rows;
    for (const auto& row : j) {
        if (!row.is_array() || row.empty())
            throw ValidationError(field, "each row must be a non-empty array of numbers");
        if (cols == 0) cols = row.size();
        if (row.size() != cols) throw ValidationError(field, "ragged rows");
        std::vector<double> r;
        for (const auto& v : row) {
            if (!v.is_number()) throw ValidationError(field, "entries must be numbers");
            r.push_back(v.get<double>());
        }
        rows.push_back(std::move(r));
    }
    Mat m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < cols; ++k) m(i, k) = rows[i][k];
    return m;
}

inline json matrix_to_json(const Mat& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<std::tuple<int, int, double>> overrides_from_json(const json& j,
                                                                     const std::string& field) {
    std::vector<std::tuple<int, int, double>> out;
    if (!j.is_array()) throw ValidationError(field, "overrides must be an array of [i, j, value]");
    for (const auto& item : j) {
        if (!item.is_array() || item.size() != 3 || !item[0].is_number_integer() ||
            !item[1].is_number_integer() || !item[2].is_number())
            throw ValidationError(field, "each override must be [i, j, value]");
        int i = item[0].get<int>(), jj = item[1].get<int>();
        if (i < 1 || jj < 1) throw ValidationError(field, "node indices are 1-based");
        out.emplace_back(i - 1, jj - 1, item[2].get<double>());
    }
    // reject conflicting duplicates: the stored weights are unordered, so
    // listing (i, j) and (j, i) with different values is asymmetric input
    for (std::size_t a = 0; a < out.size(); ++a) {
        for (std::size_t b = a + 1; b < out.size(); ++b) {
            auto [ia, ja, va] = out[a];
            auto [ib, jb, vb] = out[b];
            bool same_pair = (ia == ib && ja == jb) || (ia == jb && ja == ib);
            if (same_pair && va != vb)
                throw ValidationError(field, "must be symmetric");
        }
    }
    return out;
}

inline json overrides_to_json(const std::vector<std::tuple<int, int, double>>& o) {
    json arr = json::array();
    for (auto [i, j, v] : o) arr.push_back(json::array({i + 1, j + 1, v}));
    return arr;
}

inline std::vector<double> number_list(const json& j, const std::string& field) {
    std::vector<double> out;
    if (!j.is_array()) throw ValidationError(field, "expected an array of numbers");
    for (const auto& v : j) {
        if (!v.is_number()) throw ValidationError(field, "entries must be numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

} // namespace cfg_detail

inline RunConfig config_from_json(const json& root);

/// Parse a run configuration (or a run manifest, whose embedded "config"
/// object is then used) from JSON text.
inline RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SyntaxError(e.what());
    }
    if (!root.is_object()) throw ValidationError("(root)", "expected a JSON object");
    if (root.contains("config") && root["config"].is_object())
        return config_from_json(root["config"]); // manifest replay
    return config_from_json(root);
}

inline RunConfig config_from_json(const json& root) {
    using namespace cfg_detail;
    RunConfig cfg;

    if (!root.contains("version") || !root["version"].is_number_integer())
        throw ValidationError("version", "required integer field");
    cfg.version = root["version"].get<int>();
    if (cfg.version != 1) throw ValidationError("version", "unsupported config version");
    if (root.contains("description")) cfg.description = root["description"].get<std::string>();

    if (!root.contains("system") || !root["system"].is_object())
        throw ValidationError("system", "required object with A, B, C");
    const json& sys = root["system"];
    for (const char* key : {"A", "B", "C"})
        if (!sys.contains(key))
            throw ValidationError(std::string("system.") + key, "required matrix");
    cfg.system.A = matrix_from_json(sys["A"], "system.A");
    cfg.system.B = matrix_from_json(sys["B"], "system.B");
    cfg.system.C = matrix_from_json(sys["C"], "system.C");
    try {
        cfg.system.validate();
    } catch (const Error& e) {
        throw ValidationError("system", e.what());
    }

    if (!root.contains("protocol") || !root["protocol"].is_object())
        throw ValidationError("protocol", "required object");
    const json& proto = root["protocol"];
    if (!proto.contains("variant") || !proto["variant"].is_string())
        throw ValidationError("protocol.variant", "required string");
    cfg.protocol.variant = variant_from_name(proto["variant"].get<std::string>());

    const bool edge_variant = is_edge_variant(cfg.protocol.variant);
    if (edge_variant) {
        if (proto.contains("kappa")) {
            const json& kappa = proto["kappa"];
            if (kappa.is_number()) {
                cfg.protocol.gain_uniform = kappa.get<double>();
            } else if (kappa.is_object()) {
                if (kappa.contains("default"))
                    cfg.protocol.gain_uniform = kappa["default"].get<double>();
                if (kappa.contains("overrides"))
                    cfg.protocol.gain_edge_overrides =
                        overrides_from_json(kappa["overrides"], "kappa");
            } else {
                throw ValidationError("kappa", "expected a number or {default, overrides}");
            }
        }
        if (proto.contains("tau"))
            throw ValidationError("tau", "per-node gains not used by edge variants");
    } else {
        if (proto.contains("tau")) {
            const json& tau = proto["tau"];
            if (tau.is_number())
                cfg.protocol.gain_uniform = tau.get<double>();
            else
                cfg.protocol.gain_node_values = number_list(tau, "tau");
        }
        if (proto.contains("kappa"))
            throw ValidationError("kappa", "per-edge gains not used by node variants");
    }
    if (proto.contains("initial_weights")) {
        const json& iw = proto["initial_weights"];
        if (iw.is_number()) {
            cfg.protocol.weight_uniform = iw.get<double>();
        } else if (iw.is_object() && edge_variant) {
            if (iw.contains("default")) cfg.protocol.weight_uniform = iw["default"].get<double>();
            if (iw.contains("overrides"))
                cfg.protocol.weight_edge_overrides =
                    overrides_from_json(iw["overrides"], "initial_weights");
        } else if (iw.is_array() && !edge_variant) {
            cfg.protocol.weight_node_values = number_list(iw, "initial_weights");
        } else {
            throw ValidationError("initial_weights", "shape does not match the variant");
        }
    }

    if (!root.contains("graph") || !root["graph"].is_object())
        throw ValidationError("graph", "required object");
    const json& graph = root["graph"];
    if (!graph.contains("nodes") || !graph["nodes"].is_number_integer())
        throw ValidationError("graph.nodes", "required integer");
    cfg.graph.nodes = graph["nodes"].get<int>();
    if (cfg.graph.nodes < 1) throw ValidationError("graph.nodes", "must be at least 1");
    if (graph.contains("leader")) {
        int leader = graph["leader"].get<int>();
        if (leader < 1 || leader > cfg.graph.nodes)
            throw ValidationError("graph.leader", "out of range (1-based)");
        cfg.graph.leader = leader - 1;
    }
    if (graph.contains("switching")) {
        const json& sw = graph["switching"];
        SwitchingCfg scfg;
        if (!sw.contains("dwell") || !sw["dwell"].is_number())
            throw ValidationError("graph.switching.dwell", "required number");
        scfg.dwell = sw["dwell"].get<double>();
        if (!(scfg.dwell > 0.0))
            throw ValidationError("graph.switching.dwell", "must be positive");
        std::string mode = sw.value("mode", std::string("cyclic"));
        if (mode == "cyclic")
            scfg.mode = SwitchMode::Cyclic;
        else if (mode == "random")
            scfg.mode = SwitchMode::Random;
        else
            throw ValidationError("graph.switching.mode", "must be 'cyclic' or 'random'");
        scfg.seed = sw.value("seed", std::uint64_t{0});
        if (!sw.contains("graphs") || !sw["graphs"].is_array() || sw["graphs"].empty())
            throw ValidationError("graph.switching.graphs", "required non-empty array");
        for (std::size_t g = 0; g < sw["graphs"].size(); ++g) {
            const auto& item = sw["graphs"][g];
            if (!item.is_string())
                throw ValidationError("graph.switching.graphs",
                                      "each graph is an edge-list string");
            scfg.graphs.push_back(parse_edge_list(
                item.get<std::string>(),
                "graph.switching.graphs[" + std::to_string(g) + "]"));
        }
        cfg.graph.switching = std::move(scfg);
        if (graph.contains("edges"))
            throw ValidationError("graph.edges", "give either edges or switching, not both");
    } else {
        if (!graph.contains("edges") || !graph["edges"].is_string())
            throw ValidationError("graph.edges", "required edge-list string");
        cfg.graph.edges = parse_edge_list(graph["edges"].get<std::string>(), "graph.edges");
    }

    if (root.contains("gains")) {
        const json& gains = root["gains"];
        if (!gains.is_object()) throw ValidationError("gains", "expected object");
        if (gains.contains("F")) cfg.f_override = matrix_from_json(gains["F"], "gains.F");
    }

    if (root.contains("sim")) {
        const json& sim = root["sim"];
        if (!sim.is_object()) throw ValidationError("sim", "expected object");
        cfg.sim.step = sim.value("step", cfg.sim.step);
        cfg.sim.horizon = sim.value("horizon", cfg.sim.horizon);
        cfg.sim.record_every = sim.value("record_every", cfg.sim.record_every);
        cfg.sim.convergence_tol = sim.value("convergence_tol", cfg.sim.convergence_tol);
        cfg.sim.seed = sim.value("seed", cfg.sim.seed);
        if (!(cfg.sim.step > 0.0)) throw ValidationError("sim.step", "must be positive");
        if (!(cfg.sim.horizon >= cfg.sim.step))
            throw ValidationError("sim.horizon", "must be at least one step");
        if (cfg.sim.record_every < 1)
            throw ValidationError("sim.record_every", "must be at least 1");
    }

    if (root.contains("init")) {
        const json& init = root["init"];
        if (!init.is_object()) throw ValidationError("init", "expected object");
        if (init.contains("random")) {
            cfg.init.random = true;
            cfg.init.seed = init["random"].value("seed", cfg.sim.seed);
        } else if (init.contains("x")) {
            cfg.init.random = false;
            for (const auto& row : init["x"])
                cfg.init.x.push_back(cfg_detail::number_list(row, "init.x"));
            if (init.contains("v"))
                for (const auto& row : init["v"])
                    cfg.init.v.push_back(cfg_detail::number_list(row, "init.v"));
        } else {
            throw ValidationError("init", "give either explicit arrays or {random: {seed}}");
        }
    } else {
        cfg.init.random = true;
        cfg.init.seed = cfg.sim.seed;
    }

    if (root.contains("output")) cfg.output = root["output"].get<std::string>();

    // cross-field checks that do not need the resolved spec
    if (is_leader_variant(cfg.protocol.variant) && !cfg.graph.leader)
        throw ValidationError("graph.leader", "required by leader variants");
    if (cfg.protocol.variant == Variant::SwitchingEdge && !cfg.graph.switching)
        throw ValidationError("graph.switching", "required by the switching-edge variant");
    if (cfg.protocol.variant != Variant::SwitchingEdge && cfg.graph.switching)
        throw ValidationError("graph.switching", "only the switching-edge variant switches");
    if (cfg.graph.switching) {
        double ratio = cfg.graph.switching->dwell / cfg.sim.step;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * (1.0 + std::abs(ratio)))
            throw ValidationError("graph.switching.dwell",
                                  "must be an integer multiple of sim.step");
    }
    if (!cfg.init.random) {
        if (cfg.init.x.size() != static_cast<std::size_t>(cfg.graph.nodes))
            throw ValidationError("init.x", "needs one row per agent");
        for (const auto& row : cfg.init.x)
            if (row.size() != cfg.system.n())
                throw ValidationError("init.x", "each row needs n entries");
        if (!cfg.init.v.empty()) {
            if (cfg.init.v.size() != static_cast<std::size_t>(cfg.graph.nodes))
                throw ValidationError("init.v", "needs one row per agent");
            for (const auto& row : cfg.init.v)
                if (row.size() != cfg.system.n())
                    throw ValidationError("init.v", "each row needs n entries");
        }
    }
    return cfg;
}

inline json config_to_json(const RunConfig& cfg) {
    using namespace cfg_detail;
    json root;
    root["version"] = cfg.version;
    if (!cfg.description.empty()) root["description"] = cfg.description;
    root["system"] = {{"A", matrix_to_json(cfg.system.A)},
                      {"B", matrix_to_json(cfg.system.B)},
                      {"C", matrix_to_json(cfg.system.C)}};
    json proto;
    proto["variant"] = variant_name(cfg.protocol.variant);
    if (is_edge_variant(cfg.protocol.variant)) {
        if (cfg.protocol.gain_edge_overrides.empty())
            proto["kappa"] = cfg.protocol.gain_uniform;
        else
            proto["kappa"] = {{"default", cfg.protocol.gain_uniform},
                              {"overrides", overrides_to_json(cfg.protocol.gain_edge_overrides)}};
        if (cfg.protocol.weight_edge_overrides.empty())
            proto["initial_weights"] = cfg.protocol.weight_uniform;
        else
            proto["initial_weights"] = {
                {"default", cfg.protocol.weight_uniform},
                {"overrides", overrides_to_json(cfg.protocol.weight_edge_overrides)}};
    } else {
        if (cfg.protocol.gain_node_values.empty())
            proto["tau"] = cfg.protocol.gain_uniform;
        else
            proto["tau"] = cfg.protocol.gain_node_values;
        if (cfg.protocol.weight_node_values.empty())
            proto["initial_weights"] = cfg.protocol.weight_uniform;
        else
            proto["initial_weights"] = cfg.protocol.weight_node_values;
    }
    root["protocol"] = std::move(proto);

    json graph;
    graph["nodes"] = cfg.graph.nodes;
    if (cfg.graph.leader) graph["leader"] = *cfg.graph.leader + 1;
    if (cfg.graph.switching) {
        json sw;
        sw["dwell"] = cfg.graph.switching->dwell;
        sw["mode"] = cfg.graph.switching->mode == SwitchMode::Cyclic ? "cyclic" : "random";
        sw["seed"] = cfg.graph.switching->seed;
        json glist = json::array();
        for (const auto& edges : cfg.graph.switching->graphs)
            glist.push_back(format_edge_list(edges));
        sw["graphs"] = std::move(glist);
        graph["switching"] = std::move(sw);
    } else {
        graph["edges"] = format_edge_list(cfg.graph.edges);
    }
    root["graph"] = std::move(graph);

    if (cfg.f_override) root["gains"] = {{"F", matrix_to_json(*cfg.f_override)}};

    root["sim"] = {{"step", cfg.sim.step},
                   {"horizon", cfg.sim.horizon},
                   {"record_every", cfg.sim.record_every},
                   {"convergence_tol", cfg.sim.convergence_tol},
                   {"seed", cfg.sim.seed}};

    json init;
    if (cfg.init.random) {
        init["random"] = {{"seed", cfg.init.seed}};
    } else {
        init["x"] = cfg.init.x;
        if (!cfg.init.v.empty()) init["v"] = cfg.init.v;
    }
    root["init"] = std::move(init);
    root["output"] = cfg.output;
    return root;
}

inline std::string serialize_config(const RunConfig& cfg) {
    return config_to_json(cfg).dump(2) + "\n";
}

} // namespace consensus
