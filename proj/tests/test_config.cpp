#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "consensus/runner.hpp"

using namespace consensus;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("consensus_test_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string small_edge_config(const std::string& extra = "") {
    return std::string(R"({
  "version": 1,
  "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
  "protocol": {"variant": "edge-adaptive", "kappa": 1.0},
  "graph": {"nodes": 2, "edges": "1 2"},
  "gains": {"F": [[-1.0]]},
  "init": {"x": [[0.5], [-0.5]]},
  "sim": {"step": 0.001, "horizon": 0.5, "record_every": 10, "convergence_tol": 0.001, "seed": 7},
  "output": "unused")") +
           extra + "\n}\n";
}

} // namespace

TEST_CASE("the switching preset parses to the documented shape") {
    RunConfig cfg = preset("sec6-switching-edge");
    CHECK(cfg.system.n() == 3);
    CHECK(cfg.system.p() == 1);
    CHECK(cfg.system.q() == 1);
    CHECK(cfg.protocol.variant == Variant::SwitchingEdge);
    CHECK(cfg.protocol.gain_uniform == 1.0);
    REQUIRE(cfg.graph.switching.has_value());
    CHECK(cfg.graph.switching->dwell == 0.1);
    CHECK(cfg.graph.switching->graphs.size() == 2);
    CHECK(cfg.f_override.has_value());
    CHECK((*cfg.f_override) == Mat{{-3.0, -6.5, -4.5}});
}

TEST_CASE("the fixed node preset uses the node-adaptive variant") {
    RunConfig cfg = preset("sec6-fixed-node");
    CHECK(cfg.protocol.variant == Variant::NodeAdaptive);
    CHECK(cfg.protocol.gain_uniform == 1.0);
    CHECK_FALSE(cfg.graph.switching.has_value());
}

TEST_CASE("unknown presets are rejected") {
    CHECK_THROWS_AS(preset("unknown"), UnknownPreset);
}

TEST_CASE("asymmetric kappa overrides are rejected") {
    std::string text = R"({
      "version": 1,
      "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
      "protocol": {"variant": "edge-adaptive",
                   "kappa": {"default": 1.0, "overrides": [[1, 2, 1.0], [2, 1, 2.0]]}},
      "graph": {"nodes": 2, "edges": "1 2"},
      "sim": {"step": 0.001, "horizon": 1.0}
    })";
    try {
        parse_config(text);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "kappa");
        CHECK(e.reason() == "must be symmetric");
    }
}

TEST_CASE("leader variants require a leader field") {
    std::string text = R"({
      "version": 1,
      "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
      "protocol": {"variant": "leader-edge", "kappa": 1.0},
      "graph": {"nodes": 2, "edges": "1 2"}
    })";
    CHECK_THROWS_AS(parse_config(text), ValidationError);
}

TEST_CASE("malformed JSON raises a syntax error") {
    CHECK_THROWS_AS(parse_config("{ not json"), SyntaxError);
}

TEST_CASE("misaligned dwell is a config error") {
    std::string text = R"({
      "version": 1,
      "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
      "protocol": {"variant": "switching-edge", "kappa": 1.0},
      "graph": {"nodes": 2, "switching": {"dwell": 0.1, "mode": "cyclic",
                "graphs": ["1 2", "1 2"]}},
      "sim": {"step": 0.0003, "horizon": 1.0}
    })";
    CHECK_THROWS_AS(parse_config(text), ValidationError);
}

TEST_CASE("edge list lines must have exactly two 1-based indices") {
    CHECK_THROWS_AS(parse_edge_list("1 2 3", "graph.edges"), ValidationError);
    CHECK_THROWS_AS(parse_edge_list("0 1", "graph.edges"), ValidationError);
    auto edges = parse_edge_list("1 2\n\n2 3\n", "graph.edges");
    REQUIRE(edges.size() == 2);
    CHECK(edges[0] == std::pair<int, int>(0, 1));
    CHECK(edges[1] == std::pair<int, int>(1, 2));
}

TEST_CASE("configs round-trip through serialization") {
    for (const char* name :
         {"sec6-switching-edge", "sec6-fixed-node", "leader-edge-demo", "leader-node-demo"}) {
        RunConfig a = preset(name);
        RunConfig b = parse_config(serialize_config(a));
        CHECK(config_to_json(a) == config_to_json(b));
    }
}

TEST_CASE("resolve materializes random initial conditions deterministically") {
    RunConfig cfg = preset("sec6-fixed-node");
    ResolvedRun r1 = resolve_run(cfg);
    ResolvedRun r2 = resolve_run(cfg);
    CHECK_FALSE(r1.canonical.init.random);
    REQUIRE(r1.canonical.init.x.size() == 6);
    CHECK(r1.canonical.init.x == r2.canonical.init.x);
    for (const auto& row : r1.canonical.init.x)
        for (double e : row) CHECK(std::abs(e) <= 1.0);
    CHECK(r1.lambda2_kind == "lambda2");
    CHECK(r1.lambda2_value == doctest::Approx(4.0)); // complete tripartite demo graph
}

TEST_CASE("leaders are relabeled to node 1 with every reference remapped") {
    std::string text = R"({
      "version": 1,
      "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
      "protocol": {"variant": "leader-edge", "kappa": 1.0},
      "graph": {"nodes": 3, "leader": 3, "edges": "1 2\n2 3"},
      "gains": {"F": [[-1.0]]},
      "init": {"x": [[0.1], [0.2], [0.9]]},
      "sim": {"step": 0.001, "horizon": 0.1, "record_every": 10}
    })";
    ResolvedRun r = resolve_run(parse_config(text));
    CHECK(r.leader_relabeled_from == 3);
    REQUIRE(r.canonical.graph.leader.has_value());
    CHECK(*r.canonical.graph.leader == 0);
    // node 3's state moved to slot 1
    CHECK(r.canonical.init.x[0][0] == doctest::Approx(0.9));
    CHECK(r.canonical.init.x[2][0] == doctest::Approx(0.1));
    // edge 2-3 became 2-1, edge 1-2 became 3-2
    CHECK(r.spec.fixed_graph().has_edge(0, 1));
    CHECK(r.spec.fixed_graph().has_edge(1, 2));
    CHECK_FALSE(r.spec.fixed_graph().has_edge(0, 2));
}

TEST_CASE("run_config writes the documented files and reports convergence") {
    fs::path out = fresh_dir("run_basic");
    RunConfig cfg = parse_config(small_edge_config());
    cfg.sim.horizon = 10.0;
    RunOutcome outcome = run_config(cfg, out.string());
    CHECK(outcome.exit_code == 0);
    for (const char* f : {"manifest.json", "trajectory.csv", "weights.csv", "report.json"})
        CHECK(fs::exists(out / f));

    // header schema is a pure function of (variant, N, n)
    std::istringstream traj(slurp(out / "trajectory.csv"));
    std::string header;
    std::getline(traj, header);
    CHECK(header == "t,x_1_1,x_2_1,v_1_1,v_2_1,err_max");
    std::istringstream weights(slurp(out / "weights.csv"));
    std::getline(weights, header);
    CHECK(header == "t,c_1_2");

    // weights are monotone nondecreasing down the file
    double prev = -1.0;
    std::string line;
    while (std::getline(weights, line)) {
        double w = std::stod(line.substr(line.find(',') + 1));
        CHECK(w >= prev - 1e-9);
        prev = w;
    }

    json report = json::parse(slurp(out / "report.json"));
    CHECK(report["converged"].get<bool>());
    CHECK(report["exit_code"].get<int>() == 0);
    fs::remove_all(out);
}

TEST_CASE("identical runs produce bit-identical outputs and the manifest replays") {
    fs::path out1 = fresh_dir("repro1"), out2 = fresh_dir("repro2"), out3 = fresh_dir("repro3");
    RunConfig cfg = preset("sec6-switching-edge");
    cfg.sim.horizon = 1.0; // plenty for a reproducibility check
    run_config(cfg, out1.string());
    run_config(cfg, out2.string());
    CHECK(slurp(out1 / "trajectory.csv") == slurp(out2 / "trajectory.csv"));
    CHECK(slurp(out1 / "weights.csv") == slurp(out2 / "weights.csv"));

    // replay from the manifest: parse_config unwraps the embedded config
    RunConfig replay = parse_config(slurp(out1 / "manifest.json"));
    run_config(replay, out3.string());
    CHECK(slurp(out1 / "trajectory.csv") == slurp(out3 / "trajectory.csv"));
    CHECK(slurp(out1 / "weights.csv") == slurp(out3 / "weights.csv"));
    fs::remove_all(out1);
    fs::remove_all(out2);
    fs::remove_all(out3);
}

TEST_CASE("synthesis failures surface before any file is written") {
    std::string text = R"({
      "version": 1,
      "system": {"A": [[1]], "B": [[0]], "C": [[1]]},
      "protocol": {"variant": "edge-adaptive", "kappa": 1.0},
      "graph": {"nodes": 2, "edges": "1 2"},
      "sim": {"step": 0.001, "horizon": 1.0}
    })";
    fs::path out = fresh_dir("nostab");
    CHECK_THROWS_AS(run_config(parse_config(text), out.string()), NotStabilizable);
    CHECK_FALSE(fs::exists(out / "manifest.json"));
    fs::remove_all(out);
}

TEST_CASE("a non-stabilizing override is rejected") {
    RunConfig cfg = parse_config(small_edge_config());
    cfg.f_override = Mat{{0.0}};
    CHECK_THROWS_AS(run_config(cfg, fresh_dir("badf").string()), OverrideNotStabilizing);
}

TEST_CASE("divergence maps to exit code 3 with a partial trajectory on disk") {
    // enormous initial conditions trip the magnitude guard: the squared
    // disagreement drives a weight past 1e12 within the first steps
    std::string text = R"({
      "version": 1,
      "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
      "protocol": {"variant": "edge-adaptive", "kappa": 1.0},
      "graph": {"nodes": 2, "edges": "1 2"},
      "gains": {"F": [[-1.0]]},
      "init": {"x": [[1e11], [-1e11]]},
      "sim": {"step": 0.001, "horizon": 1.0, "record_every": 10}
    })";
    fs::path out = fresh_dir("diverge");
    RunOutcome outcome = run_config(parse_config(text), out.string());
    CHECK(outcome.exit_code == 3);
    CHECK(outcome.diverged);
    json report = json::parse(slurp(out / "report.json"));
    CHECK(report["diverged"].get<bool>());
    CHECK(report["exit_code"].get<int>() == 3);
    fs::remove_all(out);
}

TEST_CASE("verify_config reports certificate margins without simulating") {
    json rep = verify_config(preset("sec6-fixed-node"));
    CHECK(rep["certificate"]["pass"].get<bool>());
    CHECK(rep["certificate"]["hurwitz_margin"].get<double>() == doctest::Approx(-1.0));
    CHECK(rep["certificate"]["lmi_margin"].get<double>() < 0.0);
    CHECK(rep["lambda2"].get<double>() == doctest::Approx(4.0));
}

TEST_CASE("a single-agent network runs end to end") {
    std::string text = R"({
      "version": 1,
      "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
      "protocol": {"variant": "edge-adaptive", "kappa": 1.0},
      "graph": {"nodes": 1, "edges": ""},
      "gains": {"F": [[-1.0]]},
      "init": {"x": [[0.7]]},
      "sim": {"step": 0.001, "horizon": 0.2, "record_every": 10}
    })";
    fs::path out = fresh_dir("single");
    RunOutcome outcome = run_config(parse_config(text), out.string());
    CHECK(outcome.exit_code == 0); // alone, it is trivially at consensus
    json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK_FALSE(manifest.contains("lambda2"));
    fs::remove_all(out);
}

TEST_CASE("initial weight overrides land on the right pairs") {
    std::string text = R"({
      "version": 1,
      "system": {"A": [[0]], "B": [[1]], "C": [[1]]},
      "protocol": {"variant": "edge-adaptive", "kappa": 1.0,
                   "initial_weights": {"default": 0.5, "overrides": [[1, 3, 2.5]]}},
      "graph": {"nodes": 3, "edges": "1 2\n1 3\n2 3"},
      "gains": {"F": [[-1.0]]},
      "init": {"x": [[0.1], [0.2], [0.3]]},
      "sim": {"step": 0.001, "horizon": 0.1}
    })";
    ResolvedRun r = resolve_run(parse_config(text));
    int idx = r.spec.pair_index(0, 2);
    REQUIRE(idx >= 0);
    CHECK(r.init.edge_weights[idx] == 2.5);
    int other = r.spec.pair_index(0, 1);
    CHECK(r.init.edge_weights[other] == 0.5);
}
