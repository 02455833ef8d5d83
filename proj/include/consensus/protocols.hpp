#pragma once

#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/graph.hpp"
#include "consensus/matrix.hpp"
#include "consensus/synthesis.hpp"
#include "consensus/system.hpp"

namespace consensus {

enum class Variant { EdgeAdaptive, NodeAdaptive, LeaderEdge, LeaderNode, SwitchingEdge };

inline bool is_edge_variant(Variant v) {
    return v == Variant::EdgeAdaptive || v == Variant::SwitchingEdge ||
           v == Variant::LeaderEdge;
}

inline bool is_leader_variant(Variant v) {
    return v == Variant::LeaderEdge || v == Variant::LeaderNode;
}

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::EdgeAdaptive: return "edge-adaptive";
        case Variant::NodeAdaptive: return "node-adaptive";
        case Variant::LeaderEdge: return "leader-edge";
        case Variant::LeaderNode: return "leader-node";
        case Variant::SwitchingEdge: return "switching-edge";
    }
    return "?";
}

/// Full network state: agent states, protocol states, and the adaptive
/// weights of the active variant. Edge weights are stored once per unordered
/// pair (canonical order from ProtocolSpec), which keeps them symmetric by
/// construction.
struct NetworkState {
    std::vector<Mat> x;                // N vectors, n x 1
    std::vector<Mat> v;                // N vectors, n x 1
    std::vector<double> edge_weights;  // aligned with ProtocolSpec::edge_pairs()
    std::vector<double> node_weights;  // size N for node variants, else empty

    bool is_finite() const {
        for (const auto& m : x)
            if (!m.is_finite()) return false;
        for (const auto& m : v)
            if (!m.is_finite()) return false;
        for (double w : edge_weights)
            if (!std::isfinite(w)) return false;
        for (double w : node_weights)
            if (!std::isfinite(w)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& c : x) m = std::max(m, c.max_abs());
        for (const auto& c : v) m = std::max(m, c.max_abs());
        for (double w : edge_weights) m = std::max(m, std::abs(w));
        for (double w : node_weights) m = std::max(m, std::abs(w));
        return m;
    }
};

using GraphSource = std::variant<CommGraph, SwitchingSignal>;

/// Adaptation gains: a uniform value plus optional per-edge overrides
/// (edge variants) or an explicit per-node list (node variants).
struct AdaptGains {
    double uniform = 1.0;
    std::vector<std::tuple<int, int, double>> edge_overrides; // (i, j, value), 0-based
    std::vector<double> node_values;                          // size N when non-empty
};

/// Everything needed to evaluate the closed-loop right-hand side: the agent
/// model, the designed gains, the (possibly switching) communication graph,
/// and the positive adaptation gains.
class ProtocolSpec {
public:
    static ProtocolSpec make(Variant variant, LinearSystem sys, GainSet gains,
                             GraphSource source, AdaptGains adapt = {}) {
        ProtocolSpec s;
        s.variant_ = variant;
        sys.validate();
        s.sys_ = std::move(sys);
        if (gains.F.rows() != s.sys_.p() || gains.F.cols() != s.sys_.n())
            throw DimensionMismatch("protocol: F dimension mismatch");
        if (gains.L.rows() != s.sys_.n() || gains.L.cols() != s.sys_.q())
            throw DimensionMismatch("protocol: L dimension mismatch");
        s.gains_ = std::move(gains);
        s.source_ = std::move(source);
        s.validate_graphs();
        s.build_pairs();
        s.resolve_adapt(adapt);
        s.a_cl_ = s.sys_.A + s.sys_.B * s.gains_.F;
        return s;
    }

    Variant variant() const { return variant_; }
    const LinearSystem& sys() const { return sys_; }
    const GainSet& gains() const { return gains_; }
    const Mat& closed_loop_a() const { return a_cl_; }
    const GraphSource& source() const { return source_; }
    std::size_t agent_count() const { return n_agents_; }

    bool switching() const { return std::holds_alternative<SwitchingSignal>(source_); }

    const SwitchingSignal& signal() const { return std::get<SwitchingSignal>(source_); }

    const CommGraph& fixed_graph() const { return std::get<CommGraph>(source_); }

    /// Graph active at time t (right-continuous in switching mode).
    const CommGraph& graph_at(double t) const {
        if (switching()) return signal().at(t);
        return fixed_graph();
    }

    std::size_t graph_index_at(double t) const {
        return switching() ? signal().index_at(t) : 0;
    }

    const std::vector<CommGraph>& all_graphs() const { return graph_list_; }

    /// Canonical unordered pairs carrying an adaptive edge weight: every pair
    /// adjacent in at least one possible graph, ascending order.
    const std::vector<std::pair<int, int>>& edge_pairs() const { return pairs_; }

    const std::vector<double>& edge_gains() const { return kappa_; }
    const std::vector<double>& node_gains() const { return tau_; }

    /// Pair index lookup; -1 when the pair carries no weight.
    int pair_index(int i, int j) const {
        if (i > j) std::swap(i, j);
        auto it = pair_index_.find({i, j});
        return it == pair_index_.end() ? -1 : it->second;
    }

    /// Whether edge_pairs()[pair_idx] is an edge of all_graphs()[graph_idx].
    bool pair_active(std::size_t graph_idx, std::size_t pair_idx) const {
        return active_[graph_idx * pairs_.size() + pair_idx] != 0;
    }

    NetworkState zero_state() const {
        NetworkState st;
        st.x.assign(n_agents_, Mat(sys_.n(), 1));
        st.v.assign(n_agents_, Mat(sys_.n(), 1));
        if (is_edge_variant(variant_))
            st.edge_weights.assign(pairs_.size(), 0.0);
        else
            st.node_weights.assign(n_agents_, 0.0);
        return st;
    }

    void validate_state(const NetworkState& s) const {
        if (s.x.size() != n_agents_ || s.v.size() != n_agents_)
            throw DimensionMismatch("state: agent count mismatch");
        for (const auto& c : s.x)
            if (c.rows() != sys_.n() || c.cols() != 1)
                throw DimensionMismatch("state: x entry dimension mismatch");
        for (const auto& c : s.v)
            if (c.rows() != sys_.n() || c.cols() != 1)
                throw DimensionMismatch("state: v entry dimension mismatch");
        if (is_edge_variant(variant_)) {
            if (s.edge_weights.size() != pairs_.size())
                throw DimensionMismatch("state: edge weight count mismatch");
            if (!s.node_weights.empty())
                throw DimensionMismatch("state: node weights not used by edge variants");
        } else {
            if (s.node_weights.size() != n_agents_)
                throw DimensionMismatch("state: node weight count mismatch");
            if (!s.edge_weights.empty())
                throw DimensionMismatch("state: edge weights not used by node variants");
        }
    }

private:
    void validate_graphs() {
        if (switching()) {
            if (variant_ != Variant::SwitchingEdge)
                throw ValidationError("graph", "switching source requires the switching-edge variant");
            graph_list_ = signal().graphs(); // connectivity checked by the signal
        } else {
            if (variant_ == Variant::SwitchingEdge)
                throw ValidationError("graph", "switching-edge variant requires a switching source");
            const CommGraph& g = fixed_graph();
            if (is_leader_variant(variant_)) {
                if (!g.leader()) throw NoLeader("protocol: leader variant without leader");
                if (*g.leader() != 0)
                    throw NoLeader("protocol: leader must be re-indexed to node 1");
                if (!check_assumption1(g))
                    throw AssumptionViolated(
                        "protocol: graph lacks a leader-rooted spanning structure");
            } else {
                if (!is_connected(g)) throw Disconnected("protocol: graph is disconnected");
            }
            graph_list_ = {g};
        }
        n_agents_ = graph_list_.front().node_count();
        for (const auto& g : graph_list_)
            if (g.node_count() != n_agents_)
                throw ValidationError("graph", "all graphs must share the node count");
    }

    void build_pairs() {
        std::map<std::pair<int, int>, int> seen;
        for (const auto& g : graph_list_)
            for (auto e : g.edges()) seen.emplace(e, 0);
        pairs_.reserve(seen.size());
        for (auto& [e, idx] : seen) {
            idx = static_cast<int>(pairs_.size());
            pairs_.push_back(e);
        }
        pair_index_ = std::move(seen);
        active_.assign(graph_list_.size() * pairs_.size(), 0);
        for (std::size_t g = 0; g < graph_list_.size(); ++g)
            for (std::size_t p = 0; p < pairs_.size(); ++p)
                active_[g * pairs_.size() + p] =
                    graph_list_[g].has_edge(pairs_[p].first, pairs_[p].second) ? 1 : 0;
    }

    void resolve_adapt(const AdaptGains& adapt) {
        if (is_edge_variant(variant_)) {
            if (!(adapt.uniform > 0.0))
                throw ValidationError("kappa", "adaptation gains must be positive");
            kappa_.assign(pairs_.size(), adapt.uniform);
            for (auto [i, j, val] : adapt.edge_overrides) {
                int idx = pair_index(i, j);
                if (idx < 0)
                    throw InactiveEdgeWeight("kappa override on pair (" + std::to_string(i + 1) +
                                             "," + std::to_string(j + 1) +
                                             ") never adjacent in any graph");
                if (!(val > 0.0))
                    throw ValidationError("kappa", "adaptation gains must be positive");
                kappa_[idx] = val;
            }
            if (!adapt.node_values.empty())
                throw ValidationError("tau", "per-node gains not used by edge variants");
        } else {
            if (adapt.node_values.empty()) {
                if (!(adapt.uniform > 0.0))
                    throw ValidationError("tau", "adaptation gains must be positive");
                tau_.assign(n_agents_, adapt.uniform);
            } else {
                if (adapt.node_values.size() != n_agents_)
                    throw ValidationError("tau", "per-node gain list must have one entry per agent");
                for (double t : adapt.node_values)
                    if (!(t > 0.0))
                        throw ValidationError("tau", "adaptation gains must be positive");
                tau_ = adapt.node_values;
            }
            if (!adapt.edge_overrides.empty())
                throw ValidationError("kappa", "per-edge gains not used by node variants");
        }
    }

    Variant variant_ = Variant::EdgeAdaptive;
    LinearSystem sys_;
    GainSet gains_;
    GraphSource source_;
    std::vector<CommGraph> graph_list_;
    std::size_t n_agents_ = 0;
    std::vector<std::pair<int, int>> pairs_;
    std::map<std::pair<int, int>, int> pair_index_;
    std::vector<char> active_;
    std::vector<double> kappa_;
    std::vector<double> tau_;
    Mat a_cl_;
};

/// Open-loop agent map: returns A x + B u.
inline Mat plant_rhs(const LinearSystem& sys, const Mat& x, const Mat& u) {
    if (x.rows() != sys.n() || x.cols() != 1)
        throw DimensionMismatch("plant_rhs: x must be n x 1");
    if (u.rows() != sys.p() || u.cols() != 1)
        throw DimensionMismatch("plant_rhs: u must be p x 1");
    return sys.A * x + sys.B * u;
}

/// Closed-loop derivative of the whole network at time t. The only time
/// dependence is the active graph in switching mode; the map is otherwise a
/// pure function of the state.
///
/// Edge variants, per agent i with weights c on the active edges:
///   vdot_i = (A+BF) v_i + L sum_j c_ij a_ij [C(v_i - v_j) - (y_i - y_j)]
///   cdot_ij = kappa_ij a_ij |(y_i - y_j) - C(v_i - v_j)|^2
/// Node variants scale the injection by the node weight d_i and adapt on the
/// squared norm of the aggregated disagreement (sum first, then square).
/// Leader variants: agent 1 runs open loop (u_1 = 0) with companion state
/// vdot_1 = (A+BF) v_1 and ignores its neighbors.
inline NetworkState network_rhs(const ProtocolSpec& spec, const NetworkState& s, double t) {
    spec.validate_state(s);
    const LinearSystem& sys = spec.sys();
    const std::size_t nagents = spec.agent_count();
    const bool leader = is_leader_variant(spec.variant());
    const bool edge = is_edge_variant(spec.variant());
    const std::size_t gidx = spec.graph_index_at(t);

    NetworkState d = spec.zero_state();

    std::vector<Mat> y(nagents);
    for (std::size_t i = 0; i < nagents; ++i) y[i] = sys.C * s.x[i];

    // aggregated output-feedback disagreement per agent:
    //   agg_i = sum_j w_ij a_ij [C(v_i - v_j) - (y_i - y_j)]
    // with w = c_ij for edge variants and w = 1 for node variants.
    std::vector<Mat> agg(nagents, Mat(sys.q(), 1));
    const auto& pairs = spec.edge_pairs();
    for (std::size_t pidx = 0; pidx < pairs.size(); ++pidx) {
        if (!spec.pair_active(gidx, pidx)) continue;
        auto [i, j] = pairs[pidx];
        Mat diff = (y[i] - y[j]) - sys.C * (s.v[i] - s.v[j]);
        double d2 = dot(diff, diff);
        if (edge) {
            double c = s.edge_weights[pidx];
            Mat scaled = c * diff;
            agg[i] -= scaled;
            agg[j] += scaled;
            d.edge_weights[pidx] = spec.edge_gains()[pidx] * d2;
        } else {
            agg[i] -= diff;
            agg[j] += diff;
        }
    }

    for (std::size_t i = 0; i < nagents; ++i) {
        if (leader && i == 0) {
            d.x[0] = sys.A * s.x[0];
            d.v[0] = spec.closed_loop_a() * s.v[0];
            continue;
        }
        d.x[i] = sys.A * s.x[i] + sys.B * (spec.gains().F * s.v[i]);
        if (edge) {
            d.v[i] = spec.closed_loop_a() * s.v[i] + spec.gains().L * agg[i];
        } else {
            double di = s.node_weights[i];
            d.v[i] = spec.closed_loop_a() * s.v[i] + di * (spec.gains().L * agg[i]);
            d.node_weights[i] = spec.node_gains()[i] * dot(agg[i], agg[i]);
        }
    }
    return d;
}

inline NetworkState edge_adaptive_rhs(const ProtocolSpec& spec, const NetworkState& s,
                                      double t) {
    if (spec.variant() != Variant::EdgeAdaptive && spec.variant() != Variant::SwitchingEdge)
        throw ValidationError("variant", "edge_adaptive_rhs needs an edge-adaptive spec");
    return network_rhs(spec, s, t);
}

inline NetworkState node_adaptive_rhs(const ProtocolSpec& spec, const NetworkState& s,
                                      double t) {
    if (spec.variant() != Variant::NodeAdaptive)
        throw ValidationError("variant", "node_adaptive_rhs needs the node-adaptive spec");
    return network_rhs(spec, s, t);
}

inline NetworkState leader_edge_rhs(const ProtocolSpec& spec, const NetworkState& s,
                                    double t) {
    if (spec.variant() != Variant::LeaderEdge)
        throw ValidationError("variant", "leader_edge_rhs needs the leader-edge spec");
    return network_rhs(spec, s, t);
}

inline NetworkState leader_node_rhs(const ProtocolSpec& spec, const NetworkState& s,
                                    double t) {
    if (spec.variant() != Variant::LeaderNode)
        throw ValidationError("variant", "leader_node_rhs needs the leader-node spec");
    return network_rhs(spec, s, t);
}

enum class ErrorFrame { Mean, Leader };

struct ConsensusError {
    std::vector<Mat> per_agent; // stacked [x; v] disagreement, 2n x 1 each
    double max_norm = 0.0;
};

/// Disagreement of the stacked per-agent vector z_i = [x_i; v_i]: deviation
/// from the network mean, or from agent 1 in the leader frame.
inline ConsensusError consensus_error(const NetworkState& s,
                                      ErrorFrame frame = ErrorFrame::Mean) {
    ConsensusError out;
    const std::size_t nagents = s.x.size();
    if (nagents == 0) return out;
    std::vector<Mat> z(nagents);
    for (std::size_t i = 0; i < nagents; ++i) z[i] = vcat(s.x[i], s.v[i]);
    if (frame == ErrorFrame::Mean) {
        Mat mean = z[0];
        for (std::size_t i = 1; i < nagents; ++i) mean += z[i];
        mean *= 1.0 / static_cast<double>(nagents);
        for (std::size_t i = 0; i < nagents; ++i) out.per_agent.push_back(z[i] - mean);
    } else {
        for (std::size_t i = 0; i < nagents; ++i) out.per_agent.push_back(z[i] - z[0]);
    }
    for (const auto& e : out.per_agent) out.max_norm = std::max(out.max_norm, norm2(e));
    return out;
}

/// Disagreement of the agent states x_i alone (deviation from the mean or
/// from the leader); this is the headline trajectory metric.
inline double state_disagreement(const NetworkState& s, ErrorFrame frame = ErrorFrame::Mean) {
    const std::size_t nagents = s.x.size();
    if (nagents == 0) return 0.0;
    double worst = 0.0;
    if (frame == ErrorFrame::Mean) {
        Mat mean = s.x[0];
        for (std::size_t i = 1; i < nagents; ++i) mean += s.x[i];
        mean *= 1.0 / static_cast<double>(nagents);
        for (const auto& xi : s.x) worst = std::max(worst, norm2(xi - mean));
    } else {
        for (const auto& xi : s.x) worst = std::max(worst, norm2(xi - s.x[0]));
    }
    return worst;
}

} // namespace consensus
