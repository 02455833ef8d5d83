#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/linalg.hpp"
#include "consensus/matrix.hpp"
#include "consensus/rng.hpp"

namespace consensus {

/// Undirected, unweighted communication graph. Nodes are 0-based internally;
/// an optional leader marks the agent that ignores its neighbors (its edges
/// still exist and feed information to the adjacent followers).
class CommGraph {
public:
    CommGraph() = default;

    CommGraph(std::size_t node_count, std::vector<std::pair<int, int>> edges,
              std::optional<int> leader = std::nullopt)
        : n_(node_count), leader_(leader) {
        for (auto [i, j] : edges) {
            if (i == j) throw InvalidGraph("self-loop on node " + std::to_string(i + 1));
            if (i < 0 || j < 0 || i >= static_cast<int>(n_) || j >= static_cast<int>(n_))
                throw InvalidGraph("edge endpoint out of range");
            if (i > j) std::swap(i, j);
            edges_.emplace_back(i, j);
        }
        std::sort(edges_.begin(), edges_.end());
        auto dup = std::adjacent_find(edges_.begin(), edges_.end());
        if (dup != edges_.end()) throw InvalidGraph("duplicate edge");
        if (leader_ && (*leader_ < 0 || *leader_ >= static_cast<int>(n_)))
            throw InvalidGraph("leader index out of range");
        adj_.assign(n_, {});
        for (auto [i, j] : edges_) {
            adj_[i].push_back(j);
            adj_[j].push_back(i);
        }
    }

    std::size_t node_count() const { return n_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<std::vector<int>>& neighbors() const { return adj_; }
    std::optional<int> leader() const { return leader_; }

    bool has_edge(int i, int j) const {
        if (i > j) std::swap(i, j);
        return std::binary_search(edges_.begin(), edges_.end(), std::make_pair(i, j));
    }

    CommGraph with_leader(int leader) const { return CommGraph(n_, edges_, leader); }

private:
    std::size_t n_ = 0;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> adj_;
    std::optional<int> leader_;
};

/// Graph Laplacian: degree on the diagonal, -1 per edge. Built from integer
/// arithmetic, so row sums are exactly zero.
inline Mat laplacian(const CommGraph& g) {
    const std::size_t n = g.node_count();
    Mat l(n, n);
    for (auto [i, j] : g.edges()) {
        l(i, i) += 1.0;
        l(j, j) += 1.0;
        l(i, j) -= 1.0;
        l(j, i) -= 1.0;
    }
    return l;
}

inline bool is_connected(const CommGraph& g) {
    const std::size_t n = g.node_count();
    if (n == 0) return false;
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int w : g.neighbors()[u]) {
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                stack.push_back(w);
            }
        }
    }
    return count == n;
}

/// Algebraic connectivity: second-smallest Laplacian eigenvalue of a
/// connected graph.
inline double lambda2(const CommGraph& g) {
    if (!is_connected(g))
        throw Disconnected("lambda2: graph is disconnected, the value would be 0");
    if (g.node_count() == 1)
        throw Disconnected("lambda2: single node has no nonzero eigenvalue");
    auto e = sym_eig(laplacian(g), 1e-12);
    return e.values[1];
}

inline double lambda2_min(const std::vector<CommGraph>& graphs) {
    if (graphs.empty()) throw Disconnected("lambda2_min: empty graph list");
    double m = lambda2(graphs.front());
    for (std::size_t k = 1; k < graphs.size(); ++k) m = std::min(m, lambda2(graphs[k]));
    return m;
}

struct LeaderPartition {
    Mat follower_block; // (N-1)x(N-1), symmetric
    Mat leader_column;  // (N-1)x1
};

/// Blocks of the leader-respecting Laplacian (the leader row is zero because
/// the leader ignores its neighbors). The leader must sit at index 0; the
/// follower block keeps the degrees contributed by leader-incident edges.
inline LeaderPartition leader_partition(const CommGraph& g) {
    if (!g.leader()) throw NoLeader("leader_partition: no leader set");
    if (*g.leader() != 0)
        throw NoLeader("leader_partition: leader must be re-indexed to node 1");
    const std::size_t n = g.node_count();
    if (n < 2) throw InvalidGraph("leader_partition: need at least one follower");
    Mat full = laplacian(g);
    LeaderPartition p;
    p.follower_block = full.block(1, 1, n - 1, n - 1);
    p.leader_column = full.block(1, 0, n - 1, 1);
    return p;
}

/// Leader-rooted reachability: the follower subgraph is undirected by
/// construction, so the condition reduces to connectivity of the full graph
/// (equivalently the follower block of the Laplacian is positive definite).
inline bool check_assumption1(const CommGraph& g) {
    if (!g.leader()) throw NoLeader("check_assumption1: no leader set");
    return is_connected(g);
}

enum class SwitchMode { Cyclic, Random };

/// Piecewise-constant graph signal: constant on [k*dwell, (k+1)*dwell) and
/// right-continuous at the switch instants. Random mode draws the active
/// graph per dwell interval from a seed, so replays are identical.
class SwitchingSignal {
public:
    SwitchingSignal() = default;

    SwitchingSignal(double dwell, std::vector<CommGraph> graphs, SwitchMode mode,
                    std::uint64_t seed = 0)
        : dwell_(dwell), graphs_(std::move(graphs)), mode_(mode), seed_(seed) {
        if (!(dwell_ > 0.0)) throw InvalidGraph("switching dwell must be positive");
        if (graphs_.empty()) throw InvalidGraph("switching signal needs at least one graph");
        for (const auto& g : graphs_)
            if (!is_connected(g))
                throw Disconnected("every graph in a switching signal must be connected");
    }

    double dwell() const { return dwell_; }
    const std::vector<CommGraph>& graphs() const { return graphs_; }
    SwitchMode mode() const { return mode_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t index_at(double t) const {
        if (t < 0.0) throw Error("signal_at: negative time");
        double u = t / dwell_;
        double k = std::floor(u);
        // snap to the next interval when rounding left t marginally below a
        // switch instant (right-continuity)
        if (u - k > 1.0 - 1e-9) k += 1.0;
        auto interval = static_cast<std::uint64_t>(k);
        if (mode_ == SwitchMode::Cyclic) return interval % graphs_.size();
        return mix_u64(seed_, interval) % graphs_.size();
    }

    const CommGraph& at(double t) const { return graphs_[index_at(t)]; }

private:
    double dwell_ = 0.0;
    std::vector<CommGraph> graphs_;
    SwitchMode mode_ = SwitchMode::Cyclic;
    std::uint64_t seed_ = 0;
};

inline std::size_t signal_at(const SwitchingSignal& s, double t) { return s.index_at(t); }

} // namespace consensus
