#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "consensus/graph.hpp"
#include "oracle_helpers.hpp"

using namespace consensus;

namespace {

CommGraph path3() { return CommGraph(3, {{0, 1}, {1, 2}}); }

CommGraph complete(std::size_t n) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < static_cast<int>(n); ++i)
        for (int j = i + 1; j < static_cast<int>(n); ++j) e.push_back({i, j});
    return CommGraph(n, e);
}

CommGraph ring(std::size_t n) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < static_cast<int>(n); ++i)
        e.push_back({i, (i + 1) % static_cast<int>(n)});
    return CommGraph(n, e);
}

/// All graphs on n nodes, one per subset of the possible edges.
template <typename F>
void for_each_graph(std::size_t n, F&& f) {
    std::vector<std::pair<int, int>> all;
    for (int i = 0; i < static_cast<int>(n); ++i)
        for (int j = i + 1; j < static_cast<int>(n); ++j) all.push_back({i, j});
    for (std::uint64_t mask = 0; mask < (1ull << all.size()); ++mask) {
        std::vector<std::pair<int, int>> e;
        for (std::size_t b = 0; b < all.size(); ++b)
            if (mask & (1ull << b)) e.push_back(all[b]);
        f(CommGraph(n, e));
    }
}

} // namespace

TEST_CASE("laplacian of a single edge") {
    Mat l = laplacian(CommGraph(2, {{0, 1}}));
    CHECK(l == Mat{{1, -1}, {-1, 1}});
}

TEST_CASE("laplacian of the 3-node path") {
    CHECK(laplacian(path3()) == Mat{{1, -1, 0}, {-1, 2, -1}, {0, -1, 1}});
}

TEST_CASE("laplacian of the complete graph on 6 nodes") {
    Mat l = laplacian(complete(6));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(l(i, j) == (i == j ? 5.0 : -1.0));
}

TEST_CASE("laplacian row sums are exactly zero") {
    for_each_graph(5, [](const CommGraph& g) {
        Mat l = laplacian(g);
        for (std::size_t i = 0; i < 5; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 5; ++j) s += l(i, j);
            CHECK(s == 0.0);
        }
    });
}

TEST_CASE("is_connected basics") {
    CHECK(is_connected(path3()));
    CHECK_FALSE(is_connected(CommGraph(4, {{0, 1}, {2, 3}})));
    CommGraph g6(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {1, 4}});
    CHECK(is_connected(g6));
    CHECK(lambda2(g6) > 0.0);
}

TEST_CASE("connectivity agrees with spectral test on all graphs up to 5 nodes") {
    for (std::size_t n : {2u, 3u, 4u, 5u}) {
        for_each_graph(n, [&](const CommGraph& g) {
            bool traversal = is_connected(g);
            // spectral route: second-smallest Laplacian eigenvalue positive
            double l2 = oracle::kth_smallest_eig(laplacian(g), 1);
            CHECK(traversal == (l2 > 1e-9));
        });
    }
}

TEST_CASE("lambda2 of complete graphs equals the node count") {
    for (std::size_t n : {2u, 3u, 4u, 6u}) {
        CHECK(std::abs(lambda2(complete(n)) - static_cast<double>(n)) < 1e-10);
    }
}

TEST_CASE("lambda2 of the 3-node path is 1") {
    CHECK(std::abs(lambda2(path3()) - 1.0) < 1e-12);
}

TEST_CASE("lambda2 of the 6-ring matches the circulant formula") {
    double expected = 2.0 - 2.0 * std::cos(2.0 * M_PI / 6.0); // = 1
    CHECK(std::abs(lambda2(ring(6)) - expected) < 1e-10);
    CHECK(std::abs(lambda2(ring(6)) - 1.0) < 1e-10);
}

TEST_CASE("lambda2 rejects disconnected graphs") {
    CHECK_THROWS_AS(lambda2(CommGraph(4, {{0, 1}, {2, 3}})), Disconnected);
}

TEST_CASE("lambda2 equals the Rayleigh minimum orthogonal to ones") {
    // all connected graphs up to N=5, plus a couple of 8-node samples
    for (std::size_t n : {2u, 3u, 4u, 5u}) {
        for_each_graph(n, [&](const CommGraph& g) {
            if (!is_connected(g)) return;
            double mine = lambda2(g);
            double rayleigh = oracle::rayleigh_min_orthogonal_to_ones(laplacian(g));
            CHECK(std::abs(mine - rayleigh) <= 1e-8);
        });
    }
    CommGraph g8(8, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 0}, {0, 4}, {2, 6}});
    CHECK(std::abs(lambda2(g8) - oracle::rayleigh_min_orthogonal_to_ones(laplacian(g8))) <= 1e-8);
}

TEST_CASE("lambda2_min over a list") {
    CHECK(lambda2_min({complete(6), ring(6)}) == doctest::Approx(1.0));
    CHECK(lambda2_min({ring(6)}) == doctest::Approx(lambda2(ring(6))));
    CHECK(lambda2_min({ring(6), ring(6)}) == doctest::Approx(lambda2(ring(6))));
}

TEST_CASE("leader_partition of a single leader-follower pair") {
    CommGraph g(2, {{0, 1}}, 0);
    auto p = leader_partition(g);
    CHECK(p.follower_block == Mat{{1}});
    CHECK(p.leader_column == Mat{{-1}});
}

TEST_CASE("leader_partition of a star with the leader at the center") {
    CommGraph g(4, {{0, 1}, {0, 2}, {0, 3}}, 0);
    auto p = leader_partition(g);
    CHECK(p.follower_block == Mat::identity(3));
    CHECK(p.leader_column == Mat{{-1}, {-1}, {-1}});
}

TEST_CASE("leader attached to one end of a follower path") {
    CommGraph g(4, {{0, 1}, {1, 2}, {2, 3}}, 0);
    auto p = leader_partition(g);
    CHECK(p.follower_block.asymmetry() == 0.0);
    CHECK(oracle::smallest_eig(p.follower_block) > 1e-9);
}

TEST_CASE("leader_partition requires a leader") {
    CHECK_THROWS_AS(leader_partition(path3()), NoLeader);
}

TEST_CASE("check_assumption1 basics") {
    CHECK(check_assumption1(CommGraph(4, {{0, 1}, {1, 2}, {2, 3}}, 0)));
    // leader isolated from the followers
    CHECK_FALSE(check_assumption1(CommGraph(4, {{1, 2}, {2, 3}}, 0)));
    // follower subgraph disconnected, but both components touch the leader
    CommGraph both(5, {{0, 1}, {1, 2}, {0, 3}, {3, 4}}, 0);
    CHECK(check_assumption1(both));
    CHECK(oracle::smallest_eig(leader_partition(both).follower_block) > 1e-9);
    CHECK_THROWS_AS(check_assumption1(path3()), NoLeader);
}

TEST_CASE("assumption 1 matches follower-block positive definiteness exhaustively") {
    for (std::size_t n : {2u, 3u, 4u, 5u}) {
        for_each_graph(n, [&](const CommGraph& g) {
            CommGraph with_lead = g.with_leader(0);
            bool a1 = check_assumption1(with_lead);
            double mn = oracle::smallest_eig(leader_partition(with_lead).follower_block);
            CHECK(a1 == (mn > 1e-9));
        });
    }
}

TEST_CASE("switching signal cyclic schedule is right-continuous") {
    SwitchingSignal s(0.1, {ring(6), complete(6)}, SwitchMode::Cyclic);
    CHECK(signal_at(s, 0.05) == 0);
    CHECK(signal_at(s, 0.1) == 1);
    CHECK(signal_at(s, 0.1999999) == 1);
    CHECK(signal_at(s, 0.2) == 0);
    // constant within each dwell interval
    for (double t : {0.0, 0.01, 0.09, 0.0999999999}) CHECK(signal_at(s, t) == 0);
}

TEST_CASE("switching signal random mode replays identically for a fixed seed") {
    SwitchingSignal a(0.1, {ring(6), complete(6)}, SwitchMode::Random, 42);
    SwitchingSignal b(0.1, {ring(6), complete(6)}, SwitchMode::Random, 42);
    bool saw_both = false;
    std::size_t first = a.index_at(0.0);
    for (int k = 0; k < 100; ++k) {
        double t = 0.1 * k + 0.05;
        CHECK(a.index_at(t) == b.index_at(t));
        if (a.index_at(t) != first) saw_both = true;
    }
    CHECK(saw_both);
}

TEST_CASE("switching signal validates its graphs") {
    CHECK_THROWS_AS(SwitchingSignal(0.1, {CommGraph(4, {{0, 1}, {2, 3}})}, SwitchMode::Cyclic),
                    Disconnected);
    CHECK_THROWS_AS(SwitchingSignal(0.0, {ring(6)}, SwitchMode::Cyclic), InvalidGraph);
}

TEST_CASE("graph validation rejects malformed inputs") {
    CHECK_THROWS_AS(CommGraph(3, {{0, 0}}), InvalidGraph);
    CHECK_THROWS_AS(CommGraph(3, {{0, 5}}), InvalidGraph);
    CHECK_THROWS_AS(CommGraph(3, {{0, 1}, {1, 0}}), InvalidGraph);
    CHECK_THROWS_AS(CommGraph(3, {{0, 1}}, 7), InvalidGraph);
}
