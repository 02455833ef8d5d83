#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "consensus/synthesis.hpp"
#include "oracle_helpers.hpp"

using namespace consensus;

namespace {

LinearSystem triple_integrator() {
    return {Mat{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}}, Mat{{0}, {0}, {1}}, Mat{{1, 0, 0}}};
}

const Mat kF{{-3.0, -6.5, -4.5}};

LinearSystem scalar_sys() { return {Mat{{0}}, Mat{{1}}, Mat{{1}}}; }

/// Random system that is stabilizable and detectable by construction: a
/// Hurwitz core direct-summed with a controllable/observable companion part,
/// then mixed by a mild similarity transform.
LinearSystem random_stab_detect(std::size_t n_stable, std::size_t n_canon,
                                consensus::SplitMix64& rng) {
    std::size_t n = n_stable + n_canon;
    Mat a(n, n);
    for (std::size_t i = 0; i < n_stable; ++i) {
        a(i, i) = -0.3 - rng.uniform(0.0, 1.5);
        for (std::size_t j = 0; j < i; ++j) a(i, j) = rng.uniform(-0.5, 0.5);
    }
    // companion block: chain of integrators with random characteristic row
    for (std::size_t i = 0; i + 1 < n_canon; ++i) a(n_stable + i, n_stable + i + 1) = 1.0;
    for (std::size_t j = 0; j < n_canon; ++j)
        a(n - 1, n_stable + j) = rng.uniform(-1.0, 1.0);
    Mat b(n, 1);
    if (n_canon > 0) b(n - 1, 0) = 1.0; // drives the whole companion chain
    Mat c(1, n);
    if (n_canon > 0) c(0, n_stable) = 1.0; // observes the whole companion chain
    if (n_canon == 0) {
        b(0, 0) = 1.0;
        c(0, 0) = 1.0;
    }
    Mat t = Mat::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) t(i, j) += 0.15 * rng.uniform(-1.0, 1.0);
    Mat tinv = inverse(t);
    return {t * a * tinv, t * b, c * tinv};
}

} // namespace

TEST_CASE("design_gains accepts the textbook override and certifies it") {
    LinearSystem sys = triple_integrator();
    GainSet g = design_gains(sys, kF);
    CHECK(g.F == kF);
    // closed loop factors as (s+1)(s+1.5)(s+2)
    CHECK(std::abs(is_hurwitz(sys.A + sys.B * g.F).spectral_abscissa - (-1.0)) < 1e-9);
    CertificateReport r = verify_certificate(sys, g);
    CHECK(r.pass());
    CHECK(r.hurwitz_margin == doctest::Approx(-1.0));
    CHECK(r.lmi_margin < -kMarginTol);
    CHECK(is_positive_definite(g.Q, 1e-10).positive_definite);
    CHECK(is_positive_definite(g.P_lyap, 1e-10).positive_definite);
    // L has the expected sign pattern (all entries negative for this plant);
    // its exact values depend on the certificate normalization.
    for (std::size_t i = 0; i < 3; ++i) CHECK(g.L(i, 0) < 0.0);
}

TEST_CASE("design_gains scalar case has closed-form certificate") {
    GainSet g = design_gains(scalar_sys(), Mat{{-1.0}});
    CHECK(g.Q(0, 0) == doctest::Approx(1.0));
    CHECK(g.L(0, 0) == doctest::Approx(-1.0));
    // the certified inequality evaluates to -2 here
    double lmi = g.Q(0, 0) * 0.0 + 0.0 * g.Q(0, 0) - 2.0;
    CHECK(lmi == doctest::Approx(-2.0));
    CHECK(verify_certificate(scalar_sys(), g).pass());
}

TEST_CASE("design_gains accepts a zero override when A is already Hurwitz") {
    LinearSystem sys{Mat{{-1}}, Mat{{1}}, Mat{{1}}};
    GainSet g = design_gains(sys, Mat{{0.0}});
    CHECK(g.F(0, 0) == 0.0);
    CHECK(verify_certificate(sys, g).pass());
}

TEST_CASE("design_gains synthesizes F when no override is given") {
    LinearSystem sys = triple_integrator();
    GainSet g = design_gains(sys);
    CHECK(is_hurwitz(sys.A + sys.B * g.F).spectral_abscissa < -kMarginTol);
    CHECK(verify_certificate(sys, g).pass());
}

TEST_CASE("design_gains error paths") {
    CHECK_THROWS_AS(design_gains(scalar_sys(), Mat{{0.0}}), OverrideNotStabilizing);
    LinearSystem unstabilizable{Mat{{1}}, Mat{{0}}, Mat{{1}}};
    CHECK_THROWS_AS(design_gains(unstabilizable), NotStabilizable);
    LinearSystem undetectable{Mat{{1}}, Mat{{1}}, Mat{{0}}};
    CHECK_THROWS_AS(design_gains(undetectable), NotDetectable);
}

TEST_CASE("verify_certificate flags corrupted gain sets") {
    LinearSystem sys = triple_integrator();
    GainSet g = design_gains(sys, kF);
    SUBCASE("negated certificate fails the inequality") {
        GainSet bad = g;
        bad.Q = -g.Q;
        CertificateReport r = verify_certificate(sys, bad);
        CHECK(r.lmi_margin > 0.0);
        CHECK_FALSE(r.pass());
    }
    SUBCASE("perturbed L fails consistency") {
        GainSet bad = g;
        bad.L(0, 0) += 1e-3;
        CHECK_FALSE(verify_certificate(sys, bad).l_consistency);
    }
    SUBCASE("wrong Gamma is caught") {
        GainSet bad = g;
        bad.Gamma(0, 0) = 2.0;
        CHECK_FALSE(verify_certificate(sys, bad).gamma_ok);
    }
}

TEST_CASE("gamma quadratic form collapses to a squared difference") {
    SplitMix64 rng(5150u);
    for (std::size_t q : {1u, 2u, 4u}) {
        Mat gamma = gamma_block_form(q);
        for (int rep = 0; rep < 10; ++rep) {
            Mat u(q, 1), w(q, 1);
            for (std::size_t i = 0; i < q; ++i) {
                u(i, 0) = rng.uniform(-2.0, 2.0);
                w(i, 0) = rng.uniform(-2.0, 2.0);
            }
            Mat stacked = vcat(u, w);
            double quad = dot(stacked, gamma * stacked);
            double diff2 = dot(u - w, u - w);
            CHECK(std::abs(quad - diff2) <= 1e-12 * (1.0 + diff2));
        }
    }
}

TEST_CASE("lyapunov_params alpha formula") {
    LinearSystem sys = triple_integrator();
    GainSet g = design_gains(sys, kF);
    CHECK(lyapunov_params(sys, g, 1.0).alpha == doctest::Approx(1.0));
    CHECK(lyapunov_params(sys, g, 0.5).alpha == doctest::Approx(2.0));
    CHECK(lyapunov_params(sys, g, 4.0).alpha == doctest::Approx(1.0));
}

TEST_CASE("lyapunov_params produces a negative definite descent block") {
    LinearSystem sys = triple_integrator();
    GainSet g = design_gains(sys, kF);
    double lam2 = 1.0;
    LyapunovParams lp = lyapunov_params(sys, g, lam2);
    CHECK(lp.varsigma > 0.0);
    Mat block = detail::descent_block(sys, g, lp.alpha, lam2, lp.varsigma);
    CHECK(oracle::largest_eig(block) < 0.0);
    // the monitor weighting matrix [[sP+Q, -Q], [-Q, Q]] is positive definite
    Mat qq = blocks2x2(lp.varsigma * g.P_lyap + g.Q, -g.Q, -g.Q, g.Q);
    CHECK(oracle::smallest_eig(qq) > 0.0);
}

TEST_CASE("lyapunov_params fails cleanly when the certificate is corrupted") {
    LinearSystem sys = triple_integrator();
    GainSet g = design_gains(sys, kF);
    g.Q = Mat::identity(3); // not a certificate for this plant
    CHECK_THROWS_AS(lyapunov_params(sys, g, 1.0), NoFeasibleVarsigma);
}

TEST_CASE("design_gains succeeds on random stabilizable detectable systems") {
    SplitMix64 rng(31337u);
    for (int rep = 0; rep < 15; ++rep) {
        std::size_t n_stable = rng.next_u64() % 3;
        std::size_t n_canon = 1 + rng.next_u64() % 3;
        if (n_stable + n_canon > 6) continue;
        LinearSystem sys = random_stab_detect(n_stable, n_canon, rng);
        GainSet g = design_gains(sys);
        CHECK(verify_certificate(sys, g).pass());
    }
}

TEST_CASE("design_gains is deterministic") {
    LinearSystem sys = triple_integrator();
    GainSet a = design_gains(sys, kF);
    GainSet b = design_gains(sys, kF);
    CHECK(a.Q == b.Q);
    CHECK(a.L == b.L);
    CHECK(a.P_lyap == b.P_lyap);
}
