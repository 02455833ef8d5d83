#pragma once

#include <optional>

#include "consensus/errors.hpp"
#include "consensus/linalg.hpp"
#include "consensus/matrix.hpp"
#include "consensus/system.hpp"

namespace consensus {

/// Definiteness margins are measured against this threshold to separate
/// "negative definite" from numerical zero; matched to solver residual scale.
inline constexpr double kMarginTol = 1e-9;

/// Synthesized protocol gains together with their certificates:
///  - A + B F Hurwitz,
///  - Q > 0 with Q A + A^T Q - 2 C^T C < 0 and L = -Q^{-1} C^T,
///  - Gamma the fixed 2q x 2q block form [[I, -I], [-I, I]],
///  - P_lyap > 0 with P (A+BF) + (A+BF)^T P < 0.
struct GainSet {
    Mat F;      // p x n state-feedback gain
    Mat L;      // n x q output-injection gain
    Mat Gamma;  // 2q x 2q
    Mat Q;      // n x n certificate
    Mat P_lyap; // n x n certificate for the closed loop
};

inline Mat gamma_block_form(std::size_t q) {
    Mat eye = Mat::identity(q);
    return blocks2x2(eye, -eye, -eye, eye);
}

/// Certificate margins recomputed from scratch. A pass requires both margins
/// strictly below -kMarginTol and both structural checks to hold.
struct CertificateReport {
    double hurwitz_margin = 0.0; // spectral abscissa of A + B F
    double lmi_margin = 0.0;     // max eigenvalue of Q A + A^T Q - 2 C^T C
    bool gamma_ok = false;
    bool l_consistency = false;  // L == -Q^{-1} C^T within 1e-10

    bool pass() const {
        return hurwitz_margin < -kMarginTol && lmi_margin < -kMarginTol && gamma_ok &&
               l_consistency;
    }
};

inline CertificateReport verify_certificate(const LinearSystem& sys, const GainSet& gains) {
    sys.validate();
    const std::size_t n = sys.n(), p = sys.p(), q = sys.q();
    if (gains.F.rows() != p || gains.F.cols() != n)
        throw DimensionMismatch("verify_certificate: F must be p x n");
    if (gains.L.rows() != n || gains.L.cols() != q)
        throw DimensionMismatch("verify_certificate: L must be n x q");
    if (gains.Q.rows() != n || !gains.Q.is_square())
        throw DimensionMismatch("verify_certificate: Q must be n x n");
    if (gains.Gamma.rows() != 2 * q || gains.Gamma.cols() != 2 * q)
        throw DimensionMismatch("verify_certificate: Gamma must be 2q x 2q");

    CertificateReport r;
    r.hurwitz_margin = is_hurwitz(sys.A + sys.B * gains.F).spectral_abscissa;
    Mat lmi = gains.Q * sys.A + sys.A.transpose() * gains.Q -
              2.0 * (sys.C.transpose() * sys.C);
    auto lmi_eig = sym_eig(symmetrize(lmi), 1e-8 * (1.0 + lmi.max_abs()));
    r.lmi_margin = lmi_eig.values.back();
    r.gamma_ok = (gains.Gamma == gamma_block_form(q));
    Mat l_expected = -solve(gains.Q, sys.C.transpose());
    r.l_consistency = (gains.L - l_expected).max_abs() <= 1e-10;
    return r;
}

/// Design the gain set. F may be supplied (it is then only checked); without
/// an override F comes from the regulator Riccati equation, F = -B^T S. The
/// certificate Q is the inverse of the filter Riccati solution with unit
/// noise scale, which makes the output-injection inequality hold by
/// construction, and L = -Q^{-1} C^T = -P C^T.
inline GainSet design_gains(const LinearSystem& sys,
                            const std::optional<Mat>& f_override = std::nullopt,
                            double noise_scale = 1.0) {
    sys.validate();
    const std::size_t n = sys.n(), p = sys.p();

    GainSet g;
    if (f_override) {
        if (f_override->rows() != p || f_override->cols() != n)
            throw DimensionMismatch("design_gains: F override must be p x n");
        if (!f_override->is_finite())
            throw NonFiniteInput("design_gains: F override has non-finite entries");
        double abscissa = is_hurwitz(sys.A + sys.B * (*f_override)).spectral_abscissa;
        if (!(abscissa < -kMarginTol))
            throw OverrideNotStabilizing(
                "design_gains: supplied F does not make A + B F Hurwitz");
        g.F = *f_override;
    } else {
        Mat s = solve_control_are(sys.A, sys.B);
        g.F = -(sys.B.transpose() * s);
    }

    Mat p_are = solve_filter_are(sys.A, sys.C, noise_scale);
    g.Q = symmetrize(inverse(p_are));
    g.L = -(p_are * sys.C.transpose());
    g.Gamma = gamma_block_form(sys.q());
    g.P_lyap = solve_lyapunov(sys.A + sys.B * g.F, Mat::identity(n));

    CertificateReport r = verify_certificate(sys, g);
    if (!r.pass()) throw NoConvergence("design_gains: synthesized certificate failed checks");
    return g;
}

struct LyapunovParams {
    double alpha = 0.0;
    double varsigma = 0.0;
};

namespace detail {

/// The block matrix whose negative definiteness certifies descent of the
/// network Lyapunov function:
///   [ s (P Acl + Acl^T P)   s P B F                                ]
///   [ s (P B F)^T           Q A + A^T Q - 2 alpha lam2 C^T C       ]
inline Mat descent_block(const LinearSystem& sys, const GainSet& gains, double alpha,
                         double lam2, double varsigma) {
    Mat acl = sys.A + sys.B * gains.F;
    Mat top_left = varsigma * (gains.P_lyap * acl + acl.transpose() * gains.P_lyap);
    Mat top_right = varsigma * (gains.P_lyap * sys.B * gains.F);
    Mat bottom = gains.Q * sys.A + sys.A.transpose() * gains.Q -
                 (2.0 * alpha * lam2) * (sys.C.transpose() * sys.C);
    return symmetrize(blocks2x2(top_left, top_right, top_right.transpose(), bottom));
}

inline double descent_block_max_eig(const LinearSystem& sys, const GainSet& gains,
                                    double alpha, double lam2, double varsigma) {
    Mat m = descent_block(sys, gains, alpha, lam2, varsigma);
    return sym_eig(m, 1e-8 * (1.0 + m.max_abs())).values.back();
}

} // namespace detail

/// Constants for the Lyapunov monitor: alpha = max(1/lam2, 1) makes
/// alpha*lam2 >= 1, and varsigma is the largest value in (0, 1] found by
/// bisection that keeps the descent block negative definite.
inline LyapunovParams lyapunov_params(const LinearSystem& sys, const GainSet& gains,
                                      double lam2) {
    if (!(lam2 > 0.0)) throw ValidationError("lam2", "must be positive");
    LyapunovParams out;
    out.alpha = std::max(1.0 / lam2, 1.0);

    // feasibility demands clearance below the definiteness margin, not just a
    // sign; the margin scales with varsigma because the top block does too
    auto feasible = [&](double varsigma) {
        return detail::descent_block_max_eig(sys, gains, out.alpha, lam2, varsigma) <
               -kMarginTol * varsigma;
    };
    double lo = 1e-12;
    if (!feasible(lo))
        throw NoFeasibleVarsigma("lyapunov_params: no varsigma in [1e-12, 1] works");
    double hi = 1.0;
    if (feasible(hi)) {
        out.varsigma = hi;
        return out;
    }
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        if (feasible(mid))
            lo = mid;
        else
            hi = mid;
    }
    out.varsigma = lo;
    return out;
}

} // namespace consensus
