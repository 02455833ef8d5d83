#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/matrix.hpp"

namespace consensus {

struct SymEig {
    std::vector<double> values; // ascending
    Mat vectors;                // column i pairs with values[i]
};

namespace detail {

inline void require_square_finite(const Mat& m, const char* who) {
    if (!m.is_square()) throw NonSquare(std::string(who) + ": matrix not square");
    if (!m.is_finite()) throw NonFiniteInput(std::string(who) + ": non-finite entries");
}

} // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi sweeps (cap 100 sweeps).
/// Eigenvalues come back ascending; eigenvector columns are orthonormal.
inline SymEig sym_eig(const Mat& m, double tol = 1e-9) {
    detail::require_square_finite(m, "sym_eig");
    const std::size_t n = m.rows();
    if (n > 0 && m.asymmetry() > tol)
        throw NotSymmetric("sym_eig: asymmetry exceeds tolerance");
    Mat a = symmetrize(m);
    Mat v = Mat::identity(n);
    const double scale = 1.0 + a.frobenius_norm();

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off2 = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off2 += a(p, q) * a(p, q);
        if (std::sqrt(2.0 * off2) <= 1e-14 * scale) {
            SymEig out;
            out.values.resize(n);
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
            out.vectors = Mat(n, n);
            for (std::size_t k = 0; k < n; ++k) {
                out.values[k] = a(order[k], order[k]);
                for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
            }
            return out;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (apq == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e150) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) t = -t;
                }
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                double app = a(p, p), aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i != p && i != q) {
                        double aip = a(i, p), aiq = a(i, q);
                        a(i, p) = a(p, i) = c * aip - s * aiq;
                        a(i, q) = a(q, i) = s * aip + c * aiq;
                    }
                    double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    throw NoConvergence("sym_eig: Jacobi sweep cap reached");
}

/// Eigenvalues of a general real matrix: Householder reduction to Hessenberg
/// form, then Francis double-shift QR (total iteration cap 500, deflation
/// tolerance 1e-12).
inline std::vector<std::complex<double>> eig_general(const Mat& m) {
    detail::require_square_finite(m, "eig_general");
    const int n = static_cast<int>(m.rows());
    std::vector<std::complex<double>> w(n);
    if (n == 0) return w;
    Mat h = m;

    // Hessenberg reduction.
    for (int k = 0; k + 2 < n; ++k) {
        std::vector<double> u(n - k - 1);
        double xnorm = 0.0;
        for (int i = 0; i < n - k - 1; ++i) {
            u[i] = h(k + 1 + i, k);
            xnorm += u[i] * u[i];
        }
        xnorm = std::sqrt(xnorm);
        if (xnorm == 0.0) continue;
        double alpha = (u[0] >= 0.0 ? -xnorm : xnorm);
        u[0] -= alpha;
        double unorm = 0.0;
        for (double ui : u) unorm += ui * ui;
        unorm = std::sqrt(unorm);
        if (unorm == 0.0) continue;
        for (double& ui : u) ui /= unorm;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < n - k - 1; ++i) s += u[i] * h(k + 1 + i, j);
            for (int i = 0; i < n - k - 1; ++i) h(k + 1 + i, j) -= 2.0 * s * u[i];
        }
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n - k - 1; ++j) s += u[j] * h(i, k + 1 + j);
            for (int j = 0; j < n - k - 1; ++j) h(i, k + 1 + j) -= 2.0 * s * u[j];
        }
        for (int i = k + 2; i < n; ++i) h(i, k) = 0.0;
    }

    const double tol = 1e-12;
    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(h(i, j));
    if (anorm == 0.0) anorm = 1.0;

    int nn = n - 1;
    double t = 0.0;
    int total_its = 0;
    while (nn >= 0) {
        int its = 0;
        int l;
        do {
            for (l = nn; l >= 1; --l) {
                double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(h(l, l - 1)) <= tol * s) {
                    h(l, l - 1) = 0.0;
                    break;
                }
            }
            if (l < 0) l = 0;
            double x = h(nn, nn);
            if (l == nn) {
                w[nn--] = {x + t, 0.0};
            } else {
                double y = h(nn - 1, nn - 1);
                double wprod = h(nn, nn - 1) * h(nn - 1, nn);
                if (l == nn - 1) {
                    double p = 0.5 * (y - x);
                    double q = p * p + wprod;
                    double z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + (p >= 0.0 ? z : -z);
                        double wr1 = x + z;
                        double wr2 = (z != 0.0) ? x - wprod / z : wr1;
                        w[nn - 1] = {wr1, 0.0};
                        w[nn] = {wr2, 0.0};
                    } else {
                        w[nn - 1] = {x + p, -z};
                        w[nn] = {x + p, z};
                    }
                    nn -= 2;
                } else {
                    if (its == 30 || total_its >= 500)
                        throw NoConvergence("eig_general: QR iteration cap reached");
                    if (its == 10 || its == 20) {
                        t += x;
                        for (int i = 0; i <= nn; ++i) h(i, i) -= x;
                        double s = std::abs(h(nn, nn - 1)) + std::abs(h(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        wprod = -0.4375 * s * s;
                    }
                    ++its;
                    ++total_its;
                    int mdx;
                    double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
                    for (mdx = nn - 2; mdx >= l; --mdx) {
                        z = h(mdx, mdx);
                        double rr = x - z;
                        double ss = y - z;
                        p = (rr * ss - wprod) / h(mdx + 1, mdx) + h(mdx, mdx + 1);
                        q = h(mdx + 1, mdx + 1) - z - rr - ss;
                        r = h(mdx + 2, mdx + 1);
                        double s2 = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s2;
                        q /= s2;
                        r /= s2;
                        if (mdx == l) break;
                        double uu = std::abs(h(mdx, mdx - 1)) * (std::abs(q) + std::abs(r));
                        double vv = std::abs(p) * (std::abs(h(mdx - 1, mdx - 1)) + std::abs(z) +
                                                   std::abs(h(mdx + 1, mdx + 1)));
                        if (uu <= tol * vv) break;
                    }
                    for (int i = mdx + 2; i <= nn; ++i) {
                        h(i, i - 2) = 0.0;
                        if (i != mdx + 2) h(i, i - 3) = 0.0;
                    }
                    for (int k = mdx; k <= nn - 1; ++k) {
                        if (k != mdx) {
                            p = h(k, k - 1);
                            q = h(k + 1, k - 1);
                            r = 0.0;
                            if (k != nn - 1) r = h(k + 2, k - 1);
                            x = std::abs(p) + std::abs(q) + std::abs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        double s3 = std::sqrt(p * p + q * q + r * r);
                        if (p < 0.0) s3 = -s3;
                        if (s3 != 0.0) {
                            if (k == mdx) {
                                if (l != mdx) h(k, k - 1) = -h(k, k - 1);
                            } else {
                                h(k, k - 1) = -s3 * x;
                            }
                            p += s3;
                            x = p / s3;
                            y = q / s3;
                            z = r / s3;
                            q /= p;
                            r /= p;
                            for (int j = k; j <= nn; ++j) {
                                double pp = h(k, j) + q * h(k + 1, j);
                                if (k != nn - 1) {
                                    pp += r * h(k + 2, j);
                                    h(k + 2, j) -= pp * z;
                                }
                                h(k + 1, j) -= pp * y;
                                h(k, j) -= pp * x;
                            }
                            int mmin = nn < k + 3 ? nn : k + 3;
                            for (int i = l; i <= mmin; ++i) {
                                double pp = x * h(i, k) + y * h(i, k + 1);
                                if (k != nn - 1) {
                                    pp += z * h(i, k + 2);
                                    h(i, k + 2) -= pp * r;
                                }
                                h(i, k + 1) -= pp * q;
                                h(i, k) -= pp;
                            }
                        }
                    }
                }
            }
        } while (l < nn - 1);
    }
    return w;
}

struct HurwitzReport {
    bool hurwitz = false;
    double spectral_abscissa = 0.0;
};

/// True iff every eigenvalue has a strictly negative real part; also reports
/// the largest real part.
inline HurwitzReport is_hurwitz(const Mat& m) {
    auto eigs = eig_general(m);
    double abscissa = -std::numeric_limits<double>::infinity();
    for (const auto& e : eigs) abscissa = std::max(abscissa, e.real());
    if (eigs.empty()) abscissa = 0.0;
    return {abscissa < 0.0, abscissa};
}

struct DefiniteReport {
    bool positive_definite = false;
    double min_eigenvalue = 0.0;
};

inline DefiniteReport is_positive_definite(const Mat& m, double tol = 1e-9) {
    SymEig e = sym_eig(m, tol);
    double mn = e.values.empty() ? 0.0 : e.values.front();
    return {mn > tol, mn};
}

/// Solve a^T x + x a + w = 0 for symmetric w and Hurwitz a, by a direct
/// linear solve on the Kronecker-expanded system (fine at the n <= 12 scale
/// this library targets). The substitution residual is checked on every call.
inline Mat solve_lyapunov(const Mat& a, const Mat& w) {
    detail::require_square_finite(a, "solve_lyapunov");
    if (!w.is_square() || w.rows() != a.rows())
        throw DimensionMismatch("solve_lyapunov: w must match a");
    if (!w.is_finite()) throw NonFiniteInput("solve_lyapunov: non-finite w");
    if (w.asymmetry() > 1e-10 * (1.0 + w.max_abs()))
        throw NotSymmetric("solve_lyapunov: w not symmetric");
    if (!is_hurwitz(a).hurwitz)
        throw NotHurwitz("solve_lyapunov: a is not Hurwitz, solution not guaranteed");

    const std::size_t n = a.rows();
    Mat sys(n * n, n * n);
    Mat rhs(n * n, 1);
    // Unknown x(k,l) indexed k*n+l; equation (i,j): sum_k a(k,i) x(k,j)
    // + sum_l a(l,j) x(i,l) = -w(i,j).
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t e = i * n + j;
            for (std::size_t k = 0; k < n; ++k) sys(e, k * n + j) += a(k, i);
            for (std::size_t l = 0; l < n; ++l) sys(e, i * n + l) += a(l, j);
            rhs(e, 0) = -w(i, j);
        }
    }
    Mat xv = solve(sys, rhs);
    Mat x(n, n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) x(k, l) = xv(k * n + l, 0);
    x = symmetrize(x);
    Mat residual = a.transpose() * x + x * a + w;
    if (residual.frobenius_norm() > 1e-9 * (1.0 + w.frobenius_norm()))
        throw NoConvergence("solve_lyapunov: residual check failed");
    return x;
}

namespace detail {

/// Stabilizing gain for (a, b) by the shifted-Lyapunov construction: solve
/// (a + beta I) z + z (a + beta I)^T = 2 b b^T + eta I and take k = b^T z^-1.
/// Candidates are verified with an eigenvalue test and the ladder escalates
/// beta/eta until one stabilizes.
inline Mat initial_stabilizing_gain(const Mat& a, const Mat& b) {
    const std::size_t n = a.rows();
    if (is_hurwitz(a).hurwitz) return Mat::zeros(b.cols(), n);
    const double base = a.frobenius_norm() + 1.0;
    Mat eye = Mat::identity(n);
    for (double beta : {base, 2.0 * base, 4.0 * base, 8.0 * base}) {
        for (double eta : {0.0, 1e-8 * base, 1e-3 * base, 0.1 * base}) {
            Mat w = 2.0 * (b * b.transpose()) + eta * eye;
            Mat shifted = -(a + beta * eye).transpose();
            Mat z;
            try {
                z = solve_lyapunov(shifted, w);
            } catch (const Error&) {
                continue;
            }
            Mat k;
            try {
                k = b.transpose() * inverse(z);
            } catch (const SingularMatrix&) {
                continue;
            }
            if (!k.is_finite()) continue;
            if (is_hurwitz(a - b * k).hurwitz) return k;
        }
    }
    throw NotStabilizable("no stabilizing gain found for (a, b)");
}

/// Stabilizing solution of a^T x + x a - x b b^T x + q = 0 by Newton-Kleinman
/// iteration; every step is a Lyapunov solve with the current closed loop.
inline Mat solve_care_newton(const Mat& a, const Mat& b, const Mat& q) {
    require_square_finite(a, "solve_care");
    if (b.rows() != a.rows()) throw DimensionMismatch("solve_care: b row mismatch");
    if (!q.is_square() || q.rows() != a.rows())
        throw DimensionMismatch("solve_care: q must match a");
    Mat k = initial_stabilizing_gain(a, b);
    Mat x;
    bool converged = false;
    Mat x_prev;
    for (int iter = 0; iter < 60; ++iter) {
        Mat acl = a - b * k;
        x = solve_lyapunov(acl, q + k.transpose() * k);
        k = b.transpose() * x;
        if (iter > 0 && (x - x_prev).frobenius_norm() <= 1e-13 * (1.0 + x.frobenius_norm())) {
            converged = true;
            break;
        }
        x_prev = x;
    }
    if (!converged) throw NoConvergence("solve_care: Newton iteration did not converge");
    return symmetrize(x);
}

} // namespace detail

/// Stabilizing solution p > 0 of the filter Riccati equation
///   a p + p a^T - p c^T c p + noise_scale I = 0,
/// so that a - p c^T c is Hurwitz. Fails with NotDetectable when no
/// stabilizing solution exists.
inline Mat solve_filter_are(const Mat& a, const Mat& c, double noise_scale = 1.0) {
    detail::require_square_finite(a, "solve_filter_are");
    if (c.cols() != a.rows()) throw DimensionMismatch("solve_filter_are: c column mismatch");
    if (!c.is_finite()) throw NonFiniteInput("solve_filter_are: non-finite c");
    if (!(noise_scale > 0.0))
        throw ValidationError("noise_scale", "must be strictly positive");
    const std::size_t n = a.rows();
    Mat q = noise_scale * Mat::identity(n);
    Mat p;
    try {
        p = detail::solve_care_newton(a.transpose(), c.transpose(), q);
    } catch (const NotStabilizable&) {
        throw NotDetectable("solve_filter_are: (a, c) admits no stabilizing solution");
    }
    Mat residual = a * p + p * a.transpose() - p * c.transpose() * c * p + q;
    double pf = p.frobenius_norm();
    if (residual.frobenius_norm() > 1e-8 * (1.0 + pf * pf))
        throw NoConvergence("solve_filter_are: residual check failed");
    if (!is_positive_definite(p, 1e-12 * (1.0 + pf)).positive_definite)
        throw NotDetectable("solve_filter_are: solution not positive definite");
    if (!is_hurwitz(a - p * c.transpose() * c).hurwitz)
        throw NotDetectable("solve_filter_are: solution not stabilizing");
    return p;
}

/// Stabilizing solution of the regulator Riccati equation
///   a^T s + s a - s b b^T s + I = 0; the associated gain -b^T s places
/// a - b b^T s in the open left half plane.
inline Mat solve_control_are(const Mat& a, const Mat& b) {
    detail::require_square_finite(a, "solve_control_are");
    if (b.rows() != a.rows()) throw DimensionMismatch("solve_control_are: b row mismatch");
    if (!b.is_finite()) throw NonFiniteInput("solve_control_are: non-finite b");
    Mat s = detail::solve_care_newton(a, b, Mat::identity(a.rows()));
    Mat residual =
        a.transpose() * s + s * a - s * b * b.transpose() * s + Mat::identity(a.rows());
    double sf = s.frobenius_norm();
    if (residual.frobenius_norm() > 1e-8 * (1.0 + sf * sf))
        throw NoConvergence("solve_control_are: residual check failed");
    return s;
}

} // namespace consensus
