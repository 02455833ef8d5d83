#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "consensus/errors.hpp"
#include "consensus/protocols.hpp"

namespace consensus {

struct SimConfig {
    double step = 1e-3;           // h, seconds
    double horizon = 30.0;        // T, seconds
    int record_every = 100;       // steps between recorded samples
    double convergence_tol = 1e-3;
    std::uint64_t seed = 0;       // echoed into outputs; drives initial draws
};

struct SampleMetrics {
    double consensus_error = 0.0;   // max |z_i - reference| over agents
    double state_disagreement = 0.0; // max |x_i - reference| over agents
    double protocol_norm = 0.0;      // l2 norm of all protocol states stacked
};

struct Trajectory {
    std::vector<double> times;
    std::vector<NetworkState> states;
    std::vector<SampleMetrics> metrics;
    bool diverged = false;
    double divergence_time = 0.0;

    const NetworkState& initial() const { return states.front(); }
    const NetworkState& final_state() const { return states.back(); }
};

namespace detail {

using Flat = std::vector<double>;

inline Flat pack(const NetworkState& s) {
    Flat f;
    for (const auto& xi : s.x) f.insert(f.end(), xi.data().begin(), xi.data().end());
    for (const auto& vi : s.v) f.insert(f.end(), vi.data().begin(), vi.data().end());
    f.insert(f.end(), s.edge_weights.begin(), s.edge_weights.end());
    f.insert(f.end(), s.node_weights.begin(), s.node_weights.end());
    return f;
}

inline void unpack(const Flat& f, NetworkState& s) {
    std::size_t k = 0;
    for (auto& xi : s.x)
        for (double& e : xi.data()) e = f[k++];
    for (auto& vi : s.v)
        for (double& e : vi.data()) e = f[k++];
    for (double& w : s.edge_weights) w = f[k++];
    for (double& w : s.node_weights) w = f[k++];
}

/// y = a + c * b, entry by entry. Kept out-of-line-free and shared between
/// the network stepper and any reference integration so both run the exact
/// same floating-point sequence.
inline void axpy(Flat& y, const Flat& a, double c, const Flat& b) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + c * b[i];
}

/// One classical fourth-order step of y' = f(y) in place.
template <typename Rhs>
inline void rk4_step(Flat& y, double h, Rhs&& f, Flat& k1, Flat& k2, Flat& k3, Flat& k4,
                     Flat& work) {
    f(y, k1);
    axpy(work, y, h / 2.0, k1);
    f(work, k2);
    axpy(work, y, h / 2.0, k2);
    f(work, k3);
    axpy(work, y, h, k3);
    f(work, k4);
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

} // namespace detail

inline ErrorFrame frame_of(const ProtocolSpec& spec) {
    return is_leader_variant(spec.variant()) ? ErrorFrame::Leader : ErrorFrame::Mean;
}

inline SampleMetrics measure(const ProtocolSpec& spec, const NetworkState& s) {
    SampleMetrics m;
    ErrorFrame frame = frame_of(spec);
    m.consensus_error = consensus_error(s, frame).max_norm;
    m.state_disagreement = state_disagreement(s, frame);
    double vsq = 0.0;
    for (const auto& vi : s.v) vsq += dot(vi, vi);
    m.protocol_norm = std::sqrt(vsq);
    return m;
}

/// Fixed-step integration of the closed loop. In switching mode the dwell
/// must be an integer multiple of the step so a switch never lands inside a
/// step; each step evaluates the graph at the step's start time for all four
/// stages. Divergence (non-finite entries or magnitude beyond 1e12) stops the
/// run and returns the partial trajectory with the flag set.
inline Trajectory simulate(const ProtocolSpec& spec, const NetworkState& init,
                           const SimConfig& cfg) {
    spec.validate_state(init);
    if (!(cfg.step > 0.0)) throw ValidationError("sim.step", "must be positive");
    if (!(cfg.horizon >= cfg.step))
        throw ValidationError("sim.horizon", "must be at least one step");
    if (cfg.record_every < 1)
        throw ValidationError("sim.record_every", "must be at least 1");
    if (!init.is_finite()) throw NonFiniteInput("simulate: non-finite initial state");
    if (spec.switching()) {
        double ratio = spec.signal().dwell() / cfg.step;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * (1.0 + std::abs(ratio)))
            throw DwellMisaligned("simulate: dwell must be an integer multiple of the step");
    }

    const auto nsteps = static_cast<long long>(std::llround(cfg.horizon / cfg.step));

    Trajectory traj;
    NetworkState scratch = init;
    detail::Flat y = detail::pack(init);
    detail::Flat k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), work(y.size());

    auto record = [&](double t, const detail::Flat& flat) {
        detail::unpack(flat, scratch);
        traj.times.push_back(t);
        traj.states.push_back(scratch);
        traj.metrics.push_back(measure(spec, scratch));
    };

    record(0.0, y);
    for (long long k = 0; k < nsteps; ++k) {
        const double t_start = static_cast<double>(k) * cfg.step;
        auto rhs = [&](const detail::Flat& in, detail::Flat& out) {
            detail::unpack(in, scratch);
            NetworkState d = network_rhs(spec, scratch, t_start);
            out = detail::pack(d);
        };
        detail::rk4_step(y, cfg.step, rhs, k1, k2, k3, k4, work);
        bool bad = false;
        for (double e : y) {
            if (!std::isfinite(e) || std::abs(e) > 1e12) {
                bad = true;
                break;
            }
        }
        double t_now = static_cast<double>(k + 1) * cfg.step;
        if (bad) {
            traj.diverged = true;
            traj.divergence_time = t_now;
            break;
        }
        if ((k + 1) % cfg.record_every == 0 || k + 1 == nsteps) record(t_now, y);
    }
    return traj;
}

/// Quadratic weighting of the network Lyapunov monitor,
/// [[s P + Q, -Q], [-Q, Q]]; positive definite whenever s > 0 and both
/// certificates are.
inline Mat monitor_weighting(const GainSet& gains, double varsigma) {
    return blocks2x2(varsigma * gains.P_lyap + gains.Q, -gains.Q, -gains.Q, gains.Q);
}

/// Lyapunov monitor for the leaderless edge protocols: the quadratic form of
/// the stacked disagreement plus the weight mismatch term
/// sum_pairs (c_ij - center)^2 / kappa_ij (each unordered pair counted for
/// both orientations). For the fixed-graph monitor the center is alpha; the
/// switching monitor uses delta = max(1 / lambda2_min, 1).
inline double lyapunov_monitor(const ProtocolSpec& spec, const NetworkState& s,
                               double weight_center, double varsigma) {
    if (!is_edge_variant(spec.variant()) || is_leader_variant(spec.variant()))
        throw ValidationError("monitor", "defined for the leaderless edge protocols");
    Mat qq = monitor_weighting(spec.gains(), varsigma);
    if (!is_positive_definite(symmetrize(qq), 1e-12 * (1.0 + qq.max_abs())).positive_definite)
        throw InfeasibleParams("lyapunov_monitor: weighting matrix not positive definite");
    double total = 0.0;
    auto err = consensus_error(s, ErrorFrame::Mean);
    for (const auto& ei : err.per_agent) total += dot(ei, qq * ei);
    const auto& kappa = spec.edge_gains();
    for (std::size_t pidx = 0; pidx < s.edge_weights.size(); ++pidx) {
        double dev = s.edge_weights[pidx] - weight_center;
        total += dev * dev / kappa[pidx];
    }
    return total;
}

inline double lyapunov_monitor_v1(const ProtocolSpec& spec, const NetworkState& s,
                                  double alpha, double varsigma) {
    if (spec.variant() != Variant::EdgeAdaptive)
        throw ValidationError("monitor", "fixed-graph monitor needs the edge-adaptive variant");
    return lyapunov_monitor(spec, s, alpha, varsigma);
}

inline double lyapunov_monitor_v5(const ProtocolSpec& spec, const NetworkState& s,
                                  double delta, double varsigma) {
    if (spec.variant() != Variant::SwitchingEdge)
        throw ValidationError("monitor", "switching monitor needs the switching-edge variant");
    return lyapunov_monitor(spec, s, delta, varsigma);
}

struct ConvergenceReport {
    bool converged = false;
    double t_conv = 0.0;
    bool weight_settled = false;
    std::vector<double> final_edge_weights;
    std::vector<double> final_node_weights;
    double initial_error = 0.0;
    double final_error = 0.0;
};

/// Converged means the consensus error stays at or below
/// tol * (1 + initial error) from some sample onward; t_conv is the first
/// such sample instant. Weights are settled when their drift over the last
/// tenth of the horizon is small relative to their final values.
inline ConvergenceReport detect_convergence(const Trajectory& traj, double tol) {
    if (traj.times.empty()) throw ValidationError("trajectory", "empty trajectory");
    ConvergenceReport r;
    r.initial_error = traj.metrics.front().consensus_error;
    r.final_error = traj.metrics.back().consensus_error;
    r.final_edge_weights = traj.final_state().edge_weights;
    r.final_node_weights = traj.final_state().node_weights;

    if (!traj.diverged) {
        const double bound = tol * (1.0 + r.initial_error);
        std::size_t first_ok = traj.times.size();
        for (std::size_t k = traj.times.size(); k-- > 0;) {
            if (traj.metrics[k].consensus_error <= bound)
                first_ok = k;
            else
                break;
        }
        if (first_ok < traj.times.size()) {
            r.converged = true;
            r.t_conv = traj.times[first_ok];
        }
    }

    const double t_end = traj.times.back();
    const double t_tail = t_end - 0.1 * (t_end - traj.times.front());
    auto settled = [&](auto weight_of) {
        std::size_t count = weight_of(traj.final_state()).size();
        for (std::size_t w = 0; w < count; ++w) {
            double lo = weight_of(traj.final_state())[w], hi = lo;
            for (std::size_t k = 0; k < traj.times.size(); ++k) {
                if (traj.times[k] < t_tail) continue;
                double val = weight_of(traj.states[k])[w];
                lo = std::min(lo, val);
                hi = std::max(hi, val);
            }
            double final_val = weight_of(traj.final_state())[w];
            if (hi - lo > 1e-3 * (1.0 + std::abs(final_val))) return false;
        }
        return true;
    };
    r.weight_settled =
        !traj.diverged &&
        settled([](const NetworkState& s) -> const std::vector<double>& {
            return s.edge_weights;
        }) &&
        settled([](const NetworkState& s) -> const std::vector<double>& {
            return s.node_weights;
        });
    return r;
}

struct MonitorReport {
    bool enabled = false;
    std::string kind;           // "fixed" or "switching"
    double weight_center = 0.0; // alpha or delta
    double varsigma = 0.0;
    double lambda2_value = 0.0; // lambda2 or lambda2_min
    std::vector<double> values; // one per recorded sample
    int descent_violations = 0;
    double worst_violation = 0.0;
    std::vector<std::string> warnings;
};

/// Evaluate the Lyapunov monitor along a recorded trajectory and check
/// numerical descent between consecutive samples within the relative slack.
/// A diagnostic, not a gate: violations become warnings.
inline MonitorReport run_monitor(const ProtocolSpec& spec, const Trajectory& traj,
                                 double slack = 1e-6) {
    MonitorReport rep;
    if (is_leader_variant(spec.variant()) || !is_edge_variant(spec.variant())) return rep;
    double lam2 = 0.0;
    LyapunovParams params;
    try {
        lam2 = spec.switching() ? lambda2_min(spec.all_graphs())
                                : lambda2(spec.fixed_graph());
        params = lyapunov_params(spec.sys(), spec.gains(), lam2);
    } catch (const Error& e) {
        rep.warnings.push_back(std::string("monitor disabled: ") + e.what());
        return rep;
    }
    rep.enabled = true;
    rep.kind = spec.switching() ? "switching" : "fixed";
    rep.weight_center = params.alpha;
    rep.varsigma = params.varsigma;
    rep.lambda2_value = lam2;
    rep.values.reserve(traj.states.size());
    for (const auto& s : traj.states)
        rep.values.push_back(lyapunov_monitor(spec, s, params.alpha, params.varsigma));
    for (std::size_t k = 0; k + 1 < rep.values.size(); ++k) {
        double rise = rep.values[k + 1] - rep.values[k];
        double allowed = slack * (1.0 + rep.values[k]);
        if (rise > allowed) {
            ++rep.descent_violations;
            rep.worst_violation = std::max(rep.worst_violation, rise - allowed);
        }
    }
    if (rep.descent_violations > 0)
        rep.warnings.push_back("monitor ascent beyond slack at " +
                               std::to_string(rep.descent_violations) + " sample(s)");
    return rep;
}

} // namespace consensus
