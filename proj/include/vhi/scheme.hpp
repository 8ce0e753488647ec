#pragma once

#include "vhi/core_discrete.hpp"
#include "vhi/friction_state.hpp"
#include "vhi/material_history.hpp"
#include "vhi/vi_solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace vhi {

enum class AlphaIntegrator { ExplicitMidpoint, PicardLambda };
enum class SchemeMode { Picard, Incremental };

struct SchemeConfig {
    double T = 0.1;
    double dt = 1e-3;
    double outer_tol = 1e-10;
    int max_outer = 30;
    AlphaIntegrator alpha_integrator = AlphaIntegrator::ExplicitMidpoint;
    SchemeMode mode = SchemeMode::Picard;
    unsigned seed = 42;
    SolverOptions inner;

    int n_steps() const { return static_cast<int>(std::llround(T / dt)); }

    void validate() const {
        if (!(T > 0) || !(dt > 0)) throw config_error("T and dt must be positive");
        const double q = T / dt;
        if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, q)) throw config_error("T/dt must be integral");
        if (!(outer_tol > 0)) throw config_error("outer_tol must be positive");
        if (max_outer < 1) throw config_error("max_outer must be >= 1");
    }
};

struct InitialData {
    Vec w0;
    Vec alpha0;   // per contact node
};

struct SchemeReport {
    std::vector<double> e_w, e_alpha;   // per outer iteration n = 1, 2, ...
    std::vector<double> ratios;         // rho_n = e^n / e^{n-1}, reported for n >= 2 when e^{n-1} > 1e-14
    std::vector<int> ratio_index;
    bool converged = false;
    int iterations = 0;
    double first_norm = 0;              // |w^1|_{L2 V}
    std::vector<std::pair<std::string, double>> margins;   // filled by callers
    double wall_time = 0;               // seconds; not part of serialized output

    double asymptotic_ratio(int window = 3) const {
        if (ratios.empty()) return 0.0;
        const int m = std::min<int>(window, static_cast<int>(ratios.size()));
        double lg = 0;
        for (int i = static_cast<int>(ratios.size()) - m; i < static_cast<int>(ratios.size()); ++i)
            lg += std::log(std::max(ratios[i], 1e-300));
        return std::exp(lg / m);
    }
};

struct SchemeResult {
    TrajectoryState traj;
    SchemeReport report;
    std::vector<FrozenStepData> data;     // step data of the final sweep, k = 1..n (index 0 unused)
    std::vector<StepSolution> steps;
};

struct AlphaResult {
    std::vector<Vec> alpha;
    int sweeps = 0;
    double gamma = 0;          // weight of the sup-norm e^{-gamma t} used in the contraction check
    double mild_residual = 0;  // max_k |alpha_k - alpha0 - quadrature of G|
};

namespace detail {

inline const StateLaw& law_at(const std::vector<StateLaw>& laws, int i) {
    if (laws.empty()) throw capability_error("no state law configured");
    return laws.size() == 1 ? laws[0] : laws.at(i);
}

inline Vec midpoint_step(const std::vector<StateLaw>& laws, const Vec& a, const Vec& r0, const Vec& r1, double dt) {
    Vec out(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const auto& g = law_at(laws, static_cast<int>(i));
        const double half = a[i] + 0.5 * dt * G(g, a[i], r0[i]);
        out[i] = a[i] + dt * G(g, half, 0.5 * (r0[i] + r1[i]));
    }
    return out;
}

inline Vec euler_step(const std::vector<StateLaw>& laws, const Vec& a, const Vec& r0, double dt) {
    Vec out(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = a[i] + dt * G(law_at(laws, static_cast<int>(i)), a[i], r0[i]);
    return out;
}

inline double lipschitz_or_estimate(const std::vector<StateLaw>& laws, const std::vector<Vec>& slip, const Vec& a0) {
    double L = 0;
    for (std::size_t i = 0; i < std::max<std::size_t>(1, laws.size()); ++i) {
        try {
            L = std::max(L, state_constants(laws[std::min(i, laws.size() - 1)]));
        } catch (const capability_error&) {
            // local estimate around the base point and the sampled slip rates
            for (Eigen::Index n = 0; n < a0.size(); ++n)
                for (const auto& r : slip) {
                    const auto& g = law_at(laws, static_cast<int>(n));
                    const double h = 1e-6 * std::max(1.0, std::abs(a0[n]));
                    L = std::max(L, std::abs(G(g, a0[n] + h, r[n]) - G(g, a0[n] - h, r[n])) / (2 * h));
                }
        }
    }
    return L;
}

}  // namespace detail

// alpha(t) = alpha0 + int_0^t G(alpha, r) ds on the grid t_k = k dt.
inline AlphaResult integrate_alpha(const std::vector<StateLaw>& laws, const std::vector<Vec>& slip, const Vec& alpha0,
                                   double dt, AlphaIntegrator method) {
    if (slip.empty()) throw shape_error("integrate_alpha: no slip-rate samples");
    for (const auto& r : slip) detail::require_len(r, alpha0.size(), "slip rates");
    const int n = static_cast<int>(slip.size()) - 1;
    AlphaResult res;
    res.alpha.assign(n + 1, alpha0);
    auto quadrature_residual = [&](const std::vector<Vec>& a) {
        double worst = 0;
        Vec acc = Vec::Zero(alpha0.size());
        for (int k = 1; k <= n; ++k) {
            for (Eigen::Index i = 0; i < alpha0.size(); ++i)
                acc[i] += dt * G(detail::law_at(laws, static_cast<int>(i)), a[k - 1][i], slip[k - 1][i]);
            worst = std::max(worst, (a[k] - alpha0 - acc).cwiseAbs().maxCoeff());
        }
        return worst;
    };

    if (method == AlphaIntegrator::ExplicitMidpoint) {
        for (int k = 1; k <= n; ++k) res.alpha[k] = detail::midpoint_step(laws, res.alpha[k - 1], slip[k - 1], slip[k], dt);
        res.sweeps = 1;
        res.mild_residual = quadrature_residual(res.alpha);
        return res;
    }

    const double LG = detail::lipschitz_or_estimate(laws, slip, alpha0);
    res.gamma = 2 * LG + 1;
    double prev_weighted = std::numeric_limits<double>::infinity();
    int growth = 0;
    std::vector<Vec> cur = res.alpha;
    for (int sweep = 1; sweep <= n + 5; ++sweep) {
        std::vector<Vec> next(n + 1, alpha0);
        Vec acc = Vec::Zero(alpha0.size());
        for (int k = 1; k <= n; ++k) {
            for (Eigen::Index i = 0; i < alpha0.size(); ++i)
                acc[i] += dt * G(detail::law_at(laws, static_cast<int>(i)), cur[k - 1][i], slip[k - 1][i]);
            next[k] = alpha0 + acc;
        }
        double sup = 0, weighted = 0;
        for (int k = 0; k <= n; ++k) {
            const double d = (next[k] - cur[k]).cwiseAbs().maxCoeff();
            sup = std::max(sup, d);
            weighted = std::max(weighted, std::exp(-res.gamma * dt * k) * d);
        }
        cur = std::move(next);
        res.sweeps = sweep;
        if (sup < 1e-12) break;
        if (weighted > prev_weighted * (1 + 1e-12) && ++growth >= 3)
            throw diagnostics_error("integrate_alpha: the state map is not contracting; try a smaller T");
        prev_weighted = weighted;
    }
    res.alpha = std::move(cur);
    res.mild_residual = quadrature_residual(res.alpha);
    return res;
}

namespace detail {

inline Vec slip_rates(const DiscreteProblem& p, const Vec& w) { return (p.trace_tau * w).cwiseAbs(); }

inline void check_setup(const DiscreteProblem& prob, const HistoryKernel& kernel, const SchemeConfig& cfg,
                        const InitialData& init) {
    cfg.validate();
    const int n = cfg.n_steps();
    if (static_cast<int>(prob.load.size()) < n + 1) throw shape_error("load samples shorter than the time grid");
    if (std::abs(prob.load_dt - cfg.dt) > 1e-12 * cfg.dt) throw shape_error("load sampled with a different dt");
    if (std::abs(kernel.dt - cfg.dt) > 1e-12 * cfg.dt) throw shape_error("history kernel sampled with a different dt");
    if (static_cast<int>(kernel.relax_samples.size()) < n + 1) throw shape_error("relaxation samples too short");
    require_len(init.w0, prob.n_dof, "w0");
    require_len(init.alpha0, prob.n_contact(), "alpha0");
}

inline FrozenStepData lagged(const DiscreteProblem& prob, const HistoryKernel& K, const TrajectoryState& tr, int k) {
    FrozenStepData d;
    d.alpha = tr.alpha[k];
    d.xi = eval_R(K, tr, k);
    d.eta = eval_S_phi(K, tr, k);
    d.g_tau = slip_rates(prob, tr.w[k]);
    d.chi = eval_S_j(K, tr, k);
    d.load = prob.load[k];
    return d;
}

inline StepSolution solve_at(const DiscreteProblem& prob, const FrozenStepData& d, const Vec& w_prev,
                             const SchemeConfig& cfg, const InterfaceLaws& laws, int k) {
    try {
        return solve_step(prob, d, w_prev, cfg.dt, laws, cfg.inner);
    } catch (const solver_error& e) {
        throw solver_error(std::string(e.what()) + " at step " + std::to_string(k), e.residual_history);
    }
}

}  // namespace detail

// Decoupled iteration: each sweep solves every step with data lagged from the previous iterate, then
// integrates the state along the new velocities.
inline SchemeResult run_picard(const DiscreteProblem& prob, const HistoryKernel& kernel, const InterfaceLaws& laws,
                               const SchemeConfig& cfg, const InitialData& init) {
    const auto t_start = std::chrono::steady_clock::now();
    detail::check_setup(prob, kernel, cfg, init);
    const int n = cfg.n_steps();

    TrajectoryState prev;
    prev.dt = cfg.dt;
    prev.n_steps = n;
    prev.w.assign(n + 1, init.w0);
    prev.u = accumulate_displacement(kernel.u0, prev.w, cfg.dt, kernel.rule);
    prev.alpha.assign(n + 1, init.alpha0);

    SchemeResult res;
    double e_prev = -1;
    for (int it = 1; it <= cfg.max_outer; ++it) {
        TrajectoryState cur = prev;
        std::vector<FrozenStepData> data(n + 1);
        std::vector<StepSolution> steps(n + 1);
        cur.w[0] = init.w0;
        for (int k = 1; k <= n; ++k) {
            data[k] = detail::lagged(prob, kernel, prev, k);
            steps[k] = detail::solve_at(prob, data[k], cur.w[k - 1], cfg, laws, k);
            cur.w[k] = steps[k].w_new;
        }
        cur.u = accumulate_displacement(kernel.u0, cur.w, cfg.dt, kernel.rule);
        std::vector<Vec> slip(n + 1);
        for (int k = 0; k <= n; ++k) slip[k] = detail::slip_rates(prob, cur.w[k]);
        cur.alpha = integrate_alpha(laws.state, slip, init.alpha0, cfg.dt, cfg.alpha_integrator).alpha;

        const double ew = l2v_distance(prob.v_norm, cur.w, prev.w, cfg.dt);
        const double ea = cy_distance(prob.contact_weights, cur.alpha, prev.alpha);
        if (it == 1) res.report.first_norm = l2v_norm(prob.v_norm, cur.w, cfg.dt);
        res.report.e_w.push_back(ew);
        res.report.e_alpha.push_back(ea);
        const double e = ew + ea;
        if (it >= 2 && e_prev > 1e-14) {
            res.report.ratios.push_back(e / e_prev);
            res.report.ratio_index.push_back(it);
        }
        e_prev = e;
        res.report.iterations = it;
        prev = std::move(cur);
        res.data = std::move(data);
        res.steps = std::move(steps);
        if (e < cfg.outer_tol * (1 + res.report.first_norm)) {
            res.report.converged = true;
            break;
        }
    }
    res.traj = std::move(prev);
    res.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

// Single pass in time; each step resolves its own implicit dependence on the current velocity.
inline SchemeResult run_incremental(const DiscreteProblem& prob, const HistoryKernel& kernel,
                                    const InterfaceLaws& laws, const SchemeConfig& cfg, const InitialData& init,
                                    int max_local = 200) {
    const auto t_start = std::chrono::steady_clock::now();
    detail::check_setup(prob, kernel, cfg, init);
    const int n = cfg.n_steps();

    SchemeResult res;
    auto& tr = res.traj;
    tr.dt = cfg.dt;
    tr.n_steps = n;
    tr.w.assign(n + 1, init.w0);
    tr.alpha.assign(n + 1, init.alpha0);
    res.data.resize(n + 1);
    res.steps.resize(n + 1);
    res.report.converged = true;
    int worst_local = 0;
    for (int k = 1; k <= n; ++k) {
        const Vec r_prev = detail::slip_rates(prob, tr.w[k - 1]);
        Vec guess = tr.w[k - 1];
        bool ok = false;
        int it = 0;
        for (; it < max_local; ++it) {
            tr.w[k] = guess;
            const Vec r_now = detail::slip_rates(prob, guess);
            tr.alpha[k] = cfg.alpha_integrator == AlphaIntegrator::ExplicitMidpoint
                              ? detail::midpoint_step(laws.state, tr.alpha[k - 1], r_prev, r_now, cfg.dt)
                              : detail::euler_step(laws.state, tr.alpha[k - 1], r_prev, cfg.dt);
            FrozenStepData d = detail::lagged(prob, kernel, tr, k);
            StepSolution s = detail::solve_at(prob, d, tr.w[k - 1], cfg, laws, k);
            const double diff = quad_norm(prob.v_norm, s.w_new - guess);
            guess = s.w_new;
            res.data[k] = std::move(d);
            res.steps[k] = std::move(s);
            if (diff <= 1e-14 * (1 + quad_norm(prob.v_norm, guess))) { ok = true; break; }
        }
        worst_local = std::max(worst_local, it + 1);
        tr.w[k] = guess;
        const Vec r_now = detail::slip_rates(prob, guess);
        tr.alpha[k] = cfg.alpha_integrator == AlphaIntegrator::ExplicitMidpoint
                          ? detail::midpoint_step(laws.state, tr.alpha[k - 1], r_prev, r_now, cfg.dt)
                          : detail::euler_step(laws.state, tr.alpha[k - 1], r_prev, cfg.dt);
        if (!ok) res.report.converged = false;
    }
    tr.u = accumulate_displacement(kernel.u0, tr.w, cfg.dt, kernel.rule);
    res.report.iterations = worst_local;
    res.report.first_norm = l2v_norm(prob.v_norm, tr.w, cfg.dt);
    res.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

inline SchemeResult run_scheme(const DiscreteProblem& prob, const HistoryKernel& kernel, const InterfaceLaws& laws,
                               const SchemeConfig& cfg, const InitialData& init) {
    return cfg.mode == SchemeMode::Picard ? run_picard(prob, kernel, laws, cfg, init)
                                          : run_incremental(prob, kernel, laws, cfg, init);
}

struct FlowMapRow {
    double delta = 0;
    double distance = 0;
    double ratio = 0;   // distance / delta, 0 when delta = 0
};

struct FlowMapTable {
    std::vector<FlowMapRow> rows;
    bool monotone = true;   // d(delta_{i+1}) <= 1.05 d(delta_i)
};

// Perturbs w0 along each direction (normalized in V) by each delta and measures the output distance on [0, T/2].
inline FlowMapTable flow_map_experiment(const DiscreteProblem& prob, const HistoryKernel& kernel,
                                        const InterfaceLaws& laws, const SchemeConfig& cfg, const InitialData& base,
                                        const std::vector<Vec>& directions, const std::vector<double>& ladder) {
    if (ladder.size() < 3) throw contract_error("flow_map_experiment: the delta ladder needs at least 3 rungs");
    for (std::size_t i = 1; i < ladder.size(); ++i)
        if (!(ladder[i] < ladder[i - 1])) throw contract_error("flow_map_experiment: ladder must strictly decrease");
    if (directions.empty()) throw contract_error("flow_map_experiment: no perturbation directions");

    SchemeConfig half = cfg;
    half.T = cfg.dt * (cfg.n_steps() / 2);
    const SchemeResult ref = run_scheme(prob, kernel, laws, half, base);

    FlowMapTable tab;
    for (double delta : ladder) {
        FlowMapRow row;
        row.delta = delta;
        for (const auto& dir : directions) {
            InitialData pert = base;
            const double nd = quad_norm(prob.v_norm, dir);
            if (nd == 0) throw contract_error("flow_map_experiment: zero perturbation direction");
            pert.w0 = base.w0 + (delta / nd) * dir;
            const SchemeResult other = delta == 0 ? ref : run_scheme(prob, kernel, laws, half, pert);
            const double d = l2v_distance(prob.v_norm, ref.traj.w, other.traj.w, half.dt) +
                             cy_distance(prob.contact_weights, ref.traj.alpha, other.traj.alpha);
            row.distance = std::max(row.distance, d);
        }
        row.ratio = delta > 0 ? row.distance / delta : 0.0;
        if (!tab.rows.empty() && row.distance > 1.05 * tab.rows.back().distance) tab.monotone = false;
        tab.rows.push_back(row);
    }
    return tab;
}

// Halves T until the third measured contraction ratio drops below the target.
inline double find_contractive_T(const DiscreteProblem& prob, const HistoryKernel& kernel, const InterfaceLaws& laws,
                                 SchemeConfig cfg, const InitialData& init, double target = 0.9,
                                 int max_halvings = 12) {
    for (int h = 0; h <= max_halvings; ++h) {
        const SchemeResult r = run_picard(prob, kernel, laws, cfg, init);
        double rho3 = 0;
        for (std::size_t i = 0; i < r.report.ratios.size(); ++i)
            if (r.report.ratio_index[i] == 3) rho3 = r.report.ratios[i];
        if (r.report.converged && rho3 < target) return cfg.T;
        const int steps = cfg.n_steps() / 2;
        if (steps < 1) break;
        cfg.T = cfg.dt * steps;
    }
    throw diagnostics_error("find_contractive_T: no contractive horizon found");
}

struct EnergyBalance {
    double identity_residual = 0;   // algebraic implicit-Euler identity, max over k
    double work_residual = 0;       // kinetic balance against the work of the step forces, max over k
};

// 1/2|w_k|_H^2 - 1/2|w_0|_H^2 + 1/2 sum |w_j - w_{j-1}|_H^2 = sum <mass (w_j - w_{j-1}), w_j>,
// and the right side equals dt times the power of the frozen step forces.
inline EnergyBalance energy_balance(const DiscreteProblem& prob, const InterfaceLaws& laws, const SchemeResult& run) {
    const auto& w = run.traj.w;
    const double dt = run.traj.dt;
    EnergyBalance eb;
    double incr = 0, diss = 0, work = 0;
    const double e0 = 0.5 * w[0].dot(prob.h_norm * w[0]);
    for (std::size_t k = 1; k < w.size(); ++k) {
        const Vec dw = w[k] - w[k - 1];
        incr += dw.dot(prob.mass * w[k]);
        diss += 0.5 * dw.dot(prob.h_norm * dw);
        const double ek = 0.5 * w[k].dot(prob.h_norm * w[k]);
        eb.identity_residual = std::max(eb.identity_residual, std::abs(ek - e0 + diss - incr));
        if (k < run.data.size() && run.data[k].xi.size()) {
            const StepQP qp = build_step_qp(prob, run.data[k], w[k - 1], dt, laws);
            const Vec mw = prob.mass / dt * w[k - 1];
            double p = (qp.b - mw).dot(w[k]) - w[k].dot((qp.H - prob.mass / dt) * w[k]);
            if (qp.D.rows()) p -= qp.c.dot((qp.D * w[k]).cwiseAbs());
            work += dt * p;
            eb.work_residual = std::max(eb.work_residual, std::abs(incr - work));
        }
    }
    return eb;
}

}  // namespace vhi
