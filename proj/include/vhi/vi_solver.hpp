#pragma once

#include "vhi/core_discrete.hpp"
#include "vhi/friction_state.hpp"

#include <Eigen/LU>

#include <random>

namespace vhi {

struct FrozenStepData {
    Vec alpha;   // lagged state per contact node
    Vec xi;      // history covector
    Vec eta;     // normal displacement per contact node
    Vec g_tau;   // lagged slip rates per contact node
    Vec chi;     // S_j values (unused by the shipped superpotentials)
    Vec load;
};

enum class ContactKind { NormalCompliance, DampedResponse };

struct InterfaceLaws {
    ContactKind kind = ContactKind::NormalCompliance;
    std::vector<FrictionLaw> friction;   // one per contact node, or a single broadcast entry
    std::vector<StateLaw> state;
    ComplianceLaw compliance;
    DampedResponseLaw damped;

    const FrictionLaw& friction_at(int i) const {
        if (friction.empty()) throw capability_error("no friction law configured");
        return friction.size() == 1 ? friction[0] : friction.at(i);
    }
    const StateLaw& state_at(int i) const {
        if (state.empty()) throw capability_error("no state law configured");
        return state.size() == 1 ? state[0] : state.at(i);
    }
};

enum class Regime { Stick, Slip, Open };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::Stick: return "stick";
        case Regime::Slip: return "slip";
        case Regime::Open: return "open";
    }
    return "?";
}

struct SolverOptions {
    double kkt_tol = 1e-10;
    int max_iter = 200;
    double eps_start = 1e-2;
    double eps_end = 1e-10;
    Vec w_start;   // initial iterate; empty means w_prev
};

struct StepSolution {
    Vec w_new;
    std::vector<Regime> regime;   // per contact node
    Vec tau_multiplier;           // tangential friction force per node
    Vec bound;                    // friction bound per node
    double kkt_residual = 0;
    int iterations = 0;
};

// J(w) = 1/2 w.Hw - b.w + sum_r c_r |D_r w|, with the damped-response derivative terms kept separate for checks.
struct StepQP {
    Mat H;
    Vec b;
    Mat D;                       // nonsmooth rows
    Vec c;                       // their weights
    std::vector<int> node;       // contact node of each row
    std::vector<bool> tangential;
    Vec bound;                   // friction bound per contact node
};

inline StepQP build_step_qp(const DiscreteProblem& prob, const FrozenStepData& data, const Vec& w_prev, double dt,
                            const InterfaceLaws& laws) {
    const int n = prob.n_dof, nc = prob.n_contact();
    detail::require_len(w_prev, n, "w_prev");
    detail::require_len(data.xi, n, "xi");
    detail::require_len(data.load, n, "load");
    detail::require_len(data.alpha, nc, "alpha");
    detail::require_len(data.eta, nc, "eta");
    detail::require_len(data.g_tau, nc, "g_tau");
    if (!(dt > 0)) throw contract_error("dt must be positive");
    if (!detail::is_symmetric(prob.visc, 1e-10))
        throw contract_error("solve_step: the shipped solver requires a symmetric linear viscosity operator");

    StepQP qp;
    const Mat Mdt = prob.mass / dt;
    qp.H = Mdt + 0.5 * (prob.visc + prob.visc.transpose());
    qp.b = Mdt * w_prev + data.load - data.xi;
    qp.bound = Vec::Zero(nc);

    std::vector<Vec> rows;
    std::vector<double> coef;
    for (int i = 0; i < nc; ++i) {
        const double g = data.g_tau[i];
        if (!(g >= 0)) throw contract_error("lagged slip rate must be nonnegative");
        const double w = prob.contact_weights[i];
        double bnd;
        if (laws.kind == ContactKind::NormalCompliance) {
            const double p = compliance(laws.compliance, data.eta[i]);
            if (p != 0.0) qp.b -= prob.trace_nu.row(i).transpose() * (w * p);
            bnd = p == 0.0 ? 0.0 : w * mu(laws.friction_at(i), g, data.alpha[i]) * p;
        } else {
            bnd = w * mu(laws.friction_at(i), g, data.alpha[i]);
        }
        if (bnd < 0 || !std::isfinite(bnd)) throw contract_error("negative or non-finite friction bound");
        qp.bound[i] = bnd;
        const Vec dt_row = prob.trace_tau.row(i).transpose();
        if (bnd > 0 && dt_row.cwiseAbs().maxCoeff() > 0) {
            rows.push_back(dt_row);
            coef.push_back(bnd);
            qp.node.push_back(i);
            qp.tangential.push_back(true);
        }
        if (laws.kind == ContactKind::DampedResponse) {
            const auto& j = laws.damped;
            if (!j.convex) throw contract_error("solve_step: superpotential without convexity declaration");
            const Vec nrow = prob.trace_nu.row(i).transpose();
            if (nrow.cwiseAbs().maxCoeff() == 0 || j.kappa == 0) continue;
            if (j.kind == DampedKind::Quadratic) {
                qp.H += (w * j.kappa) * nrow * nrow.transpose();
            } else if (j.kind == DampedKind::Absolute) {
                rows.push_back(nrow);
                coef.push_back(w * j.kappa);
                qp.node.push_back(i);
                qp.tangential.push_back(false);
            } else {
                throw capability_error("solve_step: user superpotentials are not supported numerically");
            }
        }
    }
    qp.D = Mat::Zero(static_cast<Eigen::Index>(rows.size()), n);
    qp.c = Vec::Zero(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        qp.D.row(r) = rows[r].transpose();
        qp.c[r] = coef[r];
    }
    return qp;
}

inline double step_objective(const StepQP& qp, const Vec& w) {
    double J = 0.5 * w.dot(qp.H * w) - qp.b.dot(w);
    if (qp.D.rows()) J += qp.c.dot((qp.D * w).cwiseAbs());
    return J;
}

namespace detail {

struct PolishResult {
    Vec w;
    Vec z;   // row forces
    std::vector<int> state;   // 0 stick, +1/-1 slip sign
    bool settled = false;
};

inline PolishResult active_set_polish(const StepQP& qp, const Vec& w_guess, double stick_thresh, int max_pass = 50) {
    const Eigen::Index n = qp.H.rows(), m = qp.D.rows();
    PolishResult res;
    res.state.assign(m, 0);
    const Vec s0 = qp.D * w_guess;
    for (Eigen::Index r = 0; r < m; ++r)
        res.state[r] = std::abs(s0[r]) <= stick_thresh ? 0 : (s0[r] > 0 ? 1 : -1);

    for (int pass = 0; pass < max_pass; ++pass) {
        std::vector<Eigen::Index> S;
        Vec rhs = qp.b;
        for (Eigen::Index r = 0; r < m; ++r) {
            if (res.state[r] == 0) S.push_back(r);
            else rhs -= qp.D.row(r).transpose() * (qp.c[r] * res.state[r]);
        }
        const Eigen::Index ns = static_cast<Eigen::Index>(S.size());
        Mat KKT = Mat::Zero(n + ns, n + ns);
        KKT.topLeftCorner(n, n) = qp.H;
        Vec R = Vec::Zero(n + ns);
        R.head(n) = rhs;
        // constraint rows scaled to the size of H, otherwise the LU rank cut drops them for stiff problems
        const double sig = std::max(1e-300, qp.H.diagonal().cwiseAbs().maxCoeff());
        for (Eigen::Index a = 0; a < ns; ++a) {
            KKT.block(n + a, 0, 1, n) = sig * qp.D.row(S[a]);
            KKT.block(0, n + a, n, 1) = sig * qp.D.row(S[a]).transpose();
        }
        const Vec sol = KKT.fullPivLu().solve(R);
        res.w = sol.head(n);
        res.z = Vec::Zero(m);
        // multiplier sign convention: H w - b + sum z_r d_r = 0
        for (Eigen::Index a = 0; a < ns; ++a) res.z[S[a]] = sig * sol[n + a];
        for (Eigen::Index r = 0; r < m; ++r)
            if (res.state[r] != 0) res.z[r] = qp.c[r] * res.state[r];

        bool changed = false;
        const Vec s = qp.D * res.w;
        const double wscale = std::max(1e-300, res.w.cwiseAbs().maxCoeff());
        for (Eigen::Index r = 0; r < m; ++r) {
            if (res.state[r] == 0) {
                if (std::abs(res.z[r]) > qp.c[r] * (1 + 1e-12)) {
                    res.state[r] = res.z[r] > 0 ? 1 : -1;
                    changed = true;
                }
            } else if (s[r] * res.state[r] < -1e-15 * wscale || s[r] == 0.0) {
                res.state[r] = 0;
                changed = true;
            }
        }
        if (!changed) {
            res.settled = true;
            // stick rows that select a single dof are made exactly zero (the KKT solve leaves roundoff)
            for (Eigen::Index r = 0; r < m; ++r) {
                if (res.state[r] != 0) continue;
                Eigen::Index j = -1, nnz = 0;
                for (Eigen::Index c = 0; c < n; ++c)
                    if (qp.D(r, c) != 0.0) { j = c; ++nnz; }
                if (nnz == 1) res.w[j] = 0.0;
            }
            for (Eigen::Index r = 0; r < m; ++r)
                if (res.state[r] == 0) res.z[r] = std::clamp(res.z[r], -qp.c[r], qp.c[r]);
            return res;
        }
    }
    return res;
}

}  // namespace detail

inline StepSolution solve_step(const DiscreteProblem& prob, const FrozenStepData& data, const Vec& w_prev, double dt,
                               const InterfaceLaws& laws, const SolverOptions& opt = {}) {
    const StepQP qp = build_step_qp(prob, data, w_prev, dt, laws);
    const Eigen::Index m = qp.D.rows();
    const Eigen::LLT<Mat> Hf(qp.H);
    if (Hf.info() != Eigen::Success) throw contract_error("solve_step: step operator is not positive definite");
    const auto Vf = detail::spd_factor(prob.v_norm, "v_norm");

    StepSolution out;
    out.bound = qp.bound;
    out.regime.assign(prob.n_contact(), Regime::Open);
    out.tau_multiplier = Vec::Zero(prob.n_contact());

    const Vec w_free = Hf.solve(qp.b);
    const double bscale = 1.0 + dual_norm(Vf, qp.b);
    std::vector<double> hist;
    if (m == 0) {
        out.w_new = w_free;
        out.kkt_residual = dual_norm(Vf, qp.H * out.w_new - qp.b);
        out.iterations = 1;
        return out;
    }

    const double vs = std::max({w_free.cwiseAbs().maxCoeff(), w_prev.cwiseAbs().maxCoeff(), 1e-300});
    if (opt.w_start.size() && opt.w_start.size() != prob.n_dof) throw shape_error("solve_step: w_start length");
    Vec w = opt.w_start.size() ? opt.w_start : w_prev;
    int iters = 0;
    double eps_abs = opt.eps_start * vs;
    for (double eps = opt.eps_start; eps >= opt.eps_end * 0.999; eps *= 0.1) {
        eps_abs = eps * vs;
        const double e2 = eps_abs * eps_abs;
        auto Jeps = [&](const Vec& x) {
            const Vec s = qp.D * x;
            double J = 0.5 * x.dot(qp.H * x) - qp.b.dot(x);
            for (Eigen::Index r = 0; r < m; ++r) J += qp.c[r] * std::sqrt(s[r] * s[r] + e2);
            return J;
        };
        for (int it = 0; it < 50 && iters < opt.max_iter; ++it, ++iters) {
            const Vec s = qp.D * w;
            Vec gz(m), hz(m);
            for (Eigen::Index r = 0; r < m; ++r) {
                const double q = std::sqrt(s[r] * s[r] + e2);
                gz[r] = qp.c[r] * s[r] / q;
                hz[r] = qp.c[r] * e2 / (q * q * q);
            }
            const Vec grad = qp.H * w - qp.b + qp.D.transpose() * gz;
            const Mat Hess = qp.H + qp.D.transpose() * hz.asDiagonal() * qp.D;
            const Vec step = -Hess.llt().solve(grad);
            hist.push_back(dual_norm(Vf, grad));
            double t = 1.0;
            const double J0 = Jeps(w), slope = grad.dot(step);
            while (t > 1e-12 && Jeps(w + t * step) > J0 + 1e-4 * t * slope) t *= 0.5;
            w += t * step;
            if (t * step.cwiseAbs().maxCoeff() <= 1e-3 * eps_abs) break;
        }
    }

    auto pol = detail::active_set_polish(qp, w, 1e3 * eps_abs);
    if (!pol.settled) throw solver_error("solve_step: active-set polish did not settle", hist);
    out.w_new = pol.w;
    const Vec r = qp.H * pol.w - qp.b + qp.D.transpose() * pol.z;
    out.kkt_residual = dual_norm(Vf, r);
    hist.push_back(out.kkt_residual);
    out.iterations = iters + 1;
    for (Eigen::Index row = 0; row < m; ++row) {
        if (!qp.tangential[row]) continue;
        const int node = qp.node[row];
        out.regime[node] = pol.state[row] == 0 ? Regime::Stick : Regime::Slip;
        out.tau_multiplier[node] = pol.z[row];
    }
    if (out.kkt_residual > opt.kkt_tol * bscale)
        throw solver_error("solve_step: KKT residual above tolerance", hist);
    return out;
}

// Most negative value of <H w - b, v - w> + phi(v) - phi(w) + j°(w; v - w) over the probes.
inline double verify_vi(const DiscreteProblem& prob, const FrozenStepData& data, const InterfaceLaws& laws,
                        const Vec& w_new, const Vec& w_prev, double dt, int n_probes, unsigned seed = 42) {
    const StepQP qp = build_step_qp(prob, data, w_prev, dt, laws);
    const Vec gq = qp.H * w_new - qp.b;
    Vec sw = qp.D * w_new;
    const double zero_tol = 1e-13 * (1.0 + w_new.cwiseAbs().maxCoeff());
    for (auto& x : sw)
        if (std::abs(x) <= zero_tol) x = 0.0;
    auto lhs = [&](const Vec& v) {
        double val = gq.dot(v - w_new);
        const Vec sv = qp.D * v;
        for (Eigen::Index r = 0; r < qp.D.rows(); ++r) {
            if (qp.tangential[r]) {
                val += qp.c[r] * (std::abs(sv[r]) - std::abs(sw[r]));
            } else {
                // Clarke derivative of kappa|.| scaled by the node weight
                const double d = sv[r] - sw[r];
                val += sw[r] == 0 ? qp.c[r] * std::abs(d) : qp.c[r] * (sw[r] > 0 ? d : -d);
            }
        }
        return val;
    };
    double worst = std::min(lhs(Vec::Zero(w_new.size())), lhs(2.0 * w_new));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    const double sc = w_new.cwiseAbs().maxCoeff() + w_prev.cwiseAbs().maxCoeff() + 1e-300;
    const double scales[3] = {1e-3, 1e-1, 1.0};
    for (int k = 0; k < n_probes; ++k) {
        Vec v(w_new.size());
        for (auto& x : v) x = nd(rng);
        worst = std::min(worst, lhs(w_new + scales[k % 3] * sc * v));
    }
    return worst;
}

struct KktReport {
    double interior_residual = 0;   // dual V-norm
    double stick_excess = 0;        // max(|force| - bound) over stick nodes
    std::vector<Regime> regime;
};

// Stick/slip characterization recomputed from the candidate alone.
inline KktReport kkt_report(const DiscreteProblem& prob, const FrozenStepData& data, const InterfaceLaws& laws,
                            const Vec& w, const Vec& w_prev, double dt) {
    const StepQP qp = build_step_qp(prob, data, w_prev, dt, laws);
    const auto Vf = detail::spd_factor(prob.v_norm, "v_norm");
    const Eigen::Index m = qp.D.rows();
    const Vec s = qp.D * w;
    const double thresh = 1e-13 * (1.0 + w.cwiseAbs().maxCoeff());
    KktReport rep;
    rep.regime.assign(prob.n_contact(), Regime::Open);
    Vec r0 = qp.H * w - qp.b;
    std::vector<Eigen::Index> S;
    for (Eigen::Index r = 0; r < m; ++r) {
        if (std::abs(s[r]) <= thresh) S.push_back(r);
        else r0 += qp.D.row(r).transpose() * (qp.c[r] * (s[r] > 0 ? 1.0 : -1.0));
    }
    Vec lam = Vec::Zero(static_cast<Eigen::Index>(S.size()));
    if (!S.empty()) {
        Mat DS(S.size(), w.size());
        for (std::size_t a = 0; a < S.size(); ++a) DS.row(a) = qp.D.row(S[a]);
        lam = DS.transpose().completeOrthogonalDecomposition().solve(-r0);
        r0 += DS.transpose() * lam;
    }
    rep.interior_residual = dual_norm(Vf, r0);
    for (std::size_t a = 0; a < S.size(); ++a) {
        rep.stick_excess = std::max(rep.stick_excess, std::abs(lam[a]) - qp.c[S[a]]);
        if (qp.tangential[S[a]]) rep.regime[qp.node[S[a]]] = Regime::Stick;
    }
    for (Eigen::Index r = 0; r < m; ++r)
        if (qp.tangential[r] && std::abs(s[r]) > thresh) rep.regime[qp.node[r]] = Regime::Slip;
    return rep;
}

}  // namespace vhi
