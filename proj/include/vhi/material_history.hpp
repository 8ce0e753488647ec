#pragma once

#include "vhi/assembly.hpp"
#include "vhi/core_discrete.hpp"

#include <functional>
#include <random>

namespace vhi {

struct HistoryKernel {
    Mat elastic;                       // stiffness of b_ijkl on free dofs
    Mat relax_op;                      // stiffness of the relaxation tensor shape
    std::vector<double> relax_samples; // c(t_l), lags l = 0..n_steps
    double relax_bound = 0.0;          // sup |c| as operator bound on tensors
    double elastic_bound = 0.0;        // L_B
    Quadrature rule = Quadrature::LeftRectangle;
    Vec u0;
    double dt = 0.0;
    Mat trace_nu;
    Vec normal_offset;
    // generic S_j slot; null means the zero operator
    std::function<Vec(const TrajectoryState&, int)> s_j;

    int n_dof() const { return static_cast<int>(elastic.rows()); }
};

inline HistoryKernel make_history_kernel(const MeshSpec& mesh, const MaterialSpec& mat, const DiscreteProblem& prob,
                                         const Vec& u0, double dt, int n_steps,
                                         Quadrature rule = Quadrature::LeftRectangle) {
    HistoryKernel k;
    k.elastic = assemble_stiffness(mesh, mat.elastic);
    k.relax_op = mat.relax.size() ? assemble_stiffness(mesh, mat.relax) : Mat::Zero(prob.n_dof, prob.n_dof);
    k.relax_samples.resize(n_steps + 1);
    for (int l = 0; l <= n_steps; ++l) k.relax_samples[l] = mat.relaxation(dt * l);
    k.relax_bound = relaxation_bound(mat);
    k.elastic_bound = kelvin_voigt_constants(mat).L_B;
    k.rule = rule;
    detail::require_len(u0, prob.n_dof, "u0");
    k.u0 = u0;
    k.dt = dt;
    k.trace_nu = prob.trace_nu;
    k.normal_offset = prob.normal_offset;
    return k;
}

namespace detail {

inline void check_step(const TrajectoryState& tr, int k) {
    if (k < 0 || k > tr.n_steps || k >= static_cast<int>(tr.w.size()))
        throw std::out_of_range("history evaluation: step index " + std::to_string(k) + " out of range");
}

inline double quad_weight(Quadrature q, int j, int k, double dt) {
    if (q == Quadrature::LeftRectangle) return j == 0 ? 0.0 : dt;
    if (k == 0) return 0.0;
    return (j == 0 || j == k) ? 0.5 * dt : dt;
}

// u0 + int_0^{t_k} w, recomputed from velocities only
inline Vec displacement_at(const HistoryKernel& K, const TrajectoryState& tr, int k) {
    Vec u = K.u0;
    for (int j = 0; j <= k; ++j) {
        const double wq = quad_weight(K.rule, j, k, tr.dt);
        if (wq != 0.0) u += wq * tr.w[j];
    }
    return u;
}

}  // namespace detail

// xi_k = B(u0 + int w) + int c(t_k - s) eps(w(s)) ds
inline Vec eval_R(const HistoryKernel& K, const TrajectoryState& tr, int k) {
    detail::check_step(tr, k);
    Vec xi = K.elastic * detail::displacement_at(K, tr, k);
    if (!K.relax_samples.empty() && K.relax_bound > 0) {
        Vec acc = Vec::Zero(K.n_dof());
        for (int j = 0; j <= k; ++j) {
            const double wq = detail::quad_weight(K.rule, j, k, tr.dt);
            if (wq == 0.0) continue;
            if (k - j >= static_cast<int>(K.relax_samples.size()))
                throw std::out_of_range("eval_R: relaxation samples too short");
            acc += (wq * K.relax_samples[k - j]) * tr.w[j];
        }
        xi += K.relax_op * acc;
    }
    return xi;
}

// eta_k = gamma_nu(u0 + int w) plus the prescribed penetration
inline Vec eval_S_phi(const HistoryKernel& K, const TrajectoryState& tr, int k) {
    detail::check_step(tr, k);
    Vec eta = K.trace_nu * detail::displacement_at(K, tr, k);
    if (K.normal_offset.size() == eta.size()) eta += K.normal_offset;
    return eta;
}

inline Vec eval_S_j(const HistoryKernel& K, const TrajectoryState& tr, int k) {
    detail::check_step(tr, k);
    if (K.s_j) return K.s_j(tr, k);
    return Vec::Zero(K.trace_nu.rows());
}

struct HistoryProbe {
    double c_R = 0;
    double c_S_phi = 0;
    double bound_R = 0;    // L_B + |C|
    int samples = 0;
};

// Largest observed ratio |R v1(t_k) - R v2(t_k)|_{V*} / (dt sum |v1 - v2|_V), and the same for S_phi
// with the weighted l4 contact norm.
inline HistoryProbe history_lipschitz_probe(const HistoryKernel& K, const Mat& v_norm, const Vec& contact_weights,
                                            int n_trials, int n_steps = 8, unsigned seed = 42) {
    if (n_trials < 1) throw contract_error("history_lipschitz_probe: n_trials must be >= 1");
    const auto Vf = detail::spd_factor(v_norm, "v_norm");
    const int n = K.n_dof();
    n_steps = std::min<int>(n_steps, static_cast<int>(K.relax_samples.size()) - 1);
    if (n_steps < 1) n_steps = 1;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::uniform_int_distribution<int> pick(0, 3);

    HistoryProbe out;
    out.bound_R = K.elastic_bound + K.relax_bound;
    TrajectoryState a, b;
    a.dt = b.dt = K.dt;
    a.n_steps = b.n_steps = n_steps;
    a.w.assign(n_steps + 1, Vec::Zero(n));
    b.w = a.w;
    for (int trial = 0; trial < n_trials; ++trial) {
        const int mode = pick(rng);   // vary structure: random, identical prefix, single-step spikes
        for (int j = 0; j <= n_steps; ++j) {
            for (int i = 0; i < n; ++i) {
                a.w[j][i] = U(rng);
                b.w[j][i] = (mode == 1 && j < n_steps / 2) ? a.w[j][i] : U(rng);
            }
            if (mode == 2 && j != n_steps) b.w[j] = a.w[j];
        }
        for (int k = 0; k <= n_steps; ++k) {
            double den = 0;
            for (int j = 0; j <= k; ++j) {
                const double wq = detail::quad_weight(K.rule, j, k, K.dt);
                if (wq != 0.0) den += wq * quad_norm(v_norm, a.w[j] - b.w[j]);
            }
            if (den <= 1e-14) continue;
            const Vec dR = eval_R(K, a, k) - eval_R(K, b, k);
            const Vec dS = eval_S_phi(K, a, k) - eval_S_phi(K, b, k);
            out.c_R = std::max(out.c_R, dual_norm(Vf, dR) / den);
            out.c_S_phi = std::max(out.c_S_phi, weighted_lp(dS, contact_weights, 4) / den);
            ++out.samples;
        }
    }
    return out;
}

}  // namespace vhi
