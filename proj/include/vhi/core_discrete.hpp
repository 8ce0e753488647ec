#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vhi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct shape_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct contract_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct diagnostics_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct config_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct domain_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct capability_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct solver_error : std::runtime_error {
    std::vector<double> residual_history;
    solver_error(const std::string& what, std::vector<double> hist = {})
        : std::runtime_error(what), residual_history(std::move(hist)) {}
};

// Semi-discrete problem on the free (non-Dirichlet) dofs.
struct DiscreteProblem {
    int n_dof = 0;
    Mat mass;
    Mat visc;
    Mat v_norm;
    Mat h_norm;
    Mat trace_tau;            // n_contact x n_dof
    Mat trace_nu;             // n_contact x n_dof
    Vec contact_weights;      // per contact node
    Vec normal_offset;        // prescribed penetration added to the normal trace, m
    std::vector<bool> contact_dof;
    std::vector<Vec> load;    // load(t_k), k = 0..n_steps
    double load_dt = 0.0;

    int n_contact() const { return static_cast<int>(contact_weights.size()); }
    double contact_measure() const { return contact_weights.sum(); }
    int n_steps() const { return static_cast<int>(load.size()) - 1; }
};

enum class Quadrature { LeftRectangle, Trapezoid };

struct TrajectoryState {
    double dt = 0.0;
    int n_steps = 0;
    std::vector<Vec> w;       // k = 0..n_steps
    std::vector<Vec> u;
    std::vector<Vec> alpha;   // per contact node

    double t(int k) const { return dt * k; }
};

struct ConstantsRecord {
    double m_A = 0, m_j = 0, m_j_bar = 0;
    double beta[7] = {0, 0, 0, 0, 0, 0, 0};   // beta[0] is beta_1
    double c_R = 0, c_S_phi = 0, c_S_j = 0, L_G = 0;
    double op_norm_M = 0, op_norm_N = 0, op_norm_K = 0;

    double& b(int i) { return beta[i - 1]; }
    double b(int i) const { return beta[i - 1]; }
};

namespace detail {

inline void require_len(const Vec& x, Eigen::Index n, const char* what) {
    if (x.size() != n)
        throw shape_error(std::string(what) + ": expected length " + std::to_string(n) +
                          ", got " + std::to_string(x.size()));
}

inline bool is_symmetric(const Mat& A, double rtol = 1e-12) {
    if (A.rows() != A.cols()) return false;
    const double s = std::max(1.0, A.cwiseAbs().maxCoeff());
    return (A - A.transpose()).cwiseAbs().maxCoeff() <= rtol * s;
}

inline Eigen::LLT<Mat> spd_factor(const Mat& Q, const char* name) {
    if (!is_symmetric(Q)) throw contract_error(std::string(name) + " is not symmetric");
    Eigen::LLT<Mat> llt(Q);
    if (llt.info() != Eigen::Success)
        throw contract_error(std::string(name) + " is not positive definite");
    return llt;
}

}  // namespace detail

inline double quad_norm(const Mat& Q, const Vec& x) {
    detail::require_len(x, Q.cols(), "norm");
    return std::sqrt(std::max(0.0, x.dot(Q * x)));
}

inline double v_norm_of(const DiscreteProblem& p, const Vec& x) { return quad_norm(p.v_norm, x); }
inline double h_norm_of(const DiscreteProblem& p, const Vec& x) { return quad_norm(p.h_norm, x); }

// Dual norm sup <xi, x> / |x|_Q.
inline double dual_norm(const Eigen::LLT<Mat>& Q, const Vec& xi) {
    return std::sqrt(std::max(0.0, xi.dot(Q.solve(xi))));
}

// Weighted l^p norm over contact nodes; p = 4 realizes the trace spaces, p = 2 the state space.
inline double weighted_lp(const Vec& z, const Vec& weights, double p) {
    detail::require_len(z, weights.size(), "weighted norm");
    double s = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += weights[i] * std::pow(std::abs(z[i]), p);
    return std::pow(s, 1.0 / p);
}

struct TraceNorms {
    double tau = 0;   // |gamma_tau|: V -> l4
    double nu = 0;    // |gamma_nu|
    double K = 0;     // |(gamma_tau, gamma_nu)| into the product space
};

inline TraceNorms trace_norms_of(const DiscreteProblem& p, const Vec& x) {
    const Vec wt = p.trace_tau * x, wn = p.trace_nu * x;
    TraceNorms t;
    t.tau = weighted_lp(wt, p.contact_weights, 4);
    t.nu = weighted_lp(wn, p.contact_weights, 4);
    t.K = std::hypot(t.tau, t.nu);
    return t;
}

struct PowerOptions {
    double rtol = 1e-10;
    int max_iter = 100000;
    unsigned seed = 42;
};

// sup |A x|_T / |x|_S by power iteration on S^{-1} A^T T A.
inline double estimate_operator_norm(const Mat& A, const Mat& S, const Mat& T,
                                     const PowerOptions& opt = {}) {
    if (A.cols() != S.rows() || A.rows() != T.rows())
        throw shape_error("estimate_operator_norm: incompatible shapes");
    const auto Sf = detail::spd_factor(S, "source norm");
    detail::spd_factor(T, "target norm");
    if (A.size() == 0 || A.cwiseAbs().maxCoeff() == 0.0) return 0.0;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    Vec x(A.cols());
    for (auto& v : x) v = nd(rng);
    x /= quad_norm(S, x);

    double lam_old = -1;
    for (int it = 0; it < opt.max_iter; ++it) {
        const Vec Ax = A * x;
        const double lam = Ax.dot(T * Ax);   // Rayleigh quotient, |x|_S = 1
        Vec y = Sf.solve(A.transpose() * (T * Ax));
        const double ny = quad_norm(S, y);
        if (ny == 0.0) return 0.0;
        x = y / ny;
        if (lam_old > 0 && std::abs(lam - lam_old) <= opt.rtol * 1e-2 * lam) {
            const Vec Ax2 = A * x;
            return std::sqrt(std::max(lam, Ax2.dot(T * Ax2)));
        }
        lam_old = lam;
    }
    throw diagnostics_error("estimate_operator_norm: power iteration did not converge");
}

struct TraceNormOptions {
    double tol = 1e-8;
    int max_iter = 20000;
    int restarts = 8;
    unsigned seed = 42;
};

// sup over |x|_V = 1 of (sum_b |B_b x|_{l4,w}^2)^{1/2}, by projected gradient ascent on the V-sphere.
// The step is the full Riesz gradient, which is monotone for convex 2-homogeneous objectives.
inline double estimate_l4_trace_norm(const std::vector<Mat>& blocks, const Vec& weights, const Mat& v_norm,
                                     const TraceNormOptions& opt = {}) {
    const auto Vf = detail::spd_factor(v_norm, "v_norm");
    const Eigen::Index n = v_norm.rows();
    bool any = false;
    for (const auto& B : blocks) {
        if (B.cols() != n || B.rows() != weights.size())
            throw shape_error("estimate_l4_trace_norm: block shape mismatch");
        if (B.size() && B.cwiseAbs().maxCoeff() > 0) any = true;
    }
    if (!any) return 0.0;

    auto objective = [&](const Vec& x) {
        double s = 0;
        for (const auto& B : blocks) {
            const double q = weighted_lp(B * x, weights, 4);
            s += q * q;
        }
        return s;
    };
    auto grad = [&](const Vec& x) {   // gradient of objective/2
        Vec g = Vec::Zero(n);
        for (const auto& B : blocks) {
            const Vec z = B * x;
            const double q = weighted_lp(z, weights, 4);
            if (q == 0) continue;
            Vec c(z.size());
            for (Eigen::Index i = 0; i < z.size(); ++i) c[i] = weights[i] * z[i] * z[i] * z[i];
            g += B.transpose() * c / (q * q);
        }
        return g;
    };

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    double best = 0;
    for (int r = 0; r < opt.restarts; ++r) {
        Vec x(n);
        if (r == 0) {
            // start at the dominant l2 direction of the stacked map
            Mat St(0, n);
            for (const auto& B : blocks) {
                Mat tmp(St.rows() + B.rows(), n);
                tmp << St, (weights.cwiseSqrt().asDiagonal() * B);
                St = tmp;
            }
            Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(St.transpose() * St, v_norm);
            x = es.eigenvectors().col(n - 1);
        } else {
            for (auto& v : x) v = nd(rng);
        }
        x /= quad_norm(v_norm, x);
        double f = objective(x);
        for (int it = 0; it < opt.max_iter; ++it) {
            Vec y = Vf.solve(grad(x));
            const double ny = quad_norm(v_norm, y);
            if (ny == 0) break;
            y /= ny;
            const double fy = objective(y);
            x = y;
            const bool done = std::abs(fy - f) <= opt.tol * 1e-4 * std::max(fy, 1e-300);
            f = std::max(f, fy);
            if (done) break;
        }
        best = std::max(best, std::sqrt(f));
    }
    return best;
}

inline TraceNorms estimate_trace_norms(const DiscreteProblem& p, const TraceNormOptions& opt = {}) {
    TraceNorms t;
    t.tau = estimate_l4_trace_norm({p.trace_tau}, p.contact_weights, p.v_norm, opt);
    t.nu = estimate_l4_trace_norm({p.trace_nu}, p.contact_weights, p.v_norm, opt);
    t.K = estimate_l4_trace_norm({p.trace_tau, p.trace_nu}, p.contact_weights, p.v_norm, opt);
    return t;
}

// Smallest generalized eigenvalue of sym(visc) against v_norm.
inline double coercivity_constant(const Mat& visc, const Mat& v_norm) {
    if (visc.rows() != v_norm.rows() || visc.cols() != v_norm.cols())
        throw shape_error("coercivity_constant: shape mismatch");
    detail::spd_factor(v_norm, "v_norm");
    const Mat sym = 0.5 * (visc + visc.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(sym, v_norm, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
}

inline void validate(const DiscreteProblem& p) {
    const Eigen::Index n = p.n_dof;
    auto sq = [&](const Mat& M, const char* name) {
        if (M.rows() != n || M.cols() != n) throw shape_error(std::string(name) + " has wrong shape");
    };
    sq(p.mass, "mass");
    sq(p.visc, "visc");
    sq(p.v_norm, "v_norm");
    sq(p.h_norm, "h_norm");
    detail::spd_factor(p.mass, "mass");
    detail::spd_factor(p.v_norm, "v_norm");
    detail::spd_factor(p.h_norm, "h_norm");
    const Eigen::Index nc = p.contact_weights.size();
    if (p.trace_tau.rows() != nc || p.trace_tau.cols() != n || p.trace_nu.rows() != nc ||
        p.trace_nu.cols() != n)
        throw shape_error("trace maps have wrong shape");
    if (p.normal_offset.size() != nc) throw shape_error("normal_offset has wrong length");
    if (static_cast<Eigen::Index>(p.contact_dof.size()) != n) throw shape_error("contact_dof flags length");
    for (Eigen::Index j = 0; j < n; ++j) {
        if (p.contact_dof[j]) continue;
        if (p.trace_tau.col(j).cwiseAbs().maxCoeff() > 0 || p.trace_nu.col(j).cwiseAbs().maxCoeff() > 0)
            throw contract_error("trace map touches a non-contact dof");
    }
    for (const auto& l : p.load) detail::require_len(l, n, "load");
}

// Displacements from velocities; u_k = u0 + sum_{j=1..k} dt w_j (or trapezoid weights).
inline std::vector<Vec> accumulate_displacement(const Vec& u0, const std::vector<Vec>& w, double dt,
                                                Quadrature q = Quadrature::LeftRectangle) {
    std::vector<Vec> u(w.size());
    if (w.empty()) return u;
    u[0] = u0;
    for (std::size_t k = 1; k < w.size(); ++k) {
        if (q == Quadrature::LeftRectangle)
            u[k] = u[k - 1] + dt * w[k];
        else
            u[k] = u[k - 1] + 0.5 * dt * (w[k - 1] + w[k]);
    }
    return u;
}

// Discrete L^2(0,T;V): sqrt(dt sum_{k>=1} |x_k|_V^2).
inline double l2v_distance(const Mat& v_norm, const std::vector<Vec>& a, const std::vector<Vec>& b,
                           double dt, int k_end = -1) {
    if (a.size() != b.size()) throw shape_error("l2v_distance: trajectory lengths differ");
    const int last = k_end < 0 ? static_cast<int>(a.size()) - 1 : k_end;
    double s = 0;
    for (int k = 1; k <= last; ++k) {
        const double q = quad_norm(v_norm, a[k] - b[k]);
        s += q * q;
    }
    return std::sqrt(dt * s);
}

inline double l2v_norm(const Mat& v_norm, const std::vector<Vec>& a, double dt, int k_end = -1) {
    std::vector<Vec> z(a.size(), Vec::Zero(v_norm.rows()));
    return l2v_distance(v_norm, a, z, dt, k_end);
}

// Discrete C([0,T];Y): max over k of the weighted l2 contact norm.
inline double cy_distance(const Vec& weights, const std::vector<Vec>& a, const std::vector<Vec>& b,
                          int k_end = -1) {
    if (a.size() != b.size()) throw shape_error("cy_distance: trajectory lengths differ");
    const int last = k_end < 0 ? static_cast<int>(a.size()) - 1 : k_end;
    double m = 0;
    for (int k = 0; k <= last; ++k) m = std::max(m, weighted_lp(a[k] - b[k], weights, 2));
    return m;
}

}  // namespace vhi
