#pragma once

#include "vhi/core_discrete.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>

namespace vhi {

struct RsfParams {
    double a = 0.011;
    double b = 0.014;
    double mu0 = 0.7;
    double v0 = 1e-9;   // m/s
    double L = 5e-5;    // m
    double alpha0 = std::log(1e-9 / 5e-5);

    static RsfParams table1() { return {}; }

    // exp((mu0 + b alpha0)/a) / (2 v0)
    double C() const { return std::exp((mu0 + b * alpha0) / a) / (2 * v0); }
    double v_alpha(double alpha) const { return v0 * std::exp(-(mu0 + b * alpha) / a); }

    void validate() const {
        for (double x : {a, b, mu0, v0, L, alpha0})
            if (!std::isfinite(x)) throw domain_error("rate-and-state parameters must be finite");
        if (a == 0 || v0 == 0 || L == 0) throw domain_error("a, v0 and L must be nonzero");
    }
};

// Constants of the growth/Lipschitz hypotheses on mu:
// |mu(r1,y1) - mu(r2,y2)| <= (L1 + L2|y2|)|r1 - r2| + L3|r1||y1 - y2|,  |mu(r,y)| <= k1 + k2|y| + k3|r|.
struct MuConstants {
    double L1 = 0, L2 = 0, L3 = 0;
    double k1 = 0, k2 = 0, k3 = 0;
};

enum class FrictionKind { Regularized, Truncated, FirstOrder, BoundedLipschitz };

struct FrictionLaw {
    FrictionKind kind = FrictionKind::FirstOrder;
    RsfParams p;
    std::function<double(double, double)> user;   // mu(r, alpha) for BoundedLipschitz
    MuConstants declared;
    std::optional<double> state_cap;              // truncation of the state argument to [-R, R]

    static FrictionLaw regularized(RsfParams p) { return {FrictionKind::Regularized, p, {}, {}, {}}; }
    static FrictionLaw truncated(RsfParams p) { return {FrictionKind::Truncated, p, {}, {}, {}}; }
    static FrictionLaw first_order(RsfParams p) { return {FrictionKind::FirstOrder, p, {}, {}, {}}; }
    static FrictionLaw constant(double mu) {
        FrictionLaw f;
        f.kind = FrictionKind::BoundedLipschitz;
        f.user = [mu](double, double) { return mu; };
        f.declared = {0, 0, 0, std::abs(mu), 0, 0};
        return f;
    }
};

enum class StateKind { Aging, Slip, FirstOrderAging, Lipschitz };

struct StateLaw {
    StateKind kind = StateKind::FirstOrderAging;
    RsfParams p;
    std::function<double(double, double)> user;   // G(alpha, r) for Lipschitz
    double declared_L_G = 0;

    static StateLaw aging(RsfParams p) { return {StateKind::Aging, p, {}, 0}; }
    static StateLaw slip(RsfParams p) { return {StateKind::Slip, p, {}, 0}; }
    static StateLaw first_order_aging(RsfParams p) { return {StateKind::FirstOrderAging, p, {}, 0}; }
    static StateLaw lipschitz(std::function<double(double, double)> g, double L_G) {
        return {StateKind::Lipschitz, {}, std::move(g), L_G};
    }
    static StateLaw frozen() { return lipschitz([](double, double) { return 0.0; }, 0.0); }
};

// p(r) = c_p (r+)^m truncated at r*.
struct ComplianceLaw {
    double c_p = 0;
    int m = 1;
    double r_star = 1;

    double p_star() const { return c_p * std::pow(r_star, m); }
    double L_p() const { return c_p * m * std::pow(r_star, m - 1); }
};

enum class DampedKind { Quadratic, Absolute, User };

struct DampedResponseLaw {
    DampedKind kind = DampedKind::Quadratic;
    double kappa = 0;
    bool convex = true;
    double m_j = 0;   // relaxed monotonicity constant
    std::function<double(double)> user_value;
    std::function<double(double, double)> user_dirderiv;

    double c0() const { return kind == DampedKind::Absolute ? kappa : 0.0; }
    double c1() const { return kind == DampedKind::Quadratic ? kappa : 0.0; }
};

namespace detail {

inline void finite_or_throw(std::initializer_list<double> xs, const char* where) {
    for (double x : xs)
        if (!std::isfinite(x)) throw domain_error(std::string(where) + ": non-finite input");
}

inline double capped(const std::optional<double>& cap, double alpha) {
    return cap ? std::clamp(alpha, -*cap, *cap) : alpha;
}

}  // namespace detail

inline double mu(const FrictionLaw& law, double r, double alpha) {
    detail::finite_or_throw({r, alpha}, "mu");
    if (r < 0) throw domain_error("mu: slip rate must be nonnegative");
    alpha = detail::capped(law.state_cap, alpha);
    const auto& p = law.p;
    switch (law.kind) {
        case FrictionKind::Regularized:
            return p.a * std::asinh(r * std::exp((p.mu0 + p.b * alpha) / p.a) / (2 * p.v0));
        case FrictionKind::Truncated: {
            if (r == 0) return 0.0;
            return p.a * std::max(0.0, std::log(r / p.v_alpha(alpha)));
        }
        case FrictionKind::FirstOrder: {
            const double bracket = std::max(0.0, 1.0 + (p.b / p.a) * (alpha - p.alpha0));
            return p.a * std::asinh(p.C() * r * bracket);
        }
        case FrictionKind::BoundedLipschitz:
            if (!law.user) throw capability_error("mu: user law without callable");
            return law.user(r, alpha);
    }
    return 0.0;
}

inline double G(const StateLaw& law, double alpha, double r) {
    detail::finite_or_throw({r, alpha}, "G");
    if (r < 0) throw domain_error("G: slip rate must be nonnegative");
    const auto& p = law.p;
    switch (law.kind) {
        case StateKind::Aging: return (p.v0 * std::exp(-alpha) - r) / p.L;
        case StateKind::Slip:
            if (r == 0) return 0.0;
            return -(r / p.L) * (std::log(r / p.v0) + alpha);
        case StateKind::FirstOrderAging:
            return (p.v0 * std::exp(-p.alpha0) * (1.0 - alpha + p.alpha0) - r) / p.L;
        case StateKind::Lipschitz:
            if (!law.user) throw capability_error("G: user law without callable");
            return law.user(alpha, r);
    }
    return 0.0;
}

inline MuConstants rsf_constants(const FrictionLaw& law) {
    switch (law.kind) {
        case FrictionKind::FirstOrder: {
            const auto& p = law.p;
            const double C = p.C();
            const double sqC = std::exp((p.mu0 + p.b * p.alpha0) / (2 * p.a)) / std::sqrt(2 * p.v0);
            MuConstants c;
            c.L1 = C * std::abs(p.a - p.b * p.alpha0);
            c.L2 = C * std::abs(p.b);
            c.L3 = c.L2;
            c.k1 = sqC * (std::abs(p.a) + std::abs(p.b * p.alpha0));
            c.k2 = sqC * std::abs(p.b);
            c.k3 = sqC * std::abs(p.a);
            return c;
        }
        case FrictionKind::BoundedLipschitz: return law.declared;
        default: throw capability_error("rsf_constants: no closed-form constants for the full laws");
    }
}

inline double state_constants(const StateLaw& law) {
    switch (law.kind) {
        case StateKind::FirstOrderAging:
            return std::max(law.p.v0 * std::exp(-law.p.alpha0), 1.0) / std::abs(law.p.L);
        case StateKind::Lipschitz: return law.declared_L_G;
        default: throw capability_error("state_constants: aging/slip laws are not globally Lipschitz");
    }
}

inline double compliance(const ComplianceLaw& law, double r) {
    detail::finite_or_throw({r}, "compliance");
    if (r <= 0) return 0.0;
    if (r > law.r_star) return law.p_star();
    return law.c_p * std::pow(r, law.m);
}

inline double compliance_slope(const ComplianceLaw& law, double r) {
    if (r <= 0 || r > law.r_star) return 0.0;
    return law.c_p * law.m * std::pow(r, law.m - 1);
}

inline double damped_value(const DampedResponseLaw& law, double r) {
    detail::finite_or_throw({r}, "damped_value");
    switch (law.kind) {
        case DampedKind::Quadratic: return 0.5 * law.kappa * r * r;
        case DampedKind::Absolute: return law.kappa * std::abs(r);
        case DampedKind::User:
            if (!law.user_value) throw capability_error("damped_value: user law without callable");
            return law.user_value(r);
    }
    return 0.0;
}

// Generalized directional derivative j°(r; s).
inline double damped_dirderiv(const DampedResponseLaw& law, double r, double s) {
    detail::finite_or_throw({r, s}, "damped_dirderiv");
    switch (law.kind) {
        case DampedKind::Quadratic: return law.kappa * r * s;
        case DampedKind::Absolute:
            if (r == 0) return law.kappa * std::abs(s);
            return law.kappa * (r > 0 ? s : -s);
        case DampedKind::User:
            if (!law.user_dirderiv) throw capability_error("damped_dirderiv: user law without callable");
            return law.user_dirderiv(r, s);
    }
    return 0.0;
}

// argmin_x j(x) + (x - y)^2 / (2t)
inline double damped_prox(const DampedResponseLaw& law, double y, double t) {
    switch (law.kind) {
        case DampedKind::Quadratic: return y / (1 + t * law.kappa);
        case DampedKind::Absolute: {
            const double s = t * law.kappa;
            return y > s ? y - s : (y < -s ? y + s : 0.0);
        }
        case DampedKind::User: throw capability_error("damped_prox: not available for user laws");
    }
    return y;
}

struct ClaimReport {
    long samples = 0;
    long violations_a = 0, violations_b = 0;
    double worst_margin_a = std::numeric_limits<double>::infinity();
    double worst_margin_b = std::numeric_limits<double>::infinity();
    bool passed() const { return violations_a == 0 && violations_b == 0; }
};

inline double claim_margin_a(double beta, double xi) { return std::abs(beta) + std::abs(xi) - std::abs(std::asinh(beta * xi)); }

inline double claim_margin_b(double b1, double x1, double b2, double x2) {
    return std::abs(b1) * std::abs(x1 - x2) + std::abs(x2) * std::abs(b1 - b2) -
           std::abs(std::asinh(b1 * x1) - std::asinh(b2 * x2));
}

// |asinh(b x)| <= |b| + |x| and |asinh(b1 x1) - asinh(b2 x2)| <= |b1||x1 - x2| + |x2||b1 - b2|
inline ClaimReport arcsinh_claim_check(long n_samples, unsigned seed = 42, double slack = 1e-12) {
    if (n_samples < 1) throw contract_error("arcsinh_claim_check: n_samples must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-10.0, 10.0);
    ClaimReport rep;
    for (long s = 0; s < n_samples; ++s) {
        const double b1 = U(rng), x1 = U(rng), b2 = U(rng), x2 = U(rng);
        const double ma = claim_margin_a(b1, x1), mb = claim_margin_b(b1, x1, b2, x2);
        rep.worst_margin_a = std::min(rep.worst_margin_a, ma);
        rep.worst_margin_b = std::min(rep.worst_margin_b, mb);
        if (ma < -slack) ++rep.violations_a;
        if (mb < -slack) ++rep.violations_b;
        ++rep.samples;
    }
    return rep;
}

enum class SignVerdict { Holds, Neutral, Violated };

struct SignReport {
    SignVerdict dG_dalpha = SignVerdict::Holds, dmu_dr = SignVerdict::Holds, dmu_dalpha = SignVerdict::Holds;
    double max_dG_dalpha = -std::numeric_limits<double>::infinity();
    double min_dmu_dr = std::numeric_limits<double>::infinity();
    double min_dmu_dalpha = std::numeric_limits<double>::infinity();
    bool passed() const {
        return dG_dalpha != SignVerdict::Violated && dmu_dr != SignVerdict::Violated &&
               dmu_dalpha != SignVerdict::Violated;
    }
};

// Central-difference signs: dG/dalpha < 0, dmu/dr > 0, dmu/dalpha > 0 over the windows.
inline SignReport qualitative_sign_check(const FrictionLaw& f, const StateLaw& g, std::pair<double, double> alpha_win,
                                         std::pair<double, double> r_win, int n = 41) {
    if (!(alpha_win.second >= alpha_win.first) || !(r_win.second >= r_win.first))
        throw contract_error("qualitative_sign_check: empty window");
    if (!(r_win.first > 0)) throw contract_error("qualitative_sign_check: r-window must be positive");
    SignReport rep;
    const double ha = 1e-6 * std::max(1.0, std::max(std::abs(alpha_win.first), std::abs(alpha_win.second)));
    bool all_zero_alpha = true;
    for (int i = 0; i < n; ++i) {
        const double al = alpha_win.first + (alpha_win.second - alpha_win.first) * i / std::max(1, n - 1);
        for (int j = 0; j < n; ++j) {
            const double lr = std::log(r_win.first) + (std::log(r_win.second) - std::log(r_win.first)) * j / std::max(1, n - 1);
            const double r = std::exp(lr);
            const double hr = 1e-6 * r;
            const double dGa = (G(g, al + ha, r) - G(g, al - ha, r)) / (2 * ha);
            const double dmr = (mu(f, r + hr, al) - mu(f, r - hr, al)) / (2 * hr);
            rep.max_dG_dalpha = std::max(rep.max_dG_dalpha, dGa);
            rep.min_dmu_dr = std::min(rep.min_dmu_dr, dmr);
            if (!(dGa < 0)) rep.dG_dalpha = SignVerdict::Violated;
            if (!(dmr > 0)) rep.dmu_dr = SignVerdict::Violated;
            const bool in_window = f.kind != FrictionKind::FirstOrder || 1.0 + (f.p.b / f.p.a) * (al - f.p.alpha0) > 0;
            if (!in_window) continue;
            const double dma = (mu(f, r, al + ha) - mu(f, r, al - ha)) / (2 * ha);
            rep.min_dmu_dalpha = std::min(rep.min_dmu_dalpha, dma);
            if (dma != 0) all_zero_alpha = false;
            if (dma < 0) rep.dmu_dalpha = SignVerdict::Violated;
        }
    }
    if (all_zero_alpha && rep.dmu_dalpha != SignVerdict::Violated) rep.dmu_dalpha = SignVerdict::Neutral;
    return rep;
}

}  // namespace vhi
