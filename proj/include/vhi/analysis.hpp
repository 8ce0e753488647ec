#pragma once

#include "vhi/core_discrete.hpp"
#include "vhi/friction_state.hpp"
#include "vhi/material_history.hpp"
#include "vhi/scheme.hpp"
#include "vhi/vi_solver.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace vhi {

enum class Provenance { Analytic, Estimated, User };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Analytic: return "analytic";
        case Provenance::Estimated: return "estimated";
        case Provenance::User: return "user";
    }
    return "?";
}

struct Ingredient {
    std::string name;
    double value = 0;
    Provenance provenance = Provenance::User;
};

struct ConditionReport {
    std::string id;   // abstract | compliance | damped | rsf-compliance | rsf-damped
    double lhs = 0, rhs = 0, margin = 0;
    bool holds = false;
    std::vector<Ingredient> ingredients;
};

namespace detail {

inline ConditionReport finish(ConditionReport r) {
    r.margin = r.lhs - r.rhs;
    r.holds = r.margin > 0;
    return r;
}

}  // namespace detail

// m_A > m_j |N|^2 + sqrt2 (beta4 + beta5 |alpha0|) |K| |M|
inline ConditionReport check_abstract_condition(const ConstantsRecord& c, double alpha0_norm) {
    ConditionReport r;
    r.id = "abstract";
    r.lhs = c.m_A;
    r.rhs = c.m_j * c.op_norm_N * c.op_norm_N +
            std::sqrt(2.0) * (c.b(4) + c.b(5) * alpha0_norm) * c.op_norm_K * c.op_norm_M;
    r.ingredients = {{"m_A", c.m_A, Provenance::User},        {"m_j", c.m_j, Provenance::User},
                     {"beta4", c.b(4), Provenance::User},     {"beta5", c.b(5), Provenance::User},
                     {"|alpha0|", alpha0_norm, Provenance::User}, {"|M|", c.op_norm_M, Provenance::User},
                     {"|N|", c.op_norm_N, Provenance::User},  {"|K|", c.op_norm_K, Provenance::User}};
    return detail::finish(std::move(r));
}

enum class Application { NormalCompliance, DampedResponse, RsfCompliance, RsfDamped };

inline const char* application_id(Application a) {
    switch (a) {
        case Application::NormalCompliance: return "compliance";
        case Application::DampedResponse: return "damped";
        case Application::RsfCompliance: return "rsf-compliance";
        case Application::RsfDamped: return "rsf-damped";
    }
    return "?";
}

struct ApplicationInputs {
    double m_A = 0;
    Provenance m_A_source = Provenance::Analytic;
    double meas_gc = 0;          // sum of contact weights
    TraceNorms norms;            // |gamma_tau|, |gamma_nu|, |(gamma_tau, gamma_nu)|
    Provenance norms_source = Provenance::Estimated;
    double alpha0_norm = 0;      // |alpha0|_Y
    double p_star = 0;
    double m_jnu = 0;
    std::vector<FrictionLaw> friction;   // one per node or broadcast
};

namespace detail {

struct RsfSup {
    double C = 0, a_minus_balpha0 = 0, b = 0;
};

inline RsfSup rsf_sup(const std::vector<FrictionLaw>& laws) {
    if (laws.empty()) throw capability_error("no friction law given");
    RsfSup s;
    for (const auto& f : laws) {
        if (f.kind != FrictionKind::FirstOrder)
            throw capability_error("rate-and-state conditions need the first-order friction law");
        s.C = std::max(s.C, f.p.C());
        s.a_minus_balpha0 = std::max(s.a_minus_balpha0, std::abs(f.p.a - f.p.b * f.p.alpha0));
        s.b = std::max(s.b, std::abs(f.p.b));
    }
    return s;
}

inline MuConstants sup_constants(const std::vector<FrictionLaw>& laws) {
    if (laws.empty()) throw capability_error("no friction law given");
    MuConstants m;
    for (const auto& f : laws) {
        const MuConstants c = rsf_constants(f);
        m.L1 = std::max(m.L1, c.L1);
        m.L2 = std::max(m.L2, c.L2);
        m.L3 = std::max(m.L3, c.L3);
        m.k1 = std::max(m.k1, c.k1);
        m.k2 = std::max(m.k2, c.k2);
        m.k3 = std::max(m.k3, c.k3);
    }
    return m;
}

}  // namespace detail

inline ConditionReport check_application_condition(Application app, const ApplicationInputs& in) {
    ConditionReport r;
    r.id = application_id(app);
    r.lhs = in.m_A;
    const double sm = std::sqrt(in.meas_gc), r2 = std::sqrt(2.0);
    const auto& nr = in.norms;
    r.ingredients = {{"m_A", in.m_A, in.m_A_source},
                     {"meas(Gamma_C)", in.meas_gc, Provenance::Analytic},
                     {"|gamma_tau|", nr.tau, in.norms_source},
                     {"|gamma_nu|", nr.nu, in.norms_source},
                     {"|(gamma_tau,gamma_nu)|", nr.K, in.norms_source},
                     {"|alpha0|", in.alpha0_norm, Provenance::User}};
    switch (app) {
        case Application::NormalCompliance: {
            const MuConstants c = detail::sup_constants(in.friction);
            r.rhs = r2 * in.p_star * (c.L1 * sm + c.L2 * in.alpha0_norm) * nr.K * nr.tau;
            r.ingredients.push_back({"p*", in.p_star, Provenance::Analytic});
            r.ingredients.push_back({"L1mu", c.L1, Provenance::Analytic});
            r.ingredients.push_back({"L2mu", c.L2, Provenance::Analytic});
            break;
        }
        case Application::DampedResponse: {
            const MuConstants c = detail::sup_constants(in.friction);
            r.rhs = in.m_jnu * sm * nr.nu * nr.nu + r2 * (c.L1 * sm + c.L2 * in.alpha0_norm) * nr.tau * nr.tau;
            r.ingredients.push_back({"m_jnu", in.m_jnu, Provenance::Analytic});
            r.ingredients.push_back({"L1mu", c.L1, Provenance::Analytic});
            r.ingredients.push_back({"L2mu", c.L2, Provenance::Analytic});
            break;
        }
        case Application::RsfCompliance: {
            const auto s = detail::rsf_sup(in.friction);
            r.rhs = r2 * in.p_star * (sm * s.a_minus_balpha0 + s.b * in.alpha0_norm) * s.C * nr.tau * nr.K;
            r.ingredients.push_back({"p*", in.p_star, Provenance::Analytic});
            r.ingredients.push_back({"exp((mu0+b alpha0)/a)/(2 v0)", s.C, Provenance::Analytic});
            r.ingredients.push_back({"|a - b alpha0|", s.a_minus_balpha0, Provenance::Analytic});
            r.ingredients.push_back({"|b|", s.b, Provenance::Analytic});
            break;
        }
        case Application::RsfDamped: {
            const auto s = detail::rsf_sup(in.friction);
            r.rhs = in.m_jnu * sm * nr.nu * nr.nu +
                    r2 * s.C * (sm * s.a_minus_balpha0 + s.b * in.alpha0_norm) * nr.tau * nr.tau;
            r.ingredients.push_back({"m_jnu", in.m_jnu, Provenance::Analytic});
            r.ingredients.push_back({"exp((mu0+b alpha0)/a)/(2 v0)", s.C, Provenance::Analytic});
            r.ingredients.push_back({"|a - b alpha0|", s.a_minus_balpha0, Provenance::Analytic});
            r.ingredients.push_back({"|b|", s.b, Provenance::Analytic});
            break;
        }
    }
    return detail::finish(std::move(r));
}

// Constants of the abstract condition induced by the two contact applications.
inline ConstantsRecord application_constants(ContactKind kind, const ApplicationInputs& in, const ComplianceLaw& p) {
    const MuConstants c = detail::sup_constants(in.friction);
    const double sm = std::sqrt(in.meas_gc);
    ConstantsRecord k;
    k.m_A = in.m_A;
    k.op_norm_M = in.norms.tau;
    k.op_norm_N = in.norms.nu;
    k.op_norm_K = in.norms.K;
    if (kind == ContactKind::NormalCompliance) {
        const double ps = p.p_star(), Lp = p.L_p();
        k.b(1) = ps * c.L3;
        k.b(2) = 0;
        k.b(3) = Lp * (1 + c.k1) * sm;
        k.b(4) = ps * c.L1 * sm;
        k.b(5) = ps * c.L2;
        k.b(6) = c.k3 * Lp * std::pow(in.meas_gc, 0.25);
        k.b(7) = c.k2 * Lp;
    } else {
        k.b(1) = c.L3;
        k.b(4) = c.L1 * sm;
        k.b(5) = c.L2;
        k.m_j = in.m_jnu * sm;
    }
    return k;
}

// Gathers m_A, trace norms and the contact measure from an assembled problem.
inline ApplicationInputs application_inputs(const DiscreteProblem& prob, const InterfaceLaws& laws,
                                            const Vec& alpha0, const TraceNormOptions& opt = {}) {
    ApplicationInputs in;
    in.m_A = coercivity_constant(prob.visc, prob.v_norm);
    in.m_A_source = Provenance::Estimated;
    in.meas_gc = prob.contact_measure();
    in.norms = estimate_trace_norms(prob, opt);
    in.alpha0_norm = weighted_lp(alpha0, prob.contact_weights, 2);
    in.p_star = laws.compliance.p_star();
    in.m_jnu = laws.damped.m_j;
    in.friction = laws.friction;
    return in;
}

struct ContractionBudget {
    double structural = 0;        // 2(beta4 + beta5|alpha0|)^2 |K|^2 |M|^2 / (m_A - m_j|N|^2)^2
    double measured = 0;          // asymptotic ratio of the run
    double measured_half_T = -1;  // same for the run on T/2, when given
    bool ratio_below_one = true;  // asserted when the run converged
    bool nonincreasing_in_T = true;
};

inline ContractionBudget contraction_budget(const ConstantsRecord& c, double alpha0_norm, const SchemeReport& run,
                                            const SchemeReport* half_T = nullptr) {
    ContractionBudget b;
    const double gap = c.m_A - c.m_j * c.op_norm_N * c.op_norm_N;
    const double num = c.b(4) + c.b(5) * alpha0_norm;
    b.structural = num == 0 ? 0.0 : 2 * num * num * std::pow(c.op_norm_K * c.op_norm_M, 2) / (gap * gap);
    b.measured = run.asymptotic_ratio();
    if (run.converged) {
        for (double r : run.ratios) b.ratio_below_one = b.ratio_below_one && r < 1;
    }
    if (half_T) {
        b.measured_half_T = half_T->asymptotic_ratio();
        b.nonincreasing_in_T = b.measured_half_T <= b.measured * (1 + 1e-9) + 1e-12;
    }
    return b;
}

struct ProbeResult {
    ProbeResult() = default;
    explicit ProbeResult(std::string h) : hypothesis(std::move(h)) {}
    std::string hypothesis;
    bool passed = true;
    long samples = 0;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::string witness;
};

struct ProbeWindows {
    double r_max_factor = 10.0;   // slip rates in [0, r_max_factor v0]
    double alpha_halfwidth = 1.0; // states in [alpha0 - h, alpha0 + h]
};

namespace detail {

inline void record(ProbeResult& p, double margin, double slack, const std::string& witness) {
    ++p.samples;
    if (margin < p.worst_margin) {
        p.worst_margin = margin;
        if (margin < -slack) p.witness = witness;
    }
    if (margin < -slack) p.passed = false;
}

inline std::string fmt(std::initializer_list<std::pair<const char*, double>> xs) {
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& [k, v] : xs) {
        os << (first ? "" : ", ") << k << "=" << v;
        first = false;
    }
    return os.str();
}

}  // namespace detail

// Randomized falsification of the hypotheses on mu, G, p, j_nu, R and S_phi with declared constants.
inline std::vector<ProbeResult> hypothesis_probe_suite(const InterfaceLaws& laws, const HistoryKernel& kernel,
                                                       const DiscreteProblem& prob, long n_samples, unsigned seed = 42,
                                                       double slack = 1e-10, ProbeWindows win = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<ProbeResult> out;

    const FrictionLaw& f = laws.friction_at(0);
    const RsfParams& fp = f.p;
    const double rmax = f.kind == FrictionKind::BoundedLipschitz ? win.r_max_factor : win.r_max_factor * fp.v0;
    const double a0 = f.kind == FrictionKind::BoundedLipschitz ? 0.0 : fp.alpha0;
    auto rr = [&] { return rmax * U(rng); };
    auto aa = [&] { return a0 + win.alpha_halfwidth * (2 * U(rng) - 1); };

    {
        const MuConstants c = rsf_constants(f);
        ProbeResult lip{"H(mu)(ii)"}, gr{"H(mu)(iii)"};
        for (long s = 0; s < n_samples; ++s) {
            const double r1 = rr(), r2 = rr(), y1 = aa(), y2 = aa();
            const double lhs = std::abs(mu(f, r1, y1) - mu(f, r2, y2));
            const double rhs = (c.L1 + c.L2 * std::abs(y2)) * std::abs(r1 - r2) + c.L3 * std::abs(r1) * std::abs(y1 - y2);
            detail::record(lip, rhs - lhs, slack, detail::fmt({{"r1", r1}, {"y1", y1}, {"r2", r2}, {"y2", y2}}));
            const double g = c.k1 + c.k2 * std::abs(y1) + c.k3 * r1 - std::abs(mu(f, r1, y1));
            detail::record(gr, g, slack, detail::fmt({{"r", r1}, {"y", y1}}));
        }
        out.push_back(lip);
        out.push_back(gr);
    }
    {
        const StateLaw& g = laws.state_at(0);
        const double LG = state_constants(g);
        const double ga0 = g.kind == StateKind::Lipschitz ? 0.0 : g.p.alpha0;
        const double grmax = g.kind == StateKind::Lipschitz ? win.r_max_factor : win.r_max_factor * g.p.v0;
        ProbeResult lip{"H(G)(ii)"}, bnd{"H(G)(iii)"};
        for (long s = 0; s < n_samples; ++s) {
            const double r1 = grmax * U(rng), r2 = grmax * U(rng);
            const double y1 = ga0 + win.alpha_halfwidth * (2 * U(rng) - 1), y2 = ga0 + win.alpha_halfwidth * (2 * U(rng) - 1);
            const double lhs = std::abs(G(g, y1, r1) - G(g, y2, r2));
            const double rhs = LG * (std::abs(y1 - y2) + std::abs(r1 - r2));
            detail::record(lip, rhs - lhs, slack * std::max(1.0, rhs),
                           detail::fmt({{"alpha1", y1}, {"r1", r1}, {"alpha2", y2}, {"r2", r2}}));
        }
        const double g00 = std::abs(G(g, 0.0, 0.0));
        detail::record(bnd, std::isfinite(g00) ? 1.0 : -1.0, slack, "G(0,0) not finite");
        bnd.worst_margin = g00;
        out.push_back(lip);
        out.push_back(bnd);
    }
    if (laws.kind == ContactKind::NormalCompliance) {
        const auto& p = laws.compliance;
        const double Lp = p.L_p(), ps = p.p_star();
        ProbeResult lip{"H(p)(ii)"}, bnd{"H(p)(iii)"};
        for (long s = 0; s < n_samples; ++s) {
            const double x1 = p.r_star * (3 * U(rng) - 1), x2 = p.r_star * (3 * U(rng) - 1);
            const double p1 = compliance(p, x1), p2 = compliance(p, x2);
            detail::record(lip, Lp * std::abs(x1 - x2) - std::abs(p1 - p2), slack * std::max(1.0, ps),
                           detail::fmt({{"r1", x1}, {"r2", x2}}));
            const double mono = (x1 - x2) * (p1 - p2);   // nondecreasing
            detail::record(bnd, std::min({p1, ps - p1, mono >= 0 ? 1.0 : -1.0}), slack * std::max(1.0, ps),
                           detail::fmt({{"r", x1}}));
        }
        out.push_back(lip);
        out.push_back(bnd);
    } else {
        const auto& j = laws.damped;
        ProbeResult gr{"H(j_nu)(iii)"}, mono{"H(j_nu)(iv)"};
        const double scale = 1.0;
        for (long s = 0; s < n_samples; ++s) {
            const double r1 = scale * (2 * U(rng) - 1), r2 = scale * (2 * U(rng) - 1);
            // subgradient magnitude bound through the directional derivative in both directions
            const double up = damped_dirderiv(j, r1, 1.0), dn = damped_dirderiv(j, r1, -1.0);
            detail::record(gr, j.c0() + j.c1() * std::abs(r1) - std::max(std::abs(up), std::abs(dn)), slack,
                           detail::fmt({{"r", r1}}));
            const double lhs = damped_dirderiv(j, r1, r2 - r1) + damped_dirderiv(j, r2, r1 - r2);
            detail::record(mono, j.m_j * (r1 - r2) * (r1 - r2) - lhs, slack, detail::fmt({{"r1", r1}, {"r2", r2}}));
        }
        out.push_back(gr);
        out.push_back(mono);
    }
    {
        const int steps = std::min<int>(8, static_cast<int>(kernel.relax_samples.size()) - 1);
        const int trials = static_cast<int>(std::max<long>(1, n_samples / std::max(1, steps)));
        const auto probe = history_lipschitz_probe(kernel, prob.v_norm, prob.contact_weights, trials, steps, seed + 1);
        ProbeResult R{"H(R)(i)"}, S{"H(S_phi)(i)"};
        R.samples = S.samples = probe.samples;
        R.worst_margin = probe.bound_R - probe.c_R;
        R.passed = R.worst_margin >= -slack * std::max(1.0, probe.bound_R);
        const double c_s = estimate_l4_trace_norm({prob.trace_nu}, prob.contact_weights, prob.v_norm) * (1 + 1e-8);
        S.worst_margin = c_s - probe.c_S_phi;
        S.passed = S.worst_margin >= -slack * std::max(1.0, c_s);
        if (!R.passed) R.witness = detail::fmt({{"measured c_R", probe.c_R}, {"bound", probe.bound_R}});
        if (!S.passed) S.witness = detail::fmt({{"measured c_S", probe.c_S_phi}, {"bound", c_s}});
        out.push_back(R);
        out.push_back(S);
    }
    return out;
}

}  // namespace vhi
