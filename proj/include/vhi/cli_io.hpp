#pragma once

#include "vhi/analysis.hpp"
#include "vhi/assembly.hpp"
#include "vhi/core_discrete.hpp"
#include "vhi/friction_state.hpp"
#include "vhi/material_history.hpp"
#include "vhi/scheme.hpp"
#include "vhi/vi_solver.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace vhi {

// ---------- number formatting ----------

inline std::string fmt_num(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string fmt_list(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + fmt_num(xs[i]);
    return s;
}

inline double parse_num(std::string_view s, const std::string& where) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw config_error(where + ": not a number: '" + std::string(s) + "'");
    if (!std::isfinite(v)) throw config_error(where + ": value must be finite");
    return v;
}

inline std::vector<double> parse_list(const std::string& s, const std::string& where) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_num(item, where));
    return out;
}

// ---------- configuration ----------

struct RunConfig {
    struct Mesh {
        int dimension = 1;
        double length_x = 1.0, length_y = 1.0;
        int nx = 8, ny = 1;
        double contact_area = 1.0;
        bool consistent_mass = false;
        std::string left = "dirichlet", right = "contact", bottom = "contact", top = "neumann";
        bool operator==(const Mesh&) const = default;
    } mesh;
    struct Material {
        double density = 1.0;
        double visc_modulus = 1.0, visc_lambda = 0.0;
        double elastic_modulus = 1.0, elastic_lambda = 0.0;
        double relax_amplitude = 0.2, relax_time = 0.05;
        bool operator==(const Material&) const = default;
    } material;
    struct Loads {
        double body_x = 2.0, body_y = 0.0, traction_x = 0.0, traction_y = 0.0;
        std::string profile = "sine";   // constant | sine | ramp
        double period = 0.1;
        bool operator==(const Loads&) const = default;
    } loads;
    struct Init {
        double w0_x = 0.5, w0_y = 0.0;
        std::string w0_profile = "linear";   // uniform | linear
        double u0_x = 0.0, u0_y = 0.0;
        std::string u0_profile = "linear";
        std::string alpha0 = "auto";         // number, or auto = ln(v0/L)
        bool operator==(const Init&) const = default;
    } init;
    struct Contact {
        std::string model = "compliance";    // compliance | damped
        std::string friction = "first-order";  // regularized | truncated | first-order | constant
        std::string state = "first-order-aging";  // aging | slip | first-order-aging | frozen
        double a = 0.5, b = 0.3, mu0 = 0.2, v0 = 1.0, L = 1.0;
        double mu_const = 0.0;
        double cp = 1.0;
        int exponent = 1;
        double rstar = 1.0;
        double normal_offset = 1.0;
        std::string damped_kind = "quadratic";   // quadratic | absolute
        double kappa = 1.0;
        double state_cap = 0.0;   // 0 disables the state truncation
        bool operator==(const Contact&) const = default;
    } contact;
    struct Scheme {
        double T = 0.1, dt = 1e-3, outer_tol = 1e-10;
        int max_outer = 30;
        std::string alpha_integrator = "midpoint";   // midpoint | picard-lambda
        std::string mode = "picard";                 // picard | incremental
        int seed = 42;
        std::string quadrature = "left";             // left | trapezoid
        double kkt_tol = 1e-10;
        int max_iter = 200;
        bool operator==(const Scheme&) const = default;
    } scheme;
    struct Output {
        std::string dir = "out";
        bool verify = true;
        int probes = 8;
        bool operator==(const Output&) const = default;
    } output;

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

struct KeyEntry {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class Sec, class T>
KeyEntry member_key(Sec RunConfig::*sec, T Sec::*field, std::vector<std::string> choices = {}) {
    KeyEntry e;
    e.set = [=](RunConfig& c, const std::string& v, const std::string& where) {
        auto& ref = (c.*sec).*field;
        if constexpr (std::is_same_v<T, double>) {
            ref = parse_num(v, where);
        } else if constexpr (std::is_same_v<T, int>) {
            const double d = parse_num(v, where);
            if (d != std::floor(d)) throw config_error(where + ": expected an integer");
            ref = static_cast<int>(d);
        } else if constexpr (std::is_same_v<T, bool>) {
            if (v == "true" || v == "1") ref = true;
            else if (v == "false" || v == "0") ref = false;
            else throw config_error(where + ": expected true or false");
        } else {
            if (!choices.empty() && std::find(choices.begin(), choices.end(), v) == choices.end()) {
                std::string all;
                for (const auto& ch : choices) all += (all.empty() ? "" : " | ") + ch;
                throw config_error(where + ": expected one of " + all);
            }
            ref = v;
        }
    };
    e.get = [=](const RunConfig& c) -> std::string {
        const auto& ref = (c.*sec).*field;
        if constexpr (std::is_same_v<T, double>) return fmt_num(ref);
        else if constexpr (std::is_same_v<T, int>) return std::to_string(ref);
        else if constexpr (std::is_same_v<T, bool>) return ref ? "true" : "false";
        else return ref;
    };
    return e;
}

using KeyTable = std::vector<std::pair<std::string, std::vector<std::pair<std::string, KeyEntry>>>>;

inline const KeyTable& key_table() {
    static const KeyTable table = [] {
        using C = RunConfig;
        const std::vector<std::string> roles{"dirichlet", "neumann", "contact"};
        KeyTable t;
        t.push_back({"mesh",
                     {{"dimension", member_key(&C::mesh, &C::Mesh::dimension)},
                      {"length_x", member_key(&C::mesh, &C::Mesh::length_x)},
                      {"length_y", member_key(&C::mesh, &C::Mesh::length_y)},
                      {"nx", member_key(&C::mesh, &C::Mesh::nx)},
                      {"ny", member_key(&C::mesh, &C::Mesh::ny)},
                      {"contact_area", member_key(&C::mesh, &C::Mesh::contact_area)},
                      {"consistent_mass", member_key(&C::mesh, &C::Mesh::consistent_mass)},
                      {"left", member_key(&C::mesh, &C::Mesh::left, roles)},
                      {"right", member_key(&C::mesh, &C::Mesh::right, roles)},
                      {"bottom", member_key(&C::mesh, &C::Mesh::bottom, roles)},
                      {"top", member_key(&C::mesh, &C::Mesh::top, roles)}}});
        t.push_back({"material",
                     {{"density", member_key(&C::material, &C::Material::density)},
                      {"visc_modulus", member_key(&C::material, &C::Material::visc_modulus)},
                      {"visc_lambda", member_key(&C::material, &C::Material::visc_lambda)},
                      {"elastic_modulus", member_key(&C::material, &C::Material::elastic_modulus)},
                      {"elastic_lambda", member_key(&C::material, &C::Material::elastic_lambda)},
                      {"relax_amplitude", member_key(&C::material, &C::Material::relax_amplitude)},
                      {"relax_time", member_key(&C::material, &C::Material::relax_time)}}});
        t.push_back({"loads",
                     {{"body_x", member_key(&C::loads, &C::Loads::body_x)},
                      {"body_y", member_key(&C::loads, &C::Loads::body_y)},
                      {"traction_x", member_key(&C::loads, &C::Loads::traction_x)},
                      {"traction_y", member_key(&C::loads, &C::Loads::traction_y)},
                      {"profile", member_key(&C::loads, &C::Loads::profile, {"constant", "sine", "ramp"})},
                      {"period", member_key(&C::loads, &C::Loads::period)}}});
        t.push_back({"init",
                     {{"w0_x", member_key(&C::init, &C::Init::w0_x)},
                      {"w0_y", member_key(&C::init, &C::Init::w0_y)},
                      {"w0_profile", member_key(&C::init, &C::Init::w0_profile, {"uniform", "linear"})},
                      {"u0_x", member_key(&C::init, &C::Init::u0_x)},
                      {"u0_y", member_key(&C::init, &C::Init::u0_y)},
                      {"u0_profile", member_key(&C::init, &C::Init::u0_profile, {"uniform", "linear"})},
                      {"alpha0", member_key(&C::init, &C::Init::alpha0)}}});
        t.push_back({"contact",
                     {{"model", member_key(&C::contact, &C::Contact::model, {"compliance", "damped"})},
                      {"friction", member_key(&C::contact, &C::Contact::friction,
                                              {"regularized", "truncated", "first-order", "constant"})},
                      {"state", member_key(&C::contact, &C::Contact::state,
                                           {"aging", "slip", "first-order-aging", "frozen"})},
                      {"a", member_key(&C::contact, &C::Contact::a)},
                      {"b", member_key(&C::contact, &C::Contact::b)},
                      {"mu0", member_key(&C::contact, &C::Contact::mu0)},
                      {"v0", member_key(&C::contact, &C::Contact::v0)},
                      {"L", member_key(&C::contact, &C::Contact::L)},
                      {"mu_const", member_key(&C::contact, &C::Contact::mu_const)},
                      {"cp", member_key(&C::contact, &C::Contact::cp)},
                      {"exponent", member_key(&C::contact, &C::Contact::exponent)},
                      {"rstar", member_key(&C::contact, &C::Contact::rstar)},
                      {"normal_offset", member_key(&C::contact, &C::Contact::normal_offset)},
                      {"damped_kind", member_key(&C::contact, &C::Contact::damped_kind, {"quadratic", "absolute"})},
                      {"kappa", member_key(&C::contact, &C::Contact::kappa)},
                      {"state_cap", member_key(&C::contact, &C::Contact::state_cap)}}});
        t.push_back({"scheme",
                     {{"T", member_key(&C::scheme, &C::Scheme::T)},
                      {"dt", member_key(&C::scheme, &C::Scheme::dt)},
                      {"outer_tol", member_key(&C::scheme, &C::Scheme::outer_tol)},
                      {"max_outer", member_key(&C::scheme, &C::Scheme::max_outer)},
                      {"alpha_integrator",
                       member_key(&C::scheme, &C::Scheme::alpha_integrator, {"midpoint", "picard-lambda"})},
                      {"mode", member_key(&C::scheme, &C::Scheme::mode, {"picard", "incremental"})},
                      {"seed", member_key(&C::scheme, &C::Scheme::seed)},
                      {"quadrature", member_key(&C::scheme, &C::Scheme::quadrature, {"left", "trapezoid"})},
                      {"kkt_tol", member_key(&C::scheme, &C::Scheme::kkt_tol)},
                      {"max_iter", member_key(&C::scheme, &C::Scheme::max_iter)}}});
        t.push_back({"output",
                     {{"dir", member_key(&C::output, &C::Output::dir)},
                      {"verify", member_key(&C::output, &C::Output::verify)},
                      {"probes", member_key(&C::output, &C::Output::probes)}}});
        return t;
    }();
    return table;
}

inline const KeyEntry* find_key(const std::string& section, const std::string& key) {
    for (const auto& [sec, keys] : key_table()) {
        if (sec != section) continue;
        for (const auto& [k, e] : keys)
            if (k == key) return &e;
    }
    return nullptr;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
    return {"chain-1d", "frictionless", "table1-compliance", "table1-damped", "table1"};
}

inline RunConfig preset(const std::string& name) {
    RunConfig c;   // defaults are the chain-1d scenario
    if (name == "chain-1d") return c;
    if (name == "frictionless") {
        c.mesh.nx = 4;
        c.contact.friction = "constant";
        c.contact.mu_const = 0.0;
        c.contact.state = "frozen";
        c.contact.cp = 0.0;
        c.contact.normal_offset = 0.0;
        c.init.alpha0 = "0";
        return c;
    }
    if (name == "table1-compliance" || name == "table1" || name == "table1-damped") {
        const RsfParams t = RsfParams::table1();
        c.mesh.dimension = 2;
        c.mesh.length_x = 2.0;
        c.mesh.length_y = 1.0;
        c.mesh.nx = 4;
        c.mesh.ny = 2;
        c.mesh.right = "neumann";
        c.material.density = 1.0;
        // stiff enough that unit tractions slide the block at about 1e-9 m/s
        c.material.visc_modulus = 1e9;
        c.material.elastic_modulus = 1e9;
        c.material.relax_amplitude = 1e8;
        c.material.relax_time = 0.05;
        c.loads.body_x = 0.0;
        c.loads.traction_x = 1.0;
        c.loads.traction_y = 0.0;
        c.loads.profile = "constant";
        c.init.w0_x = 1e-9;
        c.init.w0_profile = "uniform";
        c.init.alpha0 = "auto";
        c.contact.friction = "first-order";
        c.contact.state = "first-order-aging";
        c.contact.a = t.a;
        c.contact.b = t.b;
        c.contact.mu0 = t.mu0;
        c.contact.v0 = t.v0;
        c.contact.L = t.L;
        c.contact.cp = 1.0;
        c.contact.exponent = 1;
        c.contact.rstar = 1.0;
        c.contact.normal_offset = 1.0;
        c.scheme.T = 0.05;
        c.scheme.dt = 1e-3;
        if (name == "table1-damped") {
            c.contact.model = "damped";
            c.contact.damped_kind = "quadratic";
            c.contact.kappa = 1.0;
            c.contact.normal_offset = 0.0;
        }
        if (name == "table1") c.output.dir = "out-table1";
        return c;
    }
    throw config_error("unknown preset '" + name + "'");
}

// Line-based [section] / key = value text; '#' starts a comment. A top-level 'preset = NAME' line seeds the values.
inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
    RunConfig c;
    std::string section, line;
    int lineno = 0;
    bool seen_key = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw config_error(where + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& [s, keys] : detail::key_table()) known = known || s == section;
            if (!known) throw config_error(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw config_error(where + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq)), val = detail::trim(line.substr(eq + 1));
        if (section.empty()) {
            if (key != "preset") throw config_error(where + ": key '" + key + "' outside any section");
            if (seen_key) throw config_error(where + ": preset must precede all other keys");
            try {
                c = preset(val);
            } catch (const config_error& e) {
                throw config_error(where + ": " + e.what());
            }
            continue;
        }
        const auto* e = detail::find_key(section, key);
        if (!e) throw config_error(where + ": unknown key '" + key + "' in [" + section + "]");
        e->set(c, val, where + " (" + section + "." + key + ")");
        seen_key = true;
    }
    return c;
}

inline RunConfig parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is, "string");
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file '" + path + "'");
    return parse_config(f, path);
}

inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [sec, keys] : detail::key_table()) {
        os << (first ? "" : "\n") << "[" << sec << "]\n";
        first = false;
        for (const auto& [k, e] : keys) os << k << " = " << e.get(c) << "\n";
    }
    return os.str();
}

// Applies a single "section.key = value" override.
inline void set_config_value(RunConfig& c, const std::string& dotted, const std::string& value) {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos) throw config_error("override key must be section.key: '" + dotted + "'");
    const auto* e = detail::find_key(dotted.substr(0, dot), dotted.substr(dot + 1));
    if (!e) throw config_error("unknown key '" + dotted + "'");
    e->set(c, value, dotted);
}

// ---------- scenario construction ----------

struct Scenario {
    MeshSpec mesh;
    MaterialSpec material;
    LoadSpec loads;
    DiscreteProblem prob;
    HistoryKernel kernel;
    InterfaceLaws laws;
    SchemeConfig scheme;
    InitialData init;
    RsfParams rsf;
};

namespace detail {

inline EdgeRole role_of(const std::string& s) {
    if (s == "dirichlet") return EdgeRole::Dirichlet;
    if (s == "neumann") return EdgeRole::Neumann;
    return EdgeRole::Contact;
}

inline double load_profile(const RunConfig::Loads& l, double t) {
    if (l.profile == "constant") return 1.0;
    if (l.profile == "ramp") return std::min(1.0, t / l.period);
    return std::sin(2 * std::numbers::pi * t / l.period);
}

inline Vec nodal_field(const MeshSpec& mesh, double fx, double fy, const std::string& profile) {
    const auto pos = dof_positions(mesh);
    const auto comp = dof_components(mesh);
    Vec v(static_cast<Eigen::Index>(pos.size()));
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const double s = profile == "linear" ? pos[i].x() / mesh.extent[0] : 1.0;
        v[i] = s * (comp[i] == 0 ? fx : fy);
    }
    return v;
}

}  // namespace detail

inline Scenario build_scenario(const RunConfig& c) {
    Scenario s;
    auto& m = s.mesh;
    m.dimension = c.mesh.dimension;
    m.extent = {c.mesh.length_x, c.mesh.length_y};
    m.subdiv = {c.mesh.nx, c.mesh.ny};
    m.contact_area = c.mesh.contact_area;
    m.consistent_mass = c.mesh.consistent_mass;
    m.left = detail::role_of(c.mesh.left);
    m.right = detail::role_of(c.mesh.right);
    m.bottom = detail::role_of(c.mesh.bottom);
    m.top = detail::role_of(c.mesh.top);

    const int d = m.dimension;
    s.material.density = c.material.density;
    s.material.visc = iso_tensor(d, c.material.visc_modulus, c.material.visc_lambda);
    s.material.elastic = iso_tensor(d, c.material.elastic_modulus, c.material.elastic_lambda);
    s.material.relax = iso_tensor(d, 1.0);
    s.material.relax_amplitude = c.material.relax_amplitude;
    s.material.relax_time = c.material.relax_time;
    if (!(s.material.relax_time > 0)) throw config_error("material.relax_time must be positive");

    const auto L = c.loads;
    if (!(L.period > 0)) throw config_error("loads.period must be positive");
    if (L.body_x != 0 || L.body_y != 0)
        s.loads.body = [L](double t, const Eigen::Vector2d&) -> Eigen::Vector2d {
            return Eigen::Vector2d(L.body_x, L.body_y) * detail::load_profile(L, t);
        };
    if (L.traction_x != 0 || L.traction_y != 0)
        s.loads.traction = [L](double t, const Eigen::Vector2d&) -> Eigen::Vector2d {
            return Eigen::Vector2d(L.traction_x, L.traction_y) * detail::load_profile(L, t);
        };

    s.scheme.T = c.scheme.T;
    s.scheme.dt = c.scheme.dt;
    s.scheme.outer_tol = c.scheme.outer_tol;
    s.scheme.max_outer = c.scheme.max_outer;
    s.scheme.alpha_integrator =
        c.scheme.alpha_integrator == "midpoint" ? AlphaIntegrator::ExplicitMidpoint : AlphaIntegrator::PicardLambda;
    s.scheme.mode = c.scheme.mode == "picard" ? SchemeMode::Picard : SchemeMode::Incremental;
    s.scheme.seed = static_cast<unsigned>(c.scheme.seed);
    s.scheme.inner.kkt_tol = c.scheme.kkt_tol;
    s.scheme.inner.max_iter = c.scheme.max_iter;
    try {
        s.scheme.validate();
    } catch (const config_error& e) {
        throw config_error(std::string("scheme.T / scheme.dt: ") + e.what());
    }
    const int n = s.scheme.n_steps();

    s.prob = assemble(m, s.material, s.loads, s.scheme.dt, n);
    s.prob.normal_offset = Vec::Constant(s.prob.n_contact(), c.contact.normal_offset);

    auto& r = s.rsf;
    r.a = c.contact.a;
    r.b = c.contact.b;
    r.mu0 = c.contact.mu0;
    r.v0 = c.contact.v0;
    r.L = c.contact.L;
    r.alpha0 = c.init.alpha0 == "auto" ? std::log(r.v0 / r.L) : parse_num(c.init.alpha0, "init.alpha0");
    if (c.contact.friction != "constant" || c.contact.state != "frozen") r.validate();

    const Vec u0 = detail::nodal_field(m, c.init.u0_x, c.init.u0_y, c.init.u0_profile);
    const Quadrature q = c.scheme.quadrature == "left" ? Quadrature::LeftRectangle : Quadrature::Trapezoid;
    s.kernel = make_history_kernel(m, s.material, s.prob, u0, s.scheme.dt, n, q);

    auto& laws = s.laws;
    laws.kind = c.contact.model == "compliance" ? ContactKind::NormalCompliance : ContactKind::DampedResponse;
    FrictionLaw f;
    if (c.contact.friction == "regularized") f = FrictionLaw::regularized(r);
    else if (c.contact.friction == "truncated") f = FrictionLaw::truncated(r);
    else if (c.contact.friction == "first-order") f = FrictionLaw::first_order(r);
    else f = FrictionLaw::constant(c.contact.mu_const);
    if (c.contact.state_cap > 0) f.state_cap = c.contact.state_cap;
    laws.friction = {f};
    if (c.contact.state == "aging") laws.state = {StateLaw::aging(r)};
    else if (c.contact.state == "slip") laws.state = {StateLaw::slip(r)};
    else if (c.contact.state == "first-order-aging") laws.state = {StateLaw::first_order_aging(r)};
    else laws.state = {StateLaw::frozen()};
    if (c.contact.exponent < 1) throw config_error("contact.exponent must be a positive integer");
    if (!(c.contact.rstar > 0)) throw config_error("contact.rstar must be positive");
    laws.compliance = {c.contact.cp, c.contact.exponent, c.contact.rstar};
    laws.damped.kind = c.contact.damped_kind == "quadratic" ? DampedKind::Quadratic : DampedKind::Absolute;
    laws.damped.kappa = c.contact.kappa;

    s.init.w0 = detail::nodal_field(m, c.init.w0_x, c.init.w0_y, c.init.w0_profile);
    s.init.alpha0 = Vec::Constant(s.prob.n_contact(), r.alpha0);
    return s;
}

// ---------- serializers ----------

inline void write_trajectory_csv(std::ostream& os, const TrajectoryState& tr) {
    const auto nd = tr.w.empty() ? 0 : tr.w[0].size();
    const auto na = tr.alpha.empty() ? 0 : tr.alpha[0].size();
    os << "t";
    for (Eigen::Index i = 0; i < nd; ++i) os << ",w" << i;
    for (Eigen::Index i = 0; i < nd; ++i) os << ",u" << i;
    for (Eigen::Index i = 0; i < na; ++i) os << ",alpha" << i;
    os << "\n";
    for (int k = 0; k <= tr.n_steps; ++k) {
        os << fmt_num(tr.t(k));
        for (Eigen::Index i = 0; i < nd; ++i) os << "," << fmt_num(tr.w[k][i]);
        for (Eigen::Index i = 0; i < nd; ++i) os << "," << fmt_num(tr.u[k][i]);
        for (Eigen::Index i = 0; i < na; ++i) os << "," << fmt_num(tr.alpha[k][i]);
        os << "\n";
    }
}

inline void write_report(std::ostream& os, const SchemeReport& r, const std::string& mode) {
    os << "mode = " << mode << "\n";
    os << "converged = " << (r.converged ? "true" : "false") << "\n";
    os << "iterations = " << r.iterations << "\n";
    os << "first_norm = " << fmt_num(r.first_norm) << "\n";
    os << "e_w = " << fmt_list(r.e_w) << "\n";
    os << "e_alpha = " << fmt_list(r.e_alpha) << "\n";
    os << "ratios = " << fmt_list(r.ratios) << "\n";
    os << "asymptotic_ratio = " << fmt_num(r.asymptotic_ratio()) << "\n";
    for (const auto& [k, v] : r.margins) os << k << " = " << fmt_num(v) << "\n";
}

inline void write_condition(std::ostream& os, const ConditionReport& c) {
    os << "[" << c.id << "]\n";
    os << "lhs = " << fmt_num(c.lhs) << "\nrhs = " << fmt_num(c.rhs) << "\nmargin = " << fmt_num(c.margin)
       << "\nholds = " << (c.holds ? "true" : "false") << "\n";
    for (const auto& in : c.ingredients)
        os << "ingredient." << in.name << " = " << fmt_num(in.value) << " (" << provenance_name(in.provenance) << ")\n";
}

struct CurveRow {
    double alpha, exact, first_order;
};

struct RsfCurves {
    std::vector<CurveRow> G, mu;
};

// G and mu against alpha at a fixed slip rate, exact law next to its first-order form.
inline RsfCurves rsf_curves(const RsfParams& p, double alpha_min, double alpha_max, int points, double r) {
    if (points < 1 || alpha_max < alpha_min) throw config_error("rsf-curves: empty alpha range");
    RsfCurves c;
    const auto ga = StateLaw::aging(p), gf = StateLaw::first_order_aging(p);
    const auto mr = FrictionLaw::regularized(p), mf = FrictionLaw::first_order(p);
    for (int i = 0; i < points; ++i) {
        const double al = points == 1 ? alpha_min : alpha_min + (alpha_max - alpha_min) * i / (points - 1);
        c.G.push_back({al, G(ga, al, r), G(gf, al, r)});
        c.mu.push_back({al, mu(mr, r, al), mu(mf, r, al)});
    }
    return c;
}

inline void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& rows) {
    os << "alpha,exact,first_order\n";
    for (const auto& r : rows) os << fmt_num(r.alpha) << "," << fmt_num(r.exact) << "," << fmt_num(r.first_order) << "\n";
}

// ---------- commands ----------

namespace detail {

inline void ensure_dir(const std::string& d) {
    std::error_code ec;
    std::filesystem::create_directories(d, ec);
    if (ec) throw config_error("cannot create output directory '" + d + "': " + ec.message());
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot write '" + path + "'");
    f.imbue(std::locale::classic());
    return f;
}

inline std::vector<ConditionReport> all_conditions(const Scenario& s) {
    std::vector<ConditionReport> out;
    const auto in = application_inputs(s.prob, s.laws, s.init.alpha0);
    const bool compliance = s.laws.kind == ContactKind::NormalCompliance;
    try {
        const auto k = application_constants(s.laws.kind, in, s.laws.compliance);
        out.push_back(check_abstract_condition(k, in.alpha0_norm));
        out.push_back(check_application_condition(
            compliance ? Application::NormalCompliance : Application::DampedResponse, in));
    } catch (const capability_error&) {
    }
    if (s.laws.friction_at(0).kind == FrictionKind::FirstOrder)
        out.push_back(check_application_condition(compliance ? Application::RsfCompliance : Application::RsfDamped, in));
    return out;
}

}  // namespace detail

struct RunSummary {
    SchemeResult result;
    std::vector<ConditionReport> conditions;
    double kkt_max = 0, vi_worst = 0, stick_excess = 0;
    EnergyBalance energy;
};

inline RunSummary execute(const Scenario& s, const RunConfig& c) {
    RunSummary out;
    out.conditions = detail::all_conditions(s);
    out.result = run_scheme(s.prob, s.kernel, s.laws, s.scheme, s.init);
    auto& rep = out.result.report;
    for (const auto& cr : out.conditions) rep.margins.push_back({"margin." + cr.id, cr.margin});
    out.vi_worst = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < out.result.steps.size(); ++k) {
        out.kkt_max = std::max(out.kkt_max, out.result.steps[k].kkt_residual);
        if (c.output.verify) {
            const auto& d = out.result.data[k];
            out.vi_worst = std::min(out.vi_worst, verify_vi(s.prob, d, s.laws, out.result.traj.w[k],
                                                            out.result.traj.w[k - 1], s.scheme.dt, c.output.probes,
                                                            s.scheme.seed + static_cast<unsigned>(k)));
            const auto kr = kkt_report(s.prob, d, s.laws, out.result.traj.w[k], out.result.traj.w[k - 1], s.scheme.dt);
            out.stick_excess = std::max(out.stick_excess, kr.stick_excess);
        }
    }
    if (!std::isfinite(out.vi_worst)) out.vi_worst = 0;
    out.energy = energy_balance(s.prob, s.laws, out.result);
    rep.margins.push_back({"kkt_max", out.kkt_max});
    if (c.output.verify) {
        rep.margins.push_back({"vi_worst", out.vi_worst});
        rep.margins.push_back({"stick_excess", out.stick_excess});
    }
    rep.margins.push_back({"energy_identity", out.energy.identity_residual});
    rep.margins.push_back({"energy_work", out.energy.work_residual});
    return out;
}

inline int cmd_run(const RunConfig& c, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    try {
        const Scenario s = build_scenario(c);
        const RunSummary sum = execute(s, c);
        detail::ensure_dir(c.output.dir);
        {
            auto f = detail::open_out(c.output.dir + "/trajectory.csv");
            write_trajectory_csv(f, sum.result.traj);
        }
        {
            auto f = detail::open_out(c.output.dir + "/report.txt");
            write_report(f, sum.result.report, c.scheme.mode);
        }
        for (const auto& cr : sum.conditions)
            if (!cr.holds)
                err << "warning: smallness condition '" << cr.id << "' fails (margin " << fmt_num(cr.margin)
                    << "); it is sufficient, not necessary\n";
        const auto& r = sum.result.report;
        log << "mode " << c.scheme.mode << ": " << (r.converged ? "converged" : "not converged") << " after "
            << r.iterations << " iteration(s), asymptotic ratio " << fmt_num(r.asymptotic_ratio()) << ", "
            << r.wall_time << " s\n";
        return r.converged ? 0 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_check(const RunConfig& c, std::ostream& log = std::cout, std::ostream& err = std::cerr,
                     long n_samples = 100000) {
    try {
        const Scenario s = build_scenario(c);
        const auto conds = detail::all_conditions(s);
        detail::ensure_dir(c.output.dir);
        auto f = detail::open_out(c.output.dir + "/conditions.txt");
        log << "condition            lhs                      rhs                      margin                   holds\n";
        for (const auto& cr : conds) {
            write_condition(f, cr);
            log << cr.id << std::string(21 - std::min<std::size_t>(20, cr.id.size()), ' ') << fmt_num(cr.lhs)
                << "  " << fmt_num(cr.rhs) << "  " << fmt_num(cr.margin) << "  " << (cr.holds ? "yes" : "NO") << "\n";
            if (!cr.holds) err << "warning: condition '" << cr.id << "' fails; the solver may still be attempted\n";
        }
        try {
            const auto probes = hypothesis_probe_suite(s.laws, s.kernel, s.prob, n_samples,
                                                       static_cast<unsigned>(c.scheme.seed));
            f << "[hypotheses]\n";
            for (const auto& p : probes) {
                f << p.hypothesis << " = " << (p.passed ? "pass" : "fail") << " (worst margin "
                  << fmt_num(p.worst_margin) << ")\n";
                log << p.hypothesis << ": " << (p.passed ? "pass" : "FAIL") << " (worst margin "
                    << fmt_num(p.worst_margin) << ")" << (p.passed ? "" : "  witness: " + p.witness) << "\n";
            }
        } catch (const capability_error& e) {
            log << "hypothesis suite skipped: " << e.what() << "\n";
            f << "[hypotheses]\nskipped = " << e.what() << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_flowmap(const RunConfig& c, const std::vector<double>& factors, std::ostream& log = std::cout,
                       std::ostream& err = std::cerr) {
    try {
        const Scenario s = build_scenario(c);
        const double w0n = quad_norm(s.prob.v_norm, s.init.w0);
        const double scale = w0n > 0 ? w0n : 1.0;
        std::vector<double> ladder;
        for (double f : factors) ladder.push_back(f * scale);
        std::mt19937_64 rng(static_cast<unsigned>(c.scheme.seed));
        std::normal_distribution<double> nd;
        Vec dir(s.prob.n_dof);
        for (auto& x : dir) x = nd(rng);
        const auto tab = flow_map_experiment(s.prob, s.kernel, s.laws, s.scheme, s.init, {dir}, ladder);
        detail::ensure_dir(c.output.dir);
        auto f = detail::open_out(c.output.dir + "/flowmap.csv");
        f << "delta,distance,ratio\n";
        log << "delta                    distance                 distance/delta\n";
        for (const auto& r : tab.rows) {
            f << fmt_num(r.delta) << "," << fmt_num(r.distance) << "," << fmt_num(r.ratio) << "\n";
            log << fmt_num(r.delta) << "  " << fmt_num(r.distance) << "  " << fmt_num(r.ratio) << "\n";
        }
        log << "monotone: " << (tab.monotone ? "yes" : "no") << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_rsf_curves(const RsfParams& p, double alpha_min, double alpha_max, int points, double r,
                          const std::string& dir, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    try {
        const auto curves = rsf_curves(p, alpha_min, alpha_max, points, r);
        detail::ensure_dir(dir);
        {
            auto f = detail::open_out(dir + "/rsf_G.csv");
            write_curve_csv(f, curves.G);
        }
        {
            auto f = detail::open_out(dir + "/rsf_mu.csv");
            write_curve_csv(f, curves.mu);
        }
        log << "wrote " << points << " rows to " << dir << "/rsf_G.csv and " << dir << "/rsf_mu.csv\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace vhi
