#pragma once

#include "vhi/core_discrete.hpp"

#include <array>
#include <functional>

namespace vhi {

enum class EdgeRole { Dirichlet, Neumann, Contact };

// 1D: edges are the two chain ends (left, right). 2D: the four sides of the rectangle.
struct MeshSpec {
    int dimension = 1;
    std::array<double, 2> extent{1.0, 1.0};
    std::array<int, 2> subdiv{1, 1};
    EdgeRole left = EdgeRole::Dirichlet;
    EdgeRole right = EdgeRole::Contact;
    EdgeRole bottom = EdgeRole::Contact;
    EdgeRole top = EdgeRole::Neumann;
    double contact_area = 1.0;   // quadrature weight of the 1D frictional end node
    bool consistent_mass = false;

    static MeshSpec chain(int elements, double length) {
        MeshSpec m;
        m.dimension = 1;
        m.extent = {length, 1.0};
        m.subdiv = {elements, 1};
        return m;
    }
    static MeshSpec rectangle(double lx, double ly, int nx, int ny) {
        MeshSpec m;
        m.dimension = 2;
        m.extent = {lx, ly};
        m.subdiv = {nx, ny};
        m.right = EdgeRole::Neumann;
        return m;
    }
};

// Tensors on symmetric matrices in orthonormal (Mandel) coordinates: 1x1 for d = 1,
// 3x3 on (e11, e22, sqrt2 e12) for d = 2.
inline Mat iso_tensor(int dim, double modulus, double lambda = 0.0) {
    if (dim == 1) return Mat::Constant(1, 1, modulus + lambda);
    Mat D = Mat::Zero(3, 3);
    D(0, 0) = D(1, 1) = modulus + lambda;
    D(0, 1) = D(1, 0) = lambda;
    D(2, 2) = modulus;
    return D;
}

inline int tensor_size(int dim) { return dim == 1 ? 1 : 3; }

struct MaterialSpec {
    double density = 1.0;
    Mat visc;                  // a_ijkl
    Mat elastic;               // b_ijkl
    Mat relax;                 // shape of c_ijkl; c(t) = relax_amplitude exp(-t/relax_time) relax
    double relax_amplitude = 0.0;
    double relax_time = 1.0;

    static MaterialSpec kelvin_voigt(int dim, double rho, double eta, double e_mod, double eta_lambda = 0.0,
                                     double e_lambda = 0.0) {
        MaterialSpec m;
        m.density = rho;
        m.visc = iso_tensor(dim, eta, eta_lambda);
        m.elastic = iso_tensor(dim, e_mod, e_lambda);
        m.relax = iso_tensor(dim, 1.0);
        return m;
    }

    double relaxation(double t) const {
        return relax_amplitude == 0.0 ? 0.0 : relax_amplitude * std::exp(-t / relax_time);
    }
};

using FieldSampler = std::function<Eigen::Vector2d(double t, const Eigen::Vector2d& x)>;

struct LoadSpec {
    FieldSampler body;       // f_0, N/m^d
    FieldSampler traction;   // f_N on Neumann edges
};

struct KelvinVoigtConstants {
    double m_A = 0, L_A = 0, L_B = 0;
};

namespace detail {

inline void check_sym_tensor(const Mat& D, int dim, const char* name) {
    const int s = tensor_size(dim);
    if (D.rows() != s || D.cols() != s) throw config_error(std::string(name) + " tensor has wrong size");
    if (!is_symmetric(D)) throw config_error(std::string(name) + " tensor is not symmetric");
}

struct MeshLayout {
    int dim = 1;
    int nx = 1, ny = 1;
    double hx = 1, hy = 1;
    int n_nodes = 0;
    std::vector<bool> dirichlet;     // per node
    std::vector<int> free_index;     // full dof -> free dof or -1
    int n_free = 0;

    int node(int i, int j) const { return j * (nx + 1) + i; }
    Eigen::Vector2d pos(int n) const {
        if (dim == 1) return {hx * n, 0.0};
        return {hx * (n % (nx + 1)), hy * (n / (nx + 1))};
    }
    int dof(int n, int c) const { return free_index[dim * n + c]; }
};

inline MeshLayout layout(const MeshSpec& m) {
    if (m.dimension != 1 && m.dimension != 2) throw config_error("mesh dimension must be 1 or 2");
    if (m.subdiv[0] < 1 || (m.dimension == 2 && m.subdiv[1] < 1))
        throw config_error("mesh subdivisions must be >= 1");
    if (!(m.extent[0] > 0) || (m.dimension == 2 && !(m.extent[1] > 0)))
        throw config_error("mesh extent must be positive");
    MeshLayout L;
    L.dim = m.dimension;
    L.nx = m.subdiv[0];
    L.ny = m.dimension == 2 ? m.subdiv[1] : 0;
    L.hx = m.extent[0] / L.nx;
    L.hy = m.dimension == 2 ? m.extent[1] / L.ny : 1.0;
    L.n_nodes = m.dimension == 1 ? L.nx + 1 : (L.nx + 1) * (L.ny + 1);
    L.dirichlet.assign(L.n_nodes, false);

    int n_dir = 0, n_con = 0;
    if (m.dimension == 1) {
        for (auto [role, node] : {std::pair{m.left, 0}, std::pair{m.right, L.nx}}) {
            if (role == EdgeRole::Dirichlet) { L.dirichlet[node] = true; ++n_dir; }
            if (role == EdgeRole::Contact) ++n_con;
        }
        if (m.left == EdgeRole::Contact) throw config_error("1D contact is supported on the right end only");
    } else {
        if (m.left == EdgeRole::Contact || m.right == EdgeRole::Contact || m.top == EdgeRole::Contact)
            throw config_error("2D contact is supported on the bottom edge only");
        auto mark = [&](EdgeRole r, auto pred) {
            if (r != EdgeRole::Dirichlet) return;
            ++n_dir;
            for (int n = 0; n < L.n_nodes; ++n)
                if (pred(n % (L.nx + 1), n / (L.nx + 1))) L.dirichlet[n] = true;
        };
        mark(m.left, [](int i, int) { return i == 0; });
        mark(m.right, [&](int i, int) { return i == L.nx; });
        mark(m.bottom, [](int, int j) { return j == 0; });
        mark(m.top, [&](int, int j) { return j == L.ny; });
        if (m.bottom == EdgeRole::Contact) ++n_con;
    }
    if (n_dir == 0) throw config_error("Dirichlet boundary is empty");
    if (n_con == 0) throw config_error("contact boundary is empty");

    L.free_index.assign(L.dim * L.n_nodes, -1);
    for (int n = 0; n < L.n_nodes; ++n)
        if (!L.dirichlet[n])
            for (int c = 0; c < L.dim; ++c) L.free_index[L.dim * n + c] = L.n_free++;
    return L;
}

struct Triangle {
    std::array<int, 3> n;
    Mat B;         // 3 x 6 Mandel strain-displacement
    double area;
};

inline std::vector<Triangle> triangles(const MeshLayout& L) {
    std::vector<Triangle> out;
    const double r2 = std::sqrt(0.5);
    for (int j = 0; j < L.ny; ++j)
        for (int i = 0; i < L.nx; ++i) {
            const int a = L.node(i, j), b = L.node(i + 1, j), c = L.node(i + 1, j + 1), d = L.node(i, j + 1);
            for (auto tri : {std::array<int, 3>{a, b, c}, std::array<int, 3>{a, c, d}}) {
                Triangle t;
                t.n = tri;
                const auto p0 = L.pos(tri[0]), p1 = L.pos(tri[1]), p2 = L.pos(tri[2]);
                const double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
                t.area = 0.5 * det;
                const std::array<Eigen::Vector2d, 3> p{p0, p1, p2};
                t.B = Mat::Zero(3, 6);
                for (int k = 0; k < 3; ++k) {
                    const auto& pj = p[(k + 1) % 3];
                    const auto& pk = p[(k + 2) % 3];
                    const double bx = (pj.y() - pk.y()) / det;
                    const double by = (pk.x() - pj.x()) / det;
                    t.B(0, 2 * k) = bx;
                    t.B(1, 2 * k + 1) = by;
                    t.B(2, 2 * k) = r2 * by;
                    t.B(2, 2 * k + 1) = r2 * bx;
                }
                out.push_back(std::move(t));
            }
        }
    return out;
}

}  // namespace detail

// Stiffness form (D eps(u), eps(v)) on the free dofs.
inline Mat assemble_stiffness(const MeshSpec& mesh, const Mat& D) {
    const auto L = detail::layout(mesh);
    detail::check_sym_tensor(D, mesh.dimension, "stiffness");
    Mat K = Mat::Zero(L.n_free, L.n_free);
    if (mesh.dimension == 1) {
        const double k = D(0, 0) / L.hx;
        for (int e = 0; e < L.nx; ++e) {
            const int ia = L.dof(e, 0), ib = L.dof(e + 1, 0);
            if (ia >= 0) K(ia, ia) += k;
            if (ib >= 0) K(ib, ib) += k;
            if (ia >= 0 && ib >= 0) { K(ia, ib) -= k; K(ib, ia) -= k; }
        }
        return K;
    }
    for (const auto& t : detail::triangles(L)) {
        const Mat Ke = t.area * t.B.transpose() * D * t.B;
        for (int a = 0; a < 6; ++a) {
            const int ga = L.dof(t.n[a / 2], a % 2);
            if (ga < 0) continue;
            for (int b = 0; b < 6; ++b) {
                const int gb = L.dof(t.n[b / 2], b % 2);
                if (gb >= 0) K(ga, gb) += Ke(a, b);
            }
        }
    }
    return K;
}

inline Mat assemble_mass(const MeshSpec& mesh, double rho) {
    const auto L = detail::layout(mesh);
    Mat Mm = Mat::Zero(L.n_free, L.n_free);
    if (mesh.dimension == 1) {
        for (int e = 0; e < L.nx; ++e)
            for (int n : {e, e + 1}) {
                const int g = L.dof(n, 0);
                if (g >= 0) Mm(g, g) += rho * L.hx / 2;
            }
        if (mesh.consistent_mass) {
            Mm.setZero();
            for (int e = 0; e < L.nx; ++e) {
                const int nn[2] = {L.dof(e, 0), L.dof(e + 1, 0)};
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        if (nn[a] >= 0 && nn[b] >= 0) Mm(nn[a], nn[b]) += rho * L.hx * (a == b ? 2.0 : 1.0) / 6;
            }
        }
        return Mm;
    }
    for (const auto& t : detail::triangles(L))
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                if (!mesh.consistent_mass && a != b) continue;
                const double v = mesh.consistent_mass ? rho * t.area * (a == b ? 2.0 : 1.0) / 12 : rho * t.area / 3;
                for (int c = 0; c < 2; ++c) {
                    const int ga = L.dof(t.n[a], c), gb = L.dof(t.n[b], c);
                    if (ga >= 0 && gb >= 0) Mm(ga, gb) += v;
                }
            }
    return Mm;
}

inline Vec assemble_load(const MeshSpec& mesh, const LoadSpec& loads, double t) {
    const auto L = detail::layout(mesh);
    Vec f = Vec::Zero(L.n_free);
    auto add = [&](int node, const Eigen::Vector2d& v, double w) {
        for (int c = 0; c < L.dim; ++c) {
            const int g = L.dof(node, c);
            if (g >= 0) f[g] += w * v[c];
        }
    };
    if (mesh.dimension == 1) {
        if (loads.body)
            for (int e = 0; e < L.nx; ++e) {
                const auto v = loads.body(t, {L.hx * (e + 0.5), 0.0});
                add(e, v, L.hx / 2);
                add(e + 1, v, L.hx / 2);
            }
        if (loads.traction) {
            if (mesh.left == EdgeRole::Neumann) add(0, loads.traction(t, L.pos(0)), mesh.contact_area);
            if (mesh.right == EdgeRole::Neumann) add(L.nx, loads.traction(t, L.pos(L.nx)), mesh.contact_area);
        }
        return f;
    }
    if (loads.body)
        for (const auto& tri : detail::triangles(L)) {
            const Eigen::Vector2d c = (L.pos(tri.n[0]) + L.pos(tri.n[1]) + L.pos(tri.n[2])) / 3.0;
            const auto v = loads.body(t, c);
            for (int a = 0; a < 3; ++a) add(tri.n[a], v, tri.area / 3);
        }
    if (loads.traction) {
        auto edge = [&](EdgeRole role, int count, auto node_at, double h) {
            if (role != EdgeRole::Neumann) return;
            for (int s = 0; s < count; ++s)
                for (int n : {node_at(s), node_at(s + 1)}) add(n, loads.traction(t, L.pos(n)), h / 2);
        };
        edge(mesh.bottom, L.nx, [&](int s) { return L.node(s, 0); }, L.hx);
        edge(mesh.top, L.nx, [&](int s) { return L.node(s, L.ny); }, L.hx);
        edge(mesh.left, L.ny, [&](int s) { return L.node(0, s); }, L.hy);
        edge(mesh.right, L.ny, [&](int s) { return L.node(L.nx, s); }, L.hy);
    }
    return f;
}

inline DiscreteProblem assemble(const MeshSpec& mesh, const MaterialSpec& mat, const LoadSpec& loads, double dt,
                                int n_steps) {
    if (!(mat.density > 0)) throw config_error("density must be positive");
    if (n_steps < 0 || !(dt > 0)) throw config_error("time grid must have dt > 0 and n_steps >= 0");
    detail::check_sym_tensor(mat.visc, mesh.dimension, "viscosity");
    detail::check_sym_tensor(mat.elastic, mesh.dimension, "elasticity");
    const auto L = detail::layout(mesh);

    DiscreteProblem p;
    p.n_dof = L.n_free;
    p.mass = assemble_mass(mesh, mat.density);
    p.visc = assemble_stiffness(mesh, mat.visc);
    p.v_norm = assemble_stiffness(mesh, iso_tensor(mesh.dimension, 1.0));
    p.h_norm = p.mass;
    p.contact_dof.assign(L.n_free, false);

    std::vector<int> cnodes;
    std::vector<double> cw;
    if (mesh.dimension == 1) {
        cnodes.push_back(L.nx);
        cw.push_back(mesh.contact_area);
    } else {
        for (int i = 0; i <= L.nx; ++i) {
            cnodes.push_back(L.node(i, 0));
            cw.push_back((i == 0 || i == L.nx) ? L.hx / 2 : L.hx);
        }
    }
    const int nc = static_cast<int>(cnodes.size());
    p.contact_weights = Eigen::Map<Vec>(cw.data(), nc);
    p.normal_offset = Vec::Zero(nc);
    p.trace_tau = Mat::Zero(nc, L.n_free);
    p.trace_nu = Mat::Zero(nc, L.n_free);
    for (int r = 0; r < nc; ++r) {
        const int gx = L.dof(cnodes[r], 0);
        if (gx >= 0) { p.trace_tau(r, gx) = 1.0; p.contact_dof[gx] = true; }
        if (mesh.dimension == 2) {
            const int gy = L.dof(cnodes[r], 1);
            if (gy >= 0) { p.trace_nu(r, gy) = -1.0; p.contact_dof[gy] = true; }   // outward normal (0,-1)
        }
    }
    p.load_dt = dt;
    p.load.reserve(n_steps + 1);
    for (int k = 0; k <= n_steps; ++k) p.load.push_back(assemble_load(mesh, loads, dt * k));
    return p;
}

inline KelvinVoigtConstants kelvin_voigt_constants(const MaterialSpec& mat) {
    Eigen::SelfAdjointEigenSolver<Mat> ea(0.5 * (mat.visc + mat.visc.transpose()), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Mat> eb(0.5 * (mat.elastic + mat.elastic.transpose()), Eigen::EigenvaluesOnly);
    KelvinVoigtConstants k;
    k.m_A = ea.eigenvalues().minCoeff();
    k.L_A = ea.eigenvalues().cwiseAbs().maxCoeff();
    k.L_B = eb.eigenvalues().cwiseAbs().maxCoeff();
    return k;
}

// sup_t |c(t)| as an operator bound.
inline double relaxation_bound(const MaterialSpec& mat) {
    if (mat.relax_amplitude == 0.0 || mat.relax.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> ec(0.5 * (mat.relax + mat.relax.transpose()), Eigen::EigenvaluesOnly);
    return std::abs(mat.relax_amplitude) * ec.eigenvalues().cwiseAbs().maxCoeff();
}

// Node coordinates of the free dofs (per dof), useful for initial fields.
inline std::vector<Eigen::Vector2d> dof_positions(const MeshSpec& mesh) {
    const auto L = detail::layout(mesh);
    std::vector<Eigen::Vector2d> x(L.n_free);
    for (int n = 0; n < L.n_nodes; ++n)
        for (int c = 0; c < L.dim; ++c)
            if (L.dof(n, c) >= 0) x[L.dof(n, c)] = L.pos(n);
    return x;
}

inline std::vector<int> dof_components(const MeshSpec& mesh) {
    const auto L = detail::layout(mesh);
    std::vector<int> comp(L.n_free);
    for (int n = 0; n < L.n_nodes; ++n)
        for (int c = 0; c < L.dim; ++c)
            if (L.dof(n, c) >= 0) comp[L.dof(n, c)] = c;
    return comp;
}

}  // namespace vhi
