#include "vhi/material_history.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace vhi;

namespace {

struct Setup {
    MeshSpec mesh;
    MaterialSpec mat;
    DiscreteProblem prob;
};

Setup chain(int n, double relax_amp, double relax_time = 0.3, double e_mod = 1.0) {
    Setup s;
    s.mesh = MeshSpec::chain(n, 1.0);
    s.mat = MaterialSpec::kelvin_voigt(1, 1.0, 1.0, e_mod);
    s.mat.relax_amplitude = relax_amp;
    s.mat.relax_time = relax_time;
    s.prob = assemble(s.mesh, s.mat, {}, 0.01, 1);
    return s;
}

TrajectoryState trajectory(int n_dof, int n_steps, double dt, const std::function<double(int, double)>& f) {
    TrajectoryState tr;
    tr.dt = dt;
    tr.n_steps = n_steps;
    for (int k = 0; k <= n_steps; ++k) {
        Vec w(n_dof);
        for (int i = 0; i < n_dof; ++i) w[i] = f(i, k * dt);
        tr.w.push_back(w);
    }
    return tr;
}

}  // namespace

TEST(EvalR, ZeroHistory) {
    auto s = chain(3, 0.0);
    const auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Zero(3), 0.1, 5);
    const auto tr = trajectory(3, 5, 0.1, [](int, double) { return 0.0; });
    for (int k = 0; k <= 5; ++k) EXPECT_EQ(eval_R(K, tr, k).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EvalR, ConstantVelocityIsExact) {
    auto s = chain(4, 0.0);
    auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Zero(4), 0.1, 6);
    K.elastic = Mat::Identity(4, 4);
    std::mt19937_64 rng(1);
    const Vec u0 = testutil::random_vector(4, rng), wbar = testutil::random_vector(4, rng);
    K.u0 = u0;
    TrajectoryState tr;
    tr.dt = 0.1;
    tr.n_steps = 6;
    tr.w.assign(7, wbar);
    for (int k = 0; k <= 6; ++k) EXPECT_LT((eval_R(K, tr, k) - (u0 + 0.1 * k * wbar)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EvalR, MatchesFineQuadratureAtFirstOrder) {
    // smooth w(t), exponential relaxation; compare against the dt/100 left sum
    auto w_of = [](int i, double t) { return std::sin(3 * t + i) + 0.5 * i * t; };
    const double T = 1.0;
    std::vector<double> err;
    for (int n : {20, 40, 80}) {
        const double dt = T / n;
        auto s = chain(4, 0.7, 0.3, 1.3);
        const auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Zero(4), dt, n);
        const auto tr = trajectory(4, n, dt, w_of);
        const int nf = 100 * n;
        const double h = T / nf;
        Vec disp = Vec::Zero(4), mem = Vec::Zero(4);
        for (int j = 1; j <= nf; ++j) {
            Vec wj(4);
            for (int i = 0; i < 4; ++i) wj[i] = w_of(i, j * h);
            disp += h * wj;
            mem += h * 0.7 * std::exp(-(T - j * h) / 0.3) * wj;
        }
        const Vec ref = K.elastic * disp + K.relax_op * mem;
        err.push_back((eval_R(K, tr, n) - ref).norm());
    }
    // O(dt): error halves with dt, up to the fine grid's own error
    EXPECT_LT(err[1] / err[0], 0.6);
    EXPECT_GT(err[1] / err[0], 0.4);
    EXPECT_LT(err[2] / err[1], 0.6);
    const double C = err[2] * 80;
    std::cout << "eval_R error constant ~ " << C << "\n";
    EXPECT_LT(C, 50.0);
}

TEST(EvalR, OutOfRange) {
    auto s = chain(2, 0.0);
    const auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Zero(2), 0.1, 3);
    const auto tr = trajectory(2, 3, 0.1, [](int, double) { return 1.0; });
    EXPECT_THROW(eval_R(K, tr, 4), std::out_of_range);
    EXPECT_THROW(eval_R(K, tr, -1), std::out_of_range);
}

TEST(EvalR, IsCausal) {
    auto s = chain(3, 0.5);
    const auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Ones(3), 0.1, 10);
    std::mt19937_64 rng(2);
    auto tr = trajectory(3, 10, 0.1, [&](int, double) { return std::normal_distribution<double>()(rng); });
    const Vec xi4 = eval_R(K, tr, 4);
    for (int j = 5; j <= 10; ++j) tr.w[j] *= -7.0;
    EXPECT_EQ((eval_R(K, tr, 4) - xi4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EvalR, AffineInTrajectory) {
    auto s = chain(3, 0.5);
    std::mt19937_64 rng(3);
    const auto K = make_history_kernel(s.mesh, s.mat, s.prob, testutil::random_vector(3, rng), 0.1, 8);
    auto rnd = [&](int, double) { return std::normal_distribution<double>()(rng); };
    const auto a = trajectory(3, 8, 0.1, rnd), b = trajectory(3, 8, 0.1, rnd);
    auto sum = a;
    for (int k = 0; k <= 8; ++k) sum.w[k] += b.w[k];
    const auto zero = trajectory(3, 8, 0.1, [](int, double) { return 0.0; });
    for (int k = 0; k <= 8; ++k) {
        const Vec r0 = eval_R(K, zero, k);
        const Vec lhs = eval_R(K, sum, k) - r0, rhs = (eval_R(K, a, k) - r0) + (eval_R(K, b, k) - r0);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(EvalR, ZeroVelocityBoundedByInitialStrain) {
    auto s = chain(5, 0.5, 0.3, 2.5);
    std::mt19937_64 rng(4);
    const Vec u0 = testutil::random_vector(5, rng);
    const auto K = make_history_kernel(s.mesh, s.mat, s.prob, u0, 0.1, 6);
    const auto zero = trajectory(5, 6, 0.1, [](int, double) { return 0.0; });
    const Eigen::LLT<Mat> Vf(s.prob.v_norm);
    for (int k = 0; k <= 6; ++k)
        EXPECT_LE(dual_norm(Vf, eval_R(K, zero, k)), K.elastic_bound * quad_norm(s.prob.v_norm, u0) * (1 + 1e-12));
}

TEST(EvalSPhi, FrozenAndLinear) {
    const auto mesh = MeshSpec::rectangle(1, 1, 2, 1);
    auto mat = MaterialSpec::kelvin_voigt(2, 1, 1, 1);
    const auto prob = assemble(mesh, mat, {}, 0.1, 1);
    std::mt19937_64 rng(5);
    const Vec u0 = testutil::random_vector(prob.n_dof, rng);
    const auto K = make_history_kernel(mesh, mat, prob, u0, 0.1, 5);
    const auto zero = trajectory(prob.n_dof, 5, 0.1, [](int, double) { return 0.0; });
    for (int k = 0; k <= 5; ++k) EXPECT_LT((eval_S_phi(K, zero, k) - prob.trace_nu * u0).cwiseAbs().maxCoeff(), 1e-15);

    // single contact node with w_nu = 1
    DiscreteProblem p1;
    p1.n_dof = 1;
    p1.trace_nu = Mat::Constant(1, 1, 1.0);
    p1.normal_offset = Vec::Zero(1);
    HistoryKernel K1;
    K1.elastic = Mat::Zero(1, 1);
    K1.u0 = Vec::Zero(1);
    K1.dt = 0.25;
    K1.trace_nu = p1.trace_nu;
    K1.normal_offset = p1.normal_offset;
    const auto ones = trajectory(1, 4, 0.25, [](int, double) { return 1.0; });
    for (int k = 0; k <= 4; ++k) EXPECT_NEAR(eval_S_phi(K1, ones, k)[0], 0.25 * k, 1e-15);
}

TEST(EvalSPhi, PrefixSumOracle) {
    const auto mesh = MeshSpec::rectangle(2, 1, 3, 2);
    auto mat = MaterialSpec::kelvin_voigt(2, 1, 1, 1);
    const auto prob = assemble(mesh, mat, {}, 0.05, 1);
    std::mt19937_64 rng(6);
    const Vec u0 = testutil::random_vector(prob.n_dof, rng);
    const auto K = make_history_kernel(mesh, mat, prob, u0, 0.05, 12);
    const auto tr = trajectory(prob.n_dof, 12, 0.05, [&](int, double) { return std::normal_distribution<double>()(rng); });
    Vec u = u0;
    for (int k = 0; k <= 12; ++k) {
        if (k > 0) u += 0.05 * tr.w[k];
        EXPECT_LT((eval_S_phi(K, tr, k) - prob.trace_nu * u).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(EvalSj, DefaultSlotIsZero) {
    auto s = chain(2, 0.0);
    const auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Ones(2), 0.1, 2);
    const auto tr = trajectory(2, 2, 0.1, [](int, double) { return 1.0; });
    EXPECT_EQ(eval_S_j(K, tr, 2).size(), 1);
    EXPECT_EQ(eval_S_j(K, tr, 2)[0], 0.0);
}

TEST(LipschitzProbe, IdentityElasticity) {
    // V = I, B = I, no relaxation: ratio <= 1
    HistoryKernel K;
    K.elastic = Mat::Identity(4, 4);
    K.relax_op = Mat::Zero(4, 4);
    K.relax_samples.assign(9, 0.0);
    K.elastic_bound = 1.0;
    K.u0 = Vec::Zero(4);
    K.dt = 0.1;
    K.trace_nu = Mat::Zero(1, 4);
    K.trace_nu(0, 3) = 1.0;
    K.normal_offset = Vec::Zero(1);
    const auto pr = history_lipschitz_probe(K, Mat::Identity(4, 4), Vec::Ones(1), 500);
    EXPECT_GT(pr.samples, 0);
    EXPECT_GT(pr.c_R, 0.0);
    EXPECT_LE(pr.c_R, 1 + 1e-10);
    EXPECT_LE(pr.c_S_phi, 1 + 1e-10);
}

TEST(LipschitzProbe, RelaxationBound) {
    for (double amp : {0.3, 2.0}) {
        auto s = chain(4, amp, 0.2, 1.5);
        const auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Zero(4), 0.05, 10);
        const auto pr = history_lipschitz_probe(K, s.prob.v_norm, s.prob.contact_weights, 400);
        EXPECT_NEAR(pr.bound_R, 1.5 + amp, 1e-14);
        EXPECT_LE(pr.c_R, 1.5 + amp + 1e-10);
        EXPECT_GT(pr.c_R, 0.0);
    }
}

TEST(LipschitzProbe, RejectsNoTrials) {
    auto s = chain(2, 0.0);
    const auto K = make_history_kernel(s.mesh, s.mat, s.prob, Vec::Zero(2), 0.1, 4);
    EXPECT_THROW(history_lipschitz_probe(K, s.prob.v_norm, s.prob.contact_weights, 0), contract_error);
}
