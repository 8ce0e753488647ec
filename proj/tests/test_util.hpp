#pragma once

#include <Eigen/Dense>

#include <random>

namespace testutil {

inline Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd A(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) A(i, j) = nd(rng);
    return A;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng) { return random_matrix(n, 1, rng); }

// well conditioned SPD
inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng) {
    const Eigen::MatrixXd B = random_matrix(n, n, rng);
    return B * B.transpose() + n * Eigen::MatrixXd::Identity(n, n);
}

// least-squares slope of log y against log x
template <class Xs, class Ys>
double loglog_slope(const Xs& x, const Ys& y) {
    const int n = static_cast<int>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace testutil
