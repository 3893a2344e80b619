#pragma once

#include <cmath>
#include <random>

#include "hardnet/constraints.hpp"
#include "hardnet/tensor.hpp"

namespace test_support {

using hardnet::ConstraintEval;
using hardnet::Matrix;
using hardnet::Vector;

inline Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
    return m;
}

inline Vector gaussian_vec(Eigen::Index n, std::mt19937_64& rng) {
    return gaussian(n, 1, rng);
}

inline int uniform_int(int lo, int hi, std::mt19937_64& rng) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform(double lo, double hi, std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Instance {
    ConstraintEval ev;
    Vector feasible;  // a point satisfying every constraint with slack
};

/// Random constraint set with a known strictly feasible point. With
/// `aff_compatible`, n_ineq + n_eq <= n_out and both the leading equality
/// block and the reduced inequality matrix are well conditioned.
inline Instance random_instance(std::mt19937_64& rng, int max_out, int max_eq, int max_ineq, bool aff_compatible,
                                int min_ineq = 0) {
    for (;;) {
        const int n_out = uniform_int(1, max_out, rng);
        const int n_eq = uniform_int(0, std::min(max_eq, aff_compatible ? n_out - 1 : n_out - 1), rng);
        const int ineq_cap = aff_compatible ? std::min(max_ineq, n_out - n_eq) : max_ineq;
        if (ineq_cap < min_ineq) continue;
        const int n_ineq = uniform_int(min_ineq, ineq_cap, rng);
        Instance inst;
        inst.feasible = gaussian_vec(n_out, rng);
        inst.ev.A = gaussian(n_ineq, n_out, rng);
        inst.ev.C = gaussian(n_eq, n_out, rng);
        inst.ev.d = inst.ev.C * inst.feasible;
        Vector slack(n_ineq);
        for (int i = 0; i < n_ineq; ++i) slack(i) = uniform(0.05, 1.0, rng);
        inst.ev.b = inst.ev.A * inst.feasible + slack;
        if (n_eq > 0 && hardnet::singular_value_ratio(inst.ev.C.leftCols(n_eq)) < 1e-3) continue;
        if (aff_compatible && n_ineq > 0) {
            const Matrix C1inv = n_eq > 0 ? Matrix(inst.ev.C.leftCols(n_eq).inverse()) : Matrix(0, 0);
            const Matrix At = n_eq > 0 ? Matrix(inst.ev.A.rightCols(n_out - n_eq) -
                                                inst.ev.A.leftCols(n_eq) * C1inv * inst.ev.C.rightCols(n_out - n_eq))
                                       : inst.ev.A;
            if (hardnet::singular_value_ratio(At) < 1e-3) continue;
        }
        return inst;
    }
}

inline double rel_err(const Matrix& a, const Matrix& b) {
    return (a - b).norm() / std::max(b.norm(), 1.0);
}

}  // namespace test_support
