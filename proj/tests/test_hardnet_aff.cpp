#include <doctest.h>

#include <random>

#include "hardnet/errors.hpp"
#include "hardnet/hardnet_aff.hpp"
#include "hardnet/hardnet_cvx.hpp"
#include "support.hpp"

using namespace hardnet;
using aff::project_aff;
using aff::project_single;

namespace {

Vector V(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

std::shared_ptr<const ReducedConstraints> reduced(const ConstraintEval& ev) {
    return std::make_shared<const ReducedConstraints>(reduce(ev));
}

ConstraintEval example_eq() {
    return ConstraintEval{(Matrix(1, 2) << 0, 1).finished(), V({0.5}), (Matrix(1, 2) << 1, 1).finished(), V({1})};
}

// Free part whose residuals all stay away from the kink.
Vector free_point_with_margin(const ReducedConstraints& red, std::mt19937_64& rng, double margin) {
    for (;;) {
        const Vector f = 1.5 * test_support::gaussian_vec(red.reduced_size(), rng);
        const Vector r = red.A_tilde * f - red.b_tilde;
        if (r.size() == 0 || r.cwiseAbs().minCoeff() > margin) return f;
    }
}

}  // namespace

TEST_CASE("project_single examples") {
    CHECK(project_single(V({0.5, 0.3}), V({1, 0}), 0.0).isApprox(V({0.0, 0.3})));
    CHECK(project_single(V({0.5, 0.3}), V({1, 0}), 1.0) == V({0.5, 0.3}));
    CHECK(project_single(V({3, 4}), V({3, 4}), 0.0).norm() < 1e-15);
    CHECK_THROWS(project_single(V({1, 1}), V({0, 0}), 0.0));
    CHECK_THROWS_AS(project_single(V({1, 1}), V({1}), 0.0), ShapeError);
}

TEST_CASE("project_aff examples") {
    {
        const ConstraintEval ev = example_eq();
        const auto res = project_aff(V({0.9}), reduced(ev));
        CHECK(res.y(0) == doctest::Approx(0.5));
        CHECK(res.y(1) == doctest::Approx(0.5));
        // Same point from the oracle: the closest feasible point to the lift [0.1, 0.9].
        const auto oracle = cvx::kkt_enumeration_oracle(V({0.1, 0.9}), ev);
        CHECK((oracle.z - res.y).norm() < 1e-10);
    }
    {
        std::mt19937_64 rng(4);
        for (int trial = 0; trial < 100; ++trial) {
            const Vector a = test_support::gaussian_vec(3, rng);
            const double b = test_support::gaussian_vec(1, rng)(0);
            const Vector f = test_support::gaussian_vec(3, rng);
            const auto res = project_aff(f, reduced(ConstraintEval::inequalities(Matrix(a.transpose()), V({b}))));
            CHECK((res.y - project_single(f, a, b)).lpNorm<Eigen::Infinity>() <= 1e-12);
        }
    }
    {
        const ConstraintEval ev = example_eq();
        const auto res = project_aff(V({0.2}), reduced(ev));
        CHECK(res.f_star(0) == 0.2);
        CHECK_FALSE(res.active[0]);
    }
    CHECK_THROWS_AS(project_aff(V({0.2, 0.3}), reduced(example_eq())), ShapeError);
}

TEST_CASE("project_aff backward examples") {
    {
        const auto res = project_aff(V({0.5, 0.3}), reduced(ConstraintEval::inequalities(
                                                         (Matrix(1, 2) << 1, 0).finished(), V({0}))));
        const Matrix expected = (Matrix(2, 2) << 0, 0, 0, 1).finished();
        CHECK((res.jacobian() - expected).lpNorm<Eigen::Infinity>() < 1e-14);
    }
    {
        const auto res = project_aff(V({-0.5, 0.3}), reduced(ConstraintEval::inequalities(
                                                          (Matrix(1, 2) << 1, 0).finished(), V({0}))));
        CHECK(res.jacobian().isApprox(Matrix::Identity(2, 2)));
    }
    {
        const ConstraintEval ev = example_eq();
        const auto red = reduced(ev);
        const auto res = project_aff(V({0.9}), red);
        CHECK(res.jacobian().lpNorm<Eigen::Infinity>() < 1e-14);
        const auto f = [&](const Tensor& t) { return Tensor(Matrix(project_aff(t.as_vector(), red).y)); };
        CHECK(ad::finite_diff_jacobian(f, Tensor::vector({0.9}), 1e-6).matrix().lpNorm<Eigen::Infinity>() < 1e-9);
    }
}

TEST_CASE("kink counts as inactive") {
    const auto res = project_aff(V({0.0, 0.3}), reduced(ConstraintEval::inequalities(
                                                    (Matrix(1, 2) << 1, 0).finished(), V({0}))));
    CHECK_FALSE(res.active[0]);
    CHECK(res.jacobian().isApprox(Matrix::Identity(2, 2)));
}

TEST_CASE("feasibility and row preservation on random instances") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = test_support::random_instance(rng, 8, 3, 4, true);
        const ConstraintEval& ev = inst.ev;
        const auto red = reduced(ev);
        const Vector f = 2.0 * test_support::gaussian_vec(red->reduced_size(), rng);
        const auto res = project_aff(f, red);
        if (ev.n_ineq() > 0) CHECK((ev.A * res.y - ev.b).maxCoeff() <= 1e-8);
        if (ev.n_eq() > 0) CHECK((ev.C * res.y - ev.d).lpNorm<Eigen::Infinity>() <= 1e-8);
        const Vector fbar = red->lift(f);
        for (Eigen::Index i = 0; i < ev.n_ineq(); ++i) {
            const double row_bar = ev.A.row(i).dot(fbar);
            const double expected = row_bar <= ev.b(i) ? row_bar : ev.b(i);
            CHECK(std::abs(ev.A.row(i).dot(res.y) - expected) <= 1e-8 * std::max(1.0, std::abs(expected)));
        }
    }
}

TEST_CASE("projection is idempotent on feasible points") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = test_support::random_instance(rng, 8, 3, 4, true);
        const auto red = reduced(inst.ev);
        const auto res = project_aff(red->free_part(inst.feasible), red);
        CHECK((res.y - inst.feasible).lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, inst.feasible.lpNorm<Eigen::Infinity>()));
        const auto again = project_aff(res.f_star, red);
        CHECK((again.y - res.y).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
}

TEST_CASE("error bound against feasible targets") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = test_support::random_instance(rng, 8, 3, 4, true);
        const auto red = reduced(inst.ev);
        const Vector f_target = inst.feasible;
        const Vector f2 = red->free_part(f_target);
        const Vector f_theta = f2 + test_support::gaussian_vec(f2.size(), rng);
        const auto res = project_aff(f_theta, red);
        const double a_norm = red->n_ineq() > 0 ? red->A_tilde.jacobiSvd().singularValues()(0) : 0.0;
        const double p_norm = red->n_ineq() > 0 ? red->A_tilde_pinv.jacobiSvd().singularValues()(0) : 0.0;
        const Matrix K = red->C1_inv * red->C2;
        const double k_norm = K.size() > 0 ? K.jacobiSvd().singularValues()(0) : 0.0;
        const double bound = (1.0 + p_norm * a_norm) * std::sqrt(1.0 + k_norm * k_norm) * (f2 - f_theta).norm();
        CHECK((f_target - res.y).norm() <= bound + 1e-8);
    }
}

TEST_CASE("backward matches finite differences away from kinks") {
    std::mt19937_64 rng(21);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = test_support::random_instance(rng, 8, 3, 4, true);
        const auto red = reduced(inst.ev);
        const Vector f = free_point_with_margin(*red, rng, 1e-3);
        const auto res = project_aff(f, red);
        const auto fn = [&](const Tensor& t) { return Tensor(Matrix(project_aff(t.as_vector(), red).y)); };
        const Matrix fd = ad::finite_diff_jacobian(fn, Tensor(Matrix(f)), 1e-7).matrix();
        worst = std::max(worst, test_support::rel_err(res.jacobian(), fd));
        const Vector g = test_support::gaussian_vec(res.y.size(), rng);
        CHECK((res.backward(g) - res.jacobian().transpose() * g).lpNorm<Eigen::Infinity>() < 1e-10);
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("tape node matches the free function") {
    std::mt19937_64 rng(5);
    const auto inst = test_support::random_instance(rng, 6, 2, 3, true, 1);
    const auto red = reduced(inst.ev);
    const Vector f = free_point_with_margin(*red, rng, 1e-3);
    ad::Tape tape;
    const auto x = tape.leaf(Tensor(Matrix(f)));
    const auto y = aff::project_aff(tape, x, red);
    const auto res = project_aff(f, red);
    CHECK(tape.value(y).as_vector() == res.y);
    const Vector w = test_support::gaussian_vec(res.y.size(), rng);
    const auto loss = tape.sum(tape.mul(tape.constant(Tensor(Matrix(w))), y));
    CHECK((tape.backward(loss).wrt(x) - res.backward(w)).lpNorm<Eigen::Infinity>() < 1e-12);

    ad::Tape t2;
    const auto x2 = t2.leaf(Tensor(Matrix(f)));
    CHECK((t2.value(aff::lift(t2, x2, *red)).as_vector() - red->lift(f)).lpNorm<Eigen::Infinity>() < 1e-12);
}
