#include <doctest.h>

#include <random>

#include "hardnet/errors.hpp"
#include "hardnet/hardnet_aff.hpp"
#include "hardnet/hardnet_cvx.hpp"
#include "support.hpp"

using namespace hardnet;
using cvx::ConvexSet;
using cvx::kkt_enumeration_oracle;
using cvx::project_cvx;

namespace {

Vector V(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

// {z1 + z2 <= 1, z >= 0}
ConstraintEval simplex_like() {
    Matrix A(3, 2);
    A << 1, 1, -1, 0, 0, -1;
    return ConstraintEval::inequalities(A, V({1, 0, 0}));
}

ConstraintEval box(double lo, double hi, int n) {
    Matrix A(2 * n, n);
    A << Matrix::Identity(n, n), -Matrix::Identity(n, n);
    Vector b(2 * n);
    b << Vector::Constant(n, hi), Vector::Constant(n, -lo);
    return ConstraintEval::inequalities(A, b);
}

// Point whose slack / violation on every constraint exceeds margin at the projection.
bool strictly_complementary(const ConstraintEval& ev, const cvx::CvxProjection& res, double margin) {
    const Vector slack = ev.b - ev.A * res.z;
    for (Eigen::Index i = 0; i < slack.size(); ++i) {
        const auto it = std::find(res.active_set.begin(), res.active_set.end(), static_cast<int>(i));
        if (it == res.active_set.end()) {
            if (slack(i) < margin) return false;
        } else if (res.multipliers(it - res.active_set.begin()) < margin) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("project_cvx examples") {
    CHECK(project_cvx(V({2, 0}), ConvexSet::ball(V({0, 0}), 1.0)).z.isApprox(V({1, 0})));
    CHECK((project_cvx(V({1, 1}), ConvexSet::polyhedron(box(0.0, 0.5, 2))).z - V({0.5, 0.5})).norm() < 1e-12);
    const auto res = project_cvx(V({1, 1}), ConvexSet::polyhedron(simplex_like()));
    CHECK((res.z - V({0.5, 0.5})).norm() < 1e-12);
    CHECK(res.active_set == std::vector<int>{0});
    CHECK(res.multipliers(0) == doctest::Approx(0.5));
    // Inside the ball nothing moves.
    CHECK(project_cvx(V({0.2, 0.1}), ConvexSet::ball(V({0, 0}), 1.0)).z == V({0.2, 0.1}));
}

TEST_CASE("project_cvx errors") {
    Matrix A(2, 1);
    A << 1, -1;
    CHECK_THROWS_AS(project_cvx(V({0}), ConvexSet::polyhedron(ConstraintEval::inequalities(A, V({-1, -1})))),
                    InfeasibleError);
    CHECK_THROWS(ConvexSet::ball(V({0, 0}), 0.0));
    CHECK_THROWS_AS(project_cvx(V({1, 2, 3}), ConvexSet::ball(V({0, 0}), 1.0)), ShapeError);

    // Two disjoint balls: Dykstra cannot converge; the error carries the best iterate.
    const ConvexSet disjoint = ConvexSet::intersection({ConvexSet::ball(V({0, 0}), 1.0), ConvexSet::ball(V({5, 0}), 1.0)});
    cvx::SolverOptions opts;
    opts.max_iter = 50;
    try {
        project_cvx(V({2, 3}), disjoint, opts);
        FAIL("expected an error");
    } catch (const ConvergenceError& e) {
        CHECK(e.best_iterate().size() == 2);
        CHECK(e.residual() > 0.0);
    } catch (const InfeasibleError&) {
    }
}

TEST_CASE("kkt_enumeration_oracle examples") {
    {
        const ConstraintEval ev{Matrix(0, 2), Vector(0), Matrix(0, 2), Vector(0)};
        CHECK(kkt_enumeration_oracle(V({3, -1}), ev).z == V({3, -1}));
    }
    {
        const ConstraintEval ev = ConstraintEval::inequalities((Matrix(1, 2) << 3, 4).finished(), V({5}));
        const auto o = kkt_enumeration_oracle(V({3, 4}), ev);
        CHECK((o.z - aff::project_single(V({3, 4}), V({3, 4}), 5.0)).norm() < 1e-12);
    }
    {
        const auto o = kkt_enumeration_oracle(V({1, 1}), simplex_like());
        CHECK((o.z - V({0.5, 0.5})).norm() < 1e-12);
        CHECK(o.active_set == std::vector<int>{0});
    }
    {
        Matrix A(2, 1);
        A << 1, -1;
        CHECK_THROWS_AS(kkt_enumeration_oracle(V({0}), ConstraintEval::inequalities(A, V({-1, -1}))), InfeasibleError);
    }
    CHECK_THROWS(kkt_enumeration_oracle(Vector::Zero(2), ConstraintEval::inequalities(Matrix::Ones(13, 2), Vector::Ones(13))));
}

TEST_CASE("oracle equivalence on random polyhedra") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = test_support::random_instance(rng, 6, 2, 8, false);
        const Vector y = inst.feasible + 2.0 * test_support::gaussian_vec(inst.feasible.size(), rng);
        const auto res = project_cvx(y, ConvexSet::polyhedron(inst.ev));
        const auto o = kkt_enumeration_oracle(y, inst.ev);
        CHECK((res.z - o.z).lpNorm<Eigen::Infinity>() <= 1e-6);
        CHECK((res.multipliers.array() >= 0.0).all());
        for (Eigen::Index k = 0; k < res.multipliers.size(); ++k) {
            const int row = res.active_set[static_cast<std::size_t>(k)];
            const double slack = inst.ev.b(row) - inst.ev.A.row(row).dot(res.z);
            CHECK(std::abs(res.multipliers(k) * slack) <= 1e-6);
        }
    }
}

TEST_CASE("non-expansiveness and idempotence") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = test_support::random_instance(rng, 6, 2, 8, false);
        const ConvexSet set = ConvexSet::polyhedron(inst.ev);
        const Vector y = inst.feasible + 3.0 * test_support::gaussian_vec(inst.feasible.size(), rng);
        const Vector z = project_cvx(y, set).z;
        CHECK((inst.feasible - z).norm() <= (inst.feasible - y).norm() + 1e-8);
        CHECK((project_cvx(z, set).z - z).lpNorm<Eigen::Infinity>() <= 1e-8);
        CHECK((project_cvx(inst.feasible, set).z - inst.feasible).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
}

TEST_CASE("HardNet-Aff consistency") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = test_support::random_instance(rng, 6, 2, 4, true);
        const auto red = std::make_shared<const ReducedConstraints>(reduce(inst.ev));
        const Vector f = test_support::gaussian_vec(red->reduced_size(), rng);
        const Vector ya = aff::project_aff(f, red).y;
        const Vector yc = project_cvx(red->lift(f), ConvexSet::polyhedron(inst.ev)).z;
        CHECK(ConvexSet::polyhedron(inst.ev).contains(ya, 1e-8));
        CHECK(ConvexSet::polyhedron(inst.ev).contains(yc, 1e-8));
    }
    for (int trial = 0; trial < 200; ++trial) {
        const Vector a = test_support::gaussian_vec(4, rng);
        const double b = test_support::uniform(-1, 1, rng);
        const Vector f = test_support::gaussian_vec(4, rng);
        const ConstraintEval ev = ConstraintEval::inequalities(Matrix(a.transpose()), V({b}));
        const Vector ya = aff::project_aff(f, std::make_shared<const ReducedConstraints>(reduce(ev))).y;
        CHECK((project_cvx(f, ConvexSet::polyhedron(ev)).z - ya).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("backward examples") {
    const ConvexSet half = ConvexSet::polyhedron(ConstraintEval::inequalities((Matrix(1, 2) << 1, 1).finished(), V({1})));
    CHECK(project_cvx(V({0.1, 0.2}), half).jacobian().isApprox(Matrix::Identity(2, 2)));
    const Matrix J = project_cvx(V({2, 1}), half).jacobian();
    const Vector a = V({1, 1});
    CHECK((J - (Matrix::Identity(2, 2) - a * a.transpose() / 2.0)).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(project_cvx(V({2, 2}), ConvexSet::polyhedron(box(0.0, 0.5, 2))).jacobian().lpNorm<Eigen::Infinity>() < 1e-12);

    // Ball: (r / |y - c|)(I - u u^T).
    const Vector c = V({1, -1});
    const Vector y = V({3, 1});
    const Vector u = (y - c).normalized();
    const Matrix Jb = project_cvx(y, ConvexSet::ball(c, 0.5)).jacobian();
    const Matrix expected = 0.5 / (y - c).norm() * (Matrix::Identity(2, 2) - u * u.transpose());
    CHECK((Jb - expected).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("degenerate active set falls back and flags") {
    // Three constraints tight at the origin in 2-D.
    Matrix A(3, 2);
    A << 1, 0, 0, 1, 1, 1;
    const ConvexSet set = ConvexSet::polyhedron(ConstraintEval::inequalities(A, V({0, 0, 0})));
    const auto res = project_cvx(V({1, 1}), set);
    CHECK(res.z.norm() < 1e-12);
    const Matrix J = res.jacobian();
    CHECK(J.allFinite());
}

TEST_CASE("backward matches finite differences in the strictly complementary region") {
    std::mt19937_64 rng(41);
    double worst = 0.0;
    int tested = 0;
    while (tested < 150) {
        const auto inst = test_support::random_instance(rng, 6, 2, 8, false);
        const ConvexSet set = ConvexSet::polyhedron(inst.ev);
        const Vector y = inst.feasible + 2.0 * test_support::gaussian_vec(inst.feasible.size(), rng);
        const auto res = project_cvx(y, set);
        if (!strictly_complementary(inst.ev, res, 1e-3)) continue;
        ++tested;
        const auto fn = [&](const Tensor& t) { return Tensor(Matrix(project_cvx(t.as_vector(), set).z)); };
        const Matrix fd = ad::finite_diff_jacobian(fn, Tensor(Matrix(y)), 1e-7).matrix();
        worst = std::max(worst, test_support::rel_err(res.jacobian(), fd));
        const Vector g = test_support::gaussian_vec(y.size(), rng);
        CHECK((cvx::project_cvx_backward(res, g) - res.jacobian().transpose() * g).lpNorm<Eigen::Infinity>() < 1e-10);
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("intersection of a ball and a halfspace") {
    const ConvexSet set = ConvexSet::intersection(
        {ConvexSet::ball(V({0, 0}), 1.0),
         ConvexSet::polyhedron(ConstraintEval::inequalities((Matrix(1, 2) << 1, 0).finished(), V({0.5})))});
    const auto res = project_cvx(V({2, 0.1}), set);
    CHECK(set.contains(res.z, 1e-7));
    CHECK(res.z(0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(res.z(1) == doctest::Approx(0.1).epsilon(1e-6));
    // Far outside both: the result must still be the closest point, which sits on the
    // ball boundary at x = 0.5.
    const auto corner = project_cvx(V({2, 3}), set);
    CHECK(corner.z(0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(corner.z(1) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-6));
    const ConvexSet nested = ConvexSet::intersection({set, ConvexSet::ball(V({0, 0}), 2.0)});
    CHECK_THROWS(project_cvx(V({2, 3}), nested));
}

TEST_CASE("tape node matches the free function") {
    std::mt19937_64 rng(3);
    const ConvexSet set = ConvexSet::polyhedron(simplex_like());
    ad::Tape tape;
    const auto y = tape.leaf(Tensor::vector({1.2, 0.7}));
    const auto z = cvx::project_cvx(tape, y, set);
    const auto res = project_cvx(V({1.2, 0.7}), set);
    CHECK(tape.value(z).as_vector() == res.z);
    const auto g = tape.backward(tape.sum(z)).wrt(y);
    CHECK((g - res.jacobian().transpose() * Vector::Ones(2)).lpNorm<Eigen::Infinity>() < 1e-12);
}
