#include <doctest.h>

#include <cmath>
#include <random>

#include "hardnet/autodiff.hpp"
#include "hardnet/errors.hpp"
#include "support.hpp"

using namespace hardnet;
using ad::Tape;
using test_support::rel_err;

TEST_CASE("tensor rejects non-finite data and reads row-major") {
    Matrix m(1, 2);
    m << 1.0, std::nan("");
    CHECK_THROWS_AS(Tensor{m}, std::domain_error);
    m(0, 1) = INFINITY;
    CHECK_THROWS_AS(Tensor{m}, std::domain_error);

    const double data[] = {1, 2, 3, 4, 5, 6};
    const Tensor t = Tensor::from_rows(2, 3, data);
    CHECK(t(0, 2) == 3.0);
    CHECK(t(1, 0) == 4.0);
    CHECK(t[4] == 5.0);
    CHECK_THROWS_AS(Tensor::from_rows(2, 2, data), ShapeError);
}

TEST_CASE("record examples") {
    Tape tape;
    const auto x = tape.leaf(Tensor::vector({-1.0, 2.0}));
    const auto r = tape.relu(x);
    CHECK(tape.value(r)[0] == 0.0);
    CHECK(tape.value(r)[1] == 2.0);

    const auto z = tape.constant(Tensor(Matrix::Zero(1, 2)));
    const auto v = tape.leaf(Tensor::vector({3.7, -1.2}));
    CHECK(tape.value(tape.matmul(z, v)).item() == 0.0);

    const auto s = tape.sin(tape.leaf(Tensor::vector({0.0})));
    CHECK(tape.value(s).item() == 0.0);
}

TEST_CASE("shape errors name the op and the shapes") {
    Tape tape;
    const auto a = tape.leaf(Tensor(Matrix::Ones(2, 3)));
    const auto b = tape.leaf(Tensor(Matrix::Ones(2, 3)));
    try {
        tape.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("2x3") != std::string::npos);
    }
    CHECK_THROWS_AS(tape.add(a, tape.leaf(Tensor(Matrix::Ones(3, 2)))), ShapeError);
    CHECK_THROWS_AS(tape.slice(a, 1, 5), ShapeError);
}

TEST_CASE("backward examples") {
    {
        Tape tape;
        const auto x = tape.leaf(Tensor::vector({-1.0, 2.0}));
        const auto g = tape.backward(tape.sum(tape.relu(x))).wrt(x);
        CHECK(g(0, 0) == 0.0);
        CHECK(g(1, 0) == 1.0);
    }
    {
        Tape tape;
        const auto x = tape.leaf(Tensor::vector({3.0}));
        CHECK(tape.backward(tape.sum(tape.square(x))).wrt(x)(0, 0) == doctest::Approx(6.0));
    }
    {
        Tape tape;
        const auto x = tape.leaf(Tensor::vector({0.0}));
        CHECK(tape.backward(tape.sum(tape.sin(x))).wrt(x)(0, 0) == doctest::Approx(1.0));
    }
    {
        // ReLU at exactly 0 has subgradient 0.
        Tape tape;
        const auto x = tape.leaf(Tensor::vector({0.0}));
        CHECK(tape.backward(tape.sum(tape.relu(x))).wrt(x)(0, 0) == 0.0);
    }
}

TEST_CASE("backward seed shape must match and unreached leaves get zeros") {
    Tape tape;
    const auto x = tape.leaf(Tensor::vector({1.0, 2.0}));
    const auto unused = tape.leaf(Tensor::vector({5.0, 6.0, 7.0}));
    const auto y = tape.scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(y, Tensor::vector({1.0})), ShapeError);
    const auto grads = tape.backward(y, Tensor::vector({1.0, 1.0}));
    CHECK_FALSE(grads.reached(unused));
    CHECK(grads.wrt(unused).rows() == 3);
    CHECK(grads.wrt(unused).isZero());
}

TEST_CASE("constants receive no gradient") {
    Tape tape;
    const auto c = tape.constant(Tensor::vector({2.0}));
    const auto x = tape.leaf(Tensor::vector({3.0}));
    const auto g = tape.backward(tape.sum(tape.mul(c, x)));
    CHECK_FALSE(g.reached(c));
    CHECK(g.wrt(x)(0, 0) == 2.0);
}

TEST_CASE("finite_diff_jacobian examples") {
    const auto sq = [](const Tensor& t) { return Tensor(Matrix(t.matrix().array().square())); };
    CHECK(ad::finite_diff_jacobian(sq, Tensor::vector({3.0}), 1e-5)(0, 0) == doctest::Approx(6.0).epsilon(1e-6));
    const auto id = [](const Tensor& t) { return t; };
    const Tensor J = ad::finite_diff_jacobian(id, Tensor::vector({1.0, -2.0, 0.5}), 1e-5);
    CHECK((J.matrix() - Matrix::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-9);
    const auto relu = [](const Tensor& t) { return Tensor(Matrix(t.matrix().cwiseMax(0.0))); };
    CHECK(ad::finite_diff_jacobian(relu, Tensor::vector({0.5}), 1e-5)(0, 0) == doctest::Approx(1.0));
    CHECK_THROWS(ad::finite_diff_jacobian(id, Tensor::vector({1.0}), 0.0));
}

namespace {

// Builds f(x) = op(...) on a fresh tape and returns value and analytic Jacobian.
template <class Build>
std::pair<Matrix, Matrix> analytic_jacobian(const Tensor& x, Build build) {
    Tape tape;
    const auto xi = tape.leaf(x);
    const auto out = build(tape, xi);
    const Tensor& val = tape.value(out);
    Matrix J(val.size(), x.size());
    for (Eigen::Index i = 0; i < val.size(); ++i) {
        Matrix seed = Matrix::Zero(val.rows(), val.cols());
        seed(i / val.cols(), i % val.cols()) = 1.0;
        const Matrix g = tape.backward(out, Tensor(seed)).wrt(xi);
        for (Eigen::Index j = 0; j < x.size(); ++j) J(i, j) = g(j / x.cols(), j % x.cols());
    }
    return {val.matrix(), J};
}

template <class Build>
double fd_rel_err(const Tensor& x, Build build) {
    const auto [val, J] = analytic_jacobian(x, build);
    const auto f = [&](const Tensor& t) {
        Tape tape;
        return tape.value(build(tape, tape.leaf(t)));
    };
    const Tensor Jfd = ad::finite_diff_jacobian(f, x, 1e-6);
    return rel_err(J, Jfd.matrix());
}

Tensor away_from_kinks(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    Matrix m = test_support::gaussian(r, c, rng);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double& v = m.data()[i];
        if (std::abs(v) < 1e-2) v = v < 0 ? -0.1 : 0.1;
    }
    return Tensor(m);
}

}  // namespace

TEST_CASE("every differentiable op matches finite differences on 100 random points") {
    std::mt19937_64 rng(7);
    const Matrix W = test_support::gaussian(3, 4, rng);
    const Matrix B = test_support::gaussian(4, 1, rng);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor x = away_from_kinks(rng, 4, 1);
        const auto C = [](Tape& t, const Matrix& m) { return t.constant(Tensor(m)); };
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.matmul(C(t, W), v); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) {
            return t.matmul(t.scale(t.matmul(v, t.constant(Tensor(Matrix(B.transpose())))), 1.0), v);
        }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.add(v, C(t, B)); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.sub(C(t, B), v); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.mul(v, t.sin(v)); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.scale(v, -2.5); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.relu(v); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.sin(v); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.cos(v); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.square(v); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) { return t.sum(v); }));
        worst = std::max(worst, fd_rel_err(x, [&](Tape& t, ad::NodeId v) {
            return t.concat({t.slice(v, 2, 2), t.square(t.slice(v, 0, 2)), v});
        }));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("fan-out gradient equals the sum of single-path gradients") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = away_from_kinks(rng, 3, 1);
        Tape both;
        const auto xb = both.leaf(x);
        const auto gb = both.backward(both.sum(both.add(both.sin(xb), both.square(xb)))).wrt(xb);
        Tape p1;
        const auto x1 = p1.leaf(x);
        const auto g1 = p1.backward(p1.sum(p1.sin(x1))).wrt(x1);
        Tape p2;
        const auto x2 = p2.leaf(x);
        const auto g2 = p2.backward(p2.sum(p2.square(x2))).wrt(x2);
        CHECK((gb - (g1 + g2)).lpNorm<Eigen::Infinity>() < 1e-14);
    }
}

TEST_CASE("tape replay is bit-identical") {
    std::mt19937_64 rng(11);
    const Tensor x = away_from_kinks(rng, 5, 1);
    const Matrix W = test_support::gaussian(5, 5, rng);
    auto run = [&]() {
        Tape t;
        const auto v = t.leaf(x);
        const auto out = t.sum(t.square(t.relu(t.matmul(t.constant(Tensor(W)), t.sin(v)))));
        return std::make_pair(t.value(out).item(), t.backward(out).wrt(v));
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("custom node vjp and missing contributions") {
    Tape tape;
    const auto x = tape.leaf(Tensor::vector({1.0, 2.0}));
    const auto y = tape.leaf(Tensor::vector({3.0}));
    const auto c = tape.custom("dot_first", {x, y}, Tensor::scalar(3.0), [](const Matrix& g) {
        Matrix gx(2, 1);
        gx << 3.0 * g(0, 0), 0.0;
        return std::vector<Matrix>{gx, Matrix()};
    });
    const auto grads = tape.backward(c);
    CHECK(grads.wrt(x)(0, 0) == 3.0);
    CHECK(grads.wrt(y).isZero());
}
