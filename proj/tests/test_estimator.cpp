#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oam/estimator.hpp"
#include "oam/harness.hpp"

#include <cmath>
#include <random>

using namespace oam;

namespace {

VectorXd v2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

VectorXd random_vec(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = normal(rng);
    return x;
}

// Dense oracle: rebuild G and b from scratch and solve by LDLT.
struct DenseOracle {
    MatrixXd gram;
    VectorXd response;

    explicit DenseOracle(int d, double ridge = 0.0)
        : gram(ridge * MatrixXd::Identity(d, d)), response(VectorXd::Zero(d)) {}

    void absorb(const VectorXd& x, double y) {
        gram += x * x.transpose();
        response += y * x;
    }

    VectorXd solve() const { return gram.ldlt().solve(response); }
};

BanditInstance fixed_u_instance(double u) {
    ScenarioSpec spec;
    spec.name = "fixed-u";
    spec.u = u;
    return builtin_scenario(spec.name, spec);
}

}  // namespace

TEST_CASE("fresh state is zeroed and singular without ridge") {
    LeastSquaresState s(2, 0.0);
    CHECK(s.gram().isZero(0.0));
    CHECK(s.theta_hat().isZero(0.0));
    CHECK(s.rounds_absorbed() == 0);
    CHECK_FALSE(s.invertible());
    CHECK(s.provisional());
    CHECK_THROWS_AS((void)s.gram_inverse(), std::runtime_error);
    CHECK_THROWS_AS((void)s.log_det(), std::runtime_error);
    CHECK_THROWS_AS((void)s.weighted_norm_sq(v2(1.0, 0.0)), std::runtime_error);
}

TEST_CASE("ridge seeds a diagonal Gram that is immediately invertible") {
    LeastSquaresState s(3, 1e-6);
    CHECK((s.gram() - 1e-6 * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(s.theta_hat().isZero(0.0));
    CHECK(s.invertible());
    CHECK_FALSE(s.provisional());
    CHECK(s.log_det() == doctest::Approx(3.0 * std::log(1e-6)).epsilon(1e-12));
}

TEST_CASE("constructor rejects bad dimension and negative ridge") {
    CHECK_THROWS_AS(LeastSquaresState(0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(LeastSquaresState(2, -1.0), std::invalid_argument);
}

TEST_CASE("two orthogonal absorbs interpolate the rewards exactly") {
    LeastSquaresState s(2, 0.0);
    s.absorb(v2(1.0, 0.0), 1.0);
    s.absorb(v2(0.0, 1.0), 0.0);
    CHECK(s.invertible());
    CHECK(s.theta_hat()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.theta_hat()[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.rounds_absorbed() == 2);
}

TEST_CASE("absorbing the zero vector changes nothing but the round count") {
    LeastSquaresState s(2, 0.0);
    s.absorb(v2(1.0, 0.0), 1.0);
    const MatrixXd gram_before = s.gram();
    const VectorXd theta_before = s.theta_hat();

    s.absorb(v2(0.0, 0.0), 7.0);
    CHECK(s.rounds_absorbed() == 2);
    CHECK((s.gram() - gram_before).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s.theta_hat() - theta_before).cwiseAbs().maxCoeff() == 0.0);

    // Same check once the Gram is invertible.
    s.absorb(v2(0.0, 1.0), 0.5);
    const MatrixXd inv_before = s.gram_inverse();
    const double ld_before = s.log_det();
    s.absorb(v2(0.0, 0.0), -3.0);
    CHECK((s.gram_inverse() - inv_before).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.log_det() == ld_before);
}

TEST_CASE("absorb rejects vectors of the wrong dimension") {
    LeastSquaresState s(2, 0.0);
    VectorXd bad(3);
    bad << 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(s.absorb(bad, 1.0), std::invalid_argument);
}

TEST_CASE("incremental inverse tracks the dense inverse over 100 absorbs") {
    std::mt19937_64 rng(20240501);
    LeastSquaresState s(4, 0.0);
    DenseOracle oracle(4);
    for (int t = 0; t < 100; ++t) {
        const VectorXd x = random_vec(4, rng);
        const double y = std::normal_distribution<double>()(rng);
        s.absorb(x, y);
        oracle.absorb(x, y);
    }
    REQUIRE(s.invertible());
    const MatrixXd dense_inv =
        oracle.gram.ldlt().solve(MatrixXd::Identity(4, 4));
    CHECK((s.gram_inverse() - dense_inv).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("theta_hat matches the dense normal equations after 1000 absorbs") {
    // 1000 crosses the periodic refactorisation boundary, so this also
    // exercises the drift reset path.
    std::mt19937_64 rng(77);
    LeastSquaresState s(3, 0.0);
    DenseOracle oracle(3);
    for (int t = 0; t < 1000; ++t) {
        const VectorXd x = random_vec(3, rng);
        const double y = std::normal_distribution<double>()(rng);
        s.absorb(x, y);
        oracle.absorb(x, y);
    }
    const VectorXd dense = oracle.solve();
    const double rel = (s.theta_hat() - dense).norm() / dense.norm();
    CHECK(rel <= 1e-7);

    // Normal-equation residual: G theta_hat must reproduce the response.
    const VectorXd residual = oracle.gram * s.theta_hat() - oracle.response;
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-8 * oracle.response.norm());
}

TEST_CASE("theta_hat stays consistent with a ridge-seeded state") {
    std::mt19937_64 rng(9001);
    LeastSquaresState s(3, 1e-6);
    DenseOracle oracle(3, 1e-6);
    for (int t = 0; t < 200; ++t) {
        const VectorXd x = random_vec(3, rng);
        const double y = std::normal_distribution<double>()(rng);
        s.absorb(x, y);
        oracle.absorb(x, y);
    }
    const VectorXd dense = oracle.solve();
    CHECK((s.theta_hat() - dense).norm() / dense.norm() <= 1e-7);
}

TEST_CASE("weighted_norm_sq on identity and diagonal Grams") {
    LeastSquaresState s(2, 0.0);
    s.absorb(v2(1.0, 0.0), 0.0);
    s.absorb(v2(0.0, 1.0), 0.0);
    // G = I.
    CHECK(s.weighted_norm_sq(v2(0.6, 0.8)) ==
          doctest::Approx(1.0).epsilon(1e-12));

    LeastSquaresState t(2, 0.0);
    t.absorb(v2(2.0, 0.0), 0.0);
    t.absorb(v2(0.0, 1.0), 0.0);
    // G = diag(4, 1).
    CHECK(t.weighted_norm_sq(v2(1.0, 0.0)) ==
          doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("weighted_norm_sq agrees with an explicit dense inverse") {
    std::mt19937_64 rng(5150);
    LeastSquaresState s(5, 0.0);
    DenseOracle oracle(5);
    for (int t = 0; t < 60; ++t) {
        const VectorXd x = random_vec(5, rng);
        s.absorb(x, 0.0);
        oracle.absorb(x, 0.0);
    }
    const MatrixXd dense_inv =
        oracle.gram.ldlt().solve(MatrixXd::Identity(5, 5));
    for (int k = 0; k < 20; ++k) {
        const VectorXd x = random_vec(5, rng);
        const double expected = x.dot(dense_inv * x);
        const double got = s.weighted_norm_sq(x);
        CHECK(std::abs(got - expected) <= 1e-10 * std::abs(expected));
    }
}

TEST_CASE("weighted norm of an arm never grows when that arm is absorbed") {
    std::mt19937_64 rng(31337);
    LeastSquaresState s(3, 0.0);
    for (int i = 0; i < 3; ++i) s.absorb(random_vec(3, rng), 0.0);
    REQUIRE(s.invertible());
    for (int k = 0; k < 50; ++k) {
        const VectorXd x = random_vec(3, rng);
        const double before = s.weighted_norm_sq(x);
        s.absorb(x, 0.0);
        CHECK(s.weighted_norm_sq(x) <= before + 1e-12);
    }
}

TEST_CASE("Gram spectrum never shrinks under absorbs") {
    std::mt19937_64 rng(2468);
    LeastSquaresState s(5, 0.0);
    for (int t = 0; t < 40; ++t) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> before(s.gram());
        s.absorb(random_vec(5, rng), 0.0);
        Eigen::SelfAdjointEigenSolver<MatrixXd> after(s.gram());
        for (int i = 0; i < 5; ++i)
            CHECK(after.eigenvalues()[i] >= before.eigenvalues()[i] - 1e-10);
    }
}

TEST_CASE("log_det tracks the dense log determinant") {
    std::mt19937_64 rng(13);
    LeastSquaresState s(4, 0.0);
    DenseOracle oracle(4);
    for (int t = 0; t < 700; ++t) {
        const VectorXd x = random_vec(4, rng);
        s.absorb(x, 0.0);
        oracle.absorb(x, 0.0);
    }
    const double dense_log_det =
        std::log(oracle.gram.fullPivLu().determinant());
    CHECK(s.log_det() == doctest::Approx(dense_log_det).epsilon(1e-9));
}

TEST_CASE("rank-deficient Gram yields a provisional minimum-norm estimate") {
    LeastSquaresState s(2, 0.0);
    s.absorb(v2(1.0, 0.0), 1.0);
    CHECK_FALSE(s.invertible());
    CHECK(s.provisional());
    // Minimum-norm solution of the singular normal equations: (1, 0).
    CHECK(s.theta_hat()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.theta_hat()[1] == doctest::Approx(0.0).epsilon(1e-12));

    // The flag clears exactly when the span fills out.
    s.absorb(v2(3.0, 0.0), 3.0);
    CHECK(s.provisional());
    s.absorb(v2(0.0, 1.0), 0.0);
    CHECK_FALSE(s.provisional());
    CHECK(s.invertible());
}

TEST_CASE("gap estimates under the true parameter on the two-armed ray family") {
    const BanditInstance inst = fixed_u_instance(0.1);
    LeastSquaresState s(2, 0.0);
    // Noiseless rewards make theta_hat equal theta exactly.
    s.absorb(v2(1.0, 0.0), 1.0);
    s.absorb(v2(0.0, 1.0), 0.0);

    const GapEstimate est = estimate_gaps(s, inst);
    REQUIRE(est.gaps.size() == 1);
    REQUIRE(est.gaps[0].size() == 3);
    CHECK(est.gaps[0][0] == doctest::Approx(0.0));
    CHECK(est.gaps[0][1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(est.gaps[0][2] == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(est.optimal_index[0] == 0);
    CHECK(est.delta_min == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("zero estimate collapses all gaps onto the floor") {
    const BanditInstance inst = fixed_u_instance(0.1);
    LeastSquaresState s(2, 0.0);  // theta_hat starts at zero
    const GapEstimate est = estimate_gaps(s, inst);
    for (double g : est.gaps[0]) CHECK(g == 0.0);
    CHECK(est.delta_min == doctest::Approx(1e-6));
    // Ties resolve to the lowest index.
    CHECK(est.optimal_index[0] == 0);

    const GapEstimate wide = estimate_gaps(s, inst, 0.5);
    CHECK(wide.delta_min == doctest::Approx(0.5));
}

TEST_CASE("positive scaling of the estimate leaves the argmax unchanged") {
    const BanditInstance inst = fixed_u_instance(0.1);
    LeastSquaresState a(2, 0.0);
    a.absorb(v2(1.0, 0.0), 1.0);
    a.absorb(v2(0.0, 1.0), 0.0);
    LeastSquaresState b(2, 0.0);
    b.absorb(v2(1.0, 0.0), 3.0);
    b.absorb(v2(0.0, 1.0), 0.0);

    const GapEstimate ea = estimate_gaps(a, inst);
    const GapEstimate eb = estimate_gaps(b, inst);
    CHECK(ea.optimal_index == eb.optimal_index);
}

TEST_CASE("each context has exactly one zero gap, at its estimated optimum") {
    ScenarioSpec spec;
    spec.name = "changing-one";
    const BanditInstance inst = builtin_scenario(spec.name, spec);

    std::mt19937_64 rng(999);
    LeastSquaresState s(3, 0.0);
    for (int t = 0; t < 10; ++t)
        s.absorb(random_vec(3, rng), std::normal_distribution<double>()(rng));

    const GapEstimate est = estimate_gaps(s, inst);
    for (size_t m = 0; m < est.gaps.size(); ++m) {
        int zeros = 0;
        for (size_t i = 0; i < est.gaps[m].size(); ++i) {
            CHECK(est.gaps[m][i] >= 0.0);
            if (est.gaps[m][i] == 0.0) ++zeros;
        }
        CHECK(zeros == 1);
        CHECK(est.gaps[m][est.optimal_index[m]] == 0.0);
    }
}

TEST_CASE("spanning_action walks the arms in order") {
    ActionSet basis;
    basis.arms = {v2(1.0, 0.0), v2(0.0, 1.0)};
    CHECK(spanning_action(basis, {}) == 0);

    ActionSet tilted;
    tilted.arms = {v2(0.9, 0.5), v2(1.0, 0.0)};
    CHECK(spanning_action(tilted, {v2(1.0, 0.0)}) == 0);

    // Full rank already reached: nothing can extend the span.
    CHECK_FALSE(
        spanning_action(basis, {v2(1.0, 0.0), v2(0.0, 1.0)}).has_value());

    // All arms collinear with the absorbed direction.
    ActionSet ray;
    ray.arms = {v2(0.5, 0.0), v2(1.0, 0.0)};
    CHECK_FALSE(spanning_action(ray, {v2(1.0, 0.0)}).has_value());

    // Skips a dependent arm to reach an independent one.
    ActionSet mixed;
    mixed.arms = {v2(1.0, 0.0), v2(0.0, 1.0)};
    CHECK(spanning_action(mixed, {v2(0.5, 0.0)}) == 1);
}
