#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "omlab/map_estimation.hpp"
#include "omlab/rng.hpp"

using namespace omlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::MatrixXd random_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
    Eigen::MatrixXd A(rows, cols);
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            A(i, j) = rng.normal() / std::sqrt(static_cast<double>(rows));
    return A;
}

Eigen::VectorXd random_vector(std::size_t n, RngStream& rng) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    return v;
}

ProductMeasureSpec besov_spec(double s, double p) {
    return make_besov(BesovParams{s, 1, p, 1.0, Point::zero()});
}

} // namespace

TEST_CASE("potential gradient matches finite differences", "[map_estimation]") {
    RngStream rng(101);
    const std::size_t K = 8, M = 5;
    const auto phi = Potential::linear_gaussian(random_matrix(M, K, rng),
                                                random_vector(M, rng), 0.7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_vector(K, rng);
        const auto g = phi.grad(x);
        for (std::size_t k = 0; k < K; ++k) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(K);
            const double h = 1e-6;
            e[static_cast<Eigen::Index>(k)] = h;
            const double fd = (phi.eval(x + e) - phi.eval(x - e)) / (2.0 * h);
            CHECK_THAT(g[static_cast<Eigen::Index>(k)],
                       WithinAbs(fd, 1e-5 * std::max(1.0, std::abs(fd))));
        }
    }
    CHECK(phi.eval(random_vector(K, rng)) >= 0.0);
}

TEST_CASE("posterior objective gradient check (smooth branches)", "[map_estimation]") {
    RngStream rng(202);
    const std::size_t K = 6;
    const auto phi = Potential::linear_gaussian(random_matrix(4, K, rng),
                                                random_vector(4, rng), 1.0);
    for (const auto& spec : {besov_spec(2.0, 2.0), besov_spec(1.0, 1.5)}) {
        const auto obj = posterior_objective(spec, phi, K);
        for (int trial = 0; trial < 10; ++trial) {
            const auto x = random_vector(K, rng);
            const auto g = obj.smooth_grad(x);
            for (std::size_t k = 0; k < K; ++k) {
                Eigen::VectorXd e = Eigen::VectorXd::Zero(K);
                const double h = 1e-6;
                e[static_cast<Eigen::Index>(k)] = h;
                const double fd = (obj.eval(x + e) - obj.eval(x - e)) / (2.0 * h);
                CHECK_THAT(g[static_cast<Eigen::Index>(k)],
                           WithinAbs(fd, 2e-5 * std::max(1.0, std::abs(fd))));
            }
        }
    }
}

TEST_CASE("zero potential returns the prior shift immediately", "[map_estimation]") {
    const auto spec = make_besov(BesovParams{2.0, 1, 2.0, 1.0, Point::zero().set(1, 0.4)});
    const std::size_t K = 6;
    const auto obj = posterior_objective(spec, Potential::zero(K), K);
    Eigen::VectorXd init(K);
    for (std::size_t k = 0; k < K; ++k) init[static_cast<Eigen::Index>(k)] = obj.m[k];
    const auto res = solve_map(obj, MapMethod::GradDescent, init);
    CHECK(res.converged);
    CHECK(res.iterations <= 3);
    CHECK_THAT(res.argmin[0], WithinAbs(0.4, 1e-10));
}

TEST_CASE("grad-descent reaches the normal-equations solution", "[map_estimation]") {
    RngStream rng(303);
    const std::size_t K = 16, M = 8;
    const auto spec = besov_spec(2.0, 2.0);
    const auto phi = Potential::linear_gaussian(random_matrix(M, K, rng),
                                                random_vector(M, rng), 0.5);
    const auto obj = posterior_objective(spec, phi, K);
    const Eigen::VectorXd oracle = map_normal_equations(obj);
    const auto res = solve_map(obj, MapMethod::GradDescent,
                               Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K)));
    REQUIRE(res.converged);
    CHECK_THAT((res.argmin - oracle).cwiseAbs().maxCoeff(), WithinAbs(0.0, 1e-8));
    // Optimality invariants.
    CHECK(res.objective <= obj.eval(oracle) + 1e-12);
    Eigen::VectorXd m(K);
    for (std::size_t k = 0; k < K; ++k) m[static_cast<Eigen::Index>(k)] = obj.m[k];
    CHECK(res.objective <= obj.eval(m) + 1e-12);
}

TEST_CASE("prox-grad reproduces the soft-threshold closed form", "[map_estimation]") {
    RngStream rng(404);
    const std::size_t K = 12;
    const auto spec = besov_spec(1.0, 1.0);
    const auto phi = Potential::linear_gaussian(
        Eigen::MatrixXd::Identity(K, K), random_vector(K, rng), 0.8);
    const auto obj = posterior_objective(spec, phi, K);
    const Eigen::VectorXd oracle = map_soft_threshold(obj);
    const auto res = solve_map(obj, MapMethod::ProxGrad,
                               Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K)));
    REQUIRE(res.converged);
    CHECK_THAT((res.argmin - oracle).cwiseAbs().maxCoeff(), WithinAbs(0.0, 1e-12));
}

TEST_CASE("solver optimality against random probes", "[map_estimation]") {
    RngStream rng(505);
    const std::size_t K = 10, M = 6;
    for (double p : {1.0, 2.0}) {
        const auto spec = besov_spec(p == 1.0 ? 1.0 : 2.0, p);
        const auto A = (p == 1.0)
                           ? Eigen::MatrixXd(Eigen::MatrixXd::Identity(K, K))
                           : Eigen::MatrixXd(random_matrix(M, K, rng));
        const auto phi = Potential::linear_gaussian(
            A, random_vector(static_cast<std::size_t>(A.rows()), rng), 0.9);
        const auto obj = posterior_objective(spec, phi, K);
        const auto res = solve_map(obj, p == 1.0 ? MapMethod::ProxGrad : MapMethod::GradDescent,
                                   Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K)));
        REQUIRE(res.converged);
        for (int probe = 0; probe < 1000; ++probe) {
            const Eigen::VectorXd x = res.argmin + 0.5 * random_vector(K, rng);
            CHECK(obj.eval(x) >= res.objective - 1e-10);
        }
    }
}

TEST_CASE("zero potential with a cauchy prior also returns the shift", "[map_estimation]") {
    CauchyParams params;
    params.gamma = WeightSeq::geometric(0.5);
    params.q = 2.0;
    params.m = Point::zero().set(2, -0.3);
    const auto spec = make_cauchy(params);
    const std::size_t K = 5;
    const auto obj = posterior_objective(spec, Potential::zero(K), K);
    Eigen::VectorXd init(K);
    for (std::size_t k = 0; k < K; ++k) init[static_cast<Eigen::Index>(k)] = obj.m[k];
    const auto res = solve_map(obj, MapMethod::GradDescent, init);
    CHECK(res.converged);
    CHECK(res.iterations <= 3);
    CHECK_THAT(res.argmin[1], WithinAbs(-0.3, 1e-10));
    CHECK_THAT(res.objective, WithinAbs(0.0, 1e-12));
}

TEST_CASE("cauchy posterior: multistart never loses to a single start", "[map_estimation]") {
    RngStream rng(606);
    const std::size_t K = 4;
    CauchyParams params;
    params.gamma = WeightSeq::geometric(0.5);
    params.q = 2.0;
    const auto spec = make_cauchy(params);
    const auto phi = Potential::linear_gaussian(random_matrix(3, K, rng),
                                                3.0 * random_vector(3, rng), 0.4);
    const auto obj = posterior_objective(spec, phi, K);
    const auto single = solve_map(obj, MapMethod::GradDescent,
                                  Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K)));
    double best = single.objective;
    for (int start = 0; start < 6; ++start) {
        const auto res = solve_map(obj, MapMethod::GradDescent, random_vector(K, rng));
        best = std::min(best, res.objective);
    }
    CHECK(best <= single.objective + 1e-12);
}

TEST_CASE("map convergence along converging prior families", "[map_estimation]") {
    RngStream rng(707);
    SECTION("shrinking shifts with zero potential track the shift exactly") {
        const BesovParams base{2.0, 1, 2.0, 1.0, Point::zero()};
        const auto limit = make_besov(base);
        auto family = [&](std::size_t n) {
            Point m = Point::zero().set(1, 1.0 / static_cast<double>(n));
            return ProductMeasureSpec(make_besov_ref(2.0),
                                      WeightSeq::power_law(base.gamma_exponent()), m,
                                      limit.ambient(), "shifted");
        };
        const std::size_t K = 8;
        const auto rows = map_convergence_experiment(family, limit, Potential::zero(K), K,
                                                     {1, 2, 4, 8, 16}, MapMethod::GradDescent);
        for (const auto& row : rows) {
            const double expected =
                (1.0 / static_cast<double>(row.n)) / limit.ambient().weights(1);
            CHECK_THAT(row.dist, WithinAbs(expected, 1e-9));
        }
    }
    SECTION("p=1 family with identity data: soft-threshold closed form per member") {
        const BesovParams base{1.0, 1, 1.0, 1.0, Point::zero()};
        const auto limit = make_besov(base);
        auto family = [&](std::size_t n) {
            BesovParams pn = base;
            pn.s = base.s + 1.0 / static_cast<double>(n);
            return ProductMeasureSpec(make_besov_ref(base.p),
                                      WeightSeq::power_law(pn.gamma_exponent()), Point::zero(),
                                      limit.ambient(), "member");
        };
        const std::size_t K = 8;
        Eigen::VectorXd y = random_vector(K, rng);
        const auto phi =
            Potential::linear_gaussian(Eigen::MatrixXd::Identity(K, K), y, 0.6);
        const auto rows = map_convergence_experiment(family, limit, phi, K, {1, 4, 16, 64},
                                                     MapMethod::ProxGrad);
        for (std::size_t i = 0; i + 1 < rows.size(); ++i)
            CHECK(rows[i + 1].dist <= rows[i].dist + 1e-12);
        // Per-member oracle: coordinate-wise soft threshold.
        for (std::size_t n : {1u, 4u, 16u, 64u}) {
            const auto obj_n = posterior_objective(family(n), phi, K);
            Eigen::VectorXd init = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
            const auto res = solve_map(obj_n, MapMethod::ProxGrad, init);
            REQUIRE(res.converged);
            CHECK_THAT((res.argmin - map_soft_threshold(obj_n)).cwiseAbs().maxCoeff(),
                       WithinAbs(0.0, 1e-12));
        }
    }
    SECTION("p=2 family distances decrease toward zero") {
        const BesovParams base{2.0, 1, 2.0, 1.0, Point::zero()};
        const auto limit = make_besov(base);
        auto family = [&](std::size_t n) {
            BesovParams pn = base;
            pn.s = base.s + 1.0 / static_cast<double>(n);
            return ProductMeasureSpec(make_besov_ref(base.p),
                                      WeightSeq::power_law(pn.gamma_exponent()), Point::zero(),
                                      limit.ambient(), "member");
        };
        const std::size_t K = 16, M = 8;
        const auto phi = Potential::linear_gaussian(random_matrix(M, K, rng),
                                                    random_vector(M, rng), 1.0);
        const auto rows = map_convergence_experiment(family, limit, phi, K,
                                                     {1, 4, 16, 64, 256}, MapMethod::GradDescent);
        for (std::size_t i = 0; i + 1 < rows.size(); ++i) CHECK(rows[i + 1].dist < rows[i].dist);
        CHECK(rows.back().dist < 1e-2);
    }
}
