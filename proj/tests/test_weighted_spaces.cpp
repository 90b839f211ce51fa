#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "omlab/rng.hpp"
#include "omlab/weighted_spaces.hpp"

using namespace omlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Point random_finite_point(RngStream& rng, std::size_t max_index = 40) {
    Point p = Point::zero();
    const std::size_t support = 1 + rng.next_u64() % 6;
    for (std::size_t i = 0; i < support; ++i)
        p.set(1 + rng.next_u64() % max_index, rng.uniform(-3.0, 3.0));
    return p;
}

CoordSeq scaled(const CoordSeq& x, double c) {
    CoordSeq out = x;
    for (auto& [k, v] : out.entries) v *= c;
    if (out.tail) out.tail->coeff *= c;
    return out;
}

CoordSeq added(const CoordSeq& a, const CoordSeq& b) {
    CoordSeq out = a;
    for (const auto& [k, v] : b.entries) {
        auto [it, inserted] = out.entries.try_emplace(k, v);
        if (!inserted) it->second += v;
    }
    return out;
}

} // namespace

TEST_CASE("weighted norm: zero and identity-scaling cases", "[weighted_spaces]") {
    const SpaceSpec space(2.0, WeightSeq::power_law(-1.0, 2.0));
    const auto zero = weighted_norm(Point::zero(), space, 10);
    CHECK(zero.partial_norm == 0.0);
    REQUIRE(zero.tail_bound);
    CHECK(*zero.tail_bound == 0.0);

    Point x = Point::zero();
    for (std::size_t k = 1; k <= 3; ++k) x.set(k, space.weights(k));
    const auto r = weighted_norm(x, space, 3);
    CHECK_THAT(r.partial_norm, WithinRel(std::sqrt(3.0), 1e-14));
    REQUIRE(r.tail_bound);
    CHECK(*r.tail_bound == 0.0);
}

TEST_CASE("weighted norm of a power tail has a rigorous integral bound", "[weighted_spaces]") {
    // x_k = k^{-2}, alpha = 1, p = 1, K = 100
    Point x = Point::zero();
    x.with_tail(TailRule{1.0, -2.0, 1.0, 1});
    const SpaceSpec space(1.0, WeightSeq::constant(1.0));
    const auto r = weighted_norm(x, space, 100);

    KahanSum oracle;
    for (std::size_t k = 1; k <= 100; ++k) oracle.add(std::pow(static_cast<double>(k), -2.0));
    CHECK_THAT(r.partial_norm, WithinRel(oracle.value(), 1e-13));

    REQUIRE(r.tail_bound);
    KahanSum brute;
    for (std::size_t k = 101; k <= 2'000'000; ++k)
        brute.add(std::pow(static_cast<double>(k), -2.0));
    CHECK(*r.tail_bound >= brute.value());
    CHECK(*r.tail_bound <= 0.01);
}

TEST_CASE("norm tail certifies divergence and handles stray entries", "[weighted_spaces]") {
    Point x = Point::zero();
    x.with_tail(TailRule{1.0, -0.4, 1.0, 1});
    const SpaceSpec l2(2.0, WeightSeq::constant(1.0));
    const auto r = weighted_norm(x, l2, 50);
    CHECK(r.tail_divergent());

    Point y = Point::zero();
    y.set(3, 1.0).set(500, 2.0);
    const auto ry = weighted_norm(y, l2, 10);
    CHECK_THAT(ry.partial_norm, WithinRel(1.0, 1e-14));
    REQUIRE(ry.tail_bound);
    CHECK_THAT(*ry.tail_bound, WithinRel(4.0, 1e-14)); // exact: the k=500 entry squared
}

TEST_CASE("norm is absolutely homogeneous and satisfies the triangle inequality",
          "[weighted_spaces]") {
    RngStream rng(20240811);
    const SpaceSpec space(1.5, WeightSeq::power_law(-0.5));
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = coord_seq(random_finite_point(rng));
        const auto y = coord_seq(random_finite_point(rng));
        const double c = rng.uniform(-5.0, 5.0);
        const std::size_t K = 64;
        const double nx = weighted_norm(x, space, K).partial_norm;
        const double ny = weighted_norm(y, space, K).partial_norm;
        const double ncx = weighted_norm(scaled(x, c), space, K).partial_norm;
        CHECK_THAT(ncx, WithinAbs(std::abs(c) * nx, 1e-12 * std::max(1.0, std::abs(c) * nx)));
        const double nxy = weighted_norm(added(x, y), space, K).partial_norm;
        CHECK(nxy <= nx + ny + 1e-12 * std::max(1.0, nx + ny));
    }
}

TEST_CASE("embedding certificates for the proposition's branches", "[weighted_spaces]") {
    SECTION("p < q with summable ratio") {
        const auto cert = embedding_check(2.0, WeightSeq::power_law(-2.0), 1.0,
                                          WeightSeq::constant(1.0), 100);
        CHECK(cert.embeds());
    }
    SECTION("identity embedding via the sup branch") {
        const auto cert = embedding_check(2.0, WeightSeq::constant(1.0), 2.0,
                                          WeightSeq::constant(1.0), 100);
        CHECK(cert.embeds());
    }
    SECTION("growing ratio fails the hypothesis") {
        const auto cert = embedding_check(1.0, WeightSeq::power_law(1.0), 2.0,
                                          WeightSeq::constant(1.0), 100);
        CHECK(cert.verdict == EmbeddingCertificate::Verdict::Unknown);
    }
}

TEST_CASE("embedding certificate obeys the Hoelder bound on truncations", "[weighted_spaces]") {
    // p = 1 < q = 2, gamma_k = k^{-2}, alpha = 1: r = qp/(q-p) = 2.
    const WeightSeq gamma = WeightSeq::power_law(-2.0);
    const WeightSeq alpha = WeightSeq::constant(1.0);
    const std::size_t K = 200;
    const auto cert = embedding_check(2.0, gamma, 1.0, alpha, K);
    REQUIRE(cert.embeds());
    REQUIRE(cert.tail_bound);
    const double gamma_r_norm = std::pow(cert.partial_sum + *cert.tail_bound, 0.5);

    RngStream rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = coord_seq(random_finite_point(rng, 100));
        const double lhs = weighted_norm(x, SpaceSpec(1.0, alpha), K).partial_norm;
        const double rhs = weighted_norm(x, SpaceSpec(2.0, gamma), K).partial_norm;
        CHECK(lhs <= rhs * gamma_r_norm + 1e-10);
    }
}

TEST_CASE("scale-sequence summability report", "[weighted_spaces]") {
    SECTION("Besov-style ratio converges") {
        // gamma_k = k^{-2}, delta_k = k^{-1}, p = 2: sum k^{-2}
        const auto rep = gamma_summability_check(WeightSeq::power_law(-2.0),
                                                 SpaceSpec(2.0, WeightSeq::power_law(-1.0)), 500);
        CHECK_FALSE(rep.divergence_warning);
        REQUIRE(rep.tail_bound);
        KahanSum oracle;
        for (std::size_t k = 1; k <= 500; ++k) oracle.add(std::pow(static_cast<double>(k), -2.0));
        CHECK_THAT(rep.partial_sum, WithinRel(oracle.value(), 1e-13));
    }
    SECTION("constant ratio diverges with a warning") {
        const auto rep = gamma_summability_check(WeightSeq::constant(1.0),
                                                 SpaceSpec(1.0, WeightSeq::constant(1.0)), 100);
        CHECK(rep.divergence_warning);
    }
    SECTION("geometric scale sums to one") {
        const auto rep = gamma_summability_check(WeightSeq::geometric(0.5),
                                                 SpaceSpec(1.0, WeightSeq::constant(1.0)), 60);
        CHECK_FALSE(rep.divergence_warning);
        REQUIRE(rep.tail_bound);
        CHECK_THAT(rep.partial_sum + *rep.tail_bound, WithinAbs(1.0, 1e-12));
        CHECK_THAT(rep.partial_sum, WithinRel(1.0, 1e-12));
    }
}

TEST_CASE("weight construction rejects non-positive parameters", "[weighted_spaces]") {
    CHECK_THROWS_AS(WeightSeq::constant(0.0), std::invalid_argument);
    CHECK_THROWS_AS(WeightSeq::constant(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(WeightSeq::power_law(1.0, -2.0), std::invalid_argument);
    CHECK_THROWS_AS(WeightSeq::prefix_power_tail({1.0, 0.0}, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(SpaceSpec(0.5, WeightSeq::constant(1.0)), std::invalid_argument);
}

TEST_CASE("weights and points round-trip through JSON", "[weighted_spaces]") {
    const auto w = WeightSeq::prefix_power_tail({1.0, 0.5}, -2.0, 3.0);
    const auto w2 = WeightSeq::from_json(w.to_json());
    CHECK(w == w2);
    const auto g = WeightSeq::geometric(0.5, 2.0);
    CHECK(g == WeightSeq::from_json(g.to_json()));

    Point p = Point::measure_shift();
    p.set(3, -1.25).with_tail(TailRule{0.5, -1.0, 0.9, 7});
    const auto p2 = Point::from_json(p.to_json());
    CHECK(p2.base() == Point::Base::MeasureShift);
    CHECK(p2.raw_coord(3) == -1.25);
    CHECK(p2.raw_coord(10) == p.raw_coord(10));
}
