#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "omlab/om_functional.hpp"
#include "omlab/product_measure.hpp"
#include "omlab/quadrature.hpp"
#include "omlab/shift_density.hpp"

namespace omlab {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Open ball in the truncated metric: sum_{k<=K} |(y_k - c_k)/alpha_k|^p < r^p.
struct BallSpec {
    Point center;
    double radius;
    SpaceSpec metric;
    std::size_t K;

    BallSpec(Point c, double r, SpaceSpec m, std::size_t k)
        : center(std::move(c)), radius(r), metric(std::move(m)), K(k) {
        if (!(radius > 0.0)) throw std::invalid_argument("BallSpec: radius must be positive");
        if (K < 1) throw std::invalid_argument("BallSpec: K must be >= 1");
    }
};

struct MCEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> center_coords(const ProductMeasureSpec& spec, const Point& c,
                                         std::size_t K) {
    std::vector<double> out(K);
    for (std::size_t k = 1; k <= K; ++k) out[k - 1] = spec.coord(c, k);
    return out;
}

} // namespace detail

/// Fraction of n draws whose first K coordinates land in the ball, with
/// binomial standard error.
inline MCEstimate mc_ball_mass(const ProductMeasureSpec& spec, const BallSpec& ball,
                               std::size_t n, std::uint64_t seed, unsigned workers = 1) {
    const std::size_t K = ball.K;
    const auto c = detail::center_coords(spec, ball.center, K);
    std::vector<double> alpha(K);
    for (std::size_t k = 1; k <= K; ++k) alpha[k - 1] = ball.metric.weights(k);
    const double p = ball.metric.p;
    const double rp = std::pow(ball.radius, p);

    const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
    std::vector<std::uint64_t> hits(blocks, 0);
    sample_visit(spec, K, n, seed, workers, [&](std::size_t j, const double* x) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += std::pow(std::abs(x[k] - c[k]) / alpha[k], p);
        if (s < rp) ++hits[j / kSampleBlock];
    });
    std::uint64_t total = 0;
    for (auto h : hits) total += h;
    const double mean = static_cast<double>(total) / static_cast<double>(n);
    const double se = std::sqrt(std::max(0.0, mean * (1.0 - mean)) / static_cast<double>(n));
    return {mean, se, n, seed};
}

/// Deterministic ball mass by nested adaptive quadrature, K <= 3 only. Each
/// level integrates the marginal density against the inner ball mass at the
/// reduced radius r(z) = (r^p - |z/alpha|^p)^{1/p}.
inline double quad_ball_mass(const ProductMeasureSpec& spec, const BallSpec& ball) {
    const std::size_t K = ball.K;
    if (K > 3) throw std::invalid_argument("quad_ball_mass: only K <= 3 is supported");
    const auto c = detail::center_coords(spec, ball.center, K);
    const double p = ball.metric.p;
    std::vector<double> alpha(K), gam(K), mm(K);
    for (std::size_t k = 1; k <= K; ++k) {
        alpha[k - 1] = ball.metric.weights(k);
        gam[k - 1] = spec.gamma_at(k);
        mm[k - 1] = spec.shift_at(k);
    }
    const auto& ref = spec.ref();
    static constexpr double tols[4] = {0.0, 1e-13, 1e-11, 1e-9};

    // Integrates coordinates 1..k over the ball of radius r around c.
    std::function<double(std::size_t, double)> level = [&](std::size_t k, double r) -> double {
        if (r <= 0.0) return 0.0;
        const std::size_t i = k - 1;
        auto marginal = [&](double z) {
            return ref.density((z - mm[i]) / gam[i]) / gam[i];
        };
        const double lo = c[i] - alpha[i] * r;
        const double hi = c[i] + alpha[i] * r;
        std::vector<double> brk;
        if (mm[i] > lo && mm[i] < hi) brk.push_back(mm[i]); // density kink for p < 2
        // The quadrature tolerance is relative. Inner integrals vanish toward
        // the ball boundary, where a tight relative target would force full
        // subdivision depth for no absolute gain, so the relative tolerance
        // loosens inward: the absolute contribution of an inner call is
        // damped by the outer integrand anyway.
        if (k == 1) {
            return quad::integrate_breakpoints(marginal, lo, hi, brk, tols[K]).value;
        }
        auto f = [&](double z) {
            const double frac = std::pow(std::abs(z - c[i]) / alpha[i], p);
            const double rp = std::pow(r, p) - frac;
            if (rp <= 0.0) return 0.0;
            return marginal(z) * level(k - 1, std::pow(rp, 1.0 / p));
        };
        brk.push_back(c[i]); // reduced radius has a kink at the centre
        return quad::integrate_breakpoints(f, lo, hi, brk, tols[K - k + 1]).value;
    };
    return level(K, ball.radius);
}

struct RatioRow {
    double r;
    std::size_t K;
    std::size_t n;
    double est;
    double stderr_;
    double predicted;
    double z;
    // Raw shared-sample masses behind est (not part of the CSV contract).
    double num_mass = 0.0;
    double den_mass = 0.0;
};

namespace detail {

/// Shared-draw ratio estimates mu(B(c_num, r)) / mu(B(c_den, r)) over a
/// radius grid. Numerator and denominator reuse the same draws (common
/// random numbers); the standard error is the delta-method expansion for the
/// correlated binomial pair.
inline std::vector<RatioRow> mc_ratio_grid(const ProductMeasureSpec& spec,
                                           const std::vector<double>& c_num,
                                           const std::vector<double>& c_den,
                                           const SpaceSpec& metric,
                                           const std::vector<double>& r_grid, std::size_t K,
                                           std::size_t n, std::uint64_t seed, double predicted,
                                           unsigned workers) {
    std::vector<double> alpha(K);
    for (std::size_t k = 1; k <= K; ++k) alpha[k - 1] = metric.weights(k);
    const double p = metric.p;
    std::vector<double> rp(r_grid.size());
    for (std::size_t i = 0; i < r_grid.size(); ++i) rp[i] = std::pow(r_grid[i], p);

    const std::size_t R = r_grid.size();
    const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
    std::vector<std::uint64_t> cn(blocks * R, 0), cd(blocks * R, 0), cb(blocks * R, 0);
    sample_visit(spec, K, n, seed, workers, [&](std::size_t j, const double* x) {
        double sn = 0.0, sd = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            sn += std::pow(std::abs(x[k] - c_num[k]) / alpha[k], p);
            sd += std::pow(std::abs(x[k] - c_den[k]) / alpha[k], p);
        }
        const std::size_t b = j / kSampleBlock;
        for (std::size_t i = 0; i < R; ++i) {
            const bool in_n = sn < rp[i];
            const bool in_d = sd < rp[i];
            if (in_n) ++cn[b * R + i];
            if (in_d) ++cd[b * R + i];
            if (in_n && in_d) ++cb[b * R + i];
        }
    });

    std::vector<RatioRow> rows;
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < R; ++i) {
        std::uint64_t tn = 0, td = 0, tb = 0;
        for (std::size_t b = 0; b < blocks; ++b) {
            tn += cn[b * R + i];
            td += cd[b * R + i];
            tb += cb[b * R + i];
        }
        if (td == 0)
            throw NumericError("mc_ratio_grid: denominator ball received no draws at r=" +
                               std::to_string(r_grid[i]) + "; increase n");
        const double pn = static_cast<double>(tn) / nn;
        const double pd = static_cast<double>(td) / nn;
        const double pb = static_cast<double>(tb) / nn;
        const double est = pn / pd;
        const double vn = pn * (1.0 - pn);
        const double vd = pd * (1.0 - pd);
        const double cov = pb - pn * pd;
        double var = (vn / (pd * pd) + pn * pn * vd / (pd * pd * pd * pd) -
                      2.0 * pn * cov / (pd * pd * pd)) /
                     nn;
        var = std::max(var, 0.0);
        const double se = std::sqrt(var);
        const double z = (se > 0.0) ? (est - predicted) / se : 0.0;
        rows.push_back({r_grid[i], K, n, est, se, predicted, z, pn, pd});
    }
    return rows;
}

} // namespace detail

/// Ratio mu(B(h, r)) / mu(B(m, r)) over a radius grid against the closed-form
/// prediction exp(-nl_{gamma,m}(h)). Requires decided membership; points with
/// an infinite value predict ratio 0.
inline std::vector<RatioRow> om_ratio_experiment(const ProductMeasureSpec& spec, const Point& h,
                                                 const std::vector<double>& r_grid,
                                                 std::size_t K, std::size_t n,
                                                 std::uint64_t seed, unsigned workers = 1) {
    const auto ev = formal_neg_log_density(spec, h);
    if (ev.membership == OmEvaluation::Membership::Unknown)
        throw HypothesisError("om_ratio_experiment: membership of h undecided");
    const double predicted = ev.out() ? 0.0 : std::exp(-ev.value);
    const auto c_num = detail::center_coords(spec, h, K);
    const auto c_den = detail::center_coords(spec, Point::measure_shift(), K);
    return detail::mc_ratio_grid(spec, c_num, c_den, spec.ambient(), r_grid, K, n, seed,
                                 predicted, workers);
}

/// Ratio mu(B(x*+h, eps)) / mu(B(x*, eps)) whose limit is the shift density
/// r_{-h}(x*). Both the centre and the shift must have finite support.
inline std::vector<RatioRow> continuity_ratio_check(const ProductMeasureSpec& spec,
                                                    const Point& x_star, const Point& h,
                                                    const std::vector<double>& r_grid,
                                                    std::size_t K, std::size_t n,
                                                    std::uint64_t seed, unsigned workers = 1) {
    if (!h.finite_support() || !x_star.finite_support())
        throw std::invalid_argument("continuity_ratio_check: finite-support points required");
    const double predicted =
        std::exp(shift_density_generic(spec, h.negated(), x_star, K).log_value);
    auto c_den = detail::center_coords(spec, x_star, K);
    auto c_num = c_den;
    for (std::size_t k = 1; k <= K; ++k) c_num[k - 1] += h.raw_coord(k);
    return detail::mc_ratio_grid(spec, c_num, c_den, spec.ambient(), r_grid, K, n, seed,
                                 predicted, workers);
}

/// Even test function with optional kink locations for the quadrature.
struct SymmetricFn {
    std::string name;
    std::function<double(double)> f;
    std::vector<double> breakpoints;

    double operator()(double u) const { return f(u); }
};

inline SymmetricFn fn_gaussian(double a) {
    return {"gaussian(" + std::to_string(a) + ")",
            [a](double u) { return std::exp(-a * u * u); }, {}};
}
inline SymmetricFn fn_laplace(double a) {
    return {"laplace(" + std::to_string(a) + ")",
            [a](double u) { return std::exp(-a * std::abs(u)); }, {0.0}};
}
inline SymmetricFn fn_cauchy(double a) {
    return {"cauchy(" + std::to_string(a) + ")",
            [a](double u) { return 1.0 / (1.0 + a * u * u); }, {}};
}
inline SymmetricFn fn_sech(double a) {
    return {"sech(" + std::to_string(a) + ")",
            [a](double u) { return 1.0 / std::cosh(a * u); }, {}};
}
inline SymmetricFn fn_tent(double w) {
    return {"tent(" + std::to_string(w) + ")",
            [w](double u) { return std::max(0.0, 1.0 - std::abs(u) / w); }, {-w, 0.0, w}};
}
inline SymmetricFn fn_indicator(double w) {
    return {"indicator(" + std::to_string(w) + ")",
            [w](double u) { return std::abs(u) <= w ? 1.0 : 0.0; }, {-w, w}};
}
/// Even, nonnegative, deliberately non-monotone.
inline SymmetricFn fn_ring(double a) {
    return {"ring(" + std::to_string(a) + ")",
            [a](double u) { return u * u * std::exp(-a * u * u); }, {}};
}

/// Even and nonincreasing on [0, range], checked on a grid.
inline bool has_symmetric_decay(const SymmetricFn& fn, double range, int grid = 400) {
    double prev = fn(0.0);
    for (int i = 1; i <= grid; ++i) {
        const double u = range * i / grid;
        const double pos = fn(u), neg = fn(-u);
        if (std::abs(pos - neg) > 1e-11 * std::max(1.0, std::abs(pos))) return false;
        if (pos > prev + 1e-11) return false;
        prev = pos;
    }
    return true;
}

inline bool is_even_nonnegative(const SymmetricFn& fn, double range, int grid = 400) {
    for (int i = 0; i <= grid; ++i) {
        const double u = range * i / grid;
        const double pos = fn(u), neg = fn(-u);
        if (pos < -1e-12 || std::abs(pos - neg) > 1e-11 * std::max(1.0, std::abs(pos)))
            return false;
    }
    return true;
}

struct InequalityCheck {
    double lhs;
    double rhs;
    bool pass;
};

/// int_{-s}^{s} f(u+v) g(u) du <= int_{-s}^{s} f(u) g(u) du for f, g with the
/// symmetric decay property.
inline InequalityCheck lemma_1d_inequality_check(const SymmetricFn& f, const SymmetricFn& g,
                                                 double s, double v) {
    if (!(s > 0.0)) throw std::invalid_argument("lemma_1d_inequality_check: s must be > 0");
    const double range = std::max(s, std::abs(v) + s);
    if (!has_symmetric_decay(f, range) || !has_symmetric_decay(g, range))
        throw std::invalid_argument(
            "lemma_1d_inequality_check: inputs lack the symmetric decay property");
    std::vector<double> brk = g.breakpoints;
    for (double b : f.breakpoints) brk.push_back(b - v);
    const double lhs =
        quad::integrate_breakpoints([&](double u) { return f(u + v) * g(u); }, -s, s, brk, 1e-12)
            .value;
    std::vector<double> brk0 = g.breakpoints;
    brk0.insert(brk0.end(), f.breakpoints.begin(), f.breakpoints.end());
    const double rhs =
        quad::integrate_breakpoints([&](double u) { return f(u) * g(u); }, -s, s, brk0, 1e-12)
            .value;
    return {lhs, rhs, lhs <= rhs + 1e-9};
}

/// int_{-s}^{s} e^{-|u+v|^p} L(u) du >= e^{-|v|^p} int_{-s}^{s} e^{-|u|^p} L(u) du
/// for p in [1,2] and even nonnegative L.
inline InequalityCheck besov_shift_inequality_check(double p, const SymmetricFn& lambda,
                                                    double s, double v) {
    if (!(p >= 1.0 && p <= 2.0))
        throw std::invalid_argument("besov_shift_inequality_check: p must lie in [1, 2]");
    if (!(s > 0.0)) throw std::invalid_argument("besov_shift_inequality_check: s must be > 0");
    if (!is_even_nonnegative(lambda, s))
        throw std::invalid_argument(
            "besov_shift_inequality_check: lambda must be even and nonnegative");
    std::vector<double> brk = lambda.breakpoints;
    brk.push_back(-v);
    const double lhs = quad::integrate_breakpoints(
                           [&](double u) { return std::exp(-std::pow(std::abs(u + v), p)) *
                                                  lambda(u); },
                           -s, s, brk, 1e-12)
                           .value;
    std::vector<double> brk0 = lambda.breakpoints;
    brk0.push_back(0.0);
    const double base = quad::integrate_breakpoints(
                            [&](double u) { return std::exp(-std::pow(std::abs(u), p)) *
                                                   lambda(u); },
                            -s, s, brk0, 1e-12)
                            .value;
    const double rhs = std::exp(-std::pow(std::abs(v), p)) * base;
    return {lhs, rhs, lhs >= rhs - 1e-9};
}

/// Random member of the symmetric-decay family (for randomized suites).
inline SymmetricFn random_decay_fn(RngStream& rng) {
    switch (rng.next_u64() % 6) {
    case 0: return fn_gaussian(rng.uniform(0.2, 3.0));
    case 1: return fn_laplace(rng.uniform(0.2, 3.0));
    case 2: return fn_cauchy(rng.uniform(0.2, 3.0));
    case 3: return fn_sech(rng.uniform(0.2, 3.0));
    case 4: return fn_tent(rng.uniform(0.5, 3.0));
    default: return fn_indicator(rng.uniform(0.5, 3.0));
    }
}

/// Random even nonnegative function (decay not required).
inline SymmetricFn random_even_fn(RngStream& rng) {
    const auto pick = rng.next_u64() % 7;
    if (pick == 6) return fn_ring(rng.uniform(0.3, 2.0));
    return random_decay_fn(rng);
}

struct TaylorRow {
    double v;
    double zeta;
};

struct TaylorReport {
    std::vector<TaylorRow> rows;
    double F0;
    double zeta_fd0;      // F''(0) / (2 F(0)) by central differences
    double max_abs_zeta;
};

/// zeta(v) = (F(v)/F(0) - 1) / v^2 with F(v) = int_{-s}^{s} rho(u+v) L(u) du.
/// For a C^2 density with integrable second derivative, zeta stays uniformly
/// bounded on |v| <= 1 and zeta(v) -> F''(0)/(2 F(0)) as v -> 0.
inline TaylorReport perturbation_taylor_check(const ReferenceDensity& ref,
                                              const SymmetricFn& lambda, double s,
                                              const std::vector<double>& v_grid) {
    if (!ref.claims_c2() || !ref.claims_second_derivative_l1())
        throw HypothesisError(
            "perturbation_taylor_check: reference density must be C^2 with integrable second "
            "derivative");
    if (!has_symmetric_decay(lambda, s))
        throw std::invalid_argument(
            "perturbation_taylor_check: lambda lacks the symmetric decay property");
    auto F = [&](double v) {
        return quad::integrate_breakpoints([&](double u) { return ref.density(u + v) * lambda(u); },
                                           -s, s, lambda.breakpoints, 1e-12)
            .value;
    };
    TaylorReport rep;
    rep.F0 = F(0.0);
    const double h = 1e-3;
    rep.zeta_fd0 = (F(h) - 2.0 * rep.F0 + F(-h)) / (h * h) / (2.0 * rep.F0);
    rep.max_abs_zeta = 0.0;
    for (double v : v_grid) {
        if (std::abs(v) > 1.0)
            throw std::invalid_argument("perturbation_taylor_check: grid must satisfy |v| <= 1");
        if (v == 0.0) continue;
        const double zeta = (F(v) / rep.F0 - 1.0) / (v * v);
        rep.rows.push_back({v, zeta});
        rep.max_abs_zeta = std::max(rep.max_abs_zeta, std::abs(zeta));
    }
    return rep;
}

} // namespace omlab
