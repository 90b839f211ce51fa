#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "omlab/kahan.hpp"
#include "omlab/om_functional.hpp"
#include "omlab/product_measure.hpp"
#include "omlab/quadrature.hpp"

namespace omlab {

/// Outcome of the shift dichotomy for a direction h: the shifted measure is
/// either equivalent to mu (sum (h_k/gamma_k)^2 < inf) or singular; verdicts
/// are only issued with a certificate, everything else stays undecided.
struct DichotomyVerdict {
    enum class V { Equivalent, Singular, Undecided };
    V verdict = V::Undecided;
    double partial_sum = 0.0;
    std::optional<double> tail_bound;
    std::size_t K = 0;
    std::string certificate;

    bool equivalent() const { return verdict == V::Equivalent; }
    bool singular() const { return verdict == V::Singular; }
};

inline DichotomyVerdict shepp_test(const ProductMeasureSpec& spec, const Point& h,
                                   std::size_t K) {
    if (h.base() != Point::Base::Zero)
        throw std::invalid_argument("shepp_test: shift directions are absolute points");
    const auto fisher = fisher_information(spec.ref());
    if (!fisher.finite)
        throw HypothesisError(
            "shepp_test: reference density has no finite Fisher information certificate");

    DichotomyVerdict out;
    out.K = K;
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) {
        const double r = h.raw_coord(k) / spec.gamma_at(k);
        if (r != 0.0) s.add(r * r);
    }
    out.partial_sum = s.value();

    if (h.finite_support()) {
        KahanSum rest;
        for (auto it = h.delta().upper_bound(K); it != h.delta().end(); ++it) {
            const double r = it->second / spec.gamma_at(it->first);
            rest.add(r * r);
        }
        out.tail_bound = rest.value();
        out.verdict = DichotomyVerdict::V::Equivalent;
        out.certificate = "finite support";
        return out;
    }

    const std::size_t rule_from =
        std::max({K + 1, h.tail()->start, spec.gamma().rule_start(), h.max_delta_index() + 1});
    KahanSum rest;
    for (std::size_t k = K + 1; k < rule_from; ++k) {
        const double r = h.raw_coord(k) / spec.gamma_at(k);
        if (r != 0.0) rest.add(r * r);
    }
    const auto rule = series::TermRule::multiply(h.tail()->term_rule(),
                                                 detail::gamma_inverse_rule(spec.gamma()))
                          .abs_pow(2.0);
    const auto cert = series::certify_tail(rule, rule_from);
    if (!cert) {
        out.certificate = "no certificate for the tail rule";
        return out;
    }
    if (cert->cls == series::SumClass::Convergent) {
        out.verdict = DichotomyVerdict::V::Equivalent;
        out.tail_bound = rest.value() + cert->bound;
        out.certificate = cert->how;
    } else {
        out.verdict = DichotomyVerdict::V::Singular;
        out.tail_bound = std::numeric_limits<double>::infinity();
        out.certificate = cert->how;
    }
    return out;
}

/// Hellinger integral of the unit-scale reference density against its copy
/// shifted by `shift`; only the normalised shift h_k/gamma_k ever enters.
inline double hellinger_1d(const ReferenceDensity& ref, double shift) {
    if (shift == 0.0) return 1.0;
    auto f = [&](double u) { return std::sqrt(ref.density(u) * ref.density(u - shift)); };
    // Kinks of either factor (relevant for exponential-power p < 2).
    const auto r = quad::integrate_line_breakpoints(f, {0.0, shift}, 1e-13);
    return r.value;
}

struct KakutaniResult {
    enum class Trend { PositiveLimit, DecayingToZero, Undecided };
    double partial_product = 1.0;
    double log_partial = 0.0;
    Trend trend = Trend::Undecided;
    std::size_t K = 0;
    std::string detail;
};

/// Partial Hellinger products prod_{k<=K} H(h_k/gamma_k) plus a trend
/// classification. The trend is decided from the Hellinger factors alone:
/// finite-support shifts give a constant tail; decaying rule tails are mapped
/// through two-sided numeric bounds c1 v^2 <= -log H(v) <= c2 v^2 (|v| <= 1)
/// to the square-summability of the normalised shift.
inline KakutaniResult kakutani_product(const ProductMeasureSpec& spec, const Point& h,
                                       std::size_t K) {
    if (h.base() != Point::Base::Zero)
        throw std::invalid_argument("kakutani_product: shift directions are absolute points");
    KakutaniResult out;
    out.K = K;
    KahanSum log_sum;
    for (std::size_t k = 1; k <= K; ++k) {
        const double r = h.raw_coord(k) / spec.gamma_at(k);
        if (r != 0.0) log_sum.add(std::log(hellinger_1d(spec.ref(), r)));
    }
    out.log_partial = log_sum.value();
    out.partial_product = std::exp(out.log_partial);

    if (h.finite_support()) {
        if (h.max_delta_index() <= K) {
            out.trend = KakutaniResult::Trend::PositiveLimit;
            out.detail = "finite support: factors equal 1 beyond k=" +
                         std::to_string(h.max_delta_index());
        }
        return out;
    }

    const auto rule = series::TermRule::multiply(h.tail()->term_rule(),
                                                 detail::gamma_inverse_rule(spec.gamma()));
    const std::size_t rule_from =
        std::max({K + 1, h.tail()->start, spec.gamma().rule_start(), h.max_delta_index() + 1});
    if (!detail::rule_decays(rule.abs_pow(1.0))) {
        out.trend = KakutaniResult::Trend::DecayingToZero;
        out.detail = "normalised shift does not vanish; infinitely many factors below 1";
        return out;
    }
    // Two-sided square comparison of -log H on (0, 1].
    double c1 = std::numeric_limits<double>::infinity(), c2 = 0.0;
    for (int i = 1; i <= 32; ++i) {
        const double v = static_cast<double>(i) / 32.0;
        const double t = -std::log(hellinger_1d(spec.ref(), v)) / (v * v);
        c1 = std::min(c1, t);
        c2 = std::max(c2, t);
    }
    if (!(c1 > 0.0) || !std::isfinite(c2)) {
        out.detail = "square comparison of the Hellinger exponent failed";
        return out;
    }
    const auto cert = series::certify_tail(rule.abs_pow(2.0), rule_from);
    if (!cert) {
        out.detail = "no certificate for the tail rule";
        return out;
    }
    if (cert->cls == series::SumClass::Convergent) {
        out.trend = KakutaniResult::Trend::PositiveLimit;
        out.detail = "sum of squared shifts certified finite; -log H <= " + std::to_string(c2) +
                     " v^2";
    } else {
        out.trend = KakutaniResult::Trend::DecayingToZero;
        out.detail = "sum of squared shifts certified divergent; -log H >= " +
                     std::to_string(c1) + " v^2";
    }
    return out;
}

/// Truncated log shift density. Exact whenever the shift has finite support
/// contained in [1:K]: all later factors are identically one.
struct ShiftDensityEval {
    double log_value = 0.0;
    std::size_t K = 0;
    std::vector<double> per_term_log;
    bool exact = false;
};

namespace detail {

inline void require_equivalent(const ProductMeasureSpec& spec, const Point& h, std::size_t K) {
    const auto verdict = shepp_test(spec, h, K);
    if (!verdict.equivalent())
        throw HypothesisError(
            "shift density: direction lacks an equivalence certificate (verdict: " +
            std::string(verdict.singular() ? "singular" : "undecided") + ")");
}

} // namespace detail

inline ShiftDensityEval shift_density_generic(const ProductMeasureSpec& spec, const Point& h,
                                              const Point& x, std::size_t K) {
    detail::require_equivalent(spec, h, K);
    ShiftDensityEval out;
    out.K = K;
    out.per_term_log.reserve(K);
    KahanSum s;
    const auto& ref = spec.ref();
    for (std::size_t k = 1; k <= K; ++k) {
        const double g = spec.gamma_at(k);
        const double xt = spec.residual(x, k) / g;
        const double ht = h.raw_coord(k) / g;
        const double term = (ht == 0.0) ? 0.0 : ref.neg_log(xt) - ref.neg_log(xt - ht);
        out.per_term_log.push_back(term);
        s.add(term);
    }
    out.log_value = s.value();
    out.exact = h.finite_support() && h.max_delta_index() <= K;
    return out;
}

/// Closed form for exponential-power products:
/// log r = sum gamma_k^{-p} (|x_k - m_k|^p - |x_k - m_k - h_k|^p).
inline ShiftDensityEval shift_density_besov(const ProductMeasureSpec& spec, const Point& h,
                                            const Point& x, std::size_t K) {
    if (spec.ref().tail_kind() != NegLogTailKind::ExactPower)
        throw std::invalid_argument("shift_density_besov: not an exponential-power spec");
    detail::require_equivalent(spec, h, K);
    const double p = spec.ref().tail_power();
    ShiftDensityEval out;
    out.K = K;
    out.per_term_log.reserve(K);
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) {
        const double g = spec.gamma_at(k);
        const double r = spec.residual(x, k);
        const double hk = h.raw_coord(k);
        const double term =
            (hk == 0.0) ? 0.0
                        : (std::pow(std::abs(r), p) - std::pow(std::abs(r - hk), p)) /
                              std::pow(g, p);
        out.per_term_log.push_back(term);
        s.add(term);
    }
    out.log_value = s.value();
    out.exact = h.finite_support() && h.max_delta_index() <= K;
    return out;
}

/// Closed form for Cauchy products:
/// log r = sum log(((x_k-m_k)^2 + gamma_k^2) / ((x_k-m_k-h_k)^2 + gamma_k^2)).
inline ShiftDensityEval shift_density_cauchy(const ProductMeasureSpec& spec, const Point& h,
                                             const Point& x, std::size_t K) {
    if (spec.ref().tail_kind() != NegLogTailKind::LogOnePlusSquare)
        throw std::invalid_argument("shift_density_cauchy: not a Cauchy spec");
    detail::require_equivalent(spec, h, K);
    ShiftDensityEval out;
    out.K = K;
    out.per_term_log.reserve(K);
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) {
        const double g = spec.gamma_at(k);
        const double r = spec.residual(x, k);
        const double hk = h.raw_coord(k);
        double term = 0.0;
        if (hk != 0.0) {
            const double a = r / g, b = (r - hk) / g;
            term = std::log1p(a * a) - std::log1p(b * b);
        }
        out.per_term_log.push_back(term);
        s.add(term);
    }
    out.log_value = s.value();
    out.exact = h.finite_support() && h.max_delta_index() <= K;
    return out;
}

/// Bounded test functional on the first K coordinates.
struct TestFunctional {
    std::string name;
    std::function<double(const double*, std::size_t)> eval;
};

inline TestFunctional functional_one() {
    return {"one", [](const double*, std::size_t) { return 1.0; }};
}

/// Indicator of the coordinate box prod_k [lo_k, hi_k].
inline TestFunctional functional_box(std::vector<double> lo, std::vector<double> hi) {
    return {"box", [lo = std::move(lo), hi = std::move(hi)](const double* x, std::size_t K) {
                for (std::size_t k = 0; k < K && k < lo.size(); ++k)
                    if (x[k] < lo[k] || x[k] > hi[k]) return 0.0;
                return 1.0;
            }};
}

/// Bounded 1-Lipschitz functional tanh(sum_k x_k / 2^k).
inline TestFunctional functional_soft() {
    return {"soft", [](const double* x, std::size_t K) {
                double s = 0.0, w = 0.5;
                for (std::size_t k = 0; k < K; ++k, w *= 0.5) s += w * x[k];
                return std::tanh(s);
            }};
}

/// Monte Carlo check of the change-of-variables identity
/// E_mu[f(x) r_h(x)] = E_mu[f(x+h)] on a shared draw set.
struct ChangeOfVariablesReport {
    double lhs;
    double rhs;
    double stderr_diff;
    double z;
    std::size_t n;
    std::uint64_t seed;
    std::string functional;
};

inline ChangeOfVariablesReport change_of_variables_check(const ProductMeasureSpec& spec,
                                                         const Point& h,
                                                         const TestFunctional& f, std::size_t K,
                                                         std::size_t n, std::uint64_t seed,
                                                         unsigned workers = 1) {
    detail::require_equivalent(spec, h, K);
    if (!h.finite_support() || h.max_delta_index() > K)
        throw std::invalid_argument(
            "change_of_variables_check: shift must have finite support within [1:K]");

    std::vector<double> habs(K), gam(K), mm(K);
    for (std::size_t k = 1; k <= K; ++k) {
        habs[k - 1] = h.raw_coord(k);
        gam[k - 1] = spec.gamma_at(k);
        mm[k - 1] = spec.shift_at(k);
    }
    const auto& ref = spec.ref();

    const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
    std::vector<double> bl(blocks, 0.0), br(blocks, 0.0), bd2(blocks, 0.0);
    sample_visit(spec, K, n, seed, workers, [&](std::size_t j, const double* x) {
        KahanSum logr;
        for (std::size_t k = 0; k < K; ++k) {
            if (habs[k] == 0.0) continue;
            const double xt = (x[k] - mm[k]) / gam[k];
            logr.add(ref.neg_log(xt) - ref.neg_log(xt - habs[k] / gam[k]));
        }
        const double lhs_j = f.eval(x, K) * std::exp(logr.value());
        std::vector<double> shifted(x, x + K);
        for (std::size_t k = 0; k < K; ++k) shifted[k] += habs[k];
        const double rhs_j = f.eval(shifted.data(), K);
        const std::size_t b = j / kSampleBlock;
        bl[b] += lhs_j;
        br[b] += rhs_j;
        const double d = lhs_j - rhs_j;
        bd2[b] += d * d;
    });
    KahanSum sl, sr, sd2;
    for (std::size_t b = 0; b < blocks; ++b) {
        sl.add(bl[b]);
        sr.add(br[b]);
        sd2.add(bd2[b]);
    }
    const double nn = static_cast<double>(n);
    const double lhs = sl.value() / nn;
    const double rhs = sr.value() / nn;
    const double mean_d = lhs - rhs;
    const double var_d = std::max(0.0, sd2.value() / nn - mean_d * mean_d);
    const double se = std::sqrt(var_d / nn);
    const double z = (se > 0.0) ? mean_d / se : 0.0;
    return {lhs, rhs, se, z, n, seed, f.name};
}

} // namespace omlab
