#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>

#include "omlab/kahan.hpp"

namespace omlab::series {

/// Closed-form term rule t(k) = coeff * k^power * ratio^k, valid for k >= start.
/// This class is closed under the operations the library needs: taking
/// absolute values, raising to a positive power, and multiplying two rules.
struct TermRule {
    double coeff = 0.0;
    double power = 0.0;
    double ratio = 1.0; // must be > 0
    std::size_t start = 1;

    double operator()(std::size_t k) const {
        if (k < start || coeff == 0.0) return 0.0;
        double v = coeff * std::pow(static_cast<double>(k), power);
        if (ratio != 1.0) v *= std::pow(ratio, static_cast<double>(k));
        return v;
    }

    TermRule abs_pow(double e) const {
        return TermRule{std::pow(std::abs(coeff), e), power * e, std::pow(ratio, e), start};
    }

    TermRule scaled(double c) const { return TermRule{coeff * c, power, ratio, start}; }

    /// Product rule, valid from the later of the two start indices.
    static TermRule multiply(const TermRule& a, const TermRule& b) {
        return TermRule{a.coeff * b.coeff, a.power + b.power, a.ratio * b.ratio,
                        std::max(a.start, b.start)};
    }

    bool is_zero() const { return coeff == 0.0; }
};

enum class SumClass { Convergent, Divergent };

/// Certificate for the tail sum S = sum_{k >= from} |t(k)|.
/// Convergent certificates carry a rigorous upper bound on S; divergent
/// certificates record why the partial sums exceed any bound.
struct TailCertificate {
    SumClass cls;
    double bound; // upper bound on the tail sum (Convergent) or +inf (Divergent)
    std::size_t from;
    std::string how;
};

inline double infinity() { return std::numeric_limits<double>::infinity(); }

/// Decide sum_{k >= from} |t(k)| for a term rule. The rule class is small
/// enough that every case is decidable:
///   ratio > 1            -> divergent (terms unbounded)
///   ratio == 1, power >= -1 -> divergent (p-series / non-vanishing terms)
///   ratio == 1, power <  -1 -> convergent, integral comparison bound
///   ratio < 1            -> convergent, geometric-ratio bound
std::optional<TailCertificate> certify_tail(const TermRule& rule, std::size_t from);

inline std::optional<TailCertificate> certify_tail(const TermRule& rule, std::size_t from) {
    if (!(rule.ratio > 0.0) || !std::isfinite(rule.coeff) || !std::isfinite(rule.power))
        return std::nullopt;
    const std::size_t f = std::max(from, rule.start);
    if (rule.is_zero())
        return TailCertificate{SumClass::Convergent, 0.0, f, "zero rule"};

    const double c = std::abs(rule.coeff);
    const double a = rule.power;
    const double q = rule.ratio;

    if (q > 1.0)
        return TailCertificate{SumClass::Divergent, infinity(), f, "ratio > 1: terms unbounded"};

    if (q == 1.0) {
        if (a >= -1.0)
            return TailCertificate{SumClass::Divergent, infinity(), f,
                                   "p-series with exponent >= -1 diverges"};
        // sum_{k >= f} k^a <= f^a + int_f^inf t^a dt for decreasing k^a
        const double fd = static_cast<double>(f);
        const double bound = c * (std::pow(fd, a) + std::pow(fd, a + 1.0) / (-a - 1.0));
        return TailCertificate{SumClass::Convergent, bound, f, "integral comparison"};
    }

    // q < 1: walk forward until the term ratio (1+1/k)^a * q certifies < 1,
    // then close with a geometric bound.
    KahanSum explicit_part;
    std::size_t k = f;
    constexpr std::size_t kCap = 50'000'000;
    auto term = [&](std::size_t j) {
        return c * std::pow(static_cast<double>(j), a) * std::pow(q, static_cast<double>(j));
    };
    while (true) {
        const double theta =
            std::pow(1.0 + 1.0 / static_cast<double>(k), std::max(a, 0.0)) * q;
        if (theta < 1.0) {
            const double bound = explicit_part.value() + term(k) / (1.0 - theta);
            return TailCertificate{SumClass::Convergent, bound, f, "geometric-ratio bound"};
        }
        explicit_part.add(term(k));
        ++k;
        if (k - f > kCap) return std::nullopt; // pathological parameters
    }
}

/// Exact partial sum sum_{from <= k <= to} t(k) (signed), compensated.
inline double partial_sum(const TermRule& rule, std::size_t from, std::size_t to) {
    KahanSum s;
    for (std::size_t k = std::max(from, rule.start); k <= to; ++k) s.add(rule(k));
    return s.value();
}

/// Certificate for sum_{k >= from} |t(k)| * |log|t(k)||, used by the
/// scale-sequence admissibility checks. For pure power rules the bound uses
/// log k <= k^eps / eps with eps = (-1 - power)/2; geometric rules absorb
/// the log factor into one extra power of k.
inline std::optional<TailCertificate> certify_tail_log_weighted(const TermRule& rule,
                                                                std::size_t from) {
    if (rule.is_zero())
        return TailCertificate{SumClass::Convergent, 0.0, from, "zero rule"};
    const double c = std::abs(rule.coeff);
    const double a = rule.power;
    const double q = rule.ratio;
    if (q > 1.0) return std::nullopt;
    if (q < 1.0) {
        // |log t(k)| <= |log c| + |a| log k + k |log q| <= |log c| + (|a| + |log q|) k
        auto base = certify_tail(rule, from);
        auto boosted =
            certify_tail(TermRule{c * (std::abs(a) + std::abs(std::log(q))), a + 1.0, q,
                                  rule.start},
                         from);
        if (!base || !boosted) return std::nullopt;
        const double bound = std::abs(std::log(c)) * base->bound + boosted->bound;
        return TailCertificate{SumClass::Convergent, bound, std::max(from, rule.start),
                               "log-weighted geometric bound"};
    }
    if (a >= -1.0)
        return TailCertificate{SumClass::Divergent, infinity(), from,
                               "base series already divergent"};
    const double eps = (-1.0 - a) / 2.0;
    // |log t(k)| <= |log c| + |a| log k, and log k <= k^eps / eps
    auto base = certify_tail(TermRule{c, a, 1.0, rule.start}, from);
    auto boosted = certify_tail(TermRule{c * std::abs(a) / eps, a + eps, 1.0, rule.start}, from);
    if (!base || !boosted) return std::nullopt;
    const double bound = std::abs(std::log(c)) * base->bound + boosted->bound;
    return TailCertificate{SumClass::Convergent, bound, std::max(from, rule.start),
                           "log-weighted integral comparison"};
}

} // namespace omlab::series
