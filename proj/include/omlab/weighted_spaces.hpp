#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "omlab/kahan.hpp"
#include "omlab/point.hpp"
#include "omlab/series.hpp"
#include "omlab/weights.hpp"

namespace omlab {

/// Absolute coordinate sequence: finite map plus optional closed-form tail.
/// This is the shape every norm/summability routine consumes; points and
/// residuals x - m are converted into it first.
struct CoordSeq {
    std::map<std::size_t, double> entries;
    std::optional<TailRule> tail;

    double at(std::size_t k) const {
        double v = 0.0;
        if (auto it = entries.find(k); it != entries.end()) v = it->second;
        if (tail) v += (*tail)(k);
        return v;
    }

    std::size_t max_entry() const { return entries.empty() ? 0 : entries.rbegin()->first; }
    bool finite_support() const { return !tail || tail->coeff == 0.0; }
};

inline CoordSeq coord_seq(const Point& x) {
    if (x.base() != Point::Base::Zero)
        throw std::invalid_argument(
            "coord_seq: point is relative to a measure shift; resolve it against the measure");
    CoordSeq s;
    s.entries = x.delta();
    if (x.tail() && x.tail()->coeff != 0.0) s.tail = x.tail();
    return s;
}

/// a - b. Returns nullopt when the two tails cannot be combined exactly
/// (different rule shapes); callers must then fall back to partial data.
inline std::optional<CoordSeq> coord_diff(const CoordSeq& a, const CoordSeq& b) {
    CoordSeq out;
    out.entries = a.entries;
    for (const auto& [k, v] : b.entries) {
        auto [it, inserted] = out.entries.try_emplace(k, -v);
        if (!inserted) {
            it->second -= v;
            if (it->second == 0.0) out.entries.erase(it);
        }
    }
    const bool a_has = a.tail && a.tail->coeff != 0.0;
    const bool b_has = b.tail && b.tail->coeff != 0.0;
    if (!a_has && !b_has) return out;
    if (a_has && !b_has) {
        out.tail = a.tail;
        return out;
    }
    if (!a_has && b_has) {
        out.tail = b.tail->negated();
        return out;
    }
    if (a.tail->power == b.tail->power && a.tail->ratio == b.tail->ratio &&
        a.tail->start == b.tail->start) {
        TailRule t = *a.tail;
        t.coeff -= b.tail->coeff;
        if (t.coeff != 0.0) out.tail = t;
        return out;
    }
    return std::nullopt; // incompatible closed forms
}

/// Result of a truncated weighted norm. partial_norm is the exact
/// (sum_{k<=K} |x_k/alpha_k|^p)^{1/p}. tail_bound bounds the p-th-power tail
/// sum_{k>K} |x_k/alpha_k|^p: a finite value is a rigorous upper bound, +inf
/// certifies divergence, and nullopt means no certificate is available.
struct NormResult {
    double partial_norm;
    std::optional<double> tail_bound;
    std::size_t K;

    bool tail_divergent() const { return tail_bound && std::isinf(*tail_bound); }
    bool tail_finite() const { return tail_bound && std::isfinite(*tail_bound); }
};

namespace detail {

inline series::TermRule weight_inverse_rule(const WeightSeq& w) {
    return w.inverse_tail_rule();
}

} // namespace detail

inline NormResult weighted_norm(const CoordSeq& x, const SpaceSpec& space, std::size_t K) {
    if (K < 1) throw std::invalid_argument("weighted_norm: K must be >= 1");
    const double p = space.p;
    const WeightSeq& alpha = space.weights;

    KahanSum head;
    if (x.tail && x.tail->coeff != 0.0) {
        for (std::size_t k = 1; k <= K; ++k) {
            const double v = x.at(k);
            if (v != 0.0) head.add(std::pow(std::abs(v) / alpha(k), p));
        }
    } else {
        for (const auto& [k, v] : x.entries) {
            if (k > K) break;
            head.add(std::pow(std::abs(v) / alpha(k), p));
        }
    }
    const double partial = std::pow(head.value(), 1.0 / p);

    // Tail: exact terms for k in (K, Kx], then a certified rule bound beyond.
    std::optional<double> tail_bound;
    if (x.finite_support()) {
        KahanSum rest;
        for (auto it = x.entries.upper_bound(K); it != x.entries.end(); ++it)
            rest.add(std::pow(std::abs(it->second) / alpha(it->first), p));
        tail_bound = rest.value();
    } else {
        const std::size_t rule_from =
            std::max({K + 1, x.tail->start, alpha.rule_start(), x.max_entry() + 1});
        KahanSum rest;
        for (std::size_t k = K + 1; k < rule_from; ++k) {
            const double v = x.at(k);
            if (v != 0.0) rest.add(std::pow(std::abs(v) / alpha(k), p));
        }
        const auto combined = series::TermRule::multiply(x.tail->term_rule(),
                                                         detail::weight_inverse_rule(alpha))
                                  .abs_pow(p);
        if (auto cert = series::certify_tail(combined, rule_from)) {
            if (cert->cls == series::SumClass::Divergent)
                tail_bound = std::numeric_limits<double>::infinity();
            else
                tail_bound = rest.value() + cert->bound;
        }
    }
    return NormResult{partial, tail_bound, K};
}

inline NormResult weighted_norm(const Point& x, const SpaceSpec& space, std::size_t K) {
    return weighted_norm(coord_seq(x), space, K);
}

/// One-directional embedding certificate for l^q_gamma into l^p_alpha. The
/// verdict is "embeds" only when the sufficient condition is numerically
/// certified; failure of the condition yields "unknown", never a refutation.
struct EmbeddingCertificate {
    enum class Verdict { Embeds, Unknown };
    Verdict verdict;
    std::string branch;
    double partial_sum = 0.0;
    std::optional<double> tail_bound;
    std::string detail;

    bool embeds() const { return verdict == Verdict::Embeds; }
};

inline EmbeddingCertificate embedding_check(double q, const WeightSeq& gamma, double p,
                                            const WeightSeq& alpha, std::size_t K) {
    if (!(p >= 1.0) || !(q >= 1.0))
        throw std::invalid_argument("embedding_check: p, q must lie in [1, inf)");
    EmbeddingCertificate cert;
    if (p < q) {
        const double r = q * p / (q - p);
        cert.branch = "p<q: gamma in l^{qp/(q-p)}_alpha";
        KahanSum s;
        for (std::size_t k = 1; k <= K; ++k) s.add(std::pow(gamma(k) / alpha(k), r));
        cert.partial_sum = s.value();
        const std::size_t rule_from = std::max({K + 1, gamma.rule_start(), alpha.rule_start()});
        KahanSum rest;
        for (std::size_t k = K + 1; k < rule_from; ++k)
            rest.add(std::pow(gamma(k) / alpha(k), r));
        const auto ratio_rule =
            series::TermRule::multiply(gamma.tail_rule(), detail::weight_inverse_rule(alpha))
                .abs_pow(r);
        auto tail = series::certify_tail(ratio_rule, rule_from);
        if (tail && tail->cls == series::SumClass::Convergent) {
            cert.tail_bound = rest.value() + tail->bound;
            cert.verdict = EmbeddingCertificate::Verdict::Embeds;
            cert.detail = "partial sum + " + tail->how;
        } else {
            cert.verdict = EmbeddingCertificate::Verdict::Unknown;
            cert.detail = "summability of the ratio sequence not certified";
        }
        return cert;
    }
    // p >= q: need gamma in l^inf_alpha, certified only for eventually
    // monotone rules.
    cert.branch = "p>=q: gamma in l^inf_alpha";
    const double tail_exponent = gamma.exponent() - alpha.exponent();
    const double tail_ratio = gamma.ratio() / alpha.ratio();
    if (tail_ratio > 1.0 || (tail_ratio == 1.0 && tail_exponent > 0.0)) {
        cert.verdict = EmbeddingCertificate::Verdict::Unknown;
        cert.detail = "ratio sequence is unbounded; boundedness hypothesis fails";
        return cert;
    }
    // Walk past the turnover point of k^e * q^k, after which the rule is
    // nonincreasing; the supremum is attained on the walked prefix.
    std::size_t k0 = std::max(gamma.rule_start(), alpha.rule_start());
    while (tail_ratio < 1.0 &&
           std::pow(1.0 + 1.0 / static_cast<double>(k0), std::max(tail_exponent, 0.0)) *
                   tail_ratio >=
               1.0)
        ++k0;
    double sup = 0.0;
    for (std::size_t k = 1; k <= k0 + 1; ++k) sup = std::max(sup, gamma(k) / alpha(k));
    cert.partial_sum = sup;
    cert.verdict = EmbeddingCertificate::Verdict::Embeds;
    cert.detail = "ratio nonincreasing beyond k=" + std::to_string(k0) +
                  ", sup <= " + std::to_string(sup);
    return cert;
}

/// Partial sums and tail certificate for sum |gamma_k/alpha_k|^p, the
/// necessary admissibility condition on a scale sequence. A certified
/// divergence is reported as a spec-inconsistency warning.
struct SummabilityReport {
    double partial_sum;
    std::optional<double> tail_bound;
    bool divergence_warning;
    std::size_t K;
    std::string detail;
};

inline SummabilityReport gamma_summability_check(const WeightSeq& gamma, const SpaceSpec& ambient,
                                                 std::size_t K) {
    const double p = ambient.p;
    const WeightSeq& alpha = ambient.weights;
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) s.add(std::pow(gamma(k) / alpha(k), p));
    const std::size_t rule_from = std::max({K + 1, gamma.rule_start(), alpha.rule_start()});
    KahanSum rest;
    for (std::size_t k = K + 1; k < rule_from; ++k) rest.add(std::pow(gamma(k) / alpha(k), p));
    const auto rule =
        series::TermRule::multiply(gamma.tail_rule(), detail::weight_inverse_rule(alpha))
            .abs_pow(p);
    auto tail = series::certify_tail(rule, rule_from);

    SummabilityReport rep{s.value(), std::nullopt, false, K, ""};
    if (!tail) {
        rep.detail = "no tail certificate";
        return rep;
    }
    if (tail->cls == series::SumClass::Divergent) {
        rep.tail_bound = std::numeric_limits<double>::infinity();
        rep.divergence_warning = true;
        rep.detail = "scale sequence not summable in the ambient space (" + tail->how + ")";
    } else {
        rep.tail_bound = rest.value() + tail->bound;
        rep.detail = tail->how;
    }
    return rep;
}

} // namespace omlab
