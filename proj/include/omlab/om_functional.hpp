#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "omlab/kahan.hpp"
#include "omlab/product_measure.hpp"

namespace omlab {

/// Value of the formal negative log-density at a point, together with the
/// membership verdict for its finiteness domain. Membership is three-valued:
/// rule-tailed points are only semidecidable and an honest "unknown" beats a
/// wrong boolean.
struct OmEvaluation {
    enum class Membership { In, Out, Unknown };

    double value = 0.0; // +inf when membership == Out
    Membership membership = Membership::Unknown;
    double partial_sum = 0.0;
    std::optional<double> tail_bound; // bound on the uncounted tail when In
    std::size_t K = 0;

    bool in() const { return membership == Membership::In; }
    bool out() const { return membership == Membership::Out; }
};

namespace detail {

inline series::TermRule gamma_inverse_rule(const WeightSeq& g) {
    return g.inverse_tail_rule();
}

inline bool rule_decays(const series::TermRule& r) {
    return r.ratio < 1.0 || (r.ratio == 1.0 && r.power < 0.0);
}

} // namespace detail

/// sum_k nl(gamma_k^{-1} (h_k - m_k)). Exact when the residual has finite
/// support; otherwise a partial sum plus a certified tail decision via the
/// reference density's registered tail comparison.
inline OmEvaluation formal_neg_log_density(const ProductMeasureSpec& spec, const Point& h,
                                           std::size_t k_hint = 0) {
    OmEvaluation ev;
    const auto res = spec.residual_seq(h);
    const auto& ref = spec.ref();

    if (!res) {
        // Incompatible closed-form tails: partial data only.
        const std::size_t K = std::max<std::size_t>(k_hint, 1000);
        KahanSum s;
        for (std::size_t k = 1; k <= K; ++k) {
            const double r = spec.residual(h, k);
            if (r != 0.0) s.add(ref.neg_log(r / spec.gamma_at(k)));
        }
        ev.partial_sum = s.value();
        ev.value = ev.partial_sum;
        ev.membership = OmEvaluation::Membership::Unknown;
        ev.K = K;
        return ev;
    }

    if (res->finite_support()) {
        KahanSum s;
        for (const auto& [k, v] : res->entries) s.add(ref.neg_log(v / spec.gamma_at(k)));
        ev.partial_sum = s.value();
        ev.value = ev.partial_sum;
        ev.membership = OmEvaluation::Membership::In;
        ev.tail_bound = 0.0;
        ev.K = res->max_entry();
        return ev;
    }

    const std::size_t K = std::max({k_hint, std::size_t{1000}, res->max_entry(),
                                    res->tail->start, spec.gamma().rule_start()});
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) {
        const double r = res->at(k);
        if (r != 0.0) s.add(ref.neg_log(r / spec.gamma_at(k)));
    }
    ev.partial_sum = s.value();
    ev.K = K;

    const auto ratio_rule = series::TermRule::multiply(
        res->tail->term_rule(), detail::gamma_inverse_rule(spec.gamma()));
    const std::size_t from = K + 1;

    switch (ref.tail_kind()) {
    case NegLogTailKind::ExactPower: {
        const auto cert = series::certify_tail(ratio_rule.abs_pow(ref.tail_power()), from);
        if (!cert) break;
        if (cert->cls == series::SumClass::Convergent) {
            ev.membership = OmEvaluation::Membership::In;
            ev.tail_bound = cert->bound;
            ev.value = ev.partial_sum;
        } else {
            ev.membership = OmEvaluation::Membership::Out;
            ev.value = std::numeric_limits<double>::infinity();
        }
        return ev;
    }
    case NegLogTailKind::LogOnePlusSquare: {
        const auto cert2 = series::certify_tail(ratio_rule.abs_pow(2.0), from);
        if (!cert2) break;
        if (cert2->cls == series::SumClass::Convergent) {
            // log(1+x^2) <= x^2
            ev.membership = OmEvaluation::Membership::In;
            ev.tail_bound = cert2->bound;
            ev.value = ev.partial_sum;
        } else {
            // Divergence: terms either stay bounded away from zero, or decay
            // with log(1+x^2) >= log(2) x^2 on |x| <= 1.
            ev.membership = OmEvaluation::Membership::Out;
            ev.value = std::numeric_limits<double>::infinity();
        }
        return ev;
    }
    case NegLogTailKind::None:
        break;
    }

    ev.membership = OmEvaluation::Membership::Unknown;
    ev.value = ev.partial_sum;
    return ev;
}

/// Closed-form Besov evaluation ||h - m||_{l^p_gamma}^p, finite exactly on
/// m + l^p_gamma. Independent route from formal_neg_log_density (norm
/// machinery instead of the density's negative log).
inline OmEvaluation om_besov(const ProductMeasureSpec& spec, const Point& h) {
    const auto& ref = spec.ref();
    if (ref.tail_kind() != NegLogTailKind::ExactPower)
        throw std::invalid_argument("om_besov: spec does not carry an exponential-power density");
    const double p = ref.tail_power();
    OmEvaluation ev;
    const auto res = spec.residual_seq(h);
    if (!res) {
        ev.membership = OmEvaluation::Membership::Unknown;
        const SpaceSpec norm_space(p, spec.gamma());
        KahanSum s;
        for (std::size_t k = 1; k <= 1000; ++k)
            s.add(std::pow(std::abs(spec.residual(h, k)) / spec.gamma_at(k), p));
        ev.partial_sum = s.value();
        ev.value = ev.partial_sum;
        ev.K = 1000;
        return ev;
    }
    const std::size_t K =
        res->finite_support()
            ? std::max<std::size_t>(1, res->max_entry())
            : std::max({std::size_t{1000}, res->max_entry(), res->tail->start});
    const auto norm = weighted_norm(*res, SpaceSpec(p, spec.gamma()), K);
    ev.K = K;
    ev.partial_sum = std::pow(norm.partial_norm, p);
    if (norm.tail_divergent()) {
        ev.membership = OmEvaluation::Membership::Out;
        ev.value = std::numeric_limits<double>::infinity();
    } else if (norm.tail_bound) {
        ev.membership = OmEvaluation::Membership::In;
        // For finite support the remaining entries are exact, not a bound.
        ev.partial_sum += res->finite_support() ? *norm.tail_bound : 0.0;
        ev.tail_bound = res->finite_support() ? 0.0 : *norm.tail_bound;
        ev.value = ev.partial_sum;
    } else {
        ev.membership = OmEvaluation::Membership::Unknown;
        ev.value = ev.partial_sum;
    }
    return ev;
}

/// Closed-form Cauchy evaluation sum_k log(1 + gamma_k^{-2}(h_k - m_k)^2),
/// finite exactly on m + l^2_gamma.
inline OmEvaluation om_cauchy(const ProductMeasureSpec& spec, const Point& h) {
    const auto& ref = spec.ref();
    if (ref.tail_kind() != NegLogTailKind::LogOnePlusSquare)
        throw std::invalid_argument("om_cauchy: spec does not carry a Cauchy density");
    OmEvaluation ev;
    const auto res = spec.residual_seq(h);
    auto log_term = [&](std::size_t k, double v) {
        const double r = v / spec.gamma_at(k);
        return std::log1p(r * r);
    };
    if (!res) {
        KahanSum s;
        for (std::size_t k = 1; k <= 1000; ++k) {
            const double v = spec.residual(h, k);
            if (v != 0.0) s.add(log_term(k, v));
        }
        ev.partial_sum = s.value();
        ev.value = ev.partial_sum;
        ev.membership = OmEvaluation::Membership::Unknown;
        ev.K = 1000;
        return ev;
    }
    if (res->finite_support()) {
        KahanSum s;
        for (const auto& [k, v] : res->entries) s.add(log_term(k, v));
        ev.partial_sum = s.value();
        ev.value = ev.partial_sum;
        ev.membership = OmEvaluation::Membership::In;
        ev.tail_bound = 0.0;
        ev.K = res->max_entry();
        return ev;
    }
    const std::size_t K = std::max({std::size_t{1000}, res->max_entry(), res->tail->start});
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) {
        const double v = res->at(k);
        if (v != 0.0) s.add(log_term(k, v));
    }
    ev.partial_sum = s.value();
    ev.K = K;
    const auto norm = weighted_norm(*res, SpaceSpec(2.0, spec.gamma()), K);
    if (norm.tail_divergent()) {
        ev.membership = OmEvaluation::Membership::Out;
        ev.value = std::numeric_limits<double>::infinity();
    } else if (norm.tail_finite()) {
        ev.membership = OmEvaluation::Membership::In;
        ev.tail_bound = *norm.tail_bound; // log(1+x^2) <= x^2
        ev.value = ev.partial_sum;
    } else {
        ev.membership = OmEvaluation::Membership::Unknown;
        ev.value = ev.partial_sum;
    }
    return ev;
}

/// Per-coordinate sublevel container [m_k - gamma_k a, m_k + gamma_k a] with
/// a = (nl|_{R>=0})^{-1}(t). Every point with formal negative log-density
/// <= t lies inside coordinate-wise.
struct SublevelBox {
    double t = 0.0;
    double a = 0.0;
    bool empty = false;     // t < 0
    bool unbounded = false; // nl never reaches t (cannot occur for builtins)
    WeightSeq gamma = WeightSeq::constant(1.0);
    Point shift = Point::zero();

    std::pair<double, double> interval(std::size_t k) const {
        const double c = shift.raw_coord(k);
        const double w = gamma(k) * a;
        return {c - w, c + w};
    }

    bool contains_coord(std::size_t k, double x) const {
        if (empty) return false;
        if (unbounded) return true;
        return std::abs(x - shift.raw_coord(k)) <= gamma(k) * a;
    }
};

/// Invert the scalar negative log-density on [0, inf) by bisection (window
/// doubling from [0,1], 200 iteration cap, bracket width 1e-12). The upper
/// bracket end is returned, so the box is never under-inclusive.
inline SublevelBox sublevel_box(const ProductMeasureSpec& spec, double t) {
    SublevelBox box;
    box.t = t;
    box.gamma = spec.gamma();
    box.shift = spec.shift();
    if (t < 0.0) {
        box.empty = true;
        return box;
    }
    if (t == 0.0) {
        box.a = 0.0;
        return box;
    }
    const auto& ref = spec.ref();
    double lo = 0.0, hi = 1.0;
    while (ref.neg_log(hi) < t) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) {
            box.unbounded = true;
            box.a = std::numeric_limits<double>::infinity();
            return box;
        }
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-12 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ref.neg_log(mid) >= t)
            hi = mid;
        else
            lo = mid;
    }
    box.a = hi;
    return box;
}

/// Transport of a point along a converging family:
///   x_k^{(n)} = m_k^{(n)} + (gamma_k^{(n)} / gamma_k^{(inf)}) (x_k - m_k^{(inf)}).
/// Finite support of x - m^{(inf)} is preserved relative to m^{(n)}.
inline Point recovery_sequence(const ProductMeasureSpec& spec_n,
                               const ProductMeasureSpec& spec_inf, const Point& x) {
    if (!(spec_n.ambient() == spec_inf.ambient()))
        throw HypothesisError("recovery_sequence: specs must share the ambient space");
    const auto res = spec_inf.residual_seq(x);
    if (!res)
        throw std::invalid_argument(
            "recovery_sequence: residual against the limit shift has no exact representation");

    Point out = Point::measure_shift();
    auto ratio = [&](std::size_t k) { return spec_n.gamma_at(k) / spec_inf.gamma_at(k); };
    for (const auto& [k, v] : res->entries) out.set(k, ratio(k) * v);

    if (!res->finite_support()) {
        const std::size_t rule_start =
            std::max({res->tail->start, spec_n.gamma().rule_start(), spec_inf.gamma().rule_start()});
        for (std::size_t k = res->tail->start; k < rule_start; ++k)
            out.set(k, out.raw_coord(k) + ratio(k) * (*res->tail)(k));
        TailRule t = *res->tail;
        t.coeff *= spec_n.gamma().scale() / spec_inf.gamma().scale();
        t.power += spec_n.gamma().exponent() - spec_inf.gamma().exponent();
        t.ratio *= spec_n.gamma().ratio() / spec_inf.gamma().ratio();
        t.start = rule_start;
        out.with_tail(t);
    }
    return out;
}

/// Random finite-support point with formal negative log-density <= t,
/// landing near a uniformly random sublevel fraction. Used by the box
/// inclusion checks.
inline Point random_sublevel_point(const ProductMeasureSpec& spec, double t, RngStream& rng) {
    if (!(t >= 0.0)) throw std::invalid_argument("random_sublevel_point: t must be >= 0");
    Point dir = Point::measure_shift();
    const std::size_t support = 1 + rng.next_u64() % 6;
    for (std::size_t i = 0; i < support; ++i) {
        const std::size_t k = 1 + rng.next_u64() % 50;
        double v = rng.uniform(-1.0, 1.0);
        if (v == 0.0) v = 0.5;
        dir.set(k, dir.raw_coord(k) + v * spec.gamma_at(k));
    }
    const double target = t * rng.uniform(0.05, 0.999);
    auto value_at = [&](double c) {
        Point h = Point::measure_shift();
        for (const auto& [k, v] : dir.delta()) h.set(k, c * v);
        return formal_neg_log_density(spec, h).value;
    };
    double lo = 0.0, hi = 1.0;
    while (value_at(hi) < target && hi < 1e6) {
        lo = hi;
        hi *= 2.0;
    }
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (value_at(mid) <= target)
            lo = mid;
        else
            hi = mid;
    }
    Point h = Point::measure_shift();
    for (const auto& [k, v] : dir.delta()) h.set(k, lo * v);
    return h;
}

struct GammaProbeRow {
    std::size_t n;
    double I_recovery; // I^{(n)} along the recovery sequence
    double I_limit;    // I^{(inf)}(x)
    double gap;        // |I_recovery - I_limit|
    double I_constant; // I^{(n)}(x) along the constant sequence
};

struct GammaProbeResult {
    std::vector<GammaProbeRow> rows;
    std::vector<std::string> notes;
};

namespace detail {

inline double shift_distance_partial(const ProductMeasureSpec& a, const ProductMeasureSpec& b,
                                     std::size_t K) {
    const SpaceSpec& sp = a.ambient();
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) {
        const double d = a.shift_at(k) - b.shift_at(k);
        if (d != 0.0) s.add(std::pow(std::abs(d) / sp.weights(k), sp.p));
    }
    return std::pow(s.value(), 1.0 / sp.p);
}

inline double gamma_distance_partial(const ProductMeasureSpec& a, const ProductMeasureSpec& b,
                                     std::size_t K) {
    const SpaceSpec& sp = a.ambient();
    KahanSum s;
    for (std::size_t k = 1; k <= K; ++k) {
        const double d = a.gamma_at(k) - b.gamma_at(k);
        if (d != 0.0) s.add(std::pow(std::abs(d) / sp.weights(k), sp.p));
    }
    return std::pow(s.value(), 1.0 / sp.p);
}

/// Resolve a measure-relative point into absolute coordinates.
inline Point resolve_against(const ProductMeasureSpec& spec, const Point& x) {
    if (x.base() == Point::Base::Zero) return x;
    Point out = Point::zero();
    for (const auto& [k, v] : spec.shift().delta()) out.set(k, v);
    for (const auto& [k, v] : x.delta()) out.set(k, out.raw_coord(k) + v);
    const bool xs = x.tail() && x.tail()->coeff != 0.0;
    const bool ms = spec.shift().tail() && spec.shift().tail()->coeff != 0.0;
    if (xs && ms)
        throw std::invalid_argument("resolve_against: cannot merge two tail rules exactly");
    if (xs) out.with_tail(*x.tail());
    if (ms) out.with_tail(*spec.shift().tail());
    return out;
}

} // namespace detail

/// Probe Gamma-convergence of the family's functionals toward the limit's:
/// the gap along the explicit recovery sequence must vanish, and the values
/// along the constant sequence bound the limit value from above in the tail.
/// Hypotheses (shift/scale convergence on the grid, eventual domination of
/// the scalar negative log-densities) are validated first.
inline GammaProbeResult gamma_probe(
    const std::function<ProductMeasureSpec(std::size_t)>& family,
    const ProductMeasureSpec& limit, const Point& x, const std::vector<std::size_t>& n_grid) {
    if (n_grid.empty()) throw std::invalid_argument("gamma_probe: empty n grid");
    GammaProbeResult out;

    // Hypothesis validation on the grid.
    constexpr std::size_t kValK = 2000;
    std::vector<double> dm, dg, dq;
    for (std::size_t n : n_grid) {
        const auto spec_n = family(n);
        if (!(spec_n.ambient() == limit.ambient()))
            throw HypothesisError("gamma_probe: family member n=" + std::to_string(n) +
                                  " lives on a different ambient space");
        dm.push_back(detail::shift_distance_partial(spec_n, limit, kValK));
        dg.push_back(detail::gamma_distance_partial(spec_n, limit, kValK));
        double worst = 0.0, signed_worst = 0.0;
        for (int i = 0; i <= 200; ++i) {
            const double u = 5.0 * i / 200.0;
            const double diff = spec_n.ref().neg_log(u) - limit.ref().neg_log(u);
            worst = std::max(worst, std::abs(diff));
            signed_worst = std::max(signed_worst, diff);
        }
        dq.push_back(worst);
        if (n >= n_grid[n_grid.size() / 2] && signed_worst > 1e-9)
            throw HypothesisError(
                "gamma_probe: scalar negative log-density of member n=" + std::to_string(n) +
                " exceeds the limit's by " + std::to_string(signed_worst));
    }
    auto check_trend = [&](const std::vector<double>& d, const std::string& what) {
        for (std::size_t i = 1; i < d.size(); ++i)
            if (d[i] > d[i - 1] + 1e-12)
                throw HypothesisError("gamma_probe: " + what +
                                      " distance is not decreasing along the family");
        if (d.front() > 0.0 && d.back() > 0.5 * d.front())
            throw HypothesisError("gamma_probe: " + what +
                                  " distance does not converge toward zero on the grid");
    };
    check_trend(dm, "shift");
    check_trend(dg, "scale");
    check_trend(dq, "negative log-density");
    out.notes.push_back("hypotheses validated on grid (K=" + std::to_string(kValK) + ")");

    const Point x_abs = detail::resolve_against(limit, x);
    const double I_inf = formal_neg_log_density(limit, x_abs).value;
    for (std::size_t n : n_grid) {
        const auto spec_n = family(n);
        const Point x_n = recovery_sequence(spec_n, limit, x_abs);
        const double I_rec = formal_neg_log_density(spec_n, x_n).value;
        const double I_const = formal_neg_log_density(spec_n, x_abs).value;
        out.rows.push_back({n, I_rec, I_inf, std::abs(I_rec - I_inf), I_const});
    }
    return out;
}

} // namespace omlab
