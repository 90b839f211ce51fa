#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "omlab/parallel.hpp"
#include "omlab/point.hpp"
#include "omlab/reference_density.hpp"
#include "omlab/rng.hpp"
#include "omlab/weighted_spaces.hpp"
#include "omlab/weights.hpp"

namespace omlab {

/// Thrown when a construction or experiment precondition backed by a theorem
/// hypothesis cannot be certified.
class HypothesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Product measure mu = (x) mu0(gamma_k^{-1}(. - m_k)) on an ambient weighted
/// sequence space. Immutable after construction; construction certifies that
/// the scale sequence is admissible for the ambient space and that the shift
/// lives there.
class ProductMeasureSpec {
public:
    ProductMeasureSpec(ReferenceDensity ref, WeightSeq gamma, Point shift, SpaceSpec ambient,
                       std::string label)
        : ref_(std::move(ref)), gamma_(std::move(gamma)), shift_(std::move(shift)),
          ambient_(std::move(ambient)), label_(std::move(label)) {
        if (shift_.base() != Point::Base::Zero)
            throw std::invalid_argument("ProductMeasureSpec: shift must be an absolute point");
        if (!ref_.validated()) {
            // User-supplied density: check the structural assumptions once.
            const auto rep = validate_assumptions(ref_);
            if (rep.a2 != AssumptionReport::Verdict::Pass || !rep.a4_usable())
                throw HypothesisError(
                    "ProductMeasureSpec[" + label_ +
                    "]: reference density fails the structural assumption checks");
            ref_.mark_validated();
        }
        const auto summ = gamma_summability_check(gamma_, ambient_, 1000);
        if (summ.divergence_warning)
            throw HypothesisError("ProductMeasureSpec[" + label_ +
                                  "]: scale sequence is not summable in the ambient space: " +
                                  summ.detail);
        const auto mnorm = weighted_norm(shift_, ambient_, 1000);
        if (mnorm.tail_divergent())
            throw HypothesisError("ProductMeasureSpec[" + label_ +
                                  "]: shift lies outside the ambient space");
        if (!mnorm.tail_bound)
            throw HypothesisError("ProductMeasureSpec[" + label_ +
                                  "]: no summability certificate for the shift");
    }

    const ReferenceDensity& ref() const { return ref_; }
    const WeightSeq& gamma() const { return gamma_; }
    const Point& shift() const { return shift_; }
    const SpaceSpec& ambient() const { return ambient_; }
    const std::string& label() const { return label_; }

    double gamma_at(std::size_t k) const { return gamma_(k); }
    double shift_at(std::size_t k) const { return shift_.raw_coord(k); }

    /// Absolute coordinate of a point (resolving a measure-shift base).
    double coord(const Point& x, std::size_t k) const {
        double v = x.raw_coord(k);
        if (x.base() == Point::Base::MeasureShift) v += shift_at(k);
        return v;
    }

    /// Residual coordinate (x - m)_k.
    double residual(const Point& x, std::size_t k) const {
        if (x.base() == Point::Base::MeasureShift) return x.raw_coord(k);
        return x.raw_coord(k) - shift_at(k);
    }

    /// Residual x - m as a coordinate sequence; nullopt when the tails of x
    /// and m have incompatible closed forms.
    std::optional<CoordSeq> residual_seq(const Point& x) const {
        CoordSeq xs;
        xs.entries = x.delta();
        if (x.tail() && x.tail()->coeff != 0.0) xs.tail = x.tail();
        if (x.base() == Point::Base::MeasureShift) return xs;
        CoordSeq ms;
        ms.entries = shift_.delta();
        if (shift_.tail() && shift_.tail()->coeff != 0.0) ms.tail = shift_.tail();
        return coord_diff(xs, ms);
    }

private:
    ReferenceDensity ref_;
    WeightSeq gamma_;
    Point shift_;
    SpaceSpec ambient_;
    std::string label_;
};

/// Parameters of a sequence-space Besov measure. tau = (s/d + 1/2)^{-1} must
/// be positive; t = s - d(1+eta)/p locates the ambient space exponent.
struct BesovParams {
    double s;
    int d = 1;
    double p;
    double eta = 1.0;
    Point m = Point::zero();

    double tau() const {
        const double inv = s / d + 0.5;
        if (!(inv > 0.0)) throw std::invalid_argument("BesovParams: require s/d + 1/2 > 0");
        return 1.0 / inv;
    }
    double t() const { return s - d * (1.0 + eta) / p; }
    double gamma_exponent() const { return -1.0 / tau() + 1.0 / p; }
    double delta_exponent() const { return -1.0 / tau() + (2.0 + eta) / p; }
};

inline ProductMeasureSpec make_besov(const BesovParams& params) {
    if (!(params.p >= 1.0 && params.p <= 2.0))
        throw std::invalid_argument("make_besov: p must lie in [1, 2]");
    if (!(params.eta > 0.0)) throw std::invalid_argument("make_besov: eta must be positive");
    if (params.d < 1) throw std::invalid_argument("make_besov: d must be a positive integer");
    const double tau = params.tau(); // throws if s/d + 1/2 <= 0
    (void)tau;
    WeightSeq gamma = WeightSeq::power_law(params.gamma_exponent());
    WeightSeq delta = WeightSeq::power_law(params.delta_exponent());
    std::string label = "besov(s=" + std::to_string(params.s) + ",d=" + std::to_string(params.d) +
                        ",p=" + std::to_string(params.p) + ",eta=" + std::to_string(params.eta) +
                        ")";
    return ProductMeasureSpec(make_besov_ref(params.p), std::move(gamma), params.m,
                              SpaceSpec(params.p, std::move(delta)), std::move(label));
}

/// Parameters of a product Cauchy measure on l^q. The scale sequence must be
/// certifiably l^1; for q = 1 the additional sum gamma_k |log gamma_k| < inf
/// must also be certified.
struct CauchyParams {
    Point m = Point::zero();
    WeightSeq gamma = WeightSeq::power_law(-2.0);
    double q = 2.0;
};

inline ProductMeasureSpec make_cauchy(const CauchyParams& params) {
    if (!(params.q >= 1.0)) throw std::invalid_argument("make_cauchy: q must be >= 1");
    const SpaceSpec l1(1.0, WeightSeq::constant(1.0));
    const auto ell1 = gamma_summability_check(params.gamma, l1, 1000);
    if (ell1.divergence_warning || !ell1.tail_bound)
        throw HypothesisError("make_cauchy: scale sequence is not certifiably l^1");
    if (params.q == 1.0) {
        // Explicit prefix contributes finitely; certify the power tail.
        auto log_tail =
            series::certify_tail_log_weighted(params.gamma.tail_rule(), params.gamma.rule_start());
        if (!log_tail || log_tail->cls == series::SumClass::Divergent)
            throw HypothesisError(
                "make_cauchy: q=1 requires sum gamma_k |log gamma_k| < inf, not certified");
    }
    std::string label = "cauchy(q=" + std::to_string(params.q) + ")";
    return ProductMeasureSpec(make_cauchy_ref(), params.gamma, params.m,
                              SpaceSpec(params.q, WeightSeq::constant(1.0)), std::move(label));
}

/// n draws of the first K coordinates, column-major: entry (k, j) at
/// data[(j)*K + (k-1)], i.e. marginal k occupies row k. Deterministic given
/// (seed, K, n) and independent of the worker count.
struct SampleMatrix {
    std::size_t K = 0;
    std::size_t n = 0;
    std::vector<double> data;

    double at(std::size_t k, std::size_t j) const { return data[j * K + (k - 1)]; }
};

inline constexpr std::size_t kSampleBlock = 16384;

/// Draw coordinates v_k = m_k + gamma_k u_k with u_k i.i.d. from the
/// reference density.
inline SampleMatrix sample(const ProductMeasureSpec& spec, std::size_t K, std::size_t n,
                           std::uint64_t seed, unsigned workers = 1) {
    if (K < 1 || n < 1) throw std::invalid_argument("sample: K and n must be >= 1");
    SampleMatrix out;
    out.K = K;
    out.n = n;
    out.data.resize(K * n);

    std::vector<double> gam(K), mm(K);
    for (std::size_t k = 1; k <= K; ++k) {
        gam[k - 1] = spec.gamma_at(k);
        mm[k - 1] = spec.shift_at(k);
    }

    const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
    parallel_blocks(blocks, workers, [&](std::size_t b) {
        RngStream rng = RngStream::derive(seed, b);
        const std::size_t j0 = b * kSampleBlock;
        const std::size_t j1 = std::min(n, j0 + kSampleBlock);
        for (std::size_t j = j0; j < j1; ++j) {
            double* col = out.data.data() + j * K;
            for (std::size_t k = 0; k < K; ++k)
                col[k] = mm[k] + gam[k] * spec.ref().sample(rng);
        }
    });
    return out;
}

/// Streaming variant: visit(j, coords) is called for each draw with the K
/// coordinates of draw j. Blocks are processed in parallel; visit must be
/// safe for concurrent calls with distinct j.
inline void sample_visit(const ProductMeasureSpec& spec, std::size_t K, std::size_t n,
                         std::uint64_t seed, unsigned workers,
                         const std::function<void(std::size_t, const double*)>& visit) {
    std::vector<double> gam(K), mm(K);
    for (std::size_t k = 1; k <= K; ++k) {
        gam[k - 1] = spec.gamma_at(k);
        mm[k - 1] = spec.shift_at(k);
    }
    const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
    parallel_blocks(blocks, workers, [&](std::size_t b) {
        RngStream rng = RngStream::derive(seed, b);
        std::vector<double> col(K);
        const std::size_t j0 = b * kSampleBlock;
        const std::size_t j1 = std::min(n, j0 + kSampleBlock);
        for (std::size_t j = j0; j < j1; ++j) {
            for (std::size_t k = 0; k < K; ++k) col[k] = mm[k] + gam[k] * spec.ref().sample(rng);
            visit(j, col.data());
        }
    });
}

/// Empirical distribution of truncated norms ||draw - m|| at increasing K,
/// measured in `space` (defaults to the ambient space). Stabilisation of the
/// rows indicates full measure of the space; blow-up indicates the draws
/// escape it.
struct SupportDiagnosticRow {
    std::size_t K;
    double mean;
    double stddev;
    double min;
    double max;
};

inline std::vector<SupportDiagnosticRow> support_diagnostic(
    const ProductMeasureSpec& spec, const std::vector<std::size_t>& k_grid, std::size_t n,
    std::uint64_t seed, std::optional<SpaceSpec> space = std::nullopt) {
    if (k_grid.empty()) return {};
    const SpaceSpec& sp = space ? *space : spec.ambient();
    std::vector<std::size_t> grid = k_grid;
    std::sort(grid.begin(), grid.end());
    const std::size_t Kmax = grid.back();

    const auto draws = sample(spec, Kmax, n, seed);
    std::vector<double> alpha(Kmax), mm(Kmax);
    for (std::size_t k = 1; k <= Kmax; ++k) {
        alpha[k - 1] = sp.weights(k);
        mm[k - 1] = spec.shift_at(k);
    }

    std::vector<SupportDiagnosticRow> rows;
    std::vector<KahanSum> acc(n);
    std::size_t k_done = 0;
    for (std::size_t K : grid) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = k_done + 1; k <= K; ++k) {
                const double z = (draws.at(k, j) - mm[k - 1]) / alpha[k - 1];
                acc[j].add(std::pow(std::abs(z), sp.p));
            }
        }
        k_done = K;
        KahanSum s1, s2;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double norm = std::pow(acc[j].value(), 1.0 / sp.p);
            s1.add(norm);
            s2.add(norm * norm);
            lo = std::min(lo, norm);
            hi = std::max(hi, norm);
        }
        const double mean = s1.value() / static_cast<double>(n);
        const double var = std::max(0.0, s2.value() / static_cast<double>(n) - mean * mean);
        rows.push_back({K, mean, std::sqrt(var), lo, hi});
    }
    return rows;
}

} // namespace omlab
