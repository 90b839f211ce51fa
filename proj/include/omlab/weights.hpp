#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "omlab/series.hpp"

namespace omlab {

/// Rule-based positive weight sequence k -> w_k (1-based). Three kinds:
///   power-law:               w_k = scale * k^exponent * ratio^k
///   explicit prefix + tail:  w_k = prefix[k-1] for k <= |prefix|, rule after
///   constant:                w_k = value
/// ratio defaults to 1; a ratio below 1 expresses geometric decay such as
/// w_k = 2^{-k}. Evaluation is pure and deterministic; all values must be
/// strictly positive.
class WeightSeq {
public:
    enum class Kind { PowerLaw, PrefixPowerTail, Constant };

    static WeightSeq power_law(double exponent, double scale = 1.0, double ratio = 1.0) {
        return WeightSeq(Kind::PowerLaw, {}, exponent, scale, ratio);
    }

    static WeightSeq constant(double value) {
        return WeightSeq(Kind::Constant, {}, 0.0, value, 1.0);
    }

    static WeightSeq geometric(double ratio, double scale = 1.0) {
        return WeightSeq(Kind::PowerLaw, {}, 0.0, scale, ratio);
    }

    static WeightSeq prefix_power_tail(std::vector<double> prefix, double exponent,
                                       double scale = 1.0, double ratio = 1.0) {
        return WeightSeq(Kind::PrefixPowerTail, std::move(prefix), exponent, scale, ratio);
    }

    double operator()(std::size_t k) const {
        if (k == 0) throw std::invalid_argument("WeightSeq: indices are 1-based");
        if (k <= prefix_.size()) return prefix_[k - 1];
        double v = scale_;
        if (exponent_ != 0.0) v *= std::pow(static_cast<double>(k), exponent_);
        if (ratio_ != 1.0) v *= std::pow(ratio_, static_cast<double>(k));
        return v;
    }

    Kind kind() const { return kind_; }
    double exponent() const { return exponent_; }
    double scale() const { return scale_; }
    double ratio() const { return ratio_; }
    const std::vector<double>& prefix() const { return prefix_; }

    /// First index at which the pure rule applies.
    std::size_t rule_start() const { return prefix_.size() + 1; }

    series::TermRule tail_rule() const {
        return series::TermRule{scale_, exponent_, ratio_, rule_start()};
    }

    series::TermRule inverse_tail_rule() const {
        return series::TermRule{1.0 / scale_, -exponent_, 1.0 / ratio_, rule_start()};
    }

    bool operator==(const WeightSeq& o) const {
        return kind_ == o.kind_ && exponent_ == o.exponent_ && scale_ == o.scale_ &&
               ratio_ == o.ratio_ && prefix_ == o.prefix_;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        switch (kind_) {
        case Kind::PowerLaw:
            j["kind"] = "power-law";
            j["exponent"] = exponent_;
            j["scale"] = scale_;
            if (ratio_ != 1.0) j["ratio"] = ratio_;
            break;
        case Kind::Constant:
            j["kind"] = "constant";
            j["value"] = scale_;
            break;
        case Kind::PrefixPowerTail:
            j["kind"] = "explicit-prefix-with-power-tail";
            j["prefix"] = prefix_;
            j["exponent"] = exponent_;
            j["scale"] = scale_;
            if (ratio_ != 1.0) j["ratio"] = ratio_;
            break;
        }
        return j;
    }

    static WeightSeq from_json(const nlohmann::json& j) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "power-law")
            return power_law(j.at("exponent").get<double>(), j.value("scale", 1.0),
                             j.value("ratio", 1.0));
        if (kind == "constant") return constant(j.at("value").get<double>());
        if (kind == "explicit-prefix-with-power-tail")
            return prefix_power_tail(j.at("prefix").get<std::vector<double>>(),
                                     j.at("exponent").get<double>(), j.value("scale", 1.0),
                                     j.value("ratio", 1.0));
        throw std::invalid_argument("WeightSeq: unknown kind '" + kind + "'");
    }

private:
    WeightSeq(Kind kind, std::vector<double> prefix, double exponent, double scale, double ratio)
        : kind_(kind), prefix_(std::move(prefix)), exponent_(exponent), scale_(scale),
          ratio_(ratio) {
        if (!(scale_ > 0.0) || !std::isfinite(scale_))
            throw std::invalid_argument("WeightSeq: scale/value must be positive");
        if (!(ratio_ > 0.0) || !std::isfinite(ratio_))
            throw std::invalid_argument("WeightSeq: ratio must be positive");
        if (!std::isfinite(exponent_))
            throw std::invalid_argument("WeightSeq: exponent must be finite");
        for (double v : prefix_)
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument("WeightSeq: prefix entries must be positive");
    }

    Kind kind_;
    std::vector<double> prefix_;
    double exponent_;
    double scale_;
    double ratio_;
};

/// Ambient weighted sequence space l^p_alpha.
struct SpaceSpec {
    double p;
    WeightSeq weights;

    SpaceSpec(double p_, WeightSeq w) : p(p_), weights(std::move(w)) {
        if (!(p >= 1.0) || !std::isfinite(p))
            throw std::invalid_argument("SpaceSpec: p must lie in [1, inf)");
    }

    bool operator==(const SpaceSpec& o) const { return p == o.p && weights == o.weights; }

    nlohmann::json to_json() const {
        return nlohmann::json{{"p", p}, {"weights", weights.to_json()}};
    }

    static SpaceSpec from_json(const nlohmann::json& j) {
        return SpaceSpec(j.at("p").get<double>(), WeightSeq::from_json(j.at("weights")));
    }
};

} // namespace omlab
