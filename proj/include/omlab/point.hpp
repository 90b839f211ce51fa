#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "omlab/series.hpp"

namespace omlab {

/// Closed-form tail t_k = coeff * k^power * ratio^k for k >= start, zero before.
struct TailRule {
    double coeff = 0.0;
    double power = 0.0;
    double ratio = 1.0;
    std::size_t start = 1;

    double operator()(std::size_t k) const {
        if (k < start || coeff == 0.0) return 0.0;
        double v = coeff * std::pow(static_cast<double>(k), power);
        if (ratio != 1.0) v *= std::pow(ratio, static_cast<double>(k));
        return v;
    }

    series::TermRule term_rule() const { return series::TermRule{coeff, power, ratio, start}; }

    TailRule negated() const { return TailRule{-coeff, power, ratio, start}; }

    bool operator==(const TailRule& o) const {
        return coeff == o.coeff && power == o.power && ratio == o.ratio && start == o.start;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"coeff", coeff}, {"power", power}, {"ratio", ratio}, {"start", start}};
    }

    static TailRule from_json(const nlohmann::json& j) {
        TailRule t;
        t.coeff = j.at("coeff").get<double>();
        t.power = j.value("power", 0.0);
        t.ratio = j.value("ratio", 1.0);
        t.start = j.value("start", std::size_t{1});
        if (!(t.ratio > 0.0)) throw std::invalid_argument("TailRule: ratio must be positive");
        return t;
    }
};

/// Element of R^N stored as "base + finite-support delta + optional tail rule".
/// With base == MeasureShift the point is relative to a product measure's
/// shift m, so the residual x - m stays an exact finite object whenever the
/// delta is finite and no tail is present.
class Point {
public:
    enum class Base { Zero, MeasureShift };

    static Point zero() { return Point(Base::Zero); }
    static Point measure_shift() { return Point(Base::MeasureShift); }

    Point& set(std::size_t k, double value) {
        if (k == 0) throw std::invalid_argument("Point: indices are 1-based");
        if (!std::isfinite(value)) throw std::invalid_argument("Point: non-finite coordinate");
        if (value == 0.0)
            delta_.erase(k);
        else
            delta_[k] = value;
        return *this;
    }

    Point& with_tail(TailRule tail) {
        tail_ = tail;
        return *this;
    }

    Base base() const { return base_; }
    const std::map<std::size_t, double>& delta() const { return delta_; }
    const std::optional<TailRule>& tail() const { return tail_; }

    bool finite_support() const { return !tail_ || tail_->coeff == 0.0; }

    std::size_t max_delta_index() const { return delta_.empty() ? 0 : delta_.rbegin()->first; }

    /// Delta + tail contribution at k; excludes any measure shift.
    double raw_coord(std::size_t k) const {
        double v = 0.0;
        if (auto it = delta_.find(k); it != delta_.end()) v = it->second;
        if (tail_) v += (*tail_)(k);
        return v;
    }

    Point negated() const {
        Point p(base_);
        for (const auto& [k, v] : delta_) p.delta_[k] = -v;
        if (tail_) p.tail_ = tail_->negated();
        return p;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["base"] = (base_ == Base::Zero) ? "zero" : "shift-of-measure";
        if (!delta_.empty()) {
            nlohmann::json d = nlohmann::json::object();
            for (const auto& [k, v] : delta_) d[std::to_string(k)] = v;
            j["delta"] = d;
        }
        if (tail_) j["tail"] = tail_->to_json();
        return j;
    }

    static Point from_json(const nlohmann::json& j) {
        const std::string base = j.value("base", "zero");
        Point p = (base == "shift-of-measure") ? measure_shift() : zero();
        if (base != "zero" && base != "shift-of-measure")
            throw std::invalid_argument("Point: base must be 'zero' or 'shift-of-measure'");
        if (j.contains("delta")) {
            for (const auto& [key, val] : j.at("delta").items()) {
                const std::size_t k = static_cast<std::size_t>(std::stoull(key));
                p.set(k, val.get<double>());
            }
        }
        if (j.contains("tail")) p.with_tail(TailRule::from_json(j.at("tail")));
        return p;
    }

private:
    explicit Point(Base base) : base_(base) {}

    Base base_;
    std::map<std::size_t, double> delta_;
    std::optional<TailRule> tail_;
};

} // namespace omlab
