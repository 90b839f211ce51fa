#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "omlab/map_estimation.hpp"
#include "omlab/product_measure.hpp"
#include "omlab/shift_density.hpp"

namespace omlab {

/// Config violations carry a JSON-pointer-style path to the offending field.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace cfg {

using nlohmann::json;

inline const json& req(const json& j, const std::string& path, const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw SchemaError(path + "/" + key + ": required field is missing");
    return j.at(key);
}

inline double req_num(const json& j, const std::string& path, const char* key) {
    const json& v = req(j, path, key);
    if (!v.is_number()) throw SchemaError(path + "/" + key + ": expected a number");
    return v.get<double>();
}

inline std::size_t req_size(const json& j, const std::string& path, const char* key) {
    const json& v = req(j, path, key);
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw SchemaError(path + "/" + key + ": expected a nonnegative integer");
    const auto i = v.get<long long>();
    if (i < 0) throw SchemaError(path + "/" + key + ": expected a nonnegative integer");
    return static_cast<std::size_t>(i);
}

inline std::string req_str(const json& j, const std::string& path, const char* key) {
    const json& v = req(j, path, key);
    if (!v.is_string()) throw SchemaError(path + "/" + key + ": expected a string");
    return v.get<std::string>();
}

inline std::vector<double> req_num_array(const json& j, const std::string& path,
                                         const char* key) {
    const json& v = req(j, path, key);
    if (!v.is_array() || v.empty())
        throw SchemaError(path + "/" + key + ": expected a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw SchemaError(path + "/" + key + ": expected numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

inline std::vector<std::size_t> req_size_array(const json& j, const std::string& path,
                                               const char* key) {
    const json& v = req(j, path, key);
    if (!v.is_array() || v.empty())
        throw SchemaError(path + "/" + key + ": expected a nonempty array of integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_integer() && !e.is_number_unsigned())
            throw SchemaError(path + "/" + key + ": expected integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

inline WeightSeq parse_weights(const json& j, const std::string& path) {
    try {
        return WeightSeq::from_json(j);
    } catch (const std::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

inline Point parse_point(const json& j, const std::string& path) {
    try {
        return Point::from_json(j);
    } catch (const std::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

/// Measure config:
///   {"family":"besov","s":..,"d":..,"p":..,"eta":..,"m":{...}}
///   {"family":"cauchy","gamma":{...},"q":..,"m":{...}}
///   {"family":"product","ref":{...},"gamma":{...},"m":{...},
///    "ambient":{"p":..,"weights":{...}},"label":".."}
inline ProductMeasureSpec parse_measure(const json& j, const std::string& path) {
    const std::string family = req_str(j, path, "family");
    const Point m = j.contains("m") ? parse_point(j.at("m"), path + "/m") : Point::zero();
    if (family == "besov") {
        BesovParams params;
        params.s = req_num(j, path, "s");
        params.d = static_cast<int>(req_size(j, path, "d"));
        params.p = req_num(j, path, "p");
        params.eta = req_num(j, path, "eta");
        params.m = m;
        return make_besov(params);
    }
    if (family == "cauchy") {
        CauchyParams params;
        params.gamma = parse_weights(req(j, path, "gamma"), path + "/gamma");
        params.q = req_num(j, path, "q");
        params.m = m;
        return make_cauchy(params);
    }
    if (family == "product") {
        const json& refj = req(j, path, "ref");
        const std::string ref_family = req_str(refj, path + "/ref", "family");
        ReferenceDensity ref = (ref_family == "cauchy")
                                   ? make_cauchy_ref()
                                   : make_besov_ref(req_num(refj, path + "/ref", "p"));
        if (ref_family != "cauchy" && ref_family != "besov")
            throw SchemaError(path + "/ref/family: expected 'besov' or 'cauchy'");
        const json& ambj = req(j, path, "ambient");
        SpaceSpec ambient(req_num(ambj, path + "/ambient", "p"),
                          parse_weights(req(ambj, path + "/ambient", "weights"),
                                        path + "/ambient/weights"));
        return ProductMeasureSpec(std::move(ref),
                                  parse_weights(req(j, path, "gamma"), path + "/gamma"), m,
                                  std::move(ambient), j.value("label", std::string("product")));
    }
    throw SchemaError(path + "/family: expected 'besov', 'cauchy' or 'product'");
}

/// Converging-family config for probe/convergence commands:
///   {"kind":"besov-s", ...besov fields...}        s^(n) = s + 1/n
///   {"kind":"cauchy-scale", ...cauchy fields...}  gamma^(n) = (1+1/n) gamma
///   optional "m_offset": {"delta":{...}}          m^(n) = m + (1/n) * offset
struct FamilySpec {
    std::function<ProductMeasureSpec(std::size_t)> member;
    ProductMeasureSpec limit;
};

inline WeightSeq scale_weights(const WeightSeq& w, double c) {
    std::vector<double> prefix = w.prefix();
    for (double& v : prefix) v *= c;
    if (prefix.empty() && w.kind() == WeightSeq::Kind::Constant)
        return WeightSeq::constant(w.scale() * c);
    if (prefix.empty()) return WeightSeq::power_law(w.exponent(), w.scale() * c, w.ratio());
    return WeightSeq::prefix_power_tail(std::move(prefix), w.exponent(), w.scale() * c,
                                        w.ratio());
}

inline Point offset_point(const Point& base, const Point& dir, double c) {
    Point out = base;
    for (const auto& [k, v] : dir.delta()) out.set(k, out.raw_coord(k) + c * v);
    return out;
}

inline FamilySpec parse_family(const json& j, const std::string& path) {
    const std::string kind = req_str(j, path, "kind");
    const Point m = j.contains("m") ? parse_point(j.at("m"), path + "/m") : Point::zero();
    std::optional<Point> m_offset;
    if (j.contains("m_offset")) {
        m_offset = parse_point(j.at("m_offset"), path + "/m_offset");
        if (m_offset->base() != Point::Base::Zero || !m_offset->finite_support())
            throw SchemaError(path + "/m_offset: expected a finite-support absolute point");
    }
    if (kind == "besov-s") {
        BesovParams base;
        base.s = req_num(j, path, "s");
        base.d = static_cast<int>(req_size(j, path, "d"));
        base.p = req_num(j, path, "p");
        base.eta = req_num(j, path, "eta");
        base.m = m;
        auto member = [base, m_offset](std::size_t n) {
            BesovParams pn = base;
            const double inv = 1.0 / static_cast<double>(n);
            pn.s = base.s + inv;
            // Keep the ambient space fixed at the limit's so the family lives
            // on one common space.
            ProductMeasureSpec limit_spec = make_besov(base);
            WeightSeq gamma_n = WeightSeq::power_law(-(1.0 / pn.tau()) + 1.0 / pn.p);
            Point mn = m_offset ? offset_point(base.m, *m_offset, inv) : base.m;
            return ProductMeasureSpec(make_besov_ref(base.p), gamma_n, mn,
                                      limit_spec.ambient(),
                                      limit_spec.label() + "-n" + std::to_string(n));
        };
        return FamilySpec{member, make_besov(base)};
    }
    if (kind == "cauchy-scale") {
        CauchyParams base;
        base.gamma = parse_weights(req(j, path, "gamma"), path + "/gamma");
        base.q = req_num(j, path, "q");
        base.m = m;
        auto member = [base, m_offset](std::size_t n) {
            CauchyParams pn = base;
            const double inv = 1.0 / static_cast<double>(n);
            pn.gamma = scale_weights(base.gamma, 1.0 + inv);
            pn.m = m_offset ? offset_point(base.m, *m_offset, inv) : base.m;
            return make_cauchy(pn);
        };
        return FamilySpec{member, make_cauchy(base)};
    }
    throw SchemaError(path + "/kind: expected 'besov-s' or 'cauchy-scale'");
}

/// Plain numeric matrix from CSV, one row per line.
inline Eigen::MatrixXd load_matrix_csv(const std::string& file_path) {
    std::ifstream in(file_path);
    if (!in) throw SchemaError("cannot open matrix CSV " + file_path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw SchemaError("ragged rows in matrix CSV " + file_path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw SchemaError("empty matrix CSV " + file_path);
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

inline Potential parse_potential(const json& j, const std::string& path, std::size_t K) {
    const std::string kind = req_str(j, path, "kind");
    if (kind != "linear-gaussian")
        throw SchemaError(path + "/kind: only 'linear-gaussian' is configurable");
    const double sigma = req_num(j, path, "sigma");
    const auto y = req_num_array(j, path, "y");
    Eigen::VectorXd yv(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) yv[static_cast<Eigen::Index>(i)] = y[i];
    Eigen::MatrixXd A;
    if (j.value("identity", false)) {
        if (y.size() != K) throw SchemaError(path + "/y: identity A needs len(y) == K");
        A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(K),
                                      static_cast<Eigen::Index>(K));
    } else if (j.contains("A_csv")) {
        A = load_matrix_csv(req_str(j, path, "A_csv"));
        if (static_cast<std::size_t>(A.cols()) != K)
            throw SchemaError(path + "/A_csv: matrix must have K columns");
        if (static_cast<std::size_t>(A.rows()) != y.size())
            throw SchemaError(path + ": A and y dimensions disagree");
    } else {
        const json& aj = req(j, path, "A");
        if (!aj.is_array() || aj.empty())
            throw SchemaError(path + "/A: expected a nonempty array of rows");
        A.resize(static_cast<Eigen::Index>(aj.size()), static_cast<Eigen::Index>(K));
        for (std::size_t r = 0; r < aj.size(); ++r) {
            if (!aj[r].is_array() || aj[r].size() != K)
                throw SchemaError(path + "/A: each row must have K entries");
            for (std::size_t c = 0; c < K; ++c)
                A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    aj[r][c].get<double>();
        }
        if (static_cast<std::size_t>(A.rows()) != y.size())
            throw SchemaError(path + ": A and y dimensions disagree");
    }
    return Potential::linear_gaussian(std::move(A), std::move(yv), sigma);
}

inline TestFunctional parse_functional(const json& j, const std::string& path) {
    const std::string kind = req_str(j, path, "kind");
    if (kind == "one") return functional_one();
    if (kind == "soft") return functional_soft();
    if (kind == "box")
        return functional_box(req_num_array(j, path, "lo"), req_num_array(j, path, "hi"));
    throw SchemaError(path + "/kind: expected 'one', 'box' or 'soft'");
}

struct McConfig {
    std::size_t n;
    std::uint64_t seed;
};

inline McConfig parse_mc(const json& j, const std::string& path) {
    const json& mc = req(j, path, "mc");
    McConfig out;
    out.n = req_size(mc, path + "/mc", "n");
    if (out.n == 0) throw SchemaError(path + "/mc/n: must be positive");
    const json& seed = req(mc, path + "/mc", "seed");
    if (!seed.is_number_integer() && !seed.is_number_unsigned())
        throw SchemaError(path + "/mc/seed: expected an integer (seed is mandatory)");
    out.seed = seed.get<std::uint64_t>();
    return out;
}

} // namespace cfg
} // namespace omlab
