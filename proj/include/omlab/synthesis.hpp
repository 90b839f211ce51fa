#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "omlab/product_measure.hpp"
#include "omlab/shift_density.hpp"

namespace omlab {

/// Finite surrogate of the synthesis/coordinate operator pair between the
/// coefficient space and a separable space: either the identity on R^M or an
/// M x M' matrix with orthonormal columns. Orthonormality is the isometry
/// certificate required for transporting functionals.
class BasisSpec {
public:
    enum class Kind { Identity, OrthonormalMatrix };

    static BasisSpec identity(std::size_t dimension) {
        BasisSpec b;
        b.kind_ = Kind::Identity;
        b.dim_ = dimension;
        b.range_dim_ = dimension;
        b.isometry_certified_ = true;
        return b;
    }

    static BasisSpec orthonormal(Eigen::MatrixXd psi) {
        BasisSpec b;
        b.kind_ = Kind::OrthonormalMatrix;
        b.dim_ = static_cast<std::size_t>(psi.rows());
        b.range_dim_ = static_cast<std::size_t>(psi.cols());
        if (b.range_dim_ > b.dim_)
            throw std::invalid_argument("BasisSpec: more columns than rows");
        const Eigen::MatrixXd gram = psi.transpose() * psi;
        const double err =
            (gram - Eigen::MatrixXd::Identity(psi.cols(), psi.cols())).cwiseAbs().maxCoeff();
        b.isometry_certified_ = err <= 1e-12;
        b.psi_ = std::move(psi);
        if (!b.isometry_certified_)
            throw std::invalid_argument("BasisSpec: columns are not orthonormal (max deviation " +
                                        std::to_string(err) + ")");
        return b;
    }

    Kind kind() const { return kind_; }
    std::size_t dimension() const { return dim_; }
    std::size_t range_dimension() const { return range_dim_; }
    bool isometry_certified() const { return isometry_certified_; }
    const Eigen::MatrixXd& matrix() const { return psi_; }

private:
    Kind kind_ = Kind::Identity;
    std::size_t dim_ = 0;
    std::size_t range_dim_ = 0;
    bool isometry_certified_ = false;
    Eigen::MatrixXd psi_;
};

/// x -> sum_k x_k psi_k.
inline Eigen::VectorXd synthesize(const BasisSpec& basis, const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != basis.range_dimension())
        throw std::invalid_argument("synthesize: coordinate vector has wrong length");
    if (basis.kind() == BasisSpec::Kind::Identity) return x;
    return basis.matrix() * x;
}

/// z = sum_k v_k psi_k -> (v_k); left inverse of synthesize.
inline Eigen::VectorXd coordinates(const BasisSpec& basis, const Eigen::VectorXd& z) {
    if (static_cast<std::size_t>(z.size()) != basis.dimension())
        throw std::invalid_argument("coordinates: vector has wrong length");
    if (basis.kind() == BasisSpec::Kind::Identity) return z;
    return basis.matrix().transpose() * z;
}

using TruncatedOm = std::function<double(const Eigen::VectorXd&)>;

/// Truncated evaluator x -> sum_{k<=M} nl(gamma_k^{-1}(x_k - m_k)).
inline TruncatedOm om_truncated_evaluator(const ProductMeasureSpec& spec, std::size_t M) {
    std::vector<double> gam(M), mm(M);
    for (std::size_t k = 1; k <= M; ++k) {
        gam[k - 1] = spec.gamma_at(k);
        mm[k - 1] = spec.shift_at(k);
    }
    const ReferenceDensity ref = spec.ref();
    return [gam, mm, ref, M](const Eigen::VectorXd& x) {
        if (static_cast<std::size_t>(x.size()) != M)
            throw std::invalid_argument("om evaluator: wrong dimension");
        KahanSum s;
        for (std::size_t k = 0; k < M; ++k) s.add(ref.neg_log((x[k] - mm[k]) / gam[k]));
        return s.value();
    };
}

/// Transport of a functional through an isometric basis: h -> I(T_psi h) on
/// the range of the synthesis operator, +inf outside it. The ambient metric
/// must be the one the basis is isometric for (p = 2, unit weights); other
/// metrics are refused, since even equivalent norms can change the
/// functional being transported.
inline TruncatedOm pushforward_om(const TruncatedOm& om_on_x, const BasisSpec& basis,
                                  const SpaceSpec& ambient) {
    if (!basis.isometry_certified())
        throw HypothesisError("pushforward_om: basis is not certified isometric");
    if (ambient.p != 2.0)
        throw HypothesisError("pushforward_om: basis isometry only holds for p = 2");
    for (std::size_t k = 1; k <= std::max<std::size_t>(basis.dimension(), 8); ++k)
        if (std::abs(ambient.weights(k) - 1.0) > 1e-12)
            throw HypothesisError("pushforward_om: basis isometry only holds for unit weights");
    return [om_on_x, basis](const Eigen::VectorXd& z) {
        if (basis.kind() == BasisSpec::Kind::Identity) return om_on_x(z);
        const Eigen::VectorXd coords = basis.matrix().transpose() * z;
        const Eigen::VectorXd back = basis.matrix() * coords;
        if ((back - z).cwiseAbs().maxCoeff() > 1e-9)
            return std::numeric_limits<double>::infinity(); // outside range(S)
        return om_on_x(coords);
    };
}

/// Shift densities transport through any basis as a pure pass-through,
/// without an isometry hypothesis: the density of the pushed-forward measure
/// at z along h is the sequence-space density at the coordinate vectors,
/// log r_h(z) = log r_{T h}(T z). Unlike the functional transport above,
/// nothing metric enters, so no ambient restriction applies.
inline double pushforward_shift_density_log(const ProductMeasureSpec& spec,
                                            const BasisSpec& basis, const Eigen::VectorXd& h,
                                            const Eigen::VectorXd& z) {
    const Eigen::VectorXd hc = coordinates(basis, h);
    const Eigen::VectorXd zc = coordinates(basis, z);
    Point hp = Point::zero();
    Point zp = Point::zero();
    for (Eigen::Index i = 0; i < hc.size(); ++i) {
        hp.set(static_cast<std::size_t>(i) + 1, hc[i]);
        zp.set(static_cast<std::size_t>(i) + 1, zc[i]);
    }
    return shift_density_generic(spec, hp, zp, static_cast<std::size_t>(hc.size())).log_value;
}

/// Load an M x M' basis matrix from CSV (one row per line); orthonormality
/// is validated at load.
inline BasisSpec load_basis_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_basis_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("load_basis_csv: ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("load_basis_csv: empty file " + path);
    Eigen::MatrixXd psi(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            psi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return BasisSpec::orthonormal(std::move(psi));
}

} // namespace omlab
