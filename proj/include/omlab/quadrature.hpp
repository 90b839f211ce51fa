#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace omlab::quad {

struct QuadResult {
    double value;
    double error;
};

using Fn = std::function<double(double)>;

/// Adaptive Gauss-Kronrod on a finite interval.
inline QuadResult integrate(const Fn& f, double a, double b, double tol = 1e-12) {
    if (!(b > a)) return {0.0, 0.0};
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, a, b, 18, tol, &err);
    return {v, err};
}

/// Same, but splits the interval at the supplied breakpoints (kinks or jump
/// discontinuities of the integrand) so each piece is smooth.
inline QuadResult integrate_breakpoints(const Fn& f, double a, double b,
                                        std::vector<double> pts, double tol = 1e-12) {
    pts.push_back(a);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    QuadResult total{0.0, 0.0};
    double lo = a;
    for (double x : pts) {
        if (x <= lo || x > b) continue;
        const double hi = std::min(x, b);
        if (hi - lo > 0.0) {
            const auto r = integrate(f, lo, hi, tol);
            total.value += r.value;
            total.error += r.error;
        }
        lo = hi;
    }
    if (lo < b) {
        const auto r = integrate(f, lo, b, tol);
        total.value += r.value;
        total.error += r.error;
    }
    return total;
}

/// Whole real line.
inline QuadResult integrate_line(const Fn& f, double tol = 1e-12) {
    double err = 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, -inf, inf, 18, tol, &err);
    return {v, err};
}

/// Whole real line, split at interior kinks.
inline QuadResult integrate_line_breakpoints(const Fn& f, std::vector<double> pts,
                                             double tol = 1e-12) {
    if (pts.empty()) return integrate_line(f, tol);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const double inf = std::numeric_limits<double>::infinity();
    QuadResult total{0.0, 0.0};
    double err = 0.0;
    total.value += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, -inf, pts.front(), 18, tol, &err);
    total.error += err;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const auto r = integrate(f, pts[i], pts[i + 1], tol);
        total.value += r.value;
        total.error += r.error;
    }
    total.value += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, pts.back(), inf, 18, tol, &err);
    total.error += err;
    return total;
}

} // namespace omlab::quad
