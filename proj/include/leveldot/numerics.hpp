#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <limits>

namespace leveldot {

struct QuadratureResult {
    double value = 0.0;
    double abs_error = 0.0;
    std::size_t evaluations = 0;
};

struct QuadratureOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-12;
    std::size_t max_regions = 4000;
};

/// Complementary error function. Thin wrapper over std::erfc; results below
/// the smallest subnormal (x > ~26.5) are 0.
double erfc(double x);

/// Scaled complementary error function exp(x^2) erfc(x), finite for all x
/// with exp(x^2) representable, ~1/(x sqrt(pi)) for large x.
double erfcx(double x);

/// exp(-z) I_k(z) for k in {0, 1}, z >= 0. Throws DomainError for z < 0 or
/// k outside {0, 1}.
double bessel_i_scaled(int k, double z);

/// Adaptive Gauss-Kronrod (7/15) integration of f over [a, b]. b may be
/// +infinity; the half line is mapped onto (0, 1] by x = a + (1 - u) / u.
/// Throws QuadratureError carrying the best estimate when the region budget
/// runs out before the tolerance max(abs_tol, rel_tol |value|) is met.
QuadratureResult integrate_1d(const std::function<double(double)>& f, double a, double b,
                              const QuadratureOptions& opts = {});

/// Axis-aligned rectangle {x0, x1, y0, y1}.
struct Box {
    double x0, x1, y0, y1;
};

/// Adaptive cubature over a rectangle with the Genz-Malik degree 7/5
/// embedded pair; the region with the largest error estimate is bisected
/// along the axis with the largest fourth difference. Same convergence
/// contract as integrate_1d.
QuadratureResult integrate_2d(const std::function<double(double, double)>& f, const Box& box,
                              const QuadratureOptions& opts = {});

}  // namespace leveldot
