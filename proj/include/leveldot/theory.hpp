#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "leveldot/ensembles.hpp"
#include "leveldot/numerics.hpp"

namespace leveldot {

/// Golden Rule decay rate 2 g lambda.
double gamma_gr(double g, double lambda);

/// The same rate written as 2 pi <|W|^2> nu with <|W|^2> = g lambda^2 / n and
/// nu = n / (pi lambda).
double gamma_gr_from_density(double g, double lambda, int n);

/// Infinite-time residence probability
/// 1 - gamma - sqrt(pi gamma) (1/2 - gamma) exp(gamma) erfc(sqrt(gamma)).
/// Switches to the asymptotic series in 1/gamma where the closed form loses
/// digits to cancellation. Throws DomainError for gamma < 0.
double p_res_closed(double gamma);

/// The same quantity as a Laplace integral,
/// int_0^inf exp(-gamma t) (1 + t/4) / (1 + t)^(5/2) dt, by adaptive quadrature.
QuadratureResult p_res_integral(double gamma, const QuadratureOptions& opts = {1e-11, 1e-11});

/// Full time dependence of the class-U survival probability at finite gamma,
/// exp(-4 gamma tau) + 2 gamma^2 J(tau, gamma), with J the compact/non-compact
/// two-coordinate integral evaluated by adaptive cubature. value is exactly 1
/// at tau = 0; abs_error is the cubature estimate scaled by 2 gamma^2.
QuadratureResult p_full(double tau, double gamma,
                        const QuadratureOptions& opts = {1e-6, 1e-9, 20000});

/// Large-gamma asymptote exp(-4 gamma tau) + (1 + tau)/(2 gamma) for tau < 1,
/// exp(-4 gamma tau) + 1/gamma for tau >= 1.
double p_large_gamma(double tau, double gamma);

/// Unit-normalized spectral form factor of the Gaussian ensemble of the given
/// class. Class S returns +infinity at tau = 1.
double sff_analytic(SymmetryClass cls, double tau);

/// Offset and form-factor coefficients (a, b) of the class profile.
struct ClassCoefficients {
    double a, b;
};
ClassCoefficients class_coefficients(SymmetryClass cls);

/// exp(-4 gamma tau) + (a + b K(tau)) / (2 gamma).
double p_class_profile(SymmetryClass cls, double tau, double gamma);

/// Predicted minimum a / (2 gamma) and plateau (a + b) / (2 gamma).
double p_off_predicted(SymmetryClass cls, double gamma);
double p_pl_predicted(SymmetryClass cls, double gamma);

enum class Formula { FullCrossover, LargeGamma, ClassProfile };
std::string_view to_string(Formula f);
Formula parse_formula(std::string_view text);

struct TheoryCurve {
    Formula formula = Formula::FullCrossover;
    SymmetryClass cls = SymmetryClass::U;
    double gamma = 0.0;
    std::vector<double> tau;
    std::vector<double> p;
    std::vector<double> quad_err;
    /// Points whose quadrature did not converge; p holds the best estimate.
    std::vector<std::size_t> failed;
};

/// Evaluates the formula on a tau grid. Quadrature failures are recorded per
/// point and do not stop the evaluation.
TheoryCurve theory_curve(Formula formula, SymmetryClass cls, double gamma,
                         const std::vector<double>& tau,
                         const QuadratureOptions& opts = {1e-6, 1e-9, 20000});

/// CSV with columns tau, p_theory, quad_err, formula, gamma, class; lines
/// starting with '#' carry provenance.
void write_theory_csv(std::ostream& out, const TheoryCurve& curve,
                      const std::vector<std::string>& header_lines = {});
TheoryCurve read_theory_csv(std::istream& in);

}  // namespace leveldot
