#include "leveldot/theory.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "leveldot/csv.hpp"
#include "leveldot/errors.hpp"

namespace leveldot {

double gamma_gr(double g, double lambda) {
    if (!(g >= 0.0)) throw DomainError("gamma_gr: g must be >= 0");
    if (!(lambda > 0.0)) throw DomainError("gamma_gr: lambda must be > 0");
    return 2.0 * g * lambda;
}

double gamma_gr_from_density(double g, double lambda, int n) {
    if (n < 1) throw DomainError("gamma_gr_from_density: n must be >= 1");
    const double coupling_sq = g * lambda * lambda / n;
    const double nu = n / (std::numbers::pi * lambda);
    return 2.0 * std::numbers::pi * coupling_sq * nu;
}

namespace {

// Above this the closed form loses ~gamma^2 eps to cancellation and the
// asymptotic series is exact to double precision.
constexpr double kSeriesThreshold = 150.0;

double p_res_series(double gamma) {
    // n! h_n / gamma^(n+1) with h_n the Taylor coefficients of (1 + t/4)(1 + t)^(-5/2).
    double binom_prev = 0.0;  // C(-5/2, n-1)
    double binom = 1.0;       // C(-5/2, n)
    double fact = 1.0;
    double power = 1.0 / gamma;
    double sum = 0.0;
    double last = std::numeric_limits<double>::infinity();
    for (int n = 0; n < 60; ++n) {
        const double term = fact * (binom + 0.25 * binom_prev) * power;
        if (std::abs(term) > std::abs(last)) break;
        sum += term;
        last = term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        binom_prev = binom;
        binom *= (-2.5 - n) / (n + 1.0);
        fact *= n + 1.0;
        power /= gamma;
    }
    return sum;
}

}  // namespace

double p_res_closed(double gamma) {
    if (std::isnan(gamma) || gamma < 0.0) throw DomainError("p_res_closed: gamma must be >= 0");
    if (gamma == 0.0) return 1.0;
    if (std::isinf(gamma)) return 0.0;
    if (gamma > kSeriesThreshold) return p_res_series(gamma);
    const double root = std::sqrt(gamma);
    return 1.0 - gamma - std::sqrt(std::numbers::pi) * root * (0.5 - gamma) * erfcx(root);
}

QuadratureResult p_res_integral(double gamma, const QuadratureOptions& opts) {
    if (std::isnan(gamma) || gamma < 0.0) throw DomainError("p_res_integral: gamma must be >= 0");
    auto f = [gamma](double t) {
        if (std::isinf(t)) return 0.0;
        const double s = 1.0 + t;
        return std::exp(-gamma * t) * (1.0 + 0.25 * t) / (s * s * std::sqrt(s));
    };
    return integrate_1d(f, 0.0, std::numeric_limits<double>::infinity(), opts);
}

namespace {

// Integrand core x^2 [lb I0(z) - mb I1(z)] e^{-z} exp(-2 gamma x (lb - mb)) / (lb - lf)
// written in u = sqrt(lb - 1), v = sqrt(1 - lf). The 1/(lb - lf) = 1/(u^2 + v^2)
// pole is absorbed by passing to polar coordinates in (u, v); callers supply the
// remaining Jacobian.
double crossover_core(double gamma, double x, double u) {
    const double u2 = u * u;
    const double lb = 1.0 + u2;
    const double mb = u * std::sqrt(2.0 + u2);
    const double z = 2.0 * gamma * x * mb;
    const double bracket = lb * bessel_i_scaled(0, z) - mb * bessel_i_scaled(1, z);
    return x * x * bracket * std::exp(-2.0 * gamma * x / (lb + mb));
}

}  // namespace

QuadratureResult p_full(double tau, double gamma, const QuadratureOptions& opts) {
    if (std::isnan(tau) || tau < 0.0) throw DomainError("p_full: tau must be >= 0");
    if (std::isnan(gamma) || gamma < 0.0) throw DomainError("p_full: gamma must be >= 0");
    if (tau == 0.0 || gamma == 0.0) return {1.0, 0.0, 0};
    if (std::isinf(tau)) return {p_res_closed(gamma), 0.0, 0};

    const double decay = std::exp(-4.0 * gamma * tau);
    const double scale = 2.0 * gamma * gamma;
    QuadratureOptions inner = opts;
    inner.abs_tol = opts.abs_tol / scale;

    // Domain u, v >= 0, u^2 + v^2 < 2 tau, v <= sqrt 2. With u = r cos phi,
    // v = r sin phi the measure du dv 4uv/(u^2+v^2) becomes 2 r sin(2 phi) dr dphi,
    // and x = 2 tau - r^2 depends on r only.
    const double two_tau = 2.0 * tau;
    const double r_max = std::sqrt(two_tau);
    constexpr double kRootTwo = std::numbers::sqrt2;
    constexpr double kHalfPi = 0.5 * std::numbers::pi;

    // Inner disc r <= min(r_max, sqrt 2): full quarter circle, phi = s pi/2.
    const double r_disc = std::min(r_max, kRootTwo);
    auto disc = [&](double r, double s) {
        const double phi = s * kHalfPi;
        const double x = two_tau - r * r;
        if (x <= 0.0) return 0.0;
        return 2.0 * r * std::sin(2.0 * phi) * kHalfPi * crossover_core(gamma, x, r * std::cos(phi));
    };
    QuadratureResult res = integrate_2d(disc, {0.0, r_disc, 0.0, 1.0}, inner);

    if (r_max > kRootTwo) {
        // Annulus r > sqrt 2, where v <= sqrt 2 caps phi at arctan(sqrt 2 / w) with
        // r^2 = 2 + w^2; dr = (w / r) dw keeps the cap smooth at w = 0.
        const double w_max = std::sqrt(two_tau - 2.0);
        auto annulus = [&](double w, double s) {
            const double r = std::sqrt(2.0 + w * w);
            const double cap = std::atan2(kRootTwo, w);
            const double phi = s * cap;
            const double x = two_tau - r * r;
            if (x <= 0.0) return 0.0;
            return 2.0 * w * std::sin(2.0 * phi) * cap * crossover_core(gamma, x, r * std::cos(phi));
        };
        const QuadratureResult outer = integrate_2d(annulus, {0.0, w_max, 0.0, 1.0}, inner);
        res.value += outer.value;
        res.abs_error += outer.abs_error;
        res.evaluations += outer.evaluations;
    }
    return {decay + scale * res.value, scale * res.abs_error, res.evaluations};
}

double p_large_gamma(double tau, double gamma) {
    if (!(gamma > 0.0)) throw DomainError("p_large_gamma: gamma must be > 0");
    if (std::isnan(tau) || tau < 0.0) throw DomainError("p_large_gamma: tau must be >= 0");
    const double decay = std::exp(-4.0 * gamma * tau);
    return tau < 1.0 ? decay + (1.0 + tau) / (2.0 * gamma) : decay + 1.0 / gamma;
}

double sff_analytic(SymmetryClass cls, double tau) {
    if (std::isnan(tau) || tau < 0.0) throw DomainError("sff_analytic: tau must be >= 0");
    switch (cls) {
        case SymmetryClass::U:
            return tau < 1.0 ? tau : 1.0;
        case SymmetryClass::O:
            if (tau < 1.0) return tau * (2.0 - std::log1p(2.0 * tau));
            if (std::isinf(tau)) return 1.0;
            // log((2t+1)/(2t-1)) = log1p(2/(2t-1)); keeps digits at large tau.
            return 2.0 - tau * std::log1p(2.0 / (2.0 * tau - 1.0));
        case SymmetryClass::S:
            if (tau == 1.0) return std::numeric_limits<double>::infinity();
            if (tau < 2.0) return 0.25 * tau * (2.0 - std::log(std::abs(1.0 - tau)));
            return 1.0;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

ClassCoefficients class_coefficients(SymmetryClass cls) {
    switch (cls) {
        case SymmetryClass::U: return {1.0, 1.0};
        case SymmetryClass::O: return {2.0, 1.0};
        case SymmetryClass::S: return {1.0, 2.0};
    }
    return {0.0, 0.0};
}

double p_class_profile(SymmetryClass cls, double tau, double gamma) {
    if (!(gamma > 0.0)) throw DomainError("p_class_profile: gamma must be > 0");
    const auto [a, b] = class_coefficients(cls);
    return std::exp(-4.0 * gamma * tau) + (a + b * sff_analytic(cls, tau)) / (2.0 * gamma);
}

double p_off_predicted(SymmetryClass cls, double gamma) {
    return class_coefficients(cls).a / (2.0 * gamma);
}

double p_pl_predicted(SymmetryClass cls, double gamma) {
    const auto [a, b] = class_coefficients(cls);
    return (a + b) / (2.0 * gamma);
}

std::string_view to_string(Formula f) {
    switch (f) {
        case Formula::FullCrossover: return "full";
        case Formula::LargeGamma: return "large_gamma";
        case Formula::ClassProfile: return "class_profile";
    }
    return "?";
}

Formula parse_formula(std::string_view text) {
    if (text == "full") return Formula::FullCrossover;
    if (text == "large_gamma") return Formula::LargeGamma;
    if (text == "class_profile") return Formula::ClassProfile;
    throw ConfigError("unknown theory formula '" + std::string(text) +
                      "' (expected full, large_gamma or class_profile)");
}

TheoryCurve theory_curve(Formula formula, SymmetryClass cls, double gamma,
                         const std::vector<double>& tau, const QuadratureOptions& opts) {
    TheoryCurve c;
    c.formula = formula;
    c.cls = cls;
    c.gamma = gamma;
    c.tau = tau;
    c.p.resize(tau.size());
    c.quad_err.assign(tau.size(), 0.0);
    for (std::size_t i = 0; i < tau.size(); ++i) {
        switch (formula) {
            case Formula::FullCrossover:
                try {
                    const QuadratureResult r = p_full(tau[i], gamma, opts);
                    c.p[i] = r.value;
                    c.quad_err[i] = r.abs_error;
                } catch (const QuadratureError& e) {
                    c.p[i] = std::exp(-4.0 * gamma * tau[i]) + 2.0 * gamma * gamma * e.value;
                    c.quad_err[i] = 2.0 * gamma * gamma * e.abs_error;
                    c.failed.push_back(i);
                }
                break;
            case Formula::LargeGamma:
                c.p[i] = p_large_gamma(tau[i], gamma);
                break;
            case Formula::ClassProfile:
                c.p[i] = p_class_profile(cls, tau[i], gamma);
                break;
        }
    }
    return c;
}

void write_theory_csv(std::ostream& out, const TheoryCurve& curve,
                      const std::vector<std::string>& header_lines) {
    for (const auto& h : header_lines) out << "# " << h << '\n';
    out << "tau,p_theory,quad_err,formula,gamma,class\n";
    const std::string formula(to_string(curve.formula));
    const std::string gamma = format_double(curve.gamma);
    const std::string cls(to_string(curve.cls));
    for (std::size_t i = 0; i < curve.tau.size(); ++i) {
        out << format_double(curve.tau[i]) << ',' << format_double(curve.p[i]) << ','
            << format_double(curve.quad_err[i]) << ',' << formula << ',' << gamma << ',' << cls
            << '\n';
    }
}

TheoryCurve read_theory_csv(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t ct = t.column("tau"), cp = t.column("p_theory"), ce = t.column("quad_err"),
                      cf = t.column("formula"), cg = t.column("gamma"), cc = t.column("class");
    TheoryCurve c;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        if (i == 0) {
            c.formula = parse_formula(row[cf]);
            c.gamma = parse_double(row[cg]);
            c.cls = parse_symmetry_class(row[cc]);
        }
        c.tau.push_back(parse_double(row[ct]));
        c.p.push_back(parse_double(row[cp]));
        c.quad_err.push_back(parse_double(row[ce]));
    }
    return c;
}

}  // namespace leveldot
