#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "leveldot/errors.hpp"
#include "leveldot/spectral.hpp"
#include "leveldot/theory.hpp"

using namespace leveldot;

TEST_SUITE("theory") {

TEST_CASE("Golden Rule rate") {
    CHECK(gamma_gr(0.0, 1.0) == 0.0);
    CHECK(gamma_gr(1.0, 1.0) == 2.0);
    CHECK(gamma_gr_from_density(0.3, 1.7, 50) == doctest::Approx(gamma_gr(0.3, 1.7)).epsilon(1e-14));
    CHECK_THROWS_AS(gamma_gr(-1.0, 1.0), DomainError);
    // Gamma t = 4 gamma tau with tau = t lambda / (2N), gamma = g N.
    for (double g : {0.01, 0.3}) for (int n : {10, 399}) for (double lam : {0.5, 2.0}) for (double t : {0.1, 40.0}) {
        const double tau = t * lam / (2.0 * n);
        CHECK(gamma_gr(g, lam) * t == doctest::Approx(4.0 * g * n * tau).epsilon(1e-14));
    }
}

TEST_CASE("residence probability in closed form") {
    CHECK(p_res_closed(0.0) == 1.0);
    CHECK(p_res_closed(INFINITY) == 0.0);
    CHECK_THROWS_AS(p_res_closed(-1.0), DomainError);
    CHECK(std::abs(p_res_closed(1.0) - p_res_integral(1.0).value) <= 1e-8);
    double prev = 1.0;
    for (double g = 1e-3; g < 2e3; g *= 1.2) {
        const double p = p_res_closed(g);
        CHECK(p < prev);
        prev = p;
    }
    // Large-gamma behaviour: gamma P_res = 1 - 9/(4 gamma) + O(1/gamma^2), from
    // (1 + t/4)(1 + t)^{-5/2} = 1 - 9t/4 + ..., so the relative deviation from 1/gamma
    // approaches 2.25/gamma from below.
    for (double g : {100.0, 300.0, 1000.0, 1e4}) {
        const double rel = std::abs(g * p_res_closed(g) - 1.0);
        CHECK(rel <= 2.25 / g);
        CHECK(g * (g * p_res_closed(g) - 1.0) == doctest::Approx(-2.25).epsilon(0.03));
    }
}

TEST_CASE("closed form and integral form agree across the crossover") {
    for (double g : geometric_grid(1e-3, 1e3, 25)) {
        CAPTURE(g);
        CHECK(std::abs(p_res_closed(g) - p_res_integral(g).value) <= 1e-8);
    }
    // Continuity where the closed form hands over to its series.
    CHECK(p_res_closed(std::nextafter(150.0, 0.0)) == doctest::Approx(p_res_closed(150.0)).epsilon(1e-13));
}

TEST_CASE("residence probability as an integral") {
    CHECK(p_res_integral(0.0).value == doctest::Approx(1.0).epsilon(1e-10));
    // gamma = 10 is not yet deep in the Golden Rule regime: P_res is ~17% below 1/10.
    CHECK(p_res_integral(10.0).value == doctest::Approx(0.0831).epsilon(0.01));
    double prev = 1.0;
    for (double g = 0.01; g < 500; g *= 1.5) {
        const double p = p_res_integral(g).value;
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("full crossover formula: boundary and limits") {
    for (double g : {0.0, 0.022, 0.46, 46.0, 1e4}) CHECK(p_full(0.0, g).value == 1.0);
    CHECK(p_full(3.0, 0.0).value == 1.0);
    CHECK_THROWS_AS(p_full(-0.1, 1.0), DomainError);
    for (double g : {0.02, 0.022, 0.46, 2.0, 10.0, 46.0, 50.0}) {
        const QuadratureResult r = p_full(50.0, g);
        CAPTURE(g);
        CHECK(std::abs(r.value - p_res_closed(g)) <= 1e-4);
        CHECK(std::abs(r.value - p_res_closed(g)) <= 10.0 * std::max(1e-6 * r.value, 1e-9));
    }
}

TEST_CASE("full crossover formula: Golden Rule regime values") {
    CHECK(p_full(2.0, 46.0).value == doctest::Approx(1.0 / 46.0).epsilon(0.1));
    CHECK(p_full(0.5, 46.0).value == doctest::Approx(std::exp(-92.0) + 1.5 / 92.0).epsilon(0.1));
    // Early decay is exponential at the Golden Rule rate.
    const double g = 20.0, tau = 0.01;
    CHECK(p_full(tau, g).value == doctest::Approx(std::exp(-4 * g * tau) + (1 + tau) / (2 * g)).epsilon(0.05));
}

TEST_CASE("full crossover formula is continuous and bounded") {
    for (double g : {0.05, 1.0, 30.0}) {
        double prev = p_full(0.02, g).value;
        for (double tau = 0.03; tau < 4.0; tau *= 1.3) {
            const double p = p_full(tau, g).value;
            CHECK(p > 0.0);
            CHECK(p <= 1.0 + 1e-9);
            CHECK(std::abs(p - prev) < 0.3);
            prev = p;
        }
        // across the tau = 1 kink where the annulus switches on
        CHECK(p_full(1.0 - 1e-9, g).value == doctest::Approx(p_full(1.0 + 1e-9, g).value).epsilon(1e-5));
    }
}

TEST_CASE("large-gamma asymptote") {
    CHECK(p_large_gamma(0.0, 46.0) == 1.0 + 1.0 / 92.0);
    CHECK(p_large_gamma(2.0, 46.0) == doctest::Approx(1.0 / 46.0).epsilon(1e-12));
    CHECK_THROWS_AS(p_large_gamma(1.0, 0.0), DomainError);
    // Deviation from the full formula scales as 1/gamma^2 with a stable constant.
    auto worst = [](double g) {
        double w = 0.0;
        for (double tau : geometric_grid(0.05, 3.0, 30))
            w = std::max(w, std::abs(p_full(tau, g, {1e-8, 1e-12, 40000}).value - p_large_gamma(tau, g)));
        return w;
    };
    const double c50 = worst(50.0) * 50 * 50, c100 = worst(100.0) * 100 * 100, c200 = worst(200.0) * 200 * 200;
    CHECK(c100 <= 5e-4 * 100 * 100);
    CHECK(c100 / c50 == doctest::Approx(1.0).epsilon(0.35));
    CHECK(c200 / c100 == doctest::Approx(1.0).epsilon(0.35));
}

TEST_CASE("form factors") {
    CHECK(sff_analytic(SymmetryClass::U, 0.5) == 0.5);
    CHECK(sff_analytic(SymmetryClass::U, 7.0) == 1.0);
    CHECK(sff_analytic(SymmetryClass::O, 1.0) == doctest::Approx(2.0 - std::log(3.0)).epsilon(1e-15));
    CHECK(sff_analytic(SymmetryClass::S, 3.0) == 1.0);
    CHECK(std::isinf(sff_analytic(SymmetryClass::S, 1.0)));
    for (auto c : {SymmetryClass::U, SymmetryClass::O, SymmetryClass::S}) {
        CHECK(std::abs(sff_analytic(c, 1e3) - 1.0) <= 1e-6);
        CHECK(sff_analytic(c, 0.0) == 0.0);
        // continuity away from the class-S singularity
        for (double tau : {0.5, 1.0, 2.0}) {
            if (c == SymmetryClass::S && tau == 1.0) continue;
            CHECK(sff_analytic(c, tau - 1e-9) == doctest::Approx(sff_analytic(c, tau + 1e-9)).epsilon(1e-6));
        }
    }
    // O at large tau: 2 - tau log((2tau+1)/(2tau-1)) = 1 - 1/(12 tau^2) + ...
    CHECK(sff_analytic(SymmetryClass::O, 100.0) == doctest::Approx(1.0 - 1.0 / 120000.0).epsilon(1e-9));
}

TEST_CASE("class profiles and universal ratios") {
    const double g = 46.0;
    CHECK(p_pl_predicted(SymmetryClass::U, g) / p_off_predicted(SymmetryClass::U, g) == 2.0);
    CHECK(p_pl_predicted(SymmetryClass::O, g) / p_off_predicted(SymmetryClass::O, g) == 1.5);
    CHECK(p_pl_predicted(SymmetryClass::S, g) / p_off_predicted(SymmetryClass::S, g) == 3.0);
    CHECK(p_pl_predicted(SymmetryClass::O, g) == doctest::Approx(3.0 / (2 * g)));
    CHECK(p_off_predicted(SymmetryClass::O, g) == doctest::Approx(2.0 / (2 * g)));
    CHECK(p_class_profile(SymmetryClass::U, 50.0, g) == doctest::Approx(1.0 / g).epsilon(1e-14));
    for (double tau : {0.1, 0.6, 2.5}) CHECK(p_class_profile(SymmetryClass::U, tau, g) == doctest::Approx(p_large_gamma(tau, g)).epsilon(1e-14));
}

TEST_CASE("theory curves and their CSV form") {
    const auto tau = geometric_grid(0.01, 5.0, 9);
    const TheoryCurve c = theory_curve(Formula::FullCrossover, SymmetryClass::U, 0.46, tau, {1e-6, 1e-9, 20000});
    CHECK(c.failed.empty());
    for (std::size_t i = 0; i < tau.size(); ++i) CHECK(c.quad_err[i] <= std::max(1e-6 * c.p[i], 1e-9) * 1.0001);
    std::stringstream ss;
    write_theory_csv(ss, c, {"x"});
    CHECK(ss.str().find("tau,p_theory,quad_err,formula,gamma,class\n") != std::string::npos);
    const TheoryCurve back = read_theory_csv(ss);
    CHECK(back.tau == c.tau);
    CHECK(back.p == c.p);
    CHECK(back.quad_err == c.quad_err);
    CHECK(back.formula == Formula::FullCrossover);
    CHECK(back.cls == SymmetryClass::U);
    CHECK(back.gamma == 0.46);

    // An impossible budget is surfaced per point, with the best estimate kept.
    const TheoryCurve tight = theory_curve(Formula::FullCrossover, SymmetryClass::U, 0.46, {0.5, 2.0}, {1e-15, 1e-18, 3});
    CHECK(tight.failed.size() == 2);
    CHECK(std::isfinite(tight.p[0]));

    CHECK(parse_formula("class_profile") == Formula::ClassProfile);
    CHECK(to_string(Formula::LargeGamma) == "large_gamma");
    CHECK_THROWS_AS(parse_formula("eq5"), ConfigError);
}

}
