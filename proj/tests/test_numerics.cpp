#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "leveldot/errors.hpp"
#include "leveldot/numerics.hpp"

using namespace leveldot;
using std::numbers::pi;

namespace {

// Composite Simpson on [a, b] with n (even) panels; independent of the
// adaptive Gauss-Kronrod code.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// exp(-z) I_k(z) from the integral representation (1/pi) int_0^pi e^{z(cos t - 1)} cos(k t) dt,
// whose periodic integrand makes the trapezoid rule spectrally accurate.
double bessel_oracle(int k, double z) {
    const int n = 4000;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = pi * i / n;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        s += w * std::exp(z * (std::cos(t) - 1.0)) * std::cos(k * t);
    }
    return s / n;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("erfc basics") {
    CHECK(leveldot::erfc(0.0) == 1.0);
    for (double x : {0.1, 0.5, 1.0, 2.5, 4.0, 6.0}) CHECK(leveldot::erfc(-x) == doctest::Approx(2.0 - leveldot::erfc(x)).epsilon(1e-15));
    for (double x = -5.0; x <= 5.0; x += 0.125) CHECK(std::abs(leveldot::erfc(x) + std::erf(x) - 1.0) <= 1e-12);
}

TEST_CASE("erfcx at gamma = 100 follows its asymptotic series") {
    const double x = 10.0;
    // 1/(x sqrt pi) sum_k (-1)^k (2k-1)!! / (2x^2)^k, truncated well before divergence.
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 12; ++k) {
        term *= -(2.0 * k - 1.0) / (2.0 * x * x);
        sum += term;
    }
    const double series = sum / (x * std::sqrt(pi));
    CHECK(erfcx(x) == doctest::Approx(series).epsilon(1e-13));
    CHECK(erfcx(x) == doctest::Approx(1.0 / std::sqrt(100.0 * pi) * (1.0 - 1.0 / 200.0)).epsilon(1e-4));
}

TEST_CASE("erfcx matches the defining integral and is continuous across its branches") {
    // exp(x^2) erfc(x) = (2/sqrt pi) int_0^inf exp(-t^2 - 2 x t) dt
    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7, 5.0, 12.0, 25.9, 26.1, 40.0}) {
        const double oracle = 2.0 / std::sqrt(pi) * simpson([x](double t) { return std::exp(-t * t - 2 * x * t); }, 0.0,
                                                            std::max(8.0, 8.0 / std::max(x, 1.0)) + 6.0, 200000);
        CHECK(erfcx(x) == doctest::Approx(oracle).epsilon(1e-10));
    }
    const double lo = erfcx(std::nextafter(26.0, 0.0)), hi = erfcx(26.0);
    CHECK(std::abs(lo - hi) <= 1e-14 * hi);
    CHECK(erfcx(1e6) == doctest::Approx(1.0 / (1e6 * std::sqrt(pi))).epsilon(1e-12));
}

TEST_CASE("scaled Bessel functions") {
    CHECK(bessel_i_scaled(0, 0.0) == 1.0);
    CHECK(bessel_i_scaled(1, 0.0) == 0.0);
    CHECK(bessel_i_scaled(0, 10.0) == doctest::Approx(2815.716628466254 * std::exp(-10.0)).epsilon(1e-13));
    for (double z : {0.01, 0.5, 3.0, 10.0, 30.0, 49.9, 50.0, 50.1, 120.0, 700.0}) {
        CHECK(bessel_i_scaled(0, z) == doctest::Approx(bessel_oracle(0, z)).epsilon(1e-11));
        CHECK(bessel_i_scaled(1, z) == doctest::Approx(bessel_oracle(1, z)).epsilon(1e-11));
    }
    CHECK(bessel_i_scaled(0, 1e8) == doctest::Approx(1.0 / std::sqrt(2 * pi * 1e8)).epsilon(1e-8));
    CHECK_THROWS_AS(bessel_i_scaled(2, 1.0), DomainError);
    CHECK_THROWS_AS(bessel_i_scaled(0, -1.0), DomainError);
}

TEST_CASE("scaled I0 decreases and dominates scaled I1") {
    double prev = bessel_i_scaled(0, 0.0);
    for (double z = 0.05; z < 400.0; z *= 1.07) {
        const double i0 = bessel_i_scaled(0, z), i1 = bessel_i_scaled(1, z);
        CHECK(i0 < prev);
        CHECK(i1 <= i0);
        CHECK(i1 >= 0.0);
        prev = i0;
    }
}

TEST_CASE("one-dimensional integrals with known values") {
    auto r = integrate_1d([](double t) { return std::exp(-t); }, 0.0, INFINITY);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-10));
    r = integrate_1d([](double t) { return (1 + t / 4) / std::pow(1 + t, 2.5); }, 0.0, INFINITY);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-8));
    r = integrate_1d([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0);
    CHECK(r.value == doctest::Approx(2.0).epsilon(1e-8));
    r = integrate_1d([](double x) { return std::sin(x); }, pi, 0.0);
    CHECK(r.value == doctest::Approx(-2.0).epsilon(1e-12));
    r = integrate_1d([](double) { return 0.0; }, 0.0, 1.0);
    CHECK(r.value == 0.0);
    CHECK(r.abs_error == 0.0);
}

TEST_CASE("two-dimensional integrals with known values") {
    auto r = integrate_2d([](double, double) { return 1.0; }, {0, 1, 0, 1});
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-14));
    r = integrate_2d([](double, double) { return 0.0; }, {0, 1, 0, 1});
    CHECK(r.value == 0.0);
    CHECK(r.abs_error == 0.0);
    // int int (x + y)^{-1/2}: iterated 1D oracle, the inner integral done analytically.
    const double oracle = integrate_1d([](double x) { return 2.0 * (std::sqrt(x + 1.0) - std::sqrt(x)); }, 0.0, 1.0,
                                       {1e-13, 1e-15, 20000})
                              .value;
    CHECK(oracle == doctest::Approx(8.0 / 3.0 * (std::sqrt(2.0) - 1.0)).epsilon(1e-12));
    r = integrate_2d([](double x, double y) { return 1.0 / std::sqrt(x + y); }, {0, 1, 0, 1}, {1e-9, 1e-12, 20000});
    CHECK(r.value == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("error estimates are conservative on a suite of closed-form integrals") {
    const QuadratureOptions o{1e-6, 1e-10, 4000};
    std::vector<std::pair<QuadratureResult, double>> runs;
    auto one = [&](std::function<double(double)> f, double a, double b, double exact) {
        runs.emplace_back(integrate_1d(f, a, b, o), exact);
    };
    auto two = [&](std::function<double(double, double)> f, Box box, double exact) {
        runs.emplace_back(integrate_2d(f, box, o), exact);
    };
    one([](double x) { return std::exp(x); }, 0, 1, std::exp(1.0) - 1);
    one([](double x) { return 1 / (1 + x * x); }, 0, INFINITY, pi / 2);
    one([](double x) { return std::sqrt(x); }, 0, 1, 2.0 / 3);
    one([](double x) { return std::log(x); }, 0, 1, -1.0);
    one([](double x) { return std::cos(30 * x); }, 0, 1, std::sin(30.0) / 30);
    one([](double x) { return std::exp(-x * x); }, 0, INFINITY, std::sqrt(pi) / 2);
    two([](double x, double y) { return std::exp(x + y); }, {0, 1, 0, 1}, (std::exp(1.0) - 1) * (std::exp(1.0) - 1));
    two([](double x, double y) { return x * x * y; }, {0, 2, 0, 3}, 8.0 / 3 * 4.5);
    two([](double x, double y) { return std::sin(x) * std::cos(y); }, {0, pi, 0, pi / 2}, 2.0);
    two([](double x, double y) { return 1 / (1 + x + y); }, {0, 1, 0, 1}, 3 * std::log(3.0) - 4 * std::log(2.0));
    int ok = 0;
    for (const auto& [r, exact] : runs) ok += std::abs(r.value - exact) <= r.abs_error;
    CHECK(runs.size() == 10);
    CHECK(ok >= 9);
}

TEST_CASE("quadrature failures are reported, not hidden") {
    CHECK_THROWS_AS(integrate_1d([](double) { return NAN; }, 0.0, 1.0), NumericalError);
    CHECK_THROWS_AS(integrate_1d([](double x) { return std::sin(1 / x) / x; }, 1e-9, 1.0, {1e-12, 1e-15, 20}),
                    QuadratureError);
    try {
        integrate_2d([](double x, double y) { return 1 / std::sqrt(std::abs(x - y) + 1e-300); }, {0, 1, 0, 1},
                     {1e-12, 1e-15, 30});
        FAIL("expected QuadratureError");
    } catch (const QuadratureError& e) {
        CHECK(std::isfinite(e.value));
        CHECK(e.abs_error > 0.0);
    }
}

}
