#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "leveldot/ensembles.hpp"
#include "leveldot/errors.hpp"
#include "leveldot/spectral.hpp"
#include "leveldot/theory.hpp"

using namespace leveldot;
namespace fs = std::filesystem;

namespace {

EnsembleSpec spec_of(SymmetryClass cls, int n, double gamma = 0.0) {
    EnsembleSpec s;
    s.cls = cls;
    s.n = n;
    return s.with_gamma(gamma);
}

// |<0| exp(-i A t) |0>|^2 by Pade scaling-and-squaring.
double expm_survival(const Eigen::MatrixXcd& a, double t) {
    const Eigen::MatrixXcd u = (std::complex<double>(0.0, -t) * a).exp();
    return std::norm(u(0, 0));
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("leveldot_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("three-level example") {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(3, 3);
    a(0, 1) = a(1, 0) = 1.0;
    for (const OverlapSet& o : {decompose(a, 1e-12), decompose_fast(a)}) {
        REQUIRE(o.energies.size() == 3);
        CHECK(o.energies[0] == doctest::Approx(-1.0));
        CHECK(o.energies[1] == doctest::Approx(0.0));
        CHECK(o.energies[2] == doctest::Approx(1.0));
        CHECK(o.weights[0] == doctest::Approx(0.5));
        CHECK(o.weights[1] == doctest::Approx(0.0));
        CHECK(o.weights[2] == doctest::Approx(0.5));
    }
}

TEST_CASE("decoupled level keeps a single unit overlap") {
    const auto s = spec_of(SymmetryClass::U, 20, 0.0);
    const auto o = decompose_fast(assemble(s, sample_realization(s, {1, 1})));
    CHECK(o.weights.maxCoeff() == 1.0);
    CHECK(o.weights.sum() == 1.0);
    CHECK(plateau_estimate(o) == 1.0);
    for (double t : {0.0, 1.0, 123.4}) CHECK(survival_at(o, t) == 1.0);
}

TEST_CASE("tridiagonal path agrees with the dense eigensolver") {
    for (auto cls : {SymmetryClass::U, SymmetryClass::O, SymmetryClass::S}) {
        for (auto bath : {BathVariant::RMT, BathVariant::Poisson}) {
            auto s = spec_of(cls, 40, 7.0);
            s.bath = bath;
            s.epsilon0 = 0.1;
            const Eigen::MatrixXcd a = assemble(s, sample_realization(s, {2, 9}));
            const OverlapSet dense = decompose(a, 1e-8);
            const OverlapSet fast = decompose_fast(a);
            CAPTURE(to_string(cls));
            CAPTURE(to_string(bath));
            CHECK(max_residual(a) <= 1e-8);
            CHECK((dense.energies - fast.energies).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK(std::abs(fast.weight_sum() - 1.0) <= 1e-10);
            CHECK(std::abs(plateau_estimate(dense) - plateau_estimate(fast)) <= 1e-10);
            for (double t : {0.3, 5.0, 80.0}) CHECK(std::abs(survival_at(dense, t) - survival_at(fast, t)) <= 1e-10);
        }
    }
}

TEST_CASE("class S eigenvalues come in degenerate pairs") {
    const auto s = spec_of(SymmetryClass::S, 30, 4.0);
    const auto o = decompose(assemble(s, sample_realization(s, {3, 3})), 1e-8);
    for (Eigen::Index k = 0; k + 1 < o.energies.size(); k += 2) CHECK(o.energies[k + 1] - o.energies[k] < 1e-10);
}

TEST_CASE("survival of a two-level toy is cos^2") {
    OverlapSet o;
    o.energies = Eigen::Vector2d(-1.0, 1.0);
    o.weights = Eigen::Vector2d(0.5, 0.5);
    for (double t = 0.0; t < 10.0; t += 0.37) {
        CHECK(survival_at(o, t) == doctest::Approx(std::cos(t) * std::cos(t)).epsilon(1e-14));
        CHECK(survival_at(o, -t) == survival_at(o, t));
    }
    CHECK(survival_at(o, 0.0) == 1.0);
}

TEST_CASE("survival matches the matrix-exponential oracle for small systems") {
    for (auto cls : {SymmetryClass::U, SymmetryClass::O, SymmetryClass::S}) {
        for (int n : {2, 4, 8}) {
            const int dot = cls == SymmetryClass::S ? std::max(2, n / 2) : n;
            const auto s = spec_of(cls, dot, 1.3);
            for (std::uint64_t i = 0; i < 3; ++i) {
                const Eigen::MatrixXcd a = assemble(s, sample_realization(s, {4, i}));
                const OverlapSet o = decompose_fast(a);
                double worst = 0.0;
                for (double t : {0.0, 0.01, 0.7, 3.0, 25.0, 140.0}) {
                    worst = std::max(worst, std::abs(survival_at(o, t) - expm_survival(a, t)));
                    const Eigen::VectorXcd psi = (std::complex<double>(0.0, -t) * a).exp().col(0);
                    CHECK(std::abs(psi.squaredNorm() - 1.0) <= 1e-10);
                }
                CAPTURE(to_string(cls));
                CAPTURE(n);
                CHECK(worst <= 1e-8);
            }
        }
    }
}

TEST_CASE("ensemble average equals the brute-force double eigenfunction sum") {
    for (auto cls : {SymmetryClass::U, SymmetryClass::O}) {
        const auto s = spec_of(cls, 6, 2.0);
        const std::vector<double> tau = {0.0, 0.01, 0.1, 0.5, 1.0, 3.0};
        const std::size_t samples = 40;
        const SurvivalCurve c = average_survival(s, tau, samples, 77);
        for (std::size_t j = 0; j < tau.size(); ++j) {
            const double t = s.t_from_tau(tau[j]);
            double sum = 0.0;
            for (std::size_t i = 0; i < samples; ++i) {
                const Eigen::MatrixXcd a = assemble(s, sample_realization(s, {77, i}));
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a);
                const Eigen::VectorXd e = es.eigenvalues();
                const Eigen::VectorXd w = es.eigenvectors().row(0).cwiseAbs2().transpose();
                double p = 0.0;
                for (Eigen::Index x = 0; x < e.size(); ++x)
                    for (Eigen::Index y = 0; y < e.size(); ++y) p += w[x] * w[y] * std::cos((e[x] - e[y]) * t);
                sum += p;
            }
            CHECK(std::abs(c.mean[j] - sum / samples) <= 1e-10);
        }
    }
}

TEST_CASE("plateau estimate") {
    OverlapSet flat;
    const int dim = 11;
    flat.energies = Eigen::VectorXd::LinSpaced(dim, -1.0, 1.0);
    flat.weights = Eigen::VectorXd::Constant(dim, 1.0 / dim);
    CHECK(plateau_estimate(flat) == doctest::Approx(1.0 / dim).epsilon(1e-14));

    OverlapSet pair;
    pair.energies = Eigen::Vector3d(-1.0, 0.5, 0.5 + 1e-12);
    pair.weights = Eigen::Vector3d(0.5, 0.25, 0.25);
    CHECK(plateau_estimate(pair) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("plateau estimate is the long-time average of a nondegenerate spectrum") {
    const auto s = spec_of(SymmetryClass::U, 60, 5.0);
    const OverlapSet o = decompose_fast(assemble(s, sample_realization(s, {5, 5})));
    // Irregular sample of very late times; independent of the exact window formula.
    double acc = 0.0;
    const int m = 40000;
    for (int k = 0; k < m; ++k) acc += survival_at(o, 1e5 + 1e7 * std::fmod(k * 0.6180339887498949, 1.0));
    CHECK(acc / m == doctest::Approx(plateau_estimate(o)).epsilon(0.01));
}

TEST_CASE("window average equals direct integration of the survival curve") {
    const auto s = spec_of(SymmetryClass::O, 30, 3.0);
    const OverlapSet o = decompose_fast(assemble(s, sample_realization(s, {6, 1})));
    const double t0 = 20.0, t1 = 70.0;
    const int n = 20000;
    const double h = (t1 - t0) / n;
    double simpson = survival_at(o, t0) + survival_at(o, t1);
    for (int i = 1; i < n; ++i) simpson += survival_at(o, t0 + i * h) * (i % 2 ? 4.0 : 2.0);
    simpson *= h / 3.0 / (t1 - t0);
    CHECK(window_average(o, t0, t1) == doctest::Approx(simpson).epsilon(1e-9));
    CHECK_THROWS_AS(window_average(o, 2.0, 1.0), DomainError);
}

TEST_CASE("time grids") {
    const auto g = geometric_grid(1e-3, 10.0, 200);
    CHECK(g.size() == 200);
    CHECK(g.front() == 1e-3);
    CHECK(g.back() == 10.0);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
    const auto l = linear_grid(0.0, 1.0, 5);
    CHECK(l == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
}

TEST_CASE("Monte Carlo curve properties") {
    const auto s = spec_of(SymmetryClass::U, 30, 4.0);
    std::vector<double> tau = linear_grid(0.0, 3.0, 31);
    const SurvivalCurve c = average_survival(s, tau, 64, 8);
    CHECK(c.mean[0] == 1.0);
    CHECK(c.sem[0] == 0.0);
    CHECK(c.samples == 64);
    for (std::size_t j = 0; j < tau.size(); ++j) {
        CHECK(c.mean[j] >= 0.0);
        CHECK(c.mean[j] <= 1.0);
        CHECK(c.t[j] == doctest::Approx(s.t_from_tau(tau[j])));
    }
    CHECK(c.late_mean > 0.0);
    CHECK(c.plateau_mean > 0.0);

    const SurvivalCurve off = average_survival(spec_of(SymmetryClass::U, 30, 0.0), tau, 16, 8);
    for (std::size_t j = 0; j < tau.size(); ++j) {
        CHECK(off.mean[j] == 1.0);
        CHECK(off.sem[j] == 0.0);
    }
    CHECK(off.late_mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(off.plateau_mean == 1.0);
}

TEST_CASE("sweeps reuse the reduction without changing results") {
    for (auto cls : {SymmetryClass::U, SymmetryClass::S}) {
        const auto base = spec_of(cls, 24, 0.0);
        const std::vector<double> gammas = {0.5, 6.0};
        const auto tau = geometric_grid(0.01, 5.0, 20);
        const SweepResult sweep = average_survival_sweep(base, gammas, tau, 20, 3);
        for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
            const SurvivalCurve single = average_survival(base.with_gamma(gammas[gi]), tau, 20, 3);
            for (std::size_t j = 0; j < tau.size(); ++j)
                CHECK(std::abs(sweep.curves[gi].mean[j] - single.mean[j]) <= 1e-12);
        }
    }
}

TEST_CASE("results are bit-identical for any worker count") {
    const auto s = spec_of(SymmetryClass::O, 40, 3.0);
    const auto tau = geometric_grid(0.01, 5.0, 15);
    MonteCarloOptions one, many;
    many.workers = 5;
    const SurvivalCurve a = average_survival(s, tau, 100, 12, one);
    const SurvivalCurve b = average_survival(s, tau, 100, 12, many);
    CHECK(a.mean == b.mean);
    CHECK(a.sem == b.sem);
    CHECK(a.late_mean == b.late_mean);
    CHECK(a.plateau_mean == b.plateau_mean);
}

TEST_CASE("interrupted runs resume to the uninterrupted result") {
    const fs::path dir = scratch("resume");
    const auto s = spec_of(SymmetryClass::U, 30, 5.0);
    const auto tau = geometric_grid(0.01, 5.0, 12);
    const std::vector<double> gammas = {5.0, 0.5};
    MonteCarloOptions opts;
    opts.block_size = 4;
    const SweepResult whole = average_survival_sweep(s, gammas, tau, 50, 4, opts);

    opts.checkpoint_path = (dir / "ck.partial").string();
    opts.max_new_blocks = 5;
    SweepResult part = average_survival_sweep(s, gammas, tau, 50, 4, opts);
    CHECK_FALSE(part.complete);
    part = average_survival_sweep(s, gammas, tau, 50, 4, opts);
    CHECK_FALSE(part.complete);
    opts.max_new_blocks = std::numeric_limits<std::size_t>::max();
    opts.workers = 3;
    const SweepResult resumed = average_survival_sweep(s, gammas, tau, 50, 4, opts);
    REQUIRE(resumed.complete);
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
        CHECK(resumed.curves[gi].mean == whole.curves[gi].mean);
        CHECK(resumed.curves[gi].sem == whole.curves[gi].sem);
        CHECK(resumed.curves[gi].late_mean == whole.curves[gi].late_mean);
    }

    // A checkpoint written for different settings is ignored, not merged.
    const SweepResult other = average_survival_sweep(s, gammas, tau, 50, 99, opts);
    MonteCarloOptions plain;
    plain.block_size = 4;
    const SweepResult clean = average_survival_sweep(s, gammas, tau, 50, 99, plain);
    CHECK(other.curves[0].mean == clean.curves[0].mean);
    fs::remove_all(dir);
}

TEST_CASE("dense cross-check accepts healthy realizations") {
    const auto s = spec_of(SymmetryClass::S, 20, 6.0);
    MonteCarloOptions opts;
    opts.verify_every = 1;
    const SweepResult r = average_survival_sweep(s, {6.0}, geometric_grid(0.01, 5.0, 10), 12, 5, opts);
    CHECK(r.discarded == 0);
    CHECK(r.attempted == 12);
}

TEST_CASE("invalid Monte Carlo settings are rejected") {
    const auto s = spec_of(SymmetryClass::U, 10, 1.0);
    const std::vector<double> tau = {0.1};
    CHECK_THROWS_AS(average_survival(s, tau, 1, 1), ConfigError);
    CHECK_THROWS_AS(average_survival_sweep(s, {}, tau, 10, 1), ConfigError);
    CHECK_THROWS_AS(average_survival_sweep(s, {-1.0}, tau, 10, 1), ConfigError);
    MonteCarloOptions bad;
    bad.late_tau0 = 3.0;
    bad.late_tau1 = 2.0;
    CHECK_THROWS_AS(average_survival(s, tau, 10, 1, bad), ConfigError);
}

TEST_CASE("empirical form factor follows the unit-normalised class forms") {
    const std::vector<double> tau = {0.5, 1.0, 3.0, 4.5};
    SUBCASE("unitary") {
        const auto k = empirical_sff(spec_of(SymmetryClass::U, 300), 300, tau, 2, 2);
        CHECK(std::abs(k.k[0] - 0.5) < 4 * k.sem[0] + 0.03);
        CHECK(std::abs(k.k[2] - 1.0) < 4 * k.sem[2] + 0.03);
        CHECK(std::abs(k.k[3] - 1.0) < 4 * k.sem[3] + 0.03);
    }
    SUBCASE("orthogonal") {
        const auto k = empirical_sff(spec_of(SymmetryClass::O, 300), 300, tau, 2, 2);
        CHECK(std::abs(k.k[1] - (2.0 - std::log(3.0))) < 4 * k.sem[1] + 0.03);
        CHECK(std::abs(k.k[1] - sff_analytic(SymmetryClass::O, 1.0)) < 4 * k.sem[1] + 0.03);
    }
    SUBCASE("Poisson levels are uncorrelated") {
        auto s = spec_of(SymmetryClass::U, 300);
        s.bath = BathVariant::Poisson;
        const auto k = empirical_sff(s, 300, tau, 2, 2);
        CHECK(std::abs(k.k[0] - 1.0) < 4 * k.sem[0] + 0.03);
    }
}

TEST_CASE("dot levels collapse Kramers pairs") {
    const auto s = spec_of(SymmetryClass::S, 12);
    const Eigen::MatrixXcd h = sample_dot(s, {1, 2});
    const Eigen::VectorXd lv = dot_levels(s, h);
    CHECK(lv.size() == 12);
    for (Eigen::Index i = 1; i < lv.size(); ++i) CHECK(lv[i] > lv[i - 1]);
}

TEST_CASE("survival CSV round-trip") {
    const auto s = spec_of(SymmetryClass::O, 20, 2.5);
    MonteCarloOptions o;
    o.late_tau0 = 1.5;
    o.late_tau1 = 4.0;
    const SurvivalCurve c = average_survival(s, geometric_grid(0.01, 3.0, 7), 10, 42, o);
    std::stringstream ss;
    write_survival_csv(ss, c, {"note: test"});
    const std::string text = ss.str();
    CHECK(text.find("# note: test\n") == 0);
    CHECK(text.find("tau,t,p_mean,p_stderr,n\n") != std::string::npos);
    const SurvivalCurve back = read_survival_csv(ss);
    CHECK(back.tau == c.tau);
    CHECK(back.t == c.t);
    CHECK(back.mean == c.mean);
    CHECK(back.sem == c.sem);
    CHECK(back.samples == c.samples);
    CHECK(back.spec == c.spec);
    CHECK(back.master_seed == 42);
    CHECK(back.late_tau0 == 1.5);
    CHECK(back.late_tau1 == 4.0);
    CHECK(back.late_mean == c.late_mean);
    CHECK(back.plateau_mean == c.plateau_mean);
}

}
