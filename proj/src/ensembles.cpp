#include "leveldot/ensembles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "leveldot/errors.hpp"

namespace leveldot {

using cd = std::complex<double>;

std::string_view to_string(SymmetryClass cls) {
    switch (cls) {
        case SymmetryClass::U: return "U";
        case SymmetryClass::O: return "O";
        case SymmetryClass::S: return "S";
    }
    return "?";
}

std::string_view to_string(BathVariant bath) {
    return bath == BathVariant::RMT ? "rmt" : "poisson";
}

SymmetryClass parse_symmetry_class(std::string_view text) {
    std::string t(text);
    for (auto& ch : t) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (t == "U" || t == "GUE") return SymmetryClass::U;
    if (t == "O" || t == "GOE") return SymmetryClass::O;
    if (t == "S" || t == "GSE") return SymmetryClass::S;
    throw ConfigError("unknown symmetry class '" + std::string(text) + "' (expected U, O or S)");
}

BathVariant parse_bath_variant(std::string_view text) {
    if (text == "rmt" || text == "RMT") return BathVariant::RMT;
    if (text == "poisson" || text == "Poisson") return BathVariant::Poisson;
    throw ConfigError("unknown bath variant '" + std::string(text) + "' (expected rmt or poisson)");
}

void EnsembleSpec::validate() const {
    if (n < 2) throw ConfigError("dot dimension n must be >= 2, got " + std::to_string(n));
    if (!(std::isfinite(lambda) && lambda > 0.0)) throw ConfigError("lambda must be finite and > 0");
    if (!(std::isfinite(g) && g >= 0.0)) throw ConfigError("coupling g must be finite and >= 0");
    if (!std::isfinite(epsilon0)) throw ConfigError("epsilon0 must be finite");
    if (!std::isfinite(gamma())) throw ConfigError("gamma = g n is not finite");
}

double EnsembleSpec::band_center_density() const {
    return n / (std::numbers::pi * lambda);
}

EnsembleSpec EnsembleSpec::with_gamma(double gamma_value) const {
    EnsembleSpec out = *this;
    out.g = gamma_value / n;
    return out;
}

namespace {

// 2x2 quaternion-real block [[a0 + i a3, a2 + i a1], [-a2 + i a1, a0 - i a3]].
inline void put_quaternion(Eigen::MatrixXcd& m, Eigen::Index row, Eigen::Index col, double a0,
                           double a1, double a2, double a3) {
    m(row, col) = cd(a0, a3);
    m(row, col + 1) = cd(a2, a1);
    m(row + 1, col) = cd(-a2, a1);
    m(row + 1, col + 1) = cd(a0, -a3);
}

Eigen::MatrixXcd sample_gue(int n, double lambda, PhiloxStream& rng) {
    Eigen::MatrixXcd h(n, n);
    const double diag_sd = lambda / std::sqrt(static_cast<double>(n));
    const double part_sd = lambda / std::sqrt(2.0 * n);
    for (int k = 0; k < n; ++k) {
        h(k, k) = cd(diag_sd * rng.normal(), 0.0);
        for (int l = k + 1; l < n; ++l) {
            const double re = part_sd * rng.normal();
            const double im = part_sd * rng.normal();
            h(k, l) = cd(re, im);
            h(l, k) = cd(re, -im);
        }
    }
    return h;
}

Eigen::MatrixXcd sample_goe(int n, double lambda, PhiloxStream& rng) {
    Eigen::MatrixXcd h(n, n);
    const double off_sd = lambda / std::sqrt(static_cast<double>(n));
    const double diag_sd = lambda * std::sqrt(2.0 / n);
    for (int k = 0; k < n; ++k) {
        h(k, k) = cd(diag_sd * rng.normal(), 0.0);
        for (int l = k + 1; l < n; ++l) {
            const double x = off_sd * rng.normal();
            h(k, l) = cd(x, 0.0);
            h(l, k) = cd(x, 0.0);
        }
    }
    return h;
}

Eigen::MatrixXcd sample_gse(int n, double lambda, PhiloxStream& rng) {
    // <|q_kl|^2> = lambda^2/n spread over four real components; the real
    // scalar diagonal carries lambda^2/(2n).
    Eigen::MatrixXcd h(2 * n, 2 * n);
    const double comp_sd = lambda / std::sqrt(4.0 * n);
    const double diag_sd = lambda / std::sqrt(2.0 * n);
    for (int k = 0; k < n; ++k) {
        const double a = diag_sd * rng.normal();
        put_quaternion(h, 2 * k, 2 * k, a, 0.0, 0.0, 0.0);
        for (int l = k + 1; l < n; ++l) {
            const double a0 = comp_sd * rng.normal();
            const double a1 = comp_sd * rng.normal();
            const double a2 = comp_sd * rng.normal();
            const double a3 = comp_sd * rng.normal();
            put_quaternion(h, 2 * k, 2 * l, a0, a1, a2, a3);
            h.block(2 * l, 2 * k, 2, 2) = h.block(2 * k, 2 * l, 2, 2).adjoint();
        }
    }
    return h;
}

}  // namespace

Eigen::MatrixXcd sample_dot(const EnsembleSpec& spec, SeedPath path) {
    spec.validate();
    if (spec.bath != BathVariant::RMT) throw ConfigError("sample_dot requires bath = rmt");
    PhiloxStream rng(path, kDotStream);
    switch (spec.cls) {
        case SymmetryClass::U: return sample_gue(spec.n, spec.lambda, rng);
        case SymmetryClass::O: return sample_goe(spec.n, spec.lambda, rng);
        case SymmetryClass::S: return sample_gse(spec.n, spec.lambda, rng);
    }
    throw ConfigError("unreachable symmetry class");
}

Eigen::MatrixXcd sample_poisson_dot(const EnsembleSpec& spec, SeedPath path) {
    spec.validate();
    if (spec.bath != BathVariant::Poisson) throw ConfigError("sample_poisson_dot requires bath = poisson");
    PhiloxStream rng(path, kDotStream);
    std::vector<double> levels(spec.n);
    for (double& e : levels) e = spec.lambda * (4.0 * rng.uniform() - 2.0);
    std::sort(levels.begin(), levels.end());

    const int mult = spec.level_dim();
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(spec.dot_dim(), spec.dot_dim());
    for (int k = 0; k < spec.n; ++k)
        for (int s = 0; s < mult; ++s) h(mult * k + s, mult * k + s) = levels[k];
    return h;
}

Eigen::MatrixXcd sample_coupling(const EnsembleSpec& spec, SeedPath path) {
    spec.validate();
    PhiloxStream rng(path, kCouplingStream);
    const int n = spec.n;
    const double scale = std::sqrt(spec.g) * spec.lambda;
    Eigen::MatrixXcd w(spec.level_dim(), spec.dot_dim());
    switch (spec.cls) {
        case SymmetryClass::U: {
            const double sd = scale / std::sqrt(2.0 * n);
            for (int k = 0; k < n; ++k) {
                const double re = rng.normal();
                const double im = rng.normal();
                w(0, k) = cd(sd * re, sd * im);
            }
            break;
        }
        case SymmetryClass::O: {
            const double sd = scale / std::sqrt(static_cast<double>(n));
            for (int k = 0; k < n; ++k) w(0, k) = cd(sd * rng.normal(), 0.0);
            break;
        }
        case SymmetryClass::S: {
            // Doublet-to-pair quaternions; tr(W W^dagger) = 2 sum_k |q_k|^2
            // has mean g lambda^2, i.e. <|q_k|^2> = g lambda^2 / (2n).
            const double sd = scale / std::sqrt(8.0 * n);
            for (int k = 0; k < n; ++k) {
                const double a0 = rng.normal(), a1 = rng.normal();
                const double a2 = rng.normal(), a3 = rng.normal();
                put_quaternion(w, 0, 2 * k, sd * a0, sd * a1, sd * a2, sd * a3);
            }
            break;
        }
    }
    return w;
}

Realization sample_realization(const EnsembleSpec& spec, SeedPath path) {
    Realization r;
    r.h = spec.bath == BathVariant::RMT ? sample_dot(spec, path) : sample_poisson_dot(spec, path);
    r.w = sample_coupling(spec, path);
    r.epsilon0 = spec.epsilon0;
    r.seed_path = path;
    return r;
}

Eigen::MatrixXcd assemble(const EnsembleSpec& spec, const Eigen::MatrixXcd& h,
                          const Eigen::MatrixXcd& w) {
    const Eigen::Index ld = spec.level_dim();
    const Eigen::Index dd = spec.dot_dim();
    if (h.rows() != dd || h.cols() != dd)
        throw AssemblyError("dot block is " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                            ", expected " + std::to_string(dd) + "x" + std::to_string(dd));
    if (w.rows() != ld || w.cols() != dd)
        throw AssemblyError("coupling block is " + std::to_string(w.rows()) + "x" +
                            std::to_string(w.cols()) + ", expected " + std::to_string(ld) + "x" +
                            std::to_string(dd));
    Eigen::MatrixXcd a(ld + dd, ld + dd);
    a.topLeftCorner(ld, ld) = spec.epsilon0 * Eigen::MatrixXcd::Identity(ld, ld);
    a.topRightCorner(ld, dd) = w;
    a.bottomLeftCorner(dd, ld) = w.adjoint();
    a.bottomRightCorner(dd, dd) = h;
    return a;
}

Eigen::MatrixXcd assemble(const EnsembleSpec& spec, const Realization& r) {
    EnsembleSpec s = spec;
    s.epsilon0 = r.epsilon0;
    return assemble(s, r.h, r.w);
}

double hermiticity_defect(const Eigen::MatrixXcd& a) {
    if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

double quaternion_defect(const Eigen::MatrixXcd& a) {
    if (a.rows() % 2 != 0 || a.cols() % 2 != 0) return std::numeric_limits<double>::infinity();
    double defect = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); i += 2) {
        for (Eigen::Index j = 0; j < a.cols(); j += 2) {
            defect = std::max(defect, std::abs(a(i + 1, j + 1) - std::conj(a(i, j))));
            defect = std::max(defect, std::abs(a(i + 1, j) + std::conj(a(i, j + 1))));
        }
    }
    return defect;
}

}  // namespace leveldot
