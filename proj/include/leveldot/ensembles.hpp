#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>

#include "leveldot/rng.hpp"

namespace leveldot {

/// Wigner-Dyson symmetry class of the dot.
enum class SymmetryClass { U, O, S };

/// Spectral statistics of the dot: Gaussian random matrix or i.i.d. levels.
enum class BathVariant { RMT, Poisson };

std::string_view to_string(SymmetryClass cls);
std::string_view to_string(BathVariant bath);
SymmetryClass parse_symmetry_class(std::string_view text);
BathVariant parse_bath_variant(std::string_view text);

/// Parameters of the level-dot ensemble.
///
/// `n` counts dot levels; for class S it counts Kramers pairs, so the dot
/// block is 2n x 2n and the level is a Kramers doublet.
struct EnsembleSpec {
    SymmetryClass cls = SymmetryClass::U;
    int n = 399;
    double lambda = 1.0;
    double g = 0.0;
    double epsilon0 = 0.0;
    BathVariant bath = BathVariant::RMT;

    /// Throws ConfigError unless n >= 2, lambda > 0, g >= 0 and all finite.
    void validate() const;

    /// Dimensionless coupling gamma = g * n.
    double gamma() const { return g * n; }

    /// Dimension of the level block (1, or 2 for the class-S doublet).
    int level_dim() const { return cls == SymmetryClass::S ? 2 : 1; }
    int dot_dim() const { return cls == SymmetryClass::S ? 2 * n : n; }
    int full_dim() const { return level_dim() + dot_dim(); }

    /// Density of distinct dot levels at the band center, n / (pi lambda).
    double band_center_density() const;

    /// Heisenberg-time conversion: tau = t * lambda / (2 n).
    double tau_from_t(double t) const { return t * lambda / (2.0 * n); }
    double t_from_tau(double tau) const { return tau * 2.0 * n / lambda; }

    /// Copy with g chosen so that gamma() == gamma.
    EnsembleSpec with_gamma(double gamma) const;

    friend bool operator==(const EnsembleSpec&, const EnsembleSpec&) = default;
};

/// One sampled level-dot Hamiltonian.
///
/// `w` has level_dim() rows and dot_dim() columns; row i couples level
/// state i to the dot.
struct Realization {
    Eigen::MatrixXcd h;
    Eigen::MatrixXcd w;
    double epsilon0 = 0.0;
    SeedPath seed_path;
};

/// Gaussian dot matrix for the spec's symmetry class.
///
/// U: complex off-diagonal entries with <|H_kl|^2> = lambda^2/n, real diagonal
/// with variance lambda^2/n. O: real symmetric, off-diagonal variance
/// lambda^2/n, diagonal 2 lambda^2/n. S: quaternion self-dual 2n x 2n with
/// <|q_kl|^2> = lambda^2/n per quaternion. All three have semicircle radius
/// 2 lambda.
Eigen::MatrixXcd sample_dot(const EnsembleSpec& spec, SeedPath path);

/// Diagonal dot with n i.i.d. levels uniform on [-2 lambda, 2 lambda],
/// sorted ascending (each level doubled for class S).
Eigen::MatrixXcd sample_poisson_dot(const EnsembleSpec& spec, SeedPath path);

/// Coupling block, level_dim() x dot_dim(), normalized so that
/// tr(W W^dagger) has mean g lambda^2.
///
/// The draw is sqrt(g) times a g-independent unit draw, so realizations at
/// different g with the same seed path share their random numbers.
Eigen::MatrixXcd sample_coupling(const EnsembleSpec& spec, SeedPath path);

/// Samples dot (RMT or Poisson per spec.bath) and coupling.
Realization sample_realization(const EnsembleSpec& spec, SeedPath path);

/// Full Hamiltonian [[epsilon0 I, W], [W^dagger, H]]; the level occupies the
/// leading basis slot(s). Throws AssemblyError on inconsistent shapes.
Eigen::MatrixXcd assemble(const EnsembleSpec& spec, const Eigen::MatrixXcd& h,
                          const Eigen::MatrixXcd& w);
Eigen::MatrixXcd assemble(const EnsembleSpec& spec, const Realization& r);

/// Max-norm of A - A^dagger.
double hermiticity_defect(const Eigen::MatrixXcd& a);

/// Max-norm of the deviation from quaternion-real 2x2 block structure
/// (the symplectic time-reversal condition) for an even-dimensional matrix.
double quaternion_defect(const Eigen::MatrixXcd& a);

}  // namespace leveldot
