#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "leveldot/ensembles.hpp"

namespace leveldot {

/// Eigenvalues of the full Hamiltonian and the squared overlaps of the
/// eigenvectors with the initial level state (basis slot 0).
struct OverlapSet {
    Eigen::VectorXd energies;  // ascending
    Eigen::VectorXd weights;   // |<alpha|0>|^2, same order

    double weight_sum() const { return weights.sum(); }
};

/// Real symmetric tridiagonal matrix: diagonal d (size m), subdiagonal e (size m-1).
struct Tridiagonal {
    Eigen::VectorXd d;
    Eigen::VectorXd e;
};

/// Householder reduction A = Q T Q^dagger with Q e_0 = e_0, so the first
/// components of the eigenvectors of A and T coincide in modulus.
Tridiagonal tridiagonalize(const Eigen::MatrixXcd& a);

/// Eigenvalues and squared first eigenvector components of a symmetric
/// tridiagonal matrix by implicit QL, carrying only the first row of the
/// eigenvector matrix. Throws NumericalError when an eigenvalue fails to
/// converge in 60 sweeps.
OverlapSet tridiagonal_overlaps(const Tridiagonal& t);

/// Dense path: full eigendecomposition of A. Throws NumericalError when a
/// residual ||A v - e v|| exceeds residual_tol.
OverlapSet decompose(const Eigen::MatrixXcd& a, double residual_tol);

/// Tridiagonal path for the same result in O(dim^2) after the reduction.
OverlapSet decompose_fast(const Eigen::MatrixXcd& a);

/// Largest ||A v - e v|| over all eigenpairs from a dense decomposition.
double max_residual(const Eigen::MatrixXcd& a);

/// P(t) = |sum_alpha w_alpha exp(-i e_alpha t)|^2 / (sum w)^2, so P(0) = 1 exactly.
std::vector<double> survival(const OverlapSet& o, const std::vector<double>& times);
double survival_at(const OverlapSet& o, double t);

/// Infinite-time average of P(t): sum over distinct energies of the squared
/// total weight within each degenerate group (groups are runs of energies
/// closer than degeneracy_tol), normalised by (sum w)^2.
double plateau_estimate(const OverlapSet& o, double degeneracy_tol = 1e-9);

/// Exact time average of P(t) over [t0, t1].
double window_average(const OverlapSet& o, double t0, double t1);

/// Geometric and uniform grids, endpoints included.
std::vector<double> geometric_grid(double lo, double hi, std::size_t points);
std::vector<double> linear_grid(double lo, double hi, std::size_t points);

/// Ensemble-averaged survival probability on a tau grid with late-time
/// observables.
struct SurvivalCurve {
    EnsembleSpec spec;
    std::uint64_t master_seed = 0;
    std::vector<double> tau;
    std::vector<double> t;
    std::vector<double> mean;
    std::vector<double> sem;  // standard error of the mean
    std::size_t samples = 0;

    /// Time average over the late window [late_tau0, late_tau1], per
    /// realization, then averaged.
    double late_tau0 = 2.0, late_tau1 = 5.0;
    double late_mean = 0.0, late_sem = 0.0;
    /// Ensemble mean of the plateau estimate.
    double plateau_mean = 0.0, plateau_sem = 0.0;
};

struct MonteCarloOptions {
    unsigned workers = 1;
    /// Realizations per reduction block; results depend on it, not on workers.
    std::size_t block_size = 16;
    /// Completed blocks are appended here and reused on the next call with
    /// the same fingerprint. Empty disables checkpointing.
    std::string checkpoint_path;
    /// Stop after this many newly computed blocks (simulated interruption).
    std::size_t max_new_blocks = std::numeric_limits<std::size_t>::max();
    /// Every k-th realization (k > 0) is re-solved densely; residuals above
    /// residual_tol or survival mismatches above 1e-8 discard it.
    std::size_t verify_every = 0;
    double residual_tol = 1e-8;
    double late_tau0 = 2.0, late_tau1 = 5.0;
    std::function<void(const std::string&)> log;
};

struct SweepResult {
    std::vector<SurvivalCurve> curves;  // one per gamma, same order
    std::size_t attempted = 0;
    std::size_t discarded = 0;
    bool complete = true;
};

/// Monte Carlo over realizations 0..n_samples-1 of the base spec at each
/// requested gamma. For a one-state level the coupling enters the reduced
/// tridiagonal form only through its first off-diagonal element, so every
/// gamma reuses the same reduction of each realization. Results are
/// bit-identical for any worker count. Throws NumericalError when fewer
/// than 90% of realizations pass validation.
SweepResult average_survival_sweep(const EnsembleSpec& base, const std::vector<double>& gammas,
                                   const std::vector<double>& tau, std::size_t n_samples,
                                   std::uint64_t master_seed, const MonteCarloOptions& opts = {});

SurvivalCurve average_survival(const EnsembleSpec& spec, const std::vector<double>& tau,
                               std::size_t n_samples, std::uint64_t master_seed,
                               const MonteCarloOptions& opts = {});

/// Connected spectral form factor of the isolated dot on the band centre
/// |E| < lambda/2 after unfolding with the semicircle counting function;
/// normalised to 1 for tau -> infinity. Class S uses one level per Kramers pair.
struct FormFactorCurve {
    std::vector<double> tau;
    std::vector<double> k;
    std::vector<double> sem;
    std::size_t samples = 0;
};
FormFactorCurve empirical_sff(const EnsembleSpec& spec, std::size_t n_samples,
                              const std::vector<double>& tau, std::uint64_t master_seed,
                              unsigned workers = 1);

/// Dot eigenvalues, ascending; class S keeps one level per Kramers pair.
Eigen::VectorXd dot_levels(const EnsembleSpec& spec, const Eigen::MatrixXcd& h);

/// CSV with columns tau, t, p_mean, p_stderr, n; header_lines are written
/// as '#' comments first.
void write_survival_csv(std::ostream& out, const SurvivalCurve& curve,
                        const std::vector<std::string>& header_lines = {});

/// Reads the columns back; spec, seed and late-window fields are taken from
/// the '#' header when present.
SurvivalCurve read_survival_csv(std::istream& in);

}  // namespace leveldot
