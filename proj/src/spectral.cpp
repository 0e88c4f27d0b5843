#include "leveldot/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include "leveldot/csv.hpp"
#include "leveldot/errors.hpp"

#include <lapacke.h>

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace leveldot {

namespace {

void pin_blas_threads() {
    // Single-threaded BLAS inside each worker: results must not depend on
    // how many threads the library would otherwise pick.
    static std::once_flag once;
    std::call_once(once, [] {
        if (openblas_set_num_threads) openblas_set_num_threads(1);
    });
}

}  // namespace

Tridiagonal tridiagonalize(const Eigen::MatrixXcd& a) {
    if (a.rows() != a.cols() || a.rows() == 0) throw AssemblyError("tridiagonalize: matrix must be square");
    const lapack_int n = static_cast<lapack_int>(a.rows());
    Tridiagonal t;
    t.d.resize(n);
    t.e.resize(n - 1);
    if (n == 1) {
        t.d[0] = a(0, 0).real();
        return t;
    }
    pin_blas_threads();
    // Lower-triangle reduction: the reflectors never touch row/column 0, so
    // Q e_0 = e_0.
    lapack_int info;
    if (a.imag().cwiseAbs().maxCoeff() == 0.0) {
        Eigen::MatrixXd work = a.real();
        Eigen::VectorXd tau(n - 1);
        info = LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', n, work.data(), n, t.d.data(), t.e.data(), tau.data());
    } else {
        Eigen::MatrixXcd work = a;
        Eigen::VectorXcd tau(n - 1);
        info = LAPACKE_zhetrd(LAPACK_COL_MAJOR, 'L', n, reinterpret_cast<lapack_complex_double*>(work.data()),
                              n, t.d.data(), t.e.data(), reinterpret_cast<lapack_complex_double*>(tau.data()));
    }
    if (info != 0) throw NumericalError("tridiagonal reduction failed, info = " + std::to_string(info));
    // Only |e| matters for eigenvalues and first-component moduli.
    t.e = t.e.cwiseAbs();
    return t;
}

OverlapSet tridiagonal_overlaps(const Tridiagonal& t) {
    const int n = static_cast<int>(t.d.size());
    if (n == 0) throw AssemblyError("tridiagonal_overlaps: empty matrix");
    if (t.e.size() != n - 1) throw AssemblyError("tridiagonal_overlaps: subdiagonal size mismatch");

    std::vector<double> d(t.d.data(), t.d.data() + n);
    std::vector<double> e(n, 0.0);
    for (int i = 0; i + 1 < n; ++i) e[i] = t.e[i];
    std::vector<double> z(n, 0.0);  // first row of the eigenvector matrix
    z[0] = 1.0;

    // Implicit-shift QL (tqli) with the rotations applied to row 0 only.
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) + dd == dd) break;
            }
            if (m != l) {
                if (iter++ == 60)
                    throw NumericalError("tridiagonal QL failed to converge at index " + std::to_string(l));
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::sqrt(g * g + 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                int i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    e[i + 1] = (r = std::sqrt(f * f + g * g));
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return d[x] < d[y] || (d[x] == d[y] && x < y); });
    OverlapSet o;
    o.energies.resize(n);
    o.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        o.energies[i] = d[order[i]];
        o.weights[i] = z[order[i]] * z[order[i]];
    }
    return o;
}

OverlapSet decompose(const Eigen::MatrixXcd& a, double residual_tol) {
    if (a.rows() != a.cols() || a.rows() == 0) throw AssemblyError("decompose: matrix must be square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver did not converge");
    const Eigen::MatrixXcd& v = es.eigenvectors();
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double worst = ((a * v) - v * ev.asDiagonal()).colwise().norm().maxCoeff();
    if (!(worst <= residual_tol))
        throw NumericalError("eigen-residual " + format_double(worst) + " exceeds tolerance " +
                             format_double(residual_tol));
    OverlapSet o;
    o.energies = ev;
    o.weights = v.row(0).cwiseAbs2().transpose();
    return o;
}

OverlapSet decompose_fast(const Eigen::MatrixXcd& a) { return tridiagonal_overlaps(tridiagonalize(a)); }

double max_residual(const Eigen::MatrixXcd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver did not converge");
    const Eigen::MatrixXcd& v = es.eigenvectors();
    return ((a * v) - v * es.eigenvalues().asDiagonal()).colwise().norm().maxCoeff();
}

double survival_at(const OverlapSet& o, double t) {
    if (t == 0.0) return 1.0;
    double re = 0.0, im = 0.0, total = 0.0;
    for (Eigen::Index k = 0; k < o.energies.size(); ++k) {
        const double w = o.weights[k];
        const double phase = o.energies[k] * t;
        re += w * std::cos(phase);
        im -= w * std::sin(phase);
        total += w;
    }
    return (re * re + im * im) / (total * total);
}

std::vector<double> survival(const OverlapSet& o, const std::vector<double>& times) {
    std::vector<double> p(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) p[i] = survival_at(o, times[i]);
    return p;
}

double plateau_estimate(const OverlapSet& o, double degeneracy_tol) {
    const Eigen::Index n = o.energies.size();
    double total = 0.0, sum = 0.0;
    Eigen::Index i = 0;
    while (i < n) {
        double group = o.weights[i];
        Eigen::Index j = i + 1;
        while (j < n && o.energies[j] - o.energies[j - 1] < degeneracy_tol) group += o.weights[j++];
        sum += group * group;
        total += group;
        i = j;
    }
    return sum / (total * total);
}

double window_average(const OverlapSet& o, double t0, double t1) {
    if (!(t1 > t0)) throw DomainError("window_average: need t1 > t0");
    const double total = o.weights.sum();
    // States with negligible weight (e.g. the decoupled Kramers partners)
    // cannot move the double sum at double precision.
    std::vector<double> e, w, c0, s0, c1, s1;
    for (Eigen::Index k = 0; k < o.energies.size(); ++k) {
        if (o.weights[k] > 1e-20 * total) {
            const double ek = o.energies[k];
            e.push_back(ek);
            w.push_back(o.weights[k]);
            c0.push_back(std::cos(ek * t0));
            s0.push_back(std::sin(ek * t0));
            c1.push_back(std::cos(ek * t1));
            s1.push_back(std::sin(ek * t1));
        }
    }
    // Mean of cos(D t) over the window is (sin D t1 - sin D t0) / (D T); the
    // sines of differences come from the tabulated per-level phases.
    const double span = t1 - t0;
    const double mid = 0.5 * (t0 + t1);
    double acc = 0.0;
    for (std::size_t a = 0; a < e.size(); ++a) {
        acc += w[a] * w[a];
        double row = 0.0;
        for (std::size_t b = a + 1; b < e.size(); ++b) {
            const double delta = e[b] - e[a];
            const double arg = delta * span;
            double mean_cos;
            if (std::abs(arg) < 1e-3) {
                const double h2 = 0.25 * arg * arg;
                mean_cos = std::cos(delta * mid) * (1.0 - h2 / 6.0 + h2 * h2 / 120.0);
            } else {
                const double sin1 = s1[b] * c1[a] - c1[b] * s1[a];
                const double sin0 = s0[b] * c0[a] - c0[b] * s0[a];
                mean_cos = (sin1 - sin0) / arg;
            }
            row += w[b] * mean_cos;
        }
        acc += 2.0 * w[a] * row;
    }
    return acc / (total * total);
}

std::vector<double> geometric_grid(double lo, double hi, std::size_t points) {
    if (!(lo > 0.0 && hi > lo) || points < 2) throw DomainError("geometric_grid: need 0 < lo < hi, points >= 2");
    std::vector<double> g(points);
    const double step = std::log(hi / lo) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) g[i] = lo * std::exp(step * static_cast<double>(i));
    g.front() = lo;
    g.back() = hi;
    return g;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t points) {
    if (!(hi > lo) || points < 2) throw DomainError("linear_grid: need lo < hi, points >= 2");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    g.back() = hi;
    return g;
}

namespace {

// Running mean / sum of squared deviations for a vector of observables.
struct Moments {
    std::size_t count = 0;
    std::vector<double> mean;
    std::vector<double> m2;

    explicit Moments(std::size_t width = 0) : mean(width, 0.0), m2(width, 0.0) {}

    void add(const std::vector<double>& x) {
        ++count;
        const double inv = 1.0 / static_cast<double>(count);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double delta = x[i] - mean[i];
            mean[i] += delta * inv;
            m2[i] += delta * (x[i] - mean[i]);
        }
    }

    static Moments merge(const Moments& a, const Moments& b) {
        if (a.count == 0) return b;
        if (b.count == 0) return a;
        Moments out(a.mean.size());
        out.count = a.count + b.count;
        const double na = static_cast<double>(a.count), nb = static_cast<double>(b.count);
        const double n = na + nb;
        for (std::size_t i = 0; i < a.mean.size(); ++i) {
            const double delta = b.mean[i] - a.mean[i];
            out.mean[i] = a.mean[i] + delta * (nb / n);
            out.m2[i] = a.m2[i] + b.m2[i] + delta * delta * (na * nb / n);
        }
        return out;
    }

    double sem(std::size_t i) const {
        if (count < 2) return 0.0;
        const double var = std::max(m2[i], 0.0) / static_cast<double>(count - 1);
        return std::sqrt(var / static_cast<double>(count));
    }
};

struct BlockResult {
    Moments moments;
    std::size_t attempted = 0;
};

Moments reduce_tree(const std::vector<BlockResult>& blocks, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return blocks[lo].moments;
    const std::size_t mid = lo + (hi - lo) / 2;
    return Moments::merge(reduce_tree(blocks, lo, mid), reduce_tree(blocks, mid, hi));
}

std::string hex_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string sweep_fingerprint(const EnsembleSpec& base, const std::vector<double>& gammas,
                              const std::vector<double>& tau, std::size_t n_samples,
                              std::uint64_t seed, const MonteCarloOptions& opts) {
    std::ostringstream s;
    s << to_string(base.cls) << ' ' << base.n << ' ' << hex_double(base.lambda) << ' '
      << hex_double(base.epsilon0) << ' ' << to_string(base.bath) << ' ' << n_samples << ' ' << seed
      << ' ' << opts.block_size << ' ' << hex_double(opts.late_tau0) << ' '
      << hex_double(opts.late_tau1) << ' ' << opts.verify_every;
    for (double g : gammas) s << ' ' << hex_double(g);
    s << " |";
    for (double t : tau) s << ' ' << hex_double(t);
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s.str())));
    return buf;
}

class Checkpoint {
public:
    Checkpoint(std::string path, std::string fingerprint, std::size_t width)
        : path_(std::move(path)), fingerprint_(std::move(fingerprint)), width_(width) {}

    // Blocks recorded by an earlier run with the same fingerprint.
    std::vector<std::pair<std::size_t, BlockResult>> load() const {
        std::vector<std::pair<std::size_t, BlockResult>> out;
        std::ifstream in(path_);
        if (!in) return out;
        std::string line;
        if (!std::getline(in, line) || line != "leveldot-checkpoint 1 " + fingerprint_) return out;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string tag;
            std::size_t index = 0;
            BlockResult b;
            b.moments = Moments(width_);
            if (!(ls >> tag >> index >> b.attempted >> b.moments.count) || tag != "block") break;
            bool ok = true;
            for (std::size_t i = 0; i < width_ && ok; ++i) {
                std::string mu, m2;
                if (!(ls >> mu >> m2)) {
                    ok = false;
                    break;
                }
                try {
                    b.moments.mean[i] = parse_double(mu);
                    b.moments.m2[i] = parse_double(m2);
                } catch (const std::exception&) {
                    ok = false;
                }
            }
            std::string end;
            if (!ok || !(ls >> end) || end != "end") break;  // torn final line
            out.emplace_back(index, std::move(b));
        }
        return out;
    }

    void start(const std::vector<std::pair<std::size_t, BlockResult>>& kept) {
        out_.open(path_, std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write checkpoint " + path_);
        out_ << "leveldot-checkpoint 1 " << fingerprint_ << '\n';
        for (const auto& [i, b] : kept) append_locked(i, b);
        out_.flush();
    }

    void append(std::size_t index, const BlockResult& b) {
        std::lock_guard lock(mu_);
        append_locked(index, b);
        out_.flush();
    }

private:
    void append_locked(std::size_t index, const BlockResult& b) {
        out_ << "block " << index << ' ' << b.attempted << ' ' << b.moments.count;
        for (std::size_t i = 0; i < width_; ++i)
            out_ << ' ' << hex_double(b.moments.mean[i]) << ' ' << hex_double(b.moments.m2[i]);
        out_ << " end\n";
    }

    std::string path_, fingerprint_;
    std::size_t width_;
    std::ofstream out_;
    std::mutex mu_;
};

// Runs fn(task) for task in [0, n_tasks) on `workers` threads; the first
// exception is rethrown after all threads stop.
template <class Fn>
void parallel_for(std::size_t n_tasks, unsigned workers, Fn fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_tasks, 1))));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;
    auto body = [&] {
        while (!failed.load()) {
            const std::size_t task = next.fetch_add(1);
            if (task >= n_tasks) return;
            try {
                fn(task);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    if (workers == 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
}

struct Observer {
    const EnsembleSpec& base;
    const std::vector<double>& gammas;
    const std::vector<double>& times;
    double late_t0, late_t1;
    std::size_t width_per_gamma;

    // Moment checks that the QL output is consistent with T: sum w = 1,
    // sum w e = T_00, sum w e^2 = T_00^2 + T_01^2.
    std::optional<std::string> check(const OverlapSet& o, const Tridiagonal& t) const {
        const double sum = o.weights.sum();
        if (!(std::abs(sum - 1.0) <= 1e-10)) return "overlap normalisation off by " + format_double(sum - 1.0);
        const double scale = base.lambda;
        const double first = o.weights.dot(o.energies);
        const double second = o.weights.dot(o.energies.cwiseAbs2());
        const double e0 = t.e.size() > 0 ? t.e[0] : 0.0;
        const double tol1 = 1e-8 * scale, tol2 = 1e-8 * (scale * scale + t.d[0] * t.d[0] + e0 * e0);
        if (!(std::abs(first - t.d[0]) <= tol1)) return "first spectral moment mismatch";
        if (!(std::abs(second - (t.d[0] * t.d[0] + e0 * e0)) <= tol2)) return "second spectral moment mismatch";
        return std::nullopt;
    }

    void record(const OverlapSet& o, std::vector<double>& row, std::size_t slot) const {
        const std::size_t base_index = slot * width_per_gamma;
        for (std::size_t j = 0; j < times.size(); ++j) row[base_index + j] = survival_at(o, times[j]);
        row[base_index + times.size()] = window_average(o, late_t0, late_t1);
        row[base_index + times.size() + 1] = plateau_estimate(o, 1e-9 * base.lambda);
    }
};

}  // namespace

SweepResult average_survival_sweep(const EnsembleSpec& base, const std::vector<double>& gammas,
                                   const std::vector<double>& tau, std::size_t n_samples,
                                   std::uint64_t master_seed, const MonteCarloOptions& opts) {
    base.validate();
    if (n_samples < 2) throw ConfigError("n_samples must be >= 2");
    if (gammas.empty()) throw ConfigError("at least one gamma is required");
    for (double g : gammas)
        if (!(std::isfinite(g) && g >= 0.0)) throw ConfigError("gamma values must be finite and >= 0");
    if (opts.block_size == 0) throw ConfigError("block_size must be >= 1");
    if (!(opts.late_tau1 > opts.late_tau0 && opts.late_tau0 >= 0.0))
        throw ConfigError("late window must satisfy 0 <= tau0 < tau1");

    std::vector<double> times(tau.size());
    for (std::size_t i = 0; i < tau.size(); ++i) times[i] = base.t_from_tau(tau[i]);
    const std::size_t width_per_gamma = tau.size() + 2;
    const std::size_t width = width_per_gamma * gammas.size();
    const Observer obs{base, gammas, times, base.t_from_tau(opts.late_tau0),
                       base.t_from_tau(opts.late_tau1), width_per_gamma};
    const bool shared_reduction = base.level_dim() == 1;
    EnsembleSpec unit = base;
    unit.g = 1.0;

    const std::size_t n_blocks = (n_samples + opts.block_size - 1) / opts.block_size;
    std::vector<std::optional<BlockResult>> blocks(n_blocks);

    std::optional<Checkpoint> checkpoint;
    if (!opts.checkpoint_path.empty()) {
        checkpoint.emplace(opts.checkpoint_path,
                           sweep_fingerprint(base, gammas, tau, n_samples, master_seed, opts), width);
        auto kept = checkpoint->load();
        std::vector<std::pair<std::size_t, BlockResult>> valid;
        for (auto& [i, b] : kept) {
            if (i < n_blocks && !blocks[i]) {
                blocks[i] = b;
                valid.emplace_back(i, std::move(b));
            }
        }
        checkpoint->start(valid);
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < n_blocks; ++i)
        if (!blocks[i]) todo.push_back(i);
    const bool truncated = todo.size() > opts.max_new_blocks;
    if (truncated) todo.resize(opts.max_new_blocks);

    std::mutex log_mu;
    auto log = [&](const std::string& msg) {
        if (!opts.log) return;
        std::lock_guard lock(log_mu);
        opts.log(msg);
    };

    auto run_block = [&](std::size_t task) {
        const std::size_t b = todo[task];
        BlockResult result;
        result.moments = Moments(width);
        std::vector<double> row(width);
        const std::size_t first = b * opts.block_size;
        const std::size_t last = std::min(n_samples, first + opts.block_size);
        for (std::size_t idx = first; idx < last; ++idx) {
            ++result.attempted;
            const SeedPath path{master_seed, idx};
            std::optional<std::string> failure;
            try {
                const Realization r = sample_realization(unit, path);
                std::optional<Tridiagonal> unit_t;
                if (shared_reduction) unit_t = tridiagonalize(assemble(unit, r));
                for (std::size_t gi = 0; gi < gammas.size() && !failure; ++gi) {
                    const double g = gammas[gi] / base.n;
                    Tridiagonal t;
                    if (shared_reduction) {
                        t = *unit_t;
                        if (t.e.size() > 0) t.e[0] *= std::sqrt(g);
                    } else {
                        t = tridiagonalize(assemble(base, r.h, std::sqrt(g) * r.w));
                    }
                    const OverlapSet o = tridiagonal_overlaps(t);
                    failure = obs.check(o, t);
                    if (failure) break;
                    obs.record(o, row, gi);
                    if (opts.verify_every > 0 && idx % opts.verify_every == 0) {
                        const Eigen::MatrixXcd a = assemble(base, r.h, std::sqrt(g) * r.w);
                        const OverlapSet dense = decompose(a, opts.residual_tol * base.lambda);
                        double worst = 0.0;
                        for (std::size_t j = 0; j < times.size(); ++j)
                            worst = std::max(worst, std::abs(survival_at(dense, times[j]) -
                                                             row[gi * width_per_gamma + j]));
                        if (!(worst <= 1e-8))
                            failure = "dense cross-check differs by " + format_double(worst);
                    }
                }
            } catch (const NumericalError& e) {
                failure = e.what();
            }
            if (failure) {
                log("realization " + std::to_string(idx) + " discarded: " + *failure);
                continue;
            }
            result.moments.add(row);
        }
        if (checkpoint) checkpoint->append(b, result);
        blocks[b] = std::move(result);
    };
    parallel_for(todo.size(), opts.workers, run_block);

    SweepResult out;
    out.complete = !truncated;
    std::vector<BlockResult> done;
    for (auto& b : blocks) {
        if (!b) continue;
        out.attempted += b->attempted;
        out.discarded += b->attempted - b->moments.count;
        done.push_back(*b);
    }
    if (done.empty()) return out;
    if (out.complete && static_cast<double>(out.attempted - out.discarded) < 0.9 * static_cast<double>(out.attempted))
        throw NumericalError(std::to_string(out.discarded) + " of " + std::to_string(out.attempted) +
                             " realizations failed validation (more than 10%)");

    const Moments total = reduce_tree(done, 0, done.size());
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
        SurvivalCurve c;
        c.spec = base.with_gamma(gammas[gi]);
        c.master_seed = master_seed;
        c.tau = tau;
        c.t = times;
        c.samples = total.count;
        c.late_tau0 = opts.late_tau0;
        c.late_tau1 = opts.late_tau1;
        const std::size_t off = gi * width_per_gamma;
        for (std::size_t j = 0; j < tau.size(); ++j) {
            c.mean.push_back(total.mean[off + j]);
            c.sem.push_back(total.sem(off + j));
        }
        c.late_mean = total.mean[off + tau.size()];
        c.late_sem = total.sem(off + tau.size());
        c.plateau_mean = total.mean[off + tau.size() + 1];
        c.plateau_sem = total.sem(off + tau.size() + 1);
        out.curves.push_back(std::move(c));
    }
    return out;
}

SurvivalCurve average_survival(const EnsembleSpec& spec, const std::vector<double>& tau,
                               std::size_t n_samples, std::uint64_t master_seed,
                               const MonteCarloOptions& opts) {
    SweepResult r = average_survival_sweep(spec, {spec.gamma()}, tau, n_samples, master_seed, opts);
    if (!r.complete) throw NumericalError("average_survival interrupted before completion");
    return std::move(r.curves.front());
}

Eigen::VectorXd dot_levels(const EnsembleSpec& spec, const Eigen::MatrixXcd& h) {
    Eigen::VectorXd ev;
    if (spec.bath == BathVariant::Poisson || h.isDiagonal(0.0)) {
        ev = h.diagonal().real();
        std::sort(ev.data(), ev.data() + ev.size());
    } else if (spec.cls == SymmetryClass::O) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.real(), Eigen::EigenvaluesOnly);
        ev = es.eigenvalues();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
        ev = es.eigenvalues();
    }
    if (spec.cls != SymmetryClass::S) return ev;
    Eigen::VectorXd distinct(ev.size() / 2);
    for (Eigen::Index i = 0; i < distinct.size(); ++i) distinct[i] = 0.5 * (ev[2 * i] + ev[2 * i + 1]);
    return distinct;
}

FormFactorCurve empirical_sff(const EnsembleSpec& spec, std::size_t n_samples,
                              const std::vector<double>& tau, std::uint64_t master_seed,
                              unsigned workers) {
    spec.validate();
    if (n_samples < 2) throw ConfigError("n_samples must be >= 2");
    const std::size_t nt = tau.size();
    // Per realization: |Z|^2, Re Z, Im Z for each tau, then the level count.
    std::vector<std::vector<double>> rows(n_samples);
    auto one = [&](std::size_t idx) {
        const SeedPath path{master_seed, idx};
        const Eigen::MatrixXcd h =
            spec.bath == BathVariant::RMT ? sample_dot(spec, path) : sample_poisson_dot(spec, path);
        const Eigen::VectorXd levels = dot_levels(spec, h);
        std::vector<double> x;
        for (double e : levels) {
            if (std::abs(e) >= 0.5 * spec.lambda) continue;
            double u;
            if (spec.bath == BathVariant::Poisson) {
                u = (e / (4.0 * spec.lambda)) + 0.5;
            } else {
                const double s = e / (2.0 * spec.lambda);
                u = 0.5 + (s * std::sqrt(1.0 - s * s) + std::asin(s)) / std::numbers::pi;
            }
            x.push_back(spec.n * u);
        }
        std::vector<double> row(3 * nt + 1);
        for (std::size_t j = 0; j < nt; ++j) {
            double re = 0.0, im = 0.0;
            for (double xv : x) {
                const double phase = 2.0 * std::numbers::pi * xv * tau[j];
                re += std::cos(phase);
                im -= std::sin(phase);
            }
            row[3 * j] = re * re + im * im;
            row[3 * j + 1] = re;
            row[3 * j + 2] = im;
        }
        row[3 * nt] = static_cast<double>(x.size());
        rows[idx] = std::move(row);
    };
    parallel_for(n_samples, workers, one);

    Moments m(3 * nt + 1);
    for (const auto& r : rows) m.add(r);
    FormFactorCurve out;
    out.tau = tau;
    out.samples = n_samples;
    const double levels = m.mean[3 * nt];
    for (std::size_t j = 0; j < nt; ++j) {
        const double re = m.mean[3 * j + 1], im = m.mean[3 * j + 2];
        out.k.push_back((m.mean[3 * j] - re * re - im * im) / levels);
        out.sem.push_back(m.sem(3 * j) / levels);
    }
    return out;
}

void write_survival_csv(std::ostream& out, const SurvivalCurve& c,
                        const std::vector<std::string>& header_lines) {
    for (const auto& h : header_lines) out << "# " << h << '\n';
    out << "# spec: class=" << to_string(c.spec.cls) << " n=" << c.spec.n
        << " lambda=" << format_double(c.spec.lambda) << " g=" << format_double(c.spec.g)
        << " gamma=" << format_double(c.spec.gamma()) << " epsilon0=" << format_double(c.spec.epsilon0)
        << " bath=" << to_string(c.spec.bath) << '\n';
    out << "# seed: " << c.master_seed << '\n';
    out << "# late_window: " << format_double(c.late_tau0) << ' ' << format_double(c.late_tau1) << '\n';
    out << "# late: " << format_double(c.late_mean) << ' ' << format_double(c.late_sem) << '\n';
    out << "# plateau: " << format_double(c.plateau_mean) << ' ' << format_double(c.plateau_sem) << '\n';
    out << "tau,t,p_mean,p_stderr,n\n";
    for (std::size_t i = 0; i < c.tau.size(); ++i) {
        out << format_double(c.tau[i]) << ',' << format_double(c.t[i]) << ',' << format_double(c.mean[i])
            << ',' << format_double(c.sem[i]) << ',' << c.samples << '\n';
    }
}

namespace {

std::string header_value(const std::vector<std::string>& comments, const std::string& key) {
    const std::string prefix = "# " + key + ": ";
    for (const auto& c : comments)
        if (c.rfind(prefix, 0) == 0) return c.substr(prefix.size());
    return {};
}

}  // namespace

SurvivalCurve read_survival_csv(std::istream& in) {
    const CsvTable t = read_csv(in);
    const std::size_t ct = t.column("tau"), ctt = t.column("t"), cm = t.column("p_mean"),
                      cs = t.column("p_stderr"), cn = t.column("n");
    SurvivalCurve c;
    for (const auto& row : t.rows) {
        c.tau.push_back(parse_double(row[ct]));
        c.t.push_back(parse_double(row[ctt]));
        c.mean.push_back(parse_double(row[cm]));
        c.sem.push_back(parse_double(row[cs]));
        c.samples = static_cast<std::size_t>(parse_double(row[cn]));
    }
    if (std::string spec = header_value(t.comments, "spec"); !spec.empty()) {
        std::istringstream ss(spec);
        std::string kv;
        double gamma = -1.0;
        while (ss >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) continue;
            const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
            if (k == "class") c.spec.cls = parse_symmetry_class(v);
            else if (k == "n") c.spec.n = static_cast<int>(parse_double(v));
            else if (k == "lambda") c.spec.lambda = parse_double(v);
            else if (k == "g") c.spec.g = parse_double(v);
            else if (k == "gamma") gamma = parse_double(v);
            else if (k == "epsilon0") c.spec.epsilon0 = parse_double(v);
            else if (k == "bath") c.spec.bath = parse_bath_variant(v);
        }
        (void)gamma;
    }
    if (std::string seed = header_value(t.comments, "seed"); !seed.empty())
        c.master_seed = std::stoull(seed);
    auto pair = [&](const std::string& key, double& a, double& b) {
        std::string v = header_value(t.comments, key);
        if (v.empty()) return;
        std::istringstream ss(v);
        std::string x, y;
        if (ss >> x >> y) {
            a = parse_double(x);
            b = parse_double(y);
        }
    };
    pair("late_window", c.late_tau0, c.late_tau1);
    pair("late", c.late_mean, c.late_sem);
    pair("plateau", c.plateau_mean, c.plateau_sem);
    return c;
}

}  // namespace leveldot
