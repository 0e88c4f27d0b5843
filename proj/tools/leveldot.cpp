#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "leveldot/csv.hpp"
#include "leveldot/errors.hpp"
#include "leveldot/harness.hpp"

namespace fs = std::filesystem;
using namespace leveldot;

namespace {

enum Exit { kOk = 0, kCompareFailed = 1, kConfigError = 2, kNumericalFailure = 3, kIoError = 4 };

struct Common {
    std::string config;
    std::string preset_name;
    std::optional<std::uint64_t> seed;
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    std::string out;
    bool fresh = false;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
    auto* cfg = app->add_option("--config", c.config, "JSON experiment config");
    auto* pre = app->add_option("--preset", c.preset_name, "named preset (see 'presets list')");
    cfg->excludes(pre);
    app->add_option("--seed", c.seed, "override the master seed");
    app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", c.out, "output directory (default $LEVELDOT_OUTPUT_ROOT/<name>)");
    app->add_flag("--fresh", c.fresh, "ignore existing checkpoints");
    app->add_flag("-q,--quiet", c.quiet, "no progress messages");
}

ExperimentConfig resolve(const Common& c) {
    if (c.config.empty() && c.preset_name.empty()) throw ConfigError("one of --config or --preset is required");
    ExperimentConfig cfg = c.config.empty() ? preset(c.preset_name) : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

RunContext context(const Common& c, const ExperimentConfig& cfg) {
    RunContext ctx;
    ctx.out_dir = resolve_output_dir(cfg, c.out.empty() ? std::nullopt : std::optional<fs::path>(c.out));
    ctx.workers = c.workers;
    ctx.resume = !c.fresh;
    if (!c.quiet) ctx.log = [](const std::string& m) { std::cerr << "leveldot: " << m << '\n'; };
    return ctx;
}

void print_files(const std::vector<fs::path>& files) {
    for (const auto& f : files) std::cout << f.string() << '\n';
}

int print_report(const ComparisonReport& r) {
    std::printf("%-5s %-10s %6s %8s %9s %10s %10s %s\n", "class", "gamma", "used", "outliers", "max|z|", "ratio",
                "ratio_err", "verdict");
    for (const auto& c : r.curves) {
        std::printf("%-5s %-10.6g %6zu %8zu %9.3g %10.4g %10.2g %s\n", std::string(to_string(c.cls)).c_str(), c.gamma,
                    c.used, c.outliers, c.max_abs_z, c.ratio, c.ratio_err, c.pass ? "PASS" : "FAIL");
    }
    std::printf("overall: %s\n", r.pass ? "PASS" : "FAIL");
    return r.pass ? kOk : kCompareFailed;
}

ComparisonReport compare_from_config(const ExperimentConfig& cfg, const fs::path& dir) {
    std::vector<fs::path> mc, th;
    for (auto cls : cfg.classes)
        for (double g : cfg.gammas) {
            if (g <= 0.0) continue;
            mc.push_back(dir / mc_file_name(cls, g));
            th.push_back(dir / theory_file_name(cfg.compare.theory, cls, g));
        }
    return run_compare(mc, th, cfg.compare, dir, config_hash(cfg));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Level-dot random-matrix lab: survival probability Monte Carlo and theory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    Common sim, th, cmp, swp, run;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo survival curves");
    add_common(simulate, sim);
    auto* theory = app.add_subcommand("theory", "theory curves and the residence table");
    add_common(theory, th);
    auto* sweep = app.add_subcommand("sweep", "late-time residence probability against gamma");
    add_common(sweep, swp);
    auto* all = app.add_subcommand("run", "simulate, theory and compare in one go");
    add_common(all, run);

    auto* compare = app.add_subcommand("compare", "z-score comparison of Monte Carlo and theory curves");
    add_common(compare, cmp);
    std::vector<std::string> mc_files, th_files;
    double z_threshold = 0.0, max_fraction = -1.0;
    bool interpolate = false;
    compare->add_option("--mc", mc_files, "Monte Carlo CSV files");
    compare->add_option("--theory", th_files, "theory CSV files, paired by class and gamma");
    compare->add_option("--z", z_threshold, "override the |z| outlier threshold");
    compare->add_option("--max-outlier-fraction", max_fraction, "override the allowed outlier fraction");
    compare->add_flag("--interpolate", interpolate, "interpolate theory onto the Monte Carlo grid");
    std::string formula_name;
    compare->add_option("--formula", formula_name, "theory formula to pair with (default: that of the theory files)");

    auto* presets_cmd = app.add_subcommand("presets", "built-in experiment presets");
    presets_cmd->require_subcommand(1);
    auto* presets_list = presets_cmd->add_subcommand("list", "list presets");
    std::string show_name;
    auto* presets_show = presets_cmd->add_subcommand("show", "print a preset as a config file");
    presets_show->add_option("name", show_name)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*presets_list) {
            for (const auto& p : list_presets()) std::printf("%-12s %s\n", p.name.c_str(), p.description.c_str());
            return kOk;
        }
        if (*presets_show) {
            std::cout << serialize_config(preset(show_name));
            return kOk;
        }
        if (*simulate) {
            const auto cfg = resolve(sim);
            const auto r = run_simulate(cfg, context(sim, cfg));
            print_files(r.files);
            return r.complete ? kOk : kNumericalFailure;
        }
        if (*theory) {
            const auto cfg = resolve(th);
            const auto r = run_theory(cfg, context(th, cfg));
            print_files(r.files);
            if (r.failed_points > 0) {
                std::cerr << "leveldot: " << r.failed_points << " theory points did not reach tolerance\n";
                return kNumericalFailure;
            }
            return kOk;
        }
        if (*sweep) {
            const auto cfg = resolve(swp);
            const auto t = run_sweep(cfg, context(swp, cfg));
            if (!t.complete) return kNumericalFailure;
            std::printf("%-12s %-12s %-10s %-12s %-12s\n", "gamma", "p_late", "stderr", "p_res", "1/gamma");
            for (const auto& r : t.rows)
                std::printf("%-12.6g %-12.6g %-10.2g %-12.6g %-12.6g\n", r.gamma, r.p_late, r.p_late_err,
                            r.p_res_theory, r.fgr);
            std::cout << t.file.string() << '\n';
            return kOk;
        }
        if (*compare) {
            ComparisonReport report;
            if (!mc_files.empty() || !th_files.empty()) {
                if (mc_files.empty() || th_files.empty())
                    throw ConfigError("--mc and --theory must be given together");
                CompareSettings s;
                std::string hash;
                if (!cmp.config.empty() || !cmp.preset_name.empty()) {
                    const auto cfg = resolve(cmp);
                    s = cfg.compare;
                    hash = config_hash(cfg);
                }
                if (!formula_name.empty()) {
                    s.theory = parse_formula(formula_name);
                } else if (hash.empty()) {
                    std::ifstream first(th_files.front());
                    if (!first) throw ConfigError("cannot open " + th_files.front());
                    s.theory = read_theory_csv(first).formula;
                }
                if (z_threshold > 0.0) s.z_threshold = z_threshold;
                if (max_fraction >= 0.0) s.max_outlier_fraction = max_fraction;
                if (interpolate) s.interpolate = true;
                std::vector<fs::path> mc(mc_files.begin(), mc_files.end()), th_paths(th_files.begin(), th_files.end());
                const fs::path out = cmp.out.empty() ? fs::path(".") : fs::path(cmp.out);
                report = run_compare(mc, th_paths, s, out, hash);
            } else {
                auto cfg = resolve(cmp);
                if (z_threshold > 0.0) cfg.compare.z_threshold = z_threshold;
                if (max_fraction >= 0.0) cfg.compare.max_outlier_fraction = max_fraction;
                if (interpolate) cfg.compare.interpolate = true;
                report = compare_from_config(cfg, context(cmp, cfg).out_dir);
            }
            return print_report(report);
        }
        if (*all) {
            const auto cfg = resolve(run);
            const auto ctx = context(run, cfg);
            const auto s = run_simulate(cfg, ctx);
            if (!s.complete) return kNumericalFailure;
            ExperimentConfig th_cfg = cfg;
            if (std::find(th_cfg.theory.begin(), th_cfg.theory.end(), cfg.compare.theory) == th_cfg.theory.end())
                th_cfg.theory.push_back(cfg.compare.theory);
            run_theory(th_cfg, ctx);
            return print_report(compare_from_config(cfg, ctx.out_dir));
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoError;
    }
    return kOk;
}
