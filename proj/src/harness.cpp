#include "leveldot/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "leveldot/csv.hpp"
#include "leveldot/errors.hpp"

#ifndef LEVELDOT_VERSION
#define LEVELDOT_VERSION "0.0.0"
#endif
#ifndef LEVELDOT_GIT_DESCRIBE
#define LEVELDOT_GIT_DESCRIBE ""
#endif

namespace leveldot {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::vector<double> TauGrid::values() const {
    if (spacing == "geometric") return geometric_grid(min, max, points);
    if (spacing == "linear") return linear_grid(min, max, points);
    throw ConfigError("tau_grid.spacing must be 'geometric' or 'linear'");
}

void ExperimentConfig::validate() const {
    EnsembleSpec probe = ensemble;
    probe.g = 0.0;
    probe.validate();
    if (classes.empty()) throw ConfigError("at least one symmetry class is required");
    if (gammas.empty()) throw ConfigError("gammas must not be empty");
    for (double g : gammas)
        if (!(std::isfinite(g) && g >= 0.0)) throw ConfigError("gammas must be finite and >= 0");
    if (tau.points < 2) throw ConfigError("tau_grid.points must be >= 2");
    if (tau.spacing != "geometric" && tau.spacing != "linear")
        throw ConfigError("tau_grid.spacing must be 'geometric' or 'linear'");
    if (!(std::isfinite(tau.min) && std::isfinite(tau.max) && tau.max > tau.min))
        throw ConfigError("tau_grid needs finite min < max");
    if (tau.spacing == "geometric" && !(tau.min > 0.0))
        throw ConfigError("geometric tau_grid needs min > 0");
    if (tau.min < 0.0) throw ConfigError("tau_grid.min must be >= 0");
    if (samples < 2) throw ConfigError("samples must be >= 2");
    if (block_size < 1) throw ConfigError("block_size must be >= 1");
    if (!(late_tau0 >= 0.0 && late_tau1 > late_tau0 && std::isfinite(late_tau1)))
        throw ConfigError("late_window must satisfy 0 <= from < to");
    if (!(theory_rel_tol > 0.0 && theory_abs_tol > 0.0)) throw ConfigError("theory tolerances must be > 0");
    if (!(compare.z_threshold > 0.0)) throw ConfigError("compare.z_threshold must be > 0");
    if (!(compare.max_outlier_fraction >= 0.0 && compare.max_outlier_fraction <= 1.0))
        throw ConfigError("compare.max_outlier_fraction must lie in [0, 1]");
    if (!(compare.tau_max > compare.tau_min)) throw ConfigError("compare.tau_min must be below tau_max");
    for (const auto& r : compare.ratios)
        if (!(r.target > 0.0 && r.tolerance >= 0.0)) throw ConfigError("compare.ratios need target > 0, tolerance >= 0");
}

namespace {

// ---- JSON reading with line-level diagnostics ------------------------------

int line_at_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

class Reader {
public:
    explicit Reader(std::string_view text) : text_(text) {}

    // Line of the first occurrence of "key" at or after the parent's line.
    int line_of(std::string_view key, int from_line = 1) const {
        const std::string quoted = "\"" + std::string(key) + "\"";
        std::size_t start = 0;
        for (int l = 1; l < from_line && start != std::string_view::npos; ++l) {
            start = text_.find('\n', start);
            if (start != std::string_view::npos) ++start;
        }
        if (start == std::string_view::npos) start = 0;
        std::size_t pos = text_.find(quoted, start);
        if (pos == std::string_view::npos) pos = text_.find(quoted);
        return pos == std::string_view::npos ? 0 : line_at_offset(text_, pos);
    }

    [[noreturn]] void fail(std::string_view key, const std::string& msg, int from_line = 1) const {
        throw ConfigError(msg, line_of(key, from_line));
    }

    void only_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where,
                   int from_line = 1) const {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
                fail(it.key(), "unknown key '" + it.key() + "' in " + std::string(where), from_line);
        }
    }

    double number(const json& obj, const char* key, double fallback, int from_line = 1) const {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (v.is_null()) return std::numeric_limits<double>::infinity();
        if (!v.is_number()) fail(key, std::string("'") + key + "' must be a number", from_line);
        return v.get<double>();
    }

    std::uint64_t count(const json& obj, const char* key, std::uint64_t fallback, int from_line = 1) const {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            fail(key, std::string("'") + key + "' must be a non-negative integer", from_line);
        return v.get<std::uint64_t>();
    }

    std::string string(const json& obj, const char* key, const std::string& fallback, int from_line = 1) const {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_string()) fail(key, std::string("'") + key + "' must be a string", from_line);
        return v.get<std::string>();
    }

    bool boolean(const json& obj, const char* key, bool fallback, int from_line = 1) const {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_boolean()) fail(key, std::string("'") + key + "' must be true or false", from_line);
        return v.get<bool>();
    }

    const json& object(const json& obj, const char* key, int from_line = 1) const {
        const json& v = obj.at(key);
        if (!v.is_object()) fail(key, std::string("'") + key + "' must be an object", from_line);
        return v;
    }

    std::string_view text() const { return text_; }

private:
    std::string_view text_;
};

template <class F>
auto with_line(const Reader& r, const char* key, F f, int from_line = 1) {
    try {
        return f();
    } catch (const ConfigError& e) {
        if (e.line() > 0) throw;
        throw ConfigError(e.what(), r.line_of(key, from_line));
    }
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end(), nullptr, true, true);
    } catch (const json::parse_error& e) {
        const int line = line_at_offset(text, e.byte > 0 ? e.byte - 1 : 0);
        std::string what = e.what();
        if (auto p = what.find("parse error"); p != std::string::npos) what = what.substr(p);
        throw ConfigError("malformed config: " + what, line);
    }
}

EnsembleSpec read_ensemble(const Reader& r, const json& e, std::vector<SymmetryClass>* classes) {
    const int base = r.line_of("ensemble");
    r.only_keys(e, {"class", "n", "lambda", "epsilon0", "bath"}, "ensemble", base);
    EnsembleSpec spec;
    std::vector<SymmetryClass> cls;
    if (e.contains("class")) {
        const json& c = e.at("class");
        auto one = [&](const json& v) {
            if (!v.is_string()) r.fail("class", "'class' must be a string or a list of strings", base);
            return with_line(r, "class", [&] { return parse_symmetry_class(v.get<std::string>()); }, base);
        };
        if (c.is_array()) {
            if (c.empty()) r.fail("class", "'class' list must not be empty", base);
            for (const auto& v : c) cls.push_back(one(v));
        } else {
            cls.push_back(one(c));
        }
    } else {
        cls.push_back(SymmetryClass::U);
    }
    if (!classes && cls.size() != 1) r.fail("class", "a single class is expected here", base);
    spec.cls = cls.front();
    const std::uint64_t n = r.count(e, "n", 399, base);
    if (n > 1000000) r.fail("n", "'n' is unreasonably large", base);
    spec.n = static_cast<int>(n);
    spec.lambda = r.number(e, "lambda", 1.0, base);
    spec.epsilon0 = r.number(e, "epsilon0", 0.0, base);
    const std::string bath = r.string(e, "bath", "rmt", base);
    spec.bath = with_line(r, "bath", [&] { return parse_bath_variant(bath); }, base);
    with_line(r, "n", [&] {
        EnsembleSpec probe = spec;
        probe.g = 0.0;
        try {
            probe.validate();
        } catch (const ConfigError& err) {
            std::string w = err.what();
            const char* key = w.find("lambda") != std::string::npos ? "lambda"
                              : w.find("epsilon0") != std::string::npos ? "epsilon0"
                                                                         : "n";
            throw ConfigError(w, r.line_of(key, base));
        }
        return 0;
    }, base);
    if (classes) *classes = cls;
    return spec;
}

json ensemble_json(const EnsembleSpec& spec, const std::vector<SymmetryClass>& classes) {
    json e;
    if (classes.size() == 1) {
        e["class"] = std::string(to_string(classes.front()));
    } else {
        json list = json::array();
        for (auto c : classes) list.push_back(std::string(to_string(c)));
        e["class"] = list;
    }
    e["n"] = spec.n;
    e["lambda"] = spec.lambda;
    e["epsilon0"] = spec.epsilon0;
    e["bath"] = std::string(to_string(spec.bath));
    return e;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
    const json root = parse_json(text);
    const Reader r(text);
    if (!root.is_object()) throw ConfigError("config must be a JSON object", 1);
    r.only_keys(root, {"name", "ensemble", "gammas", "tau_grid", "samples", "seed", "block_size",
                       "late_window", "verify_every", "theory", "compare", "output_dir"},
                "config");

    ExperimentConfig c;
    c.name = r.string(root, "name", c.name);
    if (root.contains("ensemble")) c.ensemble = read_ensemble(r, r.object(root, "ensemble"), &c.classes);
    else c.classes = {c.ensemble.cls};

    if (root.contains("gammas")) {
        const json& g = root.at("gammas");
        if (!g.is_array() || g.empty()) r.fail("gammas", "'gammas' must be a non-empty list of numbers");
        c.gammas.clear();
        for (const auto& v : g) {
            if (!v.is_number()) r.fail("gammas", "'gammas' entries must be numbers");
            const double x = v.get<double>();
            if (!(std::isfinite(x) && x >= 0.0)) r.fail("gammas", "'gammas' entries must be finite and >= 0");
            c.gammas.push_back(x);
        }
    }

    if (root.contains("tau_grid")) {
        const json& t = r.object(root, "tau_grid");
        const int base = r.line_of("tau_grid");
        r.only_keys(t, {"min", "max", "points", "spacing"}, "tau_grid", base);
        c.tau.min = r.number(t, "min", c.tau.min, base);
        c.tau.max = r.number(t, "max", c.tau.max, base);
        c.tau.points = r.count(t, "points", c.tau.points, base);
        c.tau.spacing = r.string(t, "spacing", c.tau.spacing, base);
        if (c.tau.spacing != "geometric" && c.tau.spacing != "linear")
            r.fail("spacing", "tau_grid.spacing must be 'geometric' or 'linear'", base);
        if (c.tau.points < 2) r.fail("points", "tau_grid.points must be >= 2", base);
        if (!(std::isfinite(c.tau.max) && c.tau.max > c.tau.min)) r.fail("max", "tau_grid.max must exceed min", base);
        if (c.tau.spacing == "geometric" && !(c.tau.min > 0.0))
            r.fail("min", "geometric tau_grid needs min > 0", base);
    }

    c.samples = r.count(root, "samples", c.samples);
    if (c.samples < 2) r.fail("samples", "'samples' must be >= 2");
    c.seed = r.count(root, "seed", c.seed);
    c.block_size = r.count(root, "block_size", c.block_size);
    if (c.block_size < 1) r.fail("block_size", "'block_size' must be >= 1");
    c.verify_every = r.count(root, "verify_every", c.verify_every);

    if (root.contains("late_window")) {
        const json& w = root.at("late_window");
        if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number())
            r.fail("late_window", "'late_window' must be [from, to]");
        c.late_tau0 = w[0].get<double>();
        c.late_tau1 = w[1].get<double>();
        if (!(c.late_tau0 >= 0.0 && c.late_tau1 > c.late_tau0))
            r.fail("late_window", "'late_window' must satisfy 0 <= from < to");
    }

    if (root.contains("theory")) {
        const json& t = r.object(root, "theory");
        const int base = r.line_of("theory");
        r.only_keys(t, {"formulas", "rel_tol", "abs_tol"}, "theory", base);
        if (t.contains("formulas")) {
            const json& f = t.at("formulas");
            if (!f.is_array()) r.fail("formulas", "'formulas' must be a list", base);
            c.theory.clear();
            for (const auto& v : f) {
                if (!v.is_string()) r.fail("formulas", "'formulas' entries must be strings", base);
                c.theory.push_back(with_line(r, "formulas", [&] { return parse_formula(v.get<std::string>()); }, base));
            }
        }
        c.theory_rel_tol = r.number(t, "rel_tol", c.theory_rel_tol, base);
        c.theory_abs_tol = r.number(t, "abs_tol", c.theory_abs_tol, base);
        if (!(c.theory_rel_tol > 0.0 && std::isfinite(c.theory_rel_tol))) r.fail("rel_tol", "'rel_tol' must be > 0", base);
        if (!(c.theory_abs_tol > 0.0 && std::isfinite(c.theory_abs_tol))) r.fail("abs_tol", "'abs_tol' must be > 0", base);
    }

    if (root.contains("compare")) {
        const json& m = r.object(root, "compare");
        const int base = r.line_of("compare");
        r.only_keys(m, {"theory", "z_threshold", "max_outlier_fraction", "tau_min", "tau_max", "exclude",
                        "ratios", "interpolate"},
                    "compare", base);
        CompareSettings& s = c.compare;
        if (m.contains("theory")) {
            const std::string f = r.string(m, "theory", "full", base);
            s.theory = with_line(r, "theory", [&] { return parse_formula(f); }, base);
        }
        s.z_threshold = r.number(m, "z_threshold", s.z_threshold, base);
        if (!(s.z_threshold > 0.0)) r.fail("z_threshold", "'z_threshold' must be > 0", base);
        s.max_outlier_fraction = r.number(m, "max_outlier_fraction", s.max_outlier_fraction, base);
        if (!(s.max_outlier_fraction >= 0.0 && s.max_outlier_fraction <= 1.0))
            r.fail("max_outlier_fraction", "'max_outlier_fraction' must lie in [0, 1]", base);
        s.tau_min = r.number(m, "tau_min", s.tau_min, base);
        s.tau_max = r.number(m, "tau_max", s.tau_max, base);
        if (!(s.tau_max > s.tau_min)) r.fail("tau_max", "'tau_max' must exceed 'tau_min'", base);
        s.interpolate = r.boolean(m, "interpolate", s.interpolate, base);
        if (m.contains("exclude")) {
            const json& ex = m.at("exclude");
            if (!ex.is_array()) r.fail("exclude", "'exclude' must be a list", base);
            for (const auto& item : ex) {
                ExcludeRange range;
                if (item.is_array() && item.size() == 2 && item[0].is_number() && item[1].is_number()) {
                    range.from = item[0].get<double>();
                    range.to = item[1].get<double>();
                } else if (item.is_object()) {
                    const int ibase = r.line_of("exclude", base);
                    r.only_keys(item, {"from", "to", "class"}, "exclude entry", ibase);
                    range.from = r.number(item, "from", 0.0, ibase);
                    range.to = r.number(item, "to", 0.0, ibase);
                    if (item.contains("class")) {
                        const std::string cls = r.string(item, "class", "U", ibase);
                        range.cls = with_line(r, "exclude", [&] { return parse_symmetry_class(cls); }, base);
                    }
                } else {
                    r.fail("exclude", "'exclude' entries must be [from, to] or {from, to, class}", base);
                }
                if (!(range.to > range.from)) r.fail("exclude", "'exclude' ranges need from < to", base);
                s.exclude.push_back(range);
            }
        }
        if (m.contains("ratios")) {
            const json& rs = m.at("ratios");
            if (!rs.is_object()) r.fail("ratios", "'ratios' must map classes to [target, tolerance]", base);
            for (auto it = rs.begin(); it != rs.end(); ++it) {
                RatioExpectation e;
                e.cls = with_line(r, "ratios", [&] { return parse_symmetry_class(it.key()); }, base);
                const json& v = it.value();
                if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
                    r.fail("ratios", "ratio entries must be [target, tolerance]", base);
                e.target = v[0].get<double>();
                e.tolerance = v[1].get<double>();
                if (!(e.target > 0.0 && e.tolerance >= 0.0))
                    r.fail("ratios", "ratio entries need target > 0 and tolerance >= 0", base);
                s.ratios.push_back(e);
            }
        }
    }

    c.output_dir = r.string(root, "output_dir", c.output_dir);
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    json root;
    root["name"] = c.name;
    root["ensemble"] = ensemble_json(c.ensemble, c.classes);
    root["gammas"] = c.gammas;
    root["tau_grid"] = {{"min", c.tau.min}, {"max", c.tau.max}, {"points", c.tau.points}, {"spacing", c.tau.spacing}};
    root["samples"] = c.samples;
    root["seed"] = c.seed;
    root["block_size"] = c.block_size;
    root["late_window"] = {c.late_tau0, c.late_tau1};
    root["verify_every"] = c.verify_every;
    json formulas = json::array();
    for (auto f : c.theory) formulas.push_back(std::string(to_string(f)));
    root["theory"] = {{"formulas", formulas}, {"rel_tol", c.theory_rel_tol}, {"abs_tol", c.theory_abs_tol}};
    json cmp;
    cmp["theory"] = std::string(to_string(c.compare.theory));
    cmp["z_threshold"] = c.compare.z_threshold;
    cmp["max_outlier_fraction"] = c.compare.max_outlier_fraction;
    cmp["tau_min"] = c.compare.tau_min;
    cmp["tau_max"] = finite_or_null(c.compare.tau_max);
    json ex = json::array();
    for (const auto& e : c.compare.exclude) {
        json item = {{"from", e.from}, {"to", e.to}};
        if (e.cls) item["class"] = std::string(to_string(*e.cls));
        ex.push_back(item);
    }
    cmp["exclude"] = ex;
    json ratios = json::object();
    for (const auto& r : c.compare.ratios) ratios[std::string(to_string(r.cls))] = {r.target, r.tolerance};
    cmp["ratios"] = ratios;
    cmp["interpolate"] = c.compare.interpolate;
    root["compare"] = cmp;
    root["output_dir"] = c.output_dir;
    return root.dump(2) + "\n";
}

std::string serialize_ensemble(const EnsembleSpec& spec) {
    json e = ensemble_json(spec, {spec.cls});
    e["g"] = spec.g;
    return e.dump(2) + "\n";
}

EnsembleSpec parse_ensemble(std::string_view text) {
    const json root = parse_json(text);
    const Reader r(text);
    if (!root.is_object()) throw ConfigError("ensemble must be a JSON object", 1);
    json copy = root;
    double g = 0.0;
    if (copy.contains("g")) {
        g = r.number(copy, "g", 0.0);
        copy.erase("g");
    }
    EnsembleSpec spec = read_ensemble(r, copy, nullptr);
    spec.g = g;
    with_line(r, "g", [&] {
        spec.validate();
        return 0;
    });
    return spec;
}

std::string config_hash(const ExperimentConfig& config) {
    std::string compact = json::parse(serialize_config(config)).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : compact) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- presets ----------------------------------------------------------------

namespace {

struct PresetEntry {
    const char* name;
    const char* description;
    ExperimentConfig (*make)();
};

ExperimentConfig desk_base(const char* name) {
    ExperimentConfig c;
    c.name = name;
    c.output_dir = name;
    c.ensemble.n = 399;  // N + 1 = 400
    c.samples = 2000;
    c.seed = 20240601;
    return c;
}

// Comparison grid for the time-resolved panels: 50 log-spaced points from
// t lambda = 20 (tau = 10 / n) to tau = 10, clear of band-edge transients.
TauGrid panel_grid(int n, std::size_t points = 50) {
    TauGrid g;
    g.min = std::max(1e-3, 10.0 / n);
    g.max = 10.0;
    g.points = points;
    return g;
}

ExperimentConfig single_panel(const char* name, double gamma) {
    ExperimentConfig c = desk_base(name);
    c.gammas = {gamma};
    c.tau = panel_grid(c.ensemble.n);
    c.theory = {Formula::FullCrossover, Formula::LargeGamma};
    return c;
}

std::vector<double> sweep_gammas(std::size_t count) {
    return geometric_grid(0.02, 50.0, count);
}

ExperimentConfig make_smoke() {
    ExperimentConfig c = desk_base("smoke");
    c.ensemble.n = 63;
    c.samples = 50;
    c.gammas = {4.6, 0.46};
    c.tau.points = 50;
    c.compare.max_outlier_fraction = 1.0;
    return c;
}
ExperimentConfig make_fig2a() { return single_panel("fig2a", 46.0); }
ExperimentConfig make_fig2b() { return single_panel("fig2b", 0.46); }
ExperimentConfig make_fig2c() { return single_panel("fig2c", 0.022); }
ExperimentConfig make_fig2abc() {
    ExperimentConfig c = single_panel("fig2abc", 46.0);
    c.gammas = {46.0, 0.46, 0.022};
    return c;
}
ExperimentConfig make_fig2d() {
    ExperimentConfig c = desk_base("fig2d");
    c.gammas = sweep_gammas(12);
    c.tau.points = 50;
    return c;
}
ExperimentConfig make_fig2e() {
    ExperimentConfig c = desk_base("fig2e");
    c.classes = {SymmetryClass::U, SymmetryClass::O, SymmetryClass::S};
    c.gammas = {46.0};
    c.tau = panel_grid(c.ensemble.n, 100);
    c.theory = {Formula::ClassProfile};
    c.compare.theory = Formula::ClassProfile;
    c.compare.max_outlier_fraction = 0.05;
    c.compare.tau_min = 0.2;
    c.compare.tau_max = 5.0;
    c.compare.exclude = {{0.9, 1.1, SymmetryClass::S}};
    c.compare.ratios = {{SymmetryClass::U, 2.0, 0.2}, {SymmetryClass::O, 1.5, 0.15}, {SymmetryClass::S, 3.0, 0.4}};
    return c;
}
ExperimentConfig make_poisson() {
    ExperimentConfig c = desk_base("poisson");
    c.ensemble.bath = BathVariant::Poisson;
    c.gammas = {46.0};
    c.tau = panel_grid(c.ensemble.n, 100);
    c.theory = {Formula::ClassProfile};
    c.compare.theory = Formula::ClassProfile;
    // Qualitative check: only the dip-to-plateau ratio is judged.
    c.compare.max_outlier_fraction = 1.0;
    c.compare.ratios = {{SymmetryClass::U, 2.0, 0.3}};
    return c;
}

ExperimentConfig full_scale(ExperimentConfig c, const char* name) {
    c.name = name;
    c.output_dir = name;
    c.ensemble.n = 999;  // N + 1 = 1000
    c.samples = 10000;
    if (c.tau.min == 10.0 / 399) c.tau.min = 10.0 / 999;
    return c;
}

const std::vector<PresetEntry>& presets() {
    static const std::vector<PresetEntry> all = {
        {"smoke", "class U, N+1=64, 50 samples, gamma 4.6 and 0.46; plumbing check", make_smoke},
        {"fig2a", "class U, N+1=400, 2000 samples, gamma=46 time dependence", make_fig2a},
        {"fig2b", "class U, N+1=400, 2000 samples, gamma=0.46 time dependence", make_fig2b},
        {"fig2c", "class U, N+1=400, 2000 samples, gamma=0.022 time dependence", make_fig2c},
        {"fig2abc", "gamma in {46, 0.46, 0.022} sharing realizations", make_fig2abc},
        {"fig2d", "class U, N+1=400, 2000 samples, 12 gammas in [0.02, 50]; late-time residence",
         make_fig2d},
        {"fig2e", "classes U, O, S at gamma=46, N+1=400, 2000 samples; form-factor profiles", make_fig2e},
        {"poisson", "Poisson-level bath, gamma=46, N+1=400, 2000 samples", make_poisson},
        {"fig2a-full", "fig2a at N+1=1000, 10^4 samples (long)", [] { return full_scale(make_fig2a(), "fig2a-full"); }},
        {"fig2b-full", "fig2b at N+1=1000, 10^4 samples (long)", [] { return full_scale(make_fig2b(), "fig2b-full"); }},
        {"fig2c-full", "fig2c at N+1=1000, 10^4 samples (long)", [] { return full_scale(make_fig2c(), "fig2c-full"); }},
        {"fig2d-full", "fig2d at N+1=1000, 10^4 samples, 20 gammas (long)",
         [] {
             ExperimentConfig c = full_scale(make_fig2d(), "fig2d-full");
             c.gammas = sweep_gammas(20);
             return c;
         }},
        {"fig2e-full", "fig2e at N+1=1000, 10^4 samples (long)", [] { return full_scale(make_fig2e(), "fig2e-full"); }},
    };
    return all;
}

}  // namespace

std::vector<PresetInfo> list_presets() {
    std::vector<PresetInfo> out;
    for (const auto& p : presets()) out.push_back({p.name, p.description});
    return out;
}

ExperimentConfig preset(std::string_view name) {
    for (const auto& p : presets())
        if (name == p.name) {
            ExperimentConfig c = p.make();
            c.validate();
            return c;
        }
    throw ConfigError("unknown preset '" + std::string(name) + "' (see 'presets list')");
}

std::string version_string() {
    std::string v = LEVELDOT_VERSION;
    const std::string git = LEVELDOT_GIT_DESCRIBE;
    if (!git.empty()) v += "+g" + git;
    return v;
}

// ---- runs -------------------------------------------------------------------

fs::path resolve_output_dir(const ExperimentConfig& config, const std::optional<fs::path>& override_dir) {
    if (override_dir) return *override_dir;
    const char* root = std::getenv("LEVELDOT_OUTPUT_ROOT");
    const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
    return base / (config.output_dir.empty() ? config.name : config.output_dir);
}

namespace {

std::string gamma_label(double gamma) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", gamma);
    return buf;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> provenance(const ExperimentConfig& config) {
    return {"leveldot " + version_string(), "config: " + config.name + " hash=" + config_hash(config),
            "generated: " + utc_timestamp()};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void prepare_dir(const fs::path& dir, const ExperimentConfig& config) {
    fs::create_directories(dir);
    write_text(dir / "config.json", serialize_config(config));
}

}  // namespace

std::string mc_file_name(SymmetryClass cls, double gamma) {
    return "mc_" + std::string(to_string(cls)) + "_gamma" + gamma_label(gamma) + ".csv";
}

std::string theory_file_name(Formula formula, SymmetryClass cls, double gamma) {
    return "theory_" + std::string(to_string(formula)) + "_" + std::string(to_string(cls)) + "_gamma" +
           gamma_label(gamma) + ".csv";
}

SimulateResult run_simulate(const ExperimentConfig& config, const RunContext& ctx) {
    config.validate();
    prepare_dir(ctx.out_dir, config);
    const auto header = provenance(config);
    const std::vector<double> tau = config.tau.values();

    SimulateResult result;
    for (SymmetryClass cls : config.classes) {
        EnsembleSpec spec = config.ensemble;
        spec.cls = cls;
        MonteCarloOptions opts;
        opts.workers = ctx.workers;
        opts.block_size = config.block_size;
        opts.verify_every = config.verify_every;
        opts.late_tau0 = config.late_tau0;
        opts.late_tau1 = config.late_tau1;
        opts.max_new_blocks = ctx.max_new_blocks;
        opts.log = ctx.log;
        opts.checkpoint_path = (ctx.out_dir / ("checkpoint_" + std::string(to_string(cls)) + ".partial")).string();
        if (!ctx.resume) fs::remove(opts.checkpoint_path);

        SweepResult sweep = average_survival_sweep(spec, config.gammas, tau, config.samples, config.seed, opts);
        if (!sweep.complete) {
            result.complete = false;
            if (ctx.log) ctx.log("class " + std::string(to_string(cls)) + ": interrupted, checkpoint kept");
            continue;
        }
        if (ctx.log && sweep.discarded > 0)
            ctx.log("class " + std::string(to_string(cls)) + ": " + std::to_string(sweep.discarded) +
                    " realizations discarded");
        for (std::size_t i = 0; i < sweep.curves.size(); ++i) {
            const fs::path file = ctx.out_dir / mc_file_name(cls, config.gammas[i]);
            std::ostringstream os;
            write_survival_csv(os, sweep.curves[i], header);
            write_text(file, os.str());
            result.files.push_back(file);
            result.curves.push_back(std::move(sweep.curves[i]));
        }
        fs::remove(opts.checkpoint_path);
    }
    return result;
}

TheoryResult run_theory(const ExperimentConfig& config, const RunContext& ctx) {
    config.validate();
    prepare_dir(ctx.out_dir, config);
    const auto header = provenance(config);
    const std::vector<double> tau = config.tau.values();
    const QuadratureOptions tol{config.theory_rel_tol, config.theory_abs_tol, 20000};

    TheoryResult result;
    for (Formula f : config.theory) {
        for (SymmetryClass cls : config.classes) {
            if (f != Formula::ClassProfile && cls != SymmetryClass::U) {
                if (ctx.log)
                    ctx.log(std::string(to_string(f)) + " is derived for class U only; skipped for class " +
                            std::string(to_string(cls)));
                continue;
            }
            for (double gamma : config.gammas) {
                if (gamma <= 0.0) continue;
                TheoryCurve curve = theory_curve(f, cls, gamma, tau, tol);
                for (std::size_t i : curve.failed) {
                    ++result.failed_points;
                    if (ctx.log)
                        ctx.log("quadrature did not converge at tau=" + format_double(curve.tau[i]) +
                                " gamma=" + format_double(gamma) + "; best estimate kept");
                }
                const fs::path file = ctx.out_dir / theory_file_name(f, cls, gamma);
                std::ostringstream os;
                write_theory_csv(os, curve, header);
                write_text(file, os.str());
                result.files.push_back(file);
                result.curves.push_back(std::move(curve));
            }
        }
    }

    // Residence probability against gamma: closed form, integral form, Golden Rule.
    std::set<double> grid;
    for (double g : geometric_grid(1e-2, 1e2, 81)) grid.insert(g);
    for (double g : config.gammas)
        if (g > 0.0) grid.insert(g);
    std::ostringstream os;
    for (const auto& h : header) os << "# " << h << '\n';
    os << "gamma,p_res_closed,p_res_integral,quad_err,fgr\n";
    for (double g : grid) {
        const QuadratureResult q = p_res_integral(g);
        os << format_double(g) << ',' << format_double(p_res_closed(g)) << ',' << format_double(q.value) << ','
           << format_double(q.abs_error) << ',' << format_double(1.0 / g) << '\n';
    }
    const fs::path table = ctx.out_dir / "theory_pres.csv";
    write_text(table, os.str());
    result.files.push_back(table);
    return result;
}

// ---- comparison -------------------------------------------------------------

DipAndPlateau dip_and_plateau(const SurvivalCurve& c) {
    const std::size_t n = c.tau.size();
    if (n == 0) throw ConfigError("empty Monte Carlo curve");
    double best = std::numeric_limits<double>::infinity(), best_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (c.tau[i] >= c.late_tau0) break;
        const std::size_t lo = i >= 2 ? i - 2 : 0, hi = std::min(n - 1, i + 2);
        double m = 0.0, e = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
            m += c.mean[j];
            e += c.sem[j];
        }
        const double k = static_cast<double>(hi - lo + 1);
        m /= k;
        e /= k;  // neighbouring points are strongly correlated; no 1/sqrt(k)
        if (m < best) {
            best = m;
            best_err = e;
        }
    }
    DipAndPlateau d{};
    d.p_off = best;
    d.p_off_err = best_err;
    if (c.late_mean > 0.0) {
        d.p_pl = c.late_mean;
        d.p_pl_err = c.late_sem;
    } else {
        double s = 0.0, e = 0.0;
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (c.tau[i] >= c.late_tau0 && c.tau[i] <= c.late_tau1) {
                s += c.mean[i];
                e = std::max(e, c.sem[i]);
                ++k;
            }
        d.p_pl = k ? s / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
        d.p_pl_err = e;
    }
    d.ratio = d.p_pl / d.p_off;
    d.ratio_err = std::abs(d.ratio) * std::hypot(d.p_pl_err / d.p_pl, d.p_off_err / d.p_off);
    return d;
}

namespace {

bool same_gamma(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

double interpolate_log(const TheoryCurve& t, double tau) {
    const auto& x = t.tau;
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (tau <= x.front()) return t.p.front();
    if (tau >= x.back()) return t.p.back();
    const auto it = std::upper_bound(x.begin(), x.end(), tau);
    const std::size_t j = static_cast<std::size_t>(it - x.begin());
    const double x0 = x[j - 1], x1 = x[j];
    const double w = (x0 > 0.0 && x1 > 0.0) ? std::log(tau / x0) / std::log(x1 / x0) : (tau - x0) / (x1 - x0);
    return t.p[j - 1] + w * (t.p[j] - t.p[j - 1]);
}

}  // namespace

ComparisonReport compare_curves(const std::vector<SurvivalCurve>& mc, const std::vector<TheoryCurve>& theory,
                                const CompareSettings& settings) {
    ComparisonReport report;
    report.settings = settings;
    report.pass = true;
    if (!mc.empty()) report.seed = mc.front().master_seed;
    for (const auto& m : mc) {
        const double gamma = m.spec.gamma();
        const TheoryCurve* match = nullptr;
        for (const auto& t : theory)
            if (t.formula == settings.theory && t.cls == m.spec.cls && same_gamma(t.gamma, gamma)) match = &t;
        if (!match)
            throw ConfigError("no " + std::string(to_string(settings.theory)) + " theory curve for class " +
                              std::string(to_string(m.spec.cls)) + " gamma=" + format_double(gamma));
        bool aligned = match->tau.size() == m.tau.size();
        for (std::size_t i = 0; aligned && i < m.tau.size(); ++i)
            aligned = std::abs(match->tau[i] - m.tau[i]) <= 1e-12 * std::max(1.0, m.tau[i]);
        if (!aligned && !settings.interpolate)
            throw ConfigError("tau grids differ for class " + std::string(to_string(m.spec.cls)) + " gamma=" +
                              format_double(gamma) + "; enable interpolation");

        CurveComparison cc;
        cc.cls = m.spec.cls;
        cc.gamma = gamma;
        cc.formula = settings.theory;
        for (std::size_t i = 0; i < m.tau.size(); ++i) {
            PointComparison p;
            p.tau = m.tau[i];
            p.mc = m.mean[i];
            p.sem = m.sem[i];
            p.theory = aligned ? match->p[i] : interpolate_log(*match, p.tau);
            const double diff = p.mc - p.theory;
            if (p.sem > 0.0) p.z = diff / p.sem;
            else p.z = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
            p.used = p.tau >= settings.tau_min && p.tau <= settings.tau_max && std::isfinite(p.theory);
            for (const auto& ex : settings.exclude)
                if ((!ex.cls || *ex.cls == cc.cls) && p.tau >= ex.from && p.tau <= ex.to) p.used = false;
            if (p.used) {
                ++cc.used;
                if (std::abs(p.z) > settings.z_threshold) ++cc.outliers;
                cc.max_abs_z = std::max(cc.max_abs_z, std::abs(p.z));
            }
            cc.points.push_back(p);
        }
        cc.outlier_fraction = cc.used ? static_cast<double>(cc.outliers) / static_cast<double>(cc.used) : 0.0;
        cc.outliers_ok = cc.used > 0 && cc.outlier_fraction <= settings.max_outlier_fraction;

        const DipAndPlateau d = dip_and_plateau(m);
        cc.p_off = d.p_off;
        cc.p_off_err = d.p_off_err;
        cc.p_pl = d.p_pl;
        cc.p_pl_err = d.p_pl_err;
        cc.ratio = d.ratio;
        cc.ratio_err = d.ratio_err;
        cc.p_res_mc = m.late_mean;
        cc.p_res_mc_err = m.late_sem;
        cc.p_res_theory = gamma > 0.0 ? (cc.cls == SymmetryClass::U ? p_res_closed(gamma) : p_pl_predicted(cc.cls, gamma))
                                      : 1.0;
        for (const auto& r : settings.ratios)
            if (r.cls == cc.cls) cc.ratio_ok = std::abs(cc.ratio - r.target) <= r.tolerance;
        cc.pass = cc.outliers_ok && cc.ratio_ok.value_or(true);
        report.pass = report.pass && cc.pass;
        report.curves.push_back(std::move(cc));
    }
    return report;
}

std::string report_json(const ComparisonReport& r) {
    json root;
    root["config_hash"] = r.config_hash;
    root["seed"] = r.seed;
    root["version"] = version_string();
    root["theory"] = std::string(to_string(r.settings.theory));
    root["z_threshold"] = r.settings.z_threshold;
    root["max_outlier_fraction"] = r.settings.max_outlier_fraction;
    root["pass"] = r.pass;
    json curves = json::array();
    for (const auto& c : r.curves) {
        json j;
        j["class"] = std::string(to_string(c.cls));
        j["gamma"] = c.gamma;
        j["points_used"] = c.used;
        j["outliers"] = c.outliers;
        j["outlier_fraction"] = c.outlier_fraction;
        j["max_abs_z"] = finite_or_null(c.max_abs_z);
        j["p_off"] = {{"value", c.p_off}, {"error", c.p_off_err}};
        j["p_pl"] = {{"value", c.p_pl}, {"error", c.p_pl_err}};
        j["ratio"] = {{"value", finite_or_null(c.ratio)}, {"error", finite_or_null(c.ratio_err)}};
        j["p_res"] = {{"mc", c.p_res_mc}, {"mc_error", c.p_res_mc_err}, {"theory", c.p_res_theory}};
        j["outliers_ok"] = c.outliers_ok;
        if (c.ratio_ok) j["ratio_ok"] = *c.ratio_ok;
        j["pass"] = c.pass;
        json pts = json::array();
        for (const auto& p : c.points)
            pts.push_back({{"tau", p.tau}, {"theory", finite_or_null(p.theory)}, {"mc", p.mc}, {"stderr", p.sem},
                           {"z", finite_or_null(p.z)}, {"used", p.used}});
        j["points"] = pts;
        curves.push_back(j);
    }
    root["curves"] = curves;
    return root.dump(2) + "\n";
}

ComparisonReport run_compare(const std::vector<fs::path>& mc_files, const std::vector<fs::path>& theory_files,
                             const CompareSettings& settings, const fs::path& out_dir, const std::string& hash) {
    std::vector<SurvivalCurve> mc;
    std::vector<TheoryCurve> th;
    auto open = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open " + p.string());
        return in;
    };
    try {
        for (const auto& f : mc_files) {
            auto in = open(f);
            mc.push_back(read_survival_csv(in));
        }
        for (const auto& f : theory_files) {
            auto in = open(f);
            th.push_back(read_theory_csv(in));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bad input file: ") + e.what());
    }
    ComparisonReport report = compare_curves(mc, th, settings);
    report.config_hash = hash;
    fs::create_directories(out_dir);
    write_text(out_dir / "report.json", report_json(report));
    return report;
}

SweepTable run_sweep(const ExperimentConfig& config, const RunContext& ctx) {
    ExperimentConfig c = config;
    if (std::find(c.gammas.begin(), c.gammas.end(), 0.0) == c.gammas.end()) c.gammas.insert(c.gammas.begin(), 0.0);
    SimulateResult sim = run_simulate(c, ctx);
    SweepTable table;
    table.complete = sim.complete;
    if (!sim.complete) return table;

    const auto header = provenance(c);
    std::ostringstream os;
    for (const auto& h : header) os << "# " << h << '\n';
    os << "# late_window: " << format_double(c.late_tau0) << ' ' << format_double(c.late_tau1) << '\n';
    os << "class,gamma,p_late,p_late_stderr,p_plateau,p_plateau_stderr,p_res_theory,fgr,n\n";
    for (const auto& curve : sim.curves) {
        SweepRow r;
        r.gamma = curve.spec.gamma();
        r.p_late = curve.late_mean;
        r.p_late_err = curve.late_sem;
        r.p_plateau = curve.plateau_mean;
        r.p_plateau_err = curve.plateau_sem;
        r.p_res_theory = p_res_closed(r.gamma);
        r.fgr = r.gamma > 0.0 ? 1.0 / r.gamma : std::numeric_limits<double>::infinity();
        r.samples = curve.samples;
        os << to_string(curve.spec.cls) << ',' << format_double(r.gamma) << ',' << format_double(r.p_late) << ','
           << format_double(r.p_late_err) << ',' << format_double(r.p_plateau) << ','
           << format_double(r.p_plateau_err) << ',' << format_double(r.p_res_theory) << ','
           << format_double(r.fgr) << ',' << r.samples << '\n';
        table.rows.push_back(r);
    }
    table.file = ctx.out_dir / "sweep.csv";
    write_text(table.file, os.str());
    return table;
}

std::string csv_body(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::string line, body;
    while (std::getline(in, line)) {
        if (!line.empty() && line.front() == '#') continue;
        body += line;
        body += '\n';
    }
    return body;
}

}  // namespace leveldot
