#include "kolstack/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kolstack {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& what) {
    throw ConfigError("scenario: " + what + " (key '" + key + "')");
}

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) fail(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
    }
}

double get_number(const json& obj, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) fail(key, "expected a number");
    return obj[key].get<double>();
}

int get_int(const json& obj, const std::string& key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) fail(key, "expected an integer");
    return obj[key].get<int>();
}

bool get_bool(const json& obj, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) fail(key, "expected a boolean");
    return obj[key].get<bool>();
}

std::vector<std::pair<double, double>> get_box(const json& j, const std::string& key) {
    if (!j.is_array()) fail(key, "expected an array of [lo, hi] pairs");
    std::vector<std::pair<double, double>> box;
    for (const auto& entry : j) {
        if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number() ||
            !entry[1].is_number())
            fail(key, "expected [lo, hi] number pairs");
        box.emplace_back(entry[0].get<double>(), entry[1].get<double>());
    }
    return box;
}

FieldSpec get_field_spec(const json& j, const std::string& key, FieldSpec fallback) {
    if (j.is_null()) return fallback;
    if (!j.is_object()) fail(key, "expected an object with 'name' and optional 'params'");
    require_keys(j, key, {"name", "params"});
    FieldSpec spec;
    if (!j.contains("name") || !j["name"].is_string()) fail(key + ".name", "expected a string");
    spec.name = j["name"].get<std::string>();
    if (j.contains("params")) {
        if (!j["params"].is_object()) fail(key + ".params", "expected an object");
        for (auto it = j["params"].begin(); it != j["params"].end(); ++it) {
            std::vector<double> values;
            if (it.value().is_number()) {
                values.push_back(it.value().get<double>());
            } else if (it.value().is_array()) {
                for (const auto& v : it.value()) {
                    if (!v.is_number()) fail(key + ".params." + it.key(), "expected numbers");
                    values.push_back(v.get<double>());
                }
            } else {
                fail(key + ".params." + it.key(), "expected a number or an array of numbers");
            }
            spec.params[it.key()] = std::move(values);
        }
    }
    return spec;
}

double param_scalar(const FieldSpec& spec, const std::string& key, double fallback) {
    auto it = spec.params.find(key);
    if (it == spec.params.end()) return fallback;
    if (it->second.size() != 1)
        throw ConfigError("scenario: field parameter '" + key + "' must be a scalar");
    return it->second[0];
}

}  // namespace

Scenario default_scenario() {
    Scenario s;
    s.name = "kolmogorov-default";
    s.grid_config.n_subsystems = 2;
    s.grid_config.d_per_subsystem = 1;
    s.grid_config.dims_per_axis = {17, 17};
    s.grid_config.domain_bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
    s.grid_config.n_time_steps = 32;
    s.grid_config.horizon_T = 1.0;
    s.coeff_name = "kolmogorov";
    s.coeff_params = {{"diffusion", 1.0}, {"coupling", 1.0}};
    s.u1_box = {{-0.8, -0.2}, {-0.8, 0.8}};
    s.u2_box = {{0.2, 0.8}, {-0.8, 0.8}};
    s.target.name = "gaussian_bump";
    s.target.params = {{"center", {0.0, 0.0}}, {"width", {0.35}}, {"amplitude", {0.4}}};
    s.reference.name = "eigenmode";
    s.reference.params = {{"amplitude", {0.25}}};
    s.leader_control.name = "zero";
    s.alpha_relative = 0.1;
    s.beta = 1.0;
    s.fk_payoff.name = "gaussian_bump";
    s.fk_payoff.params = {{"center", {0.2, 0.1}}, {"width", {0.25}}, {"amplitude", {1.0}}};
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("scenario: cannot open '" + path + "'");
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("scenario: JSON parse error in '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw ConfigError("scenario: top level must be an object");
    require_keys(j, "", {"name", "grid", "coefficients", "u1_box", "u2_box", "target",
                         "reference", "leader_control", "alpha", "alpha_relative", "beta",
                         "seed", "solver", "dual", "sweep_alphas_relative", "fk"});

    Scenario s = default_scenario();
    s.name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : "scenario";

    if (j.contains("grid")) {
        const json& g = j["grid"];
        if (!g.is_object()) fail("grid", "expected an object");
        require_keys(g, "grid", {"n_subsystems", "d_per_subsystem", "dims_per_axis", "bounds",
                                 "n_time_steps", "horizon_T"});
        s.grid_config.n_subsystems = get_int(g, "n_subsystems", s.grid_config.n_subsystems);
        s.grid_config.d_per_subsystem =
            get_int(g, "d_per_subsystem", s.grid_config.d_per_subsystem);
        if (g.contains("dims_per_axis")) {
            if (!g["dims_per_axis"].is_array()) fail("grid.dims_per_axis", "expected an array");
            s.grid_config.dims_per_axis.clear();
            for (const auto& v : g["dims_per_axis"]) {
                if (!v.is_number_integer()) fail("grid.dims_per_axis", "expected integers");
                s.grid_config.dims_per_axis.push_back(v.get<int>());
            }
        }
        if (g.contains("bounds")) s.grid_config.domain_bounds = get_box(g["bounds"], "grid.bounds");
        s.grid_config.n_time_steps = get_int(g, "n_time_steps", s.grid_config.n_time_steps);
        s.grid_config.horizon_T = get_number(g, "horizon_T", s.grid_config.horizon_T);
    }

    if (j.contains("coefficients")) {
        const json& c = j["coefficients"];
        if (!c.is_object()) fail("coefficients", "expected an object");
        require_keys(c, "coefficients", {"name", "params"});
        if (!c.contains("name") || !c["name"].is_string())
            fail("coefficients.name", "expected a string");
        s.coeff_name = c["name"].get<std::string>();
        s.coeff_params.clear();
        if (c.contains("params")) {
            if (!c["params"].is_object()) fail("coefficients.params", "expected an object");
            for (auto it = c["params"].begin(); it != c["params"].end(); ++it) {
                if (!it.value().is_number())
                    fail("coefficients.params." + it.key(), "expected a number");
                s.coeff_params[it.key()] = it.value().get<double>();
            }
        }
    }

    if (j.contains("u1_box")) s.u1_box = get_box(j["u1_box"], "u1_box");
    if (j.contains("u2_box")) s.u2_box = get_box(j["u2_box"], "u2_box");
    if (j.contains("target")) s.target = get_field_spec(j["target"], "target", s.target);
    if (j.contains("reference"))
        s.reference = get_field_spec(j["reference"], "reference", s.reference);
    if (j.contains("leader_control"))
        s.leader_control = get_field_spec(j["leader_control"], "leader_control", s.leader_control);

    if (j.contains("alpha") && j.contains("alpha_relative"))
        fail("alpha", "give either 'alpha' or 'alpha_relative', not both");
    if (j.contains("alpha")) {
        s.alpha = get_number(j, "alpha", s.alpha);
        s.alpha_relative.reset();
        if (!(s.alpha > 0.0)) fail("alpha", "must be positive");
    }
    if (j.contains("alpha_relative")) {
        s.alpha_relative = get_number(j, "alpha_relative", 0.1);
        if (!(*s.alpha_relative > 0.0)) fail("alpha_relative", "must be positive");
    }
    s.beta = get_number(j, "beta", s.beta);
    if (!(s.beta > 0.0)) fail("beta", "must be positive");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            fail("seed", "expected an integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }

    if (j.contains("solver")) {
        const json& o = j["solver"];
        if (!o.is_object()) fail("solver", "expected an object");
        require_keys(o, "solver",
                     {"picard_tol", "picard_max_iter", "damping", "linear_tol",
                      "linear_max_iter", "monolithic_cutoff", "coupled_tol"});
        s.solver.picard_tol = get_number(o, "picard_tol", s.solver.picard_tol);
        s.solver.picard_max_iter = get_int(o, "picard_max_iter", s.solver.picard_max_iter);
        s.solver.damping = get_number(o, "damping", s.solver.damping);
        s.solver.linear_tol = get_number(o, "linear_tol", s.solver.linear_tol);
        s.solver.linear_max_iter = get_int(o, "linear_max_iter", s.solver.linear_max_iter);
        s.solver.monolithic_cutoff = get_int(o, "monolithic_cutoff", s.solver.monolithic_cutoff);
        s.solver.coupled_tol = get_number(o, "coupled_tol", s.solver.coupled_tol);
        if (!(s.solver.picard_tol > 0.0)) fail("solver.picard_tol", "must be positive");
        if (!(s.solver.damping > 0.0 && s.solver.damping <= 1.0))
            fail("solver.damping", "must be in (0, 1]");
    }

    if (j.contains("dual")) {
        const json& o = j["dual"];
        if (!o.is_object()) fail("dual", "expected an object");
        require_keys(o, "dual",
                     {"tol", "max_iter", "accelerate", "backtrack_start", "backtrack_shrink",
                      "backtrack_grow", "materialize_gramian", "gramian_limit", "method",
                      "vi_samples", "controllability_tol"});
        s.dual.tol = get_number(o, "tol", s.dual.tol);
        s.dual.max_iter = get_int(o, "max_iter", s.dual.max_iter);
        s.dual.accelerate = get_bool(o, "accelerate", s.dual.accelerate);
        s.dual.backtrack_start = get_number(o, "backtrack_start", s.dual.backtrack_start);
        s.dual.backtrack_shrink = get_number(o, "backtrack_shrink", s.dual.backtrack_shrink);
        s.dual.backtrack_grow = get_number(o, "backtrack_grow", s.dual.backtrack_grow);
        s.dual.materialize_gramian = get_bool(o, "materialize_gramian", s.dual.materialize_gramian);
        s.dual.gramian_limit = get_int(o, "gramian_limit", s.dual.gramian_limit);
        s.dual.vi_samples = get_int(o, "vi_samples", s.dual.vi_samples);
        s.dual.controllability_tol =
            get_number(o, "controllability_tol", s.dual.controllability_tol);
        if (o.contains("method")) {
            const std::string m = o["method"].is_string() ? o["method"].get<std::string>() : "";
            if (m == "prox_gradient")
                s.dual.method = DualMethod::prox_gradient;
            else if (m == "cg_smooth")
                s.dual.method = DualMethod::cg_smooth;
            else
                fail("dual.method", "expected 'prox_gradient' or 'cg_smooth'");
        }
        if (!(s.dual.tol > 0.0)) fail("dual.tol", "must be positive");
        if (!(s.dual.backtrack_shrink > 0.0 && s.dual.backtrack_shrink < 1.0))
            fail("dual.backtrack_shrink", "must be in (0, 1)");
    }

    if (j.contains("sweep_alphas_relative")) {
        if (!j["sweep_alphas_relative"].is_array())
            fail("sweep_alphas_relative", "expected an array of numbers");
        s.sweep_alphas_relative.clear();
        for (const auto& v : j["sweep_alphas_relative"]) {
            if (!v.is_number() || !(v.get<double>() > 0.0))
                fail("sweep_alphas_relative", "entries must be positive numbers");
            s.sweep_alphas_relative.push_back(v.get<double>());
        }
        if (s.sweep_alphas_relative.empty())
            fail("sweep_alphas_relative", "must not be empty");
    }

    if (j.contains("fk")) {
        const json& o = j["fk"];
        if (!o.is_object()) fail("fk", "expected an object");
        require_keys(o, "fk", {"payoff", "horizon_T", "dt", "n_paths", "pde_steps"});
        if (o.contains("payoff")) s.fk_payoff = get_field_spec(o["payoff"], "fk.payoff", s.fk_payoff);
        s.fk_horizon = get_number(o, "horizon_T", s.fk_horizon);
        s.fk_dt = get_number(o, "dt", s.fk_dt);
        s.fk_paths = get_int(o, "n_paths", s.fk_paths);
        s.fk_pde_steps = get_int(o, "pde_steps", s.fk_pde_steps);
        if (!(s.fk_horizon > 0.0)) fail("fk.horizon_T", "must be positive");
        if (!(s.fk_dt > 0.0)) fail("fk.dt", "must be positive");
        if (s.fk_paths < 1) fail("fk.n_paths", "must be at least 1");
        if (s.fk_pde_steps < 1) fail("fk.pde_steps", "must be at least 1");
    }
    return s;
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["grid"] = {{"n_subsystems", s.grid_config.n_subsystems},
                 {"d_per_subsystem", s.grid_config.d_per_subsystem},
                 {"dims_per_axis", s.grid_config.dims_per_axis},
                 {"n_time_steps", s.grid_config.n_time_steps},
                 {"horizon_T", s.grid_config.horizon_T}};
    json bounds = json::array();
    for (const auto& [lo, hi] : s.grid_config.domain_bounds) bounds.push_back({lo, hi});
    j["grid"]["bounds"] = bounds;
    j["coefficients"] = {{"name", s.coeff_name}, {"params", s.coeff_params}};
    json u1 = json::array(), u2 = json::array();
    for (const auto& [lo, hi] : s.u1_box) u1.push_back({lo, hi});
    for (const auto& [lo, hi] : s.u2_box) u2.push_back({lo, hi});
    j["u1_box"] = u1;
    j["u2_box"] = u2;
    auto spec_json = [](const FieldSpec& spec) {
        json p = json::object();
        for (const auto& [k, v] : spec.params) {
            if (v.size() == 1)
                p[k] = v[0];
            else
                p[k] = v;
        }
        return json{{"name", spec.name}, {"params", p}};
    };
    j["target"] = spec_json(s.target);
    j["reference"] = spec_json(s.reference);
    j["leader_control"] = spec_json(s.leader_control);
    if (s.alpha_relative)
        j["alpha_relative"] = *s.alpha_relative;
    else
        j["alpha"] = s.alpha;
    j["beta"] = s.beta;
    j["seed"] = s.seed;
    j["sweep_alphas_relative"] = s.sweep_alphas_relative;
    j["fk"] = {{"payoff", spec_json(s.fk_payoff)},
               {"horizon_T", s.fk_horizon},
               {"dt", s.fk_dt},
               {"n_paths", s.fk_paths},
               {"pde_steps", s.fk_pde_steps}};
    return j.dump(2);
}

Problem build_problem(const Scenario& s) {
    Grid grid = build_grid(s.grid_config);
    SubdomainMask u1 = make_mask(grid, s.u1_box, MaskLabel::U1);
    SubdomainMask u2 = make_mask(grid, s.u2_box, MaskLabel::U2);
    CoefficientSet coeffs = make_coefficients(s.coeff_name, s.coeff_params);
    return Problem(std::move(grid), std::move(coeffs), std::move(u1), std::move(u2), s.beta,
                   s.solver);
}

Field make_slice_field(const Grid& grid, const FieldSpec& spec) {
    if (spec.name == "zero") return zero_slice(grid);
    if (spec.name == "constant") {
        const double value = param_scalar(spec, "value", 1.0);
        return slice_from_function(grid, [value](const VectorXd&) { return value; });
    }
    if (spec.name == "gaussian_bump") {
        const double amplitude = param_scalar(spec, "amplitude", 1.0);
        const double width = param_scalar(spec, "width", 0.35);
        if (!(width > 0.0)) throw ConfigError("scenario: gaussian_bump width must be positive");
        VectorXd center = VectorXd::Zero(grid.n_axes());
        auto it = spec.params.find("center");
        if (it != spec.params.end()) {
            if (static_cast<int>(it->second.size()) != grid.n_axes())
                throw ConfigError("scenario: gaussian_bump center has the wrong dimension");
            for (int a = 0; a < grid.n_axes(); ++a) center[a] = it->second[a];
        }
        Field f = slice_from_function(grid, [&](const VectorXd& x) {
            return amplitude * std::exp(-(x - center).squaredNorm() / (2.0 * width * width));
        });
        return zero_on_boundary(grid, std::move(f));
    }
    if (spec.name == "eigenmode") {
        const double amplitude = param_scalar(spec, "amplitude", 1.0);
        std::vector<int> mode(grid.n_axes(), 1);
        auto it = spec.params.find("mode");
        if (it != spec.params.end()) {
            if (static_cast<int>(it->second.size()) != grid.n_axes())
                throw ConfigError("scenario: eigenmode mode has the wrong dimension");
            for (int a = 0; a < grid.n_axes(); ++a) mode[a] = static_cast<int>(it->second[a]);
        }
        Field f = slice_from_function(grid, [&](const VectorXd& x) {
            double v = amplitude;
            for (int a = 0; a < grid.n_axes(); ++a) {
                const double s = (x[a] - grid.lower(a)) / (grid.upper(a) - grid.lower(a));
                v *= std::sin(mode[a] * M_PI * s);
            }
            return v;
        });
        return zero_on_boundary(grid, std::move(f));
    }
    throw ConfigError("scenario: unknown field registry name '" + spec.name + "'");
}

Field make_spacetime_field(const Grid& grid, const FieldSpec& spec) {
    return replicate_in_time(grid, make_slice_field(grid, spec));
}

}  // namespace kolstack
