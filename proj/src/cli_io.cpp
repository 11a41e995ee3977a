#include "rvp/cli_io.hpp"

#include <fmt/core.h>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <tbb/global_control.h>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <random>
#include <sstream>

#include "rvp/coercivity.hpp"
#include "rvp/dynamics.hpp"
#include "rvp/fixtures.hpp"
#include "rvp/verify.hpp"

namespace rvp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char kSchemaText[] =
#include "rvp_schema.inc"
    ;

// ---------------------------------------------------------------------------------------------
// Schema validation. Supports the subset the shipped schema uses: type, properties, required,
// additionalProperties (false), items, enum, minItems, minimum, maximum, exclusiveMinimum,
// exclusiveMaximum, default. Object defaults are resolved recursively so the output is complete.

struct Validator {
  std::string source;

  [[noreturn]] void error(const YAML::Mark& m, const std::string& path, const std::string& why) const {
    const std::string where = m.is_null() ? source : fmt::format("{}:{}:{}", source, m.line + 1, m.column + 1);
    fail(ErrorKind::SchemaError, fmt::format("{}: {}: {}", where, path.empty() ? "<root>" : path, why));
  }

  static std::string child(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  // Value of an absent key: its default, with nested object defaults filled in; null when none.
  json absent(const json& schema) const {
    if (!schema.contains("default")) return json();
    if (schema.value("type", "") == "object") return resolve_object(schema, YAML::Node(YAML::NodeType::Map), "");
    return schema["default"];
  }

  void check_bounds(const json& schema, double v, const YAML::Node& n, const std::string& path) const {
    if (!std::isfinite(v)) error(n.Mark(), path, "value must be finite");
    auto bound = [&](const char* key, auto violates, const char* rel) {
      if (schema.contains(key) && violates(schema[key].get<double>()))
        error(n.Mark(), path, fmt::format("value {} must be {} {}", n.Scalar(), rel, fmt17(schema[key].get<double>())));
    };
    bound("minimum", [&](double b) { return v < b; }, ">=");
    bound("maximum", [&](double b) { return v > b; }, "<=");
    bound("exclusiveMinimum", [&](double b) { return v <= b; }, ">");
    bound("exclusiveMaximum", [&](double b) { return v >= b; }, "<");
  }

  json resolve_object(const json& schema, const YAML::Node& n, const std::string& path) const {
    if (!n.IsMap()) error(n.Mark(), path, "expected a mapping");
    const json& props = schema.contains("properties") ? schema["properties"] : json::object();
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    json out = json::object();
    for (const auto& kv : n) {
      const std::string key = kv.first.as<std::string>();
      if (!props.contains(key)) {
        if (closed) error(kv.first.Mark(), child(path, key), "unknown key");
        continue;
      }
      if (out.contains(key)) error(kv.first.Mark(), child(path, key), "duplicate key");
      out[key] = resolve(props[key], kv.second, child(path, key));
    }
    for (const auto& [key, sub] : props.items()) {
      if (out.contains(key)) continue;
      json d = absent(sub);
      if (!d.is_null()) out[key] = std::move(d);
    }
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!out.contains(key.get<std::string>())) error(n.Mark(), path, fmt::format("missing required key '{}'", key.get<std::string>()));
    return out;
  }

  json resolve(const json& schema, const YAML::Node& n, const std::string& path) const {
    const std::string type = schema.value("type", "");
    if (type == "object") return resolve_object(schema, n, path);
    if (type == "array") {
      if (!n.IsSequence()) error(n.Mark(), path, "expected a sequence");
      json out = json::array();
      std::size_t i = 0;
      for (const auto& item : n) out.push_back(resolve(schema["items"], item, fmt::format("{}[{}]", path, i++)));
      if (schema.contains("minItems") && out.size() < schema["minItems"].get<std::size_t>())
        error(n.Mark(), path, fmt::format("expected at least {} items", schema["minItems"].get<std::size_t>()));
      return out;
    }
    if (!n.IsScalar()) error(n.Mark(), path, fmt::format("expected a {} scalar", type));
    const std::string& text = n.Scalar();
    json out;
    if (type == "number") {
      double v = 0.0;
      if (!YAML::convert<double>::decode(n, v)) error(n.Mark(), path, fmt::format("'{}' is not a number", text));
      check_bounds(schema, v, n, path);
      out = v;
    } else if (type == "integer") {
      long long v = 0;
      if (!YAML::convert<long long>::decode(n, v)) error(n.Mark(), path, fmt::format("'{}' is not an integer", text));
      check_bounds(schema, static_cast<double>(v), n, path);
      out = v;
    } else if (type == "boolean") {
      bool v = false;
      if (!YAML::convert<bool>::decode(n, v)) error(n.Mark(), path, fmt::format("'{}' is not a boolean", text));
      out = v;
    } else if (type == "string") {
      out = text;
    } else {
      error(n.Mark(), path, fmt::format("unsupported schema type '{}'", type));
    }
    if (schema.contains("enum")) {
      bool found = false;
      for (const auto& e : schema["enum"]) found = found || e == out;
      if (!found) error(n.Mark(), path, fmt::format("'{}' is not one of {}", text, schema["enum"].dump()));
    }
    return out;
  }
};

const json& schema_json() {
  static const json s = json::parse(kSchemaText);
  return s;
}

// ---------------------------------------------------------------------------------------------
// Artifacts

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) {
    for (std::size_t k = 0; k < header.size(); ++k) fmt::format_to(std::back_inserter(buf_), "{}{}", k ? "," : "", header[k]);
    buf_.push_back('\n');
  }
  Csv& row() {
    first_ = true;
    return *this;
  }
  Csv& operator<<(double x) { return cell(fmt17(x)); }
  Csv& operator<<(long long x) { return cell(std::to_string(x)); }
  Csv& operator<<(int x) { return cell(std::to_string(x)); }
  Csv& operator<<(std::size_t x) { return cell(std::to_string(x)); }
  Csv& operator<<(bool x) { return cell(x ? "1" : "0"); }
  Csv& end() {
    buf_.push_back('\n');
    return *this;
  }
  std::string str() const { return fmt::to_string(buf_); }

 private:
  Csv& cell(const std::string& s) {
    if (!first_) buf_.push_back(',');
    first_ = false;
    buf_.append(s.data(), s.data() + s.size());
    return *this;
  }
  fmt::memory_buffer buf_;
  bool first_ = true;
};

struct Context {
  RunOptions opt;
  json cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::string stage = "cli_io";  // module currently running, named in numerical failures
  json outputs = json::array();
  json grids = json::array();

  template <typename... Args>
  void log(fmt::format_string<Args...> f, Args&&... args) const {
    if (opt.verbose) fmt::print(stderr, "[rvp] {}\n", fmt::format(f, std::forward<Args>(args)...));
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream os(out / name, std::ios::binary);
    os << content;
    if (!os) fail(ErrorKind::PreconditionError, fmt::format("cannot write {}", (out / name).string()));
    outputs.push_back({{"file", name}, {"sha256", sha256_hex(content)}});
    log("wrote {}", name);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  void fingerprint(const std::string& name, const RadialGrid& g) {
    fmt::memory_buffer b;
    for (double r : g.r) fmt::format_to(std::back_inserter(b), "{:.17g}\n", r);
    grids.push_back({{"name", name}, {"nodes", g.size()}, {"r_max", g.r_max},
                     {"sha256", sha256_hex(std::string_view(b.data(), b.size()))}});
  }
};

SteadyState build_state(Context& cx) {
  const json& p = cx.cfg["profile"];
  const json& s = cx.cfg["steady"];
  CutoffProfile F;
  if (p["family"] == "polytrope") {
    F = CutoffProfile::polytrope(p["kappa"].get<double>(), p["k"].get<double>(), p["e_Q"].get<double>());
  } else {
    auto e = p["table_e"].get<std::vector<double>>(), f = p["table_F"].get<std::vector<double>>();
    F = CutoffProfile::table(std::move(e), std::move(f), p["e_Q"].get<double>());
  }
  SteadyOptions o;
  o.nodes = s["nodes"].get<int>();
  o.rmax_factor = s["rmax_factor"].get<double>();
  o.levels = s["levels"].get<int>();
  o.far_tol = s["far_tol"].get<double>();
  o.p = s["p"].get<double>();
  o.require_decreasing = s["require_decreasing"].get<bool>();
  cx.stage = "steady_state";
  cx.log("building steady state");
  SteadyState st = build_steady_state(F, p["phi_center"].get<double>(), o);
  cx.fingerprint("state", *st.Q.grid);
  cx.log("R_Q = {:.6g}, mass = {:.6g}, H = {:.6g}", st.R_Q, st.mass, st.H);
  return st;
}

// JSON has no infinities; write them as strings rather than the null nlohmann would emit.
json num(double x) { return std::isfinite(x) ? json(x) : json(fmt::format("{}", x)); }

json energy_json(const EnergyReport& e) {
  return {{"kinetic", e.kinetic}, {"potential", e.potential}, {"hamiltonian", e.hamiltonian}, {"l1", e.l1},
          {"lp", e.lp}, {"p", e.p}, {"gamma_moment", e.gamma_moment}, {"ep_norm", e.ep_norm}};
}

// ---------------------------------------------------------------------------------------------
// Subcommands

void cmd_steady_state(Context& cx) {
  const SteadyState st = build_state(cx);
  const FixedPointReport fp = fixed_point_check(st);
  const json& p = cx.cfg["profile"];
  json j = {{"profile", p},
            {"build_config_sha256", config_hash({{"profile", p}, {"steady", cx.cfg["steady"]}})},
            {"phi_center", st.shoot.phi_center},
            {"R_Q", st.R_Q},
            {"mass", st.mass},
            {"L0", st.L0},
            {"l1", st.l1},
            {"lp", st.lp},
            {"p", st.p},
            {"linf", st.linf},
            {"kinetic", st.kinetic},
            {"potential", st.potential},
            {"H", st.H},
            {"poisson_residual", st.poisson_residual},
            {"shooting_iterations", st.shooting_iterations},
            {"newton_iterations", st.newton_iterations},
            {"levels", st.levels.size()},
            {"fixed_point", {{"l1_rel", fp.l1_rel}, {"profile_dev", fp.profile_dev}, {"profile_dev_h", fp.profile_dev_h}, {"L0_vs_a", fp.L0_vs_a}}}};
  cx.write_json("steady_state.json", j);

  const RadialGrid& g = *st.Q.grid;
  Csv phi({"r", "value"}), rho({"r", "value"}), qs({"s", "value"}), lev({"e", "value"});
  for (std::size_t i = 0; i < g.size(); ++i) {
    phi.row() << g.r[i] << st.phi_Q[i];
    phi.end();
    rho.row() << g.r[i] << st.rho_Q.values[i];
    rho.end();
  }
  for (std::size_t k = 0; k < st.Q_star.v.size(); ++k) {
    qs.row() << st.Q_star.s[k] << st.Q_star.v[k];
    qs.end();
  }
  for (std::size_t k = 0; k + 1 < st.levels.size() && k < st.level_values.size(); ++k) {
    lev.row() << st.levels[k] << st.level_values[k];
    lev.end();
  }
  cx.write("phi_Q.csv", phi.str());
  cx.write("rho_Q.csv", rho.str());
  cx.write("Q_star.csv", qs.str());
  cx.write("levels.csv", lev.str());
}

void cmd_rearrange(Context& cx) {
  const SteadyState st = build_state(cx);
  const json& c = cx.cfg["rearrange"];
  cx.stage = "rearrangement";
  const JacobianTable tab(st.phi_Q, c["jacobian_table"].get<int>());
  Csv jt({"e", "a"});
  for (std::size_t k = 0; k < tab.table_e().size(); ++k) {
    jt.row() << tab.table_e()[k] << tab.table_a()[k];
    jt.end();
  }
  cx.write("jacobian.csv", jt.str());

  std::mt19937_64 rng(cx.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double tol = c["tolerance"].get<double>(), dmax = c["max_delta"].get<double>();
  Csv trials({"trial", "delta", "l1", "lp", "support", "mu_dev", "l1_dev", "lp_dev", "pass"});
  int passed = 0;
  const int n = c["trials"].get<int>();
  for (int t = 0; t < n; ++t) {
    const double delta = dmax * U(rng);
    const PhaseDensity f = fixture::cell_perturbation(st, delta, rng, 3 + t % 5, 2 + t % 4);
    const DecreasingProfile prof = schwarz_rearrange(f);
    const PhaseDensity g = energy_rearrange(prof, tab);
    if (t == 0) {
      Csv pc({"s", "value"});
      for (std::size_t k = 0; k < prof.v.size(); ++k) {
        pc.row() << prof.s[k] << prof.v[k];
        pc.end();
      }
      cx.write("demo_profile.csv", pc.str());
    }
    const double S = f.support_measure(), top = f.linf();
    double mu = 0.0;
    for (int l = 0; l < 50; ++l) mu = std::max(mu, std::abs(g.distribution(top * l / 50.0) - f.distribution(top * l / 50.0)) / S);
    const double l1 = std::abs(g.l1() - f.l1()) / f.l1(), lp = std::abs(g.lp(st.p) - f.lp(st.p)) / f.lp(st.p);
    const bool ok = mu <= tol && l1 <= tol && lp <= tol;
    passed += ok;
    trials.row() << t << delta << f.l1() << f.lp(st.p) << S << mu << l1 << lp << ok;
    trials.end();
  }
  cx.write("rearrange_trials.csv", trials.str());
  cx.write_json("rearrange.json", {{"trials", n}, {"passed", passed}, {"tolerance", tol}, {"all_pass", passed == n},
                                   {"jacobian_sup", num(tab.sup_value())}, {"e_min", tab.e_min()}});
}

void cmd_functionals(Context& cx) {
  const SteadyState st = build_state(cx);
  const json& c = cx.cfg["functionals"];
  cx.stage = "functionals";
  const double p = st.p;
  json constants = json::object();
  double C_p = 0.0, K = 0.0;
  if (!c.contains("C_p") || !c.contains("K")) {
    const auto ens = random_density_ensemble(st, c["calibration_samples"].get<int>(), cx.seed);
    C_p = c.contains("C_p") ? c["C_p"].get<double>() : calibrate_interpolation_constant(ens, p);
    K = c.contains("K") ? c["K"].get<double>() : calibrate_difference_constant(ens, p);
  } else {
    C_p = c["C_p"].get<double>();
    K = c["K"].get<double>();
  }
  constants = {{"C_p", C_p}, {"C_p_calibrated", !c.contains("C_p")}, {"K", K}, {"K_calibrated", !c.contains("K")}};
  cx.log("C_p = {:.6g}, K = {:.6g}", C_p, K);

  const SubcriticalReport sub = check_subcritical(st.Q, p, C_p);
  const KineticControlReport kin = kinetic_control(st.Q, st.phi_Q, p, K);
  const JValue J = functional_J(st.phi_Q, st);
  json j = {{"constants", constants},
            {"energy", energy_json(hamiltonian(st.Q, p))},
            {"J", {{"J", J.J}, {"J0", J.J0}, {"J0_raw", J.J0_raw}, {"gradient", J.gradient}}},
            {"subcritical", {{"p", sub.p}, {"C_p", sub.C_p}, {"smallness", sub.smallness}, {"subcritical", sub.subcritical},
                             {"potential", sub.potential}, {"interpolation_rhs", sub.interpolation_rhs},
                             {"interpolation_holds", sub.interpolation_holds}, {"kinetic_lower_bound", sub.kinetic_lower_bound},
                             {"H", sub.H}, {"lower_bound_holds", sub.lower_bound_holds}}},
            {"kinetic_control", {{"X", kin.X}, {"coefficient", kin.coefficient}, {"quadratic", kin.quadratic},
                                 {"cauchy_schwarz", kin.cauchy_schwarz}, {"bound", kin.bound}}}};

  std::mt19937_64 rng(cx.seed + 1);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double tol = c["tolerance"].get<double>(), dmax = c["max_delta"].get<double>();
  Csv gaps({"trial", "delta", "l1", "lp", "ep_distance", "H_f", "J_f", "lhs", "rhs", "slack", "bathtub", "pass"});
  const int n = c["trials"].get<int>();
  int passed = 0;
  for (int t = 0; t < n; ++t) {
    const double delta = dmax * U(rng);
    const PhaseDensity f = fixture::cell_perturbation(st, delta, rng);
    const GapReport g = stability_gap(f, st);
    const bool ok = g.slack / g.scale >= -tol;
    passed += ok;
    gaps.row() << t << delta << f.l1() << f.lp(p) << f.minus(st.Q).ep_norm(p) << g.H_f << g.J_f << g.lhs << g.rhs << g.slack
               << g.bathtub << ok;
    gaps.end();
  }
  j["gap_trials"] = {{"trials", n}, {"passed", passed}, {"tolerance", tol}};
  cx.write_json("functionals.json", j);
  cx.write("gap_trials.csv", gaps.str());
}

void cmd_coercivity(Context& cx) {
  const SteadyState st = build_state(cx);
  const json& c = cx.cfg["coercivity"];
  cx.stage = "coercivity";
  const CoercivityReport r =
      refinement_trace(st, c["basis"].get<int>(), c["doublings"].get<int>(), c["r_hi_factor"].get<double>() * st.R_Q);
  json trace = json::array();
  Csv csv({"dimension", "lambda_min"});
  for (const auto& [d, l] : r.trace) {
    trace.push_back({{"dimension", d}, {"lambda_min", l}});
    csv.row() << d << l;
    csv.end();
  }
  cx.write_json("coercivity.json", {{"dimension", r.dimension}, {"lambda_min", r.lambda_min}, {"C0", r.C0},
                                    {"gram_condition", num(r.gram_condition)}, {"coefficients", r.coefficients}, {"trace", trace}});
  cx.write("refinement.csv", csv.str());
}

SimConfig sim_config(const Context& cx, const SteadyState& st) {
  const json& d = cx.cfg["dynamics"];
  SimConfig cfg;
  const std::string field = d["field"];
  cfg.field_mode = field == "frozen" ? FieldMode::Frozen : field == "none" ? FieldMode::None : FieldMode::SelfConsistent;
  const std::string integ = d["integrator"];
  cfg.integrator = integ == "implicit_midpoint" ? Integrator::ImplicitMidpoint
                   : integ == "midpoint4"       ? Integrator::Midpoint4
                   : integ == "rk4"             ? Integrator::RK4
                                                : Integrator::Leapfrog;
  cfg.dt = d.contains("dt") ? d["dt"].get<double>() : default_dt(st, cfg.field_mode);
  cfg.horizon = d["horizon"].get<double>() * dynamical_time(st);
  cfg.N = d["particles"].get<std::size_t>();
  cfg.record_every = d["record_every"].get<int>();
  cfg.field_cadence = d["field_cadence"].get<int>();
  cfg.sim_nodes = d["sim_nodes"].get<int>();
  cfg.kinetic_growth_limit = d["kinetic_growth_limit"].get<double>();
  cfg.midpoint_tol = d["midpoint_tol"].get<double>();
  cfg.p = st.p;
  cfg.seed = cx.seed;
  return cfg;
}

void cmd_evolve(Context& cx) {
  const SteadyState st = build_state(cx);
  cx.stage = "dynamics";
  const SimConfig cfg = sim_config(cx, st);
  const double delta = cx.cfg["dynamics"]["delta"].get<double>();
  const SplineMap map = make_sim_map(st, cfg);
  const DiagGrid dg = make_diag_grid(st, cfg);
  cx.fingerprint("simulation", *map.grid);
  cx.fingerprint("diagnostic", *dg.grid);
  const PhaseDensity PQ = project_phase(
      [&](double r, double w) { return st.profile.F(std::sqrt(1 + w * w) - 1 + st.shoot.phi_at(r)); }, dg);
  ParticleEnsemble ens = sample_steady(st, cfg.N, cfg.seed);
  // same radial perturbation as the stability experiment, applied as a mass reweighting
  if (delta > 0.0)
    for (std::size_t i = 0; i < ens.size(); ++i)
      ens.m[i] *= 1.0 + delta * std::cos(kPi * std::min(ens.r(i) / st.R_Q, 1.0));
  std::optional<Field> frozen;
  if (cfg.field_mode == FieldMode::Frozen) frozen = Field::shooting(st.shoot);
  cx.log("evolving {} particles to t = {:.6g} with dt = {:.6g}", ens.size(), cfg.horizon, cfg.dt);
  const StabilityTrace tr = evolve(ens, cfg, map, &dg, &PQ, frozen);
  Csv csv({"t", "H", "mass", "l1", "lp", "kinetic", "distance"});
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    csv.row() << tr.t[k] << tr.H[k] << tr.mass[k] << tr.l1[k] << tr.lp[k] << tr.kinetic[k] << tr.distance[k];
    csv.end();
  }
  cx.write("trace.csv", csv.str());
  cx.write_json("evolve.json", {{"particles", ens.size()}, {"dt", cfg.dt}, {"horizon", cfg.horizon},
                                {"t_dyn", dynamical_time(st)}, {"delta", delta}, {"H0", tr.H0},
                                {"max_rel_H_drift", tr.max_rel_H_drift}, {"max_mass_dev", tr.max_mass_dev},
                                {"kinetic_flag", tr.kinetic_flag}, {"kinetic_flag_time", tr.kinetic_flag_time}});
}

void cmd_stability(Context& cx) {
  const SteadyState st = build_state(cx);
  cx.stage = "dynamics";
  const SimConfig cfg = sim_config(cx, st);
  cx.fingerprint("simulation", *make_sim_map(st, cfg).grid);
  cx.fingerprint("diagnostic", *make_diag_grid(st, cfg).grid);
  const auto deltas = cx.cfg["dynamics"]["deltas"].get<std::vector<double>>();
  cx.log("stability ladder over {} perturbation sizes, {} particles", deltas.size(), cfg.N);
  const LadderReport lr = stability_ladder(st, deltas, cfg);
  Csv summary({"delta", "amplitude", "sup_distance", "ratio", "noise_floor", "outside_window"});
  Csv traces({"delta", "t", "distance"});
  json runs = json::array();
  for (const StabilityReport& r : lr.runs) {
    summary.row() << r.delta << r.amplitude << r.sup_distance << r.ratio << r.noise_floor << r.outside_window;
    summary.end();
    for (std::size_t k = 0; k < r.t.size(); ++k) {
      traces.row() << r.delta << r.t[k] << r.distance[k];
      traces.end();
    }
    runs.push_back({{"delta", r.delta}, {"amplitude", r.amplitude}, {"sup_distance", r.sup_distance}, {"ratio", r.ratio},
                    {"noise_floor", r.noise_floor}, {"outside_window", r.outside_window}});
  }
  cx.write("stability.csv", summary.str());
  cx.write("stability_traces.csv", traces.str());
  cx.write_json("stability.json", {{"particles", cfg.N}, {"dt", cfg.dt}, {"horizon", cfg.horizon},
                                   {"nondecreasing", lr.nondecreasing}, {"C", lr.C}, {"runs", runs}});
}

void cmd_verify(Context& cx) {
  cx.stage = "verify";
  const json& c = cx.cfg["verify"];
  SuiteOptions so;
  so.criteria = c["criteria"].get<std::vector<int>>();
  so.seed = cx.seed;
  so.particle_scale = c["particle_scale"].get<double>();
  so.on_result = [&](const CriterionResult& r) {
    fmt::print(stderr, "{} {:>2} {} ({:.2f} s, limit {:.0f} s): {}\n", r.pass ? "PASS" : "FAIL", r.id, r.name, r.seconds,
               r.time_limit, r.detail);
  };
  const auto res = run_acceptance_suite(so);
  json list = json::array();
  int passed = 0;
  for (const CriterionResult& r : res) {
    json m = json::object();
    for (const auto& [k, v] : r.metrics) m[k] = v;
    list.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"seconds", r.seconds},
                    {"time_limit", r.time_limit}, {"detail", r.detail}, {"metrics", m}});
    passed += r.pass;
  }
  cx.write_json("verify.json", {{"state", "polytrope kappa=1 k=1 e_Q=-0.1, phi_center=-0.5"},
                                {"particle_scale", so.particle_scale},
                                {"passed", passed},
                                {"total", res.size()},
                                {"all_pass", passed == static_cast<int>(res.size())},
                                {"criteria", list}});
}

}  // namespace

// ---------------------------------------------------------------------------------------------

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"steady-state", "rearrange", "functionals", "coercivity",
                                             "evolve",       "stability", "verify"};
  return s;
}

std::string_view config_schema() { return kSchemaText; }

json load_config_text(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail(ErrorKind::SchemaError, fmt::format("{}:{}:{}: {}", source, e.mark.line + 1, e.mark.column + 1, e.msg));
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);  // empty file: all defaults
  Validator v{source};
  json cfg = v.resolve(schema_json(), root, "");
  // cross-field rule the schema subset cannot express
  const json& p = cfg["profile"];
  if (p["family"] == "table" && (p["table_e"].empty() || p["table_e"].size() != p["table_F"].size()))
    v.error(root["profile"].Mark(), "profile", "table family needs non-empty table_e and table_F of equal length");
  return cfg;
}

json load_config_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::SchemaError, fmt::format("{}: cannot open config file", path));
  std::stringstream ss;
  ss << is.rdbuf();
  return load_config_text(ss.str(), path);
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::PreconditionError, "SHA-256 digest failed");
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string config_hash(const json& cfg) { return sha256_hex(cfg.dump()); }

std::string fmt17(double x) { return fmt::format("{:.17g}", x); }

int run(const RunOptions& opt) {
  Context cx;
  cx.opt = opt;
  try {
    cx.cfg = opt.config_path.empty() ? load_config_text("", "<defaults>") : load_config_file(opt.config_path);
  } catch (const Error& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitSchema;
  }
  if (opt.seed) cx.cfg["seed"] = *opt.seed;
  cx.seed = cx.cfg["seed"].get<std::uint64_t>();
  cx.out = opt.out_dir;
  std::error_code ec;
  fs::create_directories(cx.out, ec);
  if (ec) {
    fmt::print(stderr, "cannot create output directory {}: {}\n", opt.out_dir, ec.message());
    return kExitNumerical;
  }
  std::unique_ptr<tbb::global_control> threads;
  if (opt.threads > 0)
    threads = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, opt.threads);

  const std::string hash = config_hash(cx.cfg);
  cx.log("{} with config sha256 {}", opt.subcommand, hash);
  int status = kExitOk;
  std::string message = "ok";
  try {
    const std::string& s = opt.subcommand;
    if (s == "steady-state") cmd_steady_state(cx);
    else if (s == "rearrange") cmd_rearrange(cx);
    else if (s == "functionals") cmd_functionals(cx);
    else if (s == "coercivity") cmd_coercivity(cx);
    else if (s == "evolve") cmd_evolve(cx);
    else if (s == "stability") cmd_stability(cx);
    else if (s == "verify") cmd_verify(cx);
    else fail(ErrorKind::PreconditionError, fmt::format("unknown subcommand '{}'", s));
  } catch (const Error& e) {
    status = kExitNumerical;
    message = fmt::format("numerical failure in {}: {}: {}", cx.stage, to_string(e.kind()), e.what());
    fmt::print(stderr, "{}\n", message);
  }
  json manifest = {{"subcommand", opt.subcommand},
                   {"config", cx.cfg},
                   {"config_sha256", hash},
                   {"config_source", opt.config_path.empty() ? "<defaults>" : opt.config_path},
                   {"seeds", {{"seed", cx.seed}}},
                   {"threads", opt.threads},
                   {"grids", cx.grids},
                   {"outputs", cx.outputs},
                   {"exit_status", status},
                   {"message", message}};
  std::ofstream(cx.out / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
  return status;
}

}  // namespace rvp::cli
