#include "sqglab/io.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sqg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg = "invalid config (" + std::to_string(errors.size()) + " error" +
                    (errors.size() == 1 ? "" : "s") + ")";
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

}  // namespace

ConfigErrors::ConfigErrors(std::vector<std::string> errors)
    : ConfigError(join_errors(errors)), errors_(std::move(errors)) {}

// --- reading ---------------------------------------------------------------------

namespace {

class Reader {
 public:
  Reader(const json* j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(&errors) {
    if (j_ && !j_->is_object()) {
      error("expected an object");
      j_ = nullptr;
    }
  }

  ~Reader() {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!used_.count(it.key())) errors_->push_back(where(it.key()) + ": unknown key");
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  Reader child(const std::string& key) {
    const json* c = find(key);
    return Reader(c, where(key), *errors_);
  }

  const json* raw(const std::string& key) { return find(key); }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) read_number(*v, where(key), out);
  }

  void optional_number(const std::string& key, std::optional<double>& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_null()) {
      out.reset();
      return;
    }
    double x = 0.0;
    if (read_number(*v, where(key), x)) out = x;
  }

  template <class U>
  void unsigned_int(const std::string& key, U& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
      errors_->push_back(where(key) + ": expected a non-negative integer");
      return;
    }
    out = static_cast<U>(v->get<std::uint64_t>());
  }

  void integer(const std::string& key, int& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_number_integer()) {
      errors_->push_back(where(key) + ": expected an integer");
      return;
    }
    out = v->get<int>();
  }

  void boolean(const std::string& key, bool& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) {
      errors_->push_back(where(key) + ": expected true or false");
      return;
    }
    out = v->get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) {
      errors_->push_back(where(key) + ": expected a string");
      return;
    }
    out = v->get<std::string>();
  }

  template <class E>
  void choice(const std::string& key, E& out, E (*parse)(const std::string&)) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) {
      errors_->push_back(where(key) + ": expected a string");
      return;
    }
    try {
      out = parse(v->get<std::string>());
    } catch (const ConfigError& e) {
      errors_->push_back(where(key) + ": " + e.what());
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    const json* v = find(key);
    if (!v) return;
    read_numbers(*v, where(key), out);
  }

  void matrix(const std::string& key, std::vector<std::vector<double>>& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) {
      errors_->push_back(where(key) + ": expected an array of arrays");
      return;
    }
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      std::vector<double> row;
      if (read_numbers((*v)[i], where(key) + "[" + std::to_string(i) + "]", row)) out.push_back(row);
    }
  }

  void wavevector(const std::string& key, Wavevector& out) {
    const json* v = find(key);
    if (!v) return;
    read_wavevector(*v, where(key), out);
  }

  void modes(const std::string& key, std::vector<ModeAmplitude>& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) {
      errors_->push_back(where(key) + ": expected an array of {k, amplitude}");
      return;
    }
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      ModeAmplitude m;
      {
        Reader r(&(*v)[i], where(key) + "[" + std::to_string(i) + "]", *errors_);
        if (!r.j_) continue;
        if (!r.find("k")) r.error("missing key 'k'");
        r.wavevector("k", m.k);
        r.number("amplitude", m.amplitude);
      }
      out.push_back(m);
    }
  }

  bool present() const { return j_ != nullptr; }

  void error(const std::string& msg) { errors_->push_back((path_.empty() ? "config" : path_) + ": " + msg); }

 private:
  const json* find(const std::string& key) {
    if (!j_) return nullptr;
    auto it = j_->find(key);
    if (it == j_->end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool read_number(const json& v, const std::string& at, double& out) {
    if (!v.is_number()) {
      errors_->push_back(at + ": expected a number");
      return false;
    }
    double x = v.get<double>();
    if (!std::isfinite(x)) {
      errors_->push_back(at + ": must be finite");
      return false;
    }
    out = x;
    return true;
  }

  bool read_numbers(const json& v, const std::string& at, std::vector<double>& out) {
    if (!v.is_array()) {
      errors_->push_back(at + ": expected an array of numbers");
      return false;
    }
    std::vector<double> tmp;
    bool ok = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      double x = 0.0;
      if (read_number(v[i], at + "[" + std::to_string(i) + "]", x)) {
        tmp.push_back(x);
      } else {
        ok = false;
      }
    }
    if (ok) out = std::move(tmp);
    return ok;
  }

  void read_wavevector(const json& v, const std::string& at, Wavevector& out) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
      errors_->push_back(at + ": expected [k1, k2] integers");
      return;
    }
    out = {v[0].get<int>(), v[1].get<int>()};
  }

  const json* j_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> used_;
};

json to_json(Wavevector k) { return json::array({k.k1, k.k2}); }

json to_json(const std::vector<ModeAmplitude>& modes) {
  json a = json::array();
  for (const auto& m : modes) a.push_back({{"k", to_json(m.k)}, {"amplitude", m.amplitude}});
  return a;
}

json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json to_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["run_id"] = c.run_id;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir;
  j["stride"] = c.stride;
  j["snapshots"] = c.snapshots;
  j["record_wallclock"] = c.record_wallclock;
  const auto& d = c.dynamics;
  j["dynamics"] = {{"alpha", d.alpha},         {"kappa", d.kappa},     {"drift_scale", d.drift_scale},
                   {"resolution", d.resolution}, {"dt", d.dt},          {"horizon", d.horizon},
                   {"scheme", to_string(d.scheme)}};
  const auto& in = c.initial;
  j["initial"] = {{"kind", in.kind},   {"modes", to_json(in.modes)}, {"seed", in.seed},
                  {"decay", in.decay}, {"scale", in.scale},          {"path", in.path}};
  json dirs = json::array();
  for (const auto& dir : c.noise.directions) {
    dirs.push_back({{"constant", dir.constant}, {"modes", to_json(dir.modes)}});
  }
  const auto& nl = c.noise.nonlinearity;
  j["noise"] = {{"nonlinearity",
                 {{"kind", nl.kind},
                  {"value", nl.value},
                  {"nodes", nl.nodes},
                  {"values", nl.values},
                  {"derivative_bound", nl.derivative_bound}}},
                {"directions", dirs},
                {"declared_bound", optional_json(c.noise.declared_bound)},
                {"smoothness", c.noise.smoothness}};
  j["analysis"] = {{"p", c.analysis.p}, {"delta", c.analysis.delta}};
  j["control"] = {{"cells", c.control.cells}, {"values", c.control.values}};
  j["simulate"] = {{"process", c.simulate.process}, {"epsilon", c.simulate.epsilon}};
  j["delayed"] = {{"deltas", c.delayed.deltas}, {"controlled", c.delayed.controlled}};
  const auto& a = c.action;
  j["action"] = {{"flavor", to_string(a.flavor)},
                 {"observable", to_string(a.observable)},
                 {"mode", to_json(a.mode)},
                 {"target", to_string(a.target)},
                 {"eta", a.eta},
                 {"radius", a.radius},
                 {"control_cells", a.control_cells},
                 {"penalties", a.penalties},
                 {"max_iterations", a.max_iterations},
                 {"gradient_tolerance", a.gradient_tolerance},
                 {"reference_rate", optional_json(a.reference_rate)}};
  const auto& m = c.mc;
  j["mc"] = {{"flavor", to_string(m.flavor)},
             {"observable", to_string(m.observable)},
             {"mode", to_json(m.mode)},
             {"sup_over_stamps", m.sup_over_stamps},
             {"eta", m.eta},
             {"direction", to_string(m.direction)},
             {"epsilons", m.epsilons},
             {"samples", m.samples},
             {"method", to_string(m.method)},
             {"reference_rate", optional_json(m.reference_rate)}};
  j["equiv"] = {{"epsilons", c.equiv.epsilons}, {"eta", c.equiv.eta}, {"samples", c.equiv.samples}};
  j["lptail"] = {{"epsilons", c.lptail.epsilons},
                 {"multipliers", c.lptail.multipliers},
                 {"samples", c.lptail.samples},
                 {"flavor", to_string(c.lptail.flavor)}};
  return j;
}

void read_config(const json& root, RunConfig& c, std::vector<std::string>& errors) {
  Reader r(&root, "", errors);
  r.string("command", c.command);
  r.string("run_id", c.run_id);
  r.unsigned_int("seed", c.seed);
  r.unsigned_int("workers", c.workers);
  r.string("output_dir", c.output_dir);
  r.unsigned_int("stride", c.stride);
  r.boolean("snapshots", c.snapshots);
  r.boolean("record_wallclock", c.record_wallclock);
  {
    auto d = r.child("dynamics");
    d.number("alpha", c.dynamics.alpha);
    d.number("kappa", c.dynamics.kappa);
    d.number("drift_scale", c.dynamics.drift_scale);
    d.integer("resolution", c.dynamics.resolution);
    d.number("dt", c.dynamics.dt);
    d.number("horizon", c.dynamics.horizon);
    d.choice("scheme", c.dynamics.scheme, &parse_time_scheme);
  }
  {
    auto in = r.child("initial");
    in.string("kind", c.initial.kind);
    in.modes("modes", c.initial.modes);
    in.unsigned_int("seed", c.initial.seed);
    in.number("decay", c.initial.decay);
    in.number("scale", c.initial.scale);
    in.string("path", c.initial.path);
  }
  {
    auto n = r.child("noise");
    {
      auto g = n.child("nonlinearity");
      g.string("kind", c.noise.nonlinearity.kind);
      g.number("value", c.noise.nonlinearity.value);
      g.numbers("nodes", c.noise.nonlinearity.nodes);
      g.numbers("values", c.noise.nonlinearity.values);
      g.number("derivative_bound", c.noise.nonlinearity.derivative_bound);
    }
    if (const json* dirs = n.raw("directions")) {
      if (!dirs->is_array()) {
        errors.push_back("noise.directions: expected an array");
      } else {
        c.noise.directions.clear();
        for (std::size_t i = 0; i < dirs->size(); ++i) {
          DirectionSpec ds;
          {
            Reader dr(&(*dirs)[i], "noise.directions[" + std::to_string(i) + "]", errors);
            dr.number("constant", ds.constant);
            dr.modes("modes", ds.modes);
          }
          c.noise.directions.push_back(std::move(ds));
        }
      }
    }
    n.optional_number("declared_bound", c.noise.declared_bound);
    n.number("smoothness", c.noise.smoothness);
  }
  {
    auto a = r.child("analysis");
    a.number("p", c.analysis.p);
    a.number("delta", c.analysis.delta);
  }
  {
    auto ct = r.child("control");
    ct.unsigned_int("cells", c.control.cells);
    ct.matrix("values", c.control.values);
  }
  {
    auto s = r.child("simulate");
    s.string("process", c.simulate.process);
    s.number("epsilon", c.simulate.epsilon);
  }
  {
    auto d = r.child("delayed");
    d.numbers("deltas", c.delayed.deltas);
    d.boolean("controlled", c.delayed.controlled);
  }
  {
    auto a = r.child("action");
    a.choice("flavor", c.action.flavor, &parse_skeleton_flavor);
    a.choice("observable", c.action.observable, &parse_observable);
    a.wavevector("mode", c.action.mode);
    a.choice("target", c.action.target, &parse_target);
    a.number("eta", c.action.eta);
    a.number("radius", c.action.radius);
    a.unsigned_int("control_cells", c.action.control_cells);
    a.numbers("penalties", c.action.penalties);
    a.integer("max_iterations", c.action.max_iterations);
    a.number("gradient_tolerance", c.action.gradient_tolerance);
    a.optional_number("reference_rate", c.action.reference_rate);
  }
  {
    auto m = r.child("mc");
    m.choice("flavor", c.mc.flavor, &parse_flavor);
    m.choice("observable", c.mc.observable, &parse_observable);
    m.wavevector("mode", c.mc.mode);
    m.boolean("sup_over_stamps", c.mc.sup_over_stamps);
    m.number("eta", c.mc.eta);
    m.choice("direction", c.mc.direction, &parse_direction);
    m.numbers("epsilons", c.mc.epsilons);
    m.unsigned_int("samples", c.mc.samples);
    m.choice("method", c.mc.method, &parse_estimator);
    m.optional_number("reference_rate", c.mc.reference_rate);
  }
  {
    auto e = r.child("equiv");
    e.numbers("epsilons", c.equiv.epsilons);
    e.number("eta", c.equiv.eta);
    e.unsigned_int("samples", c.equiv.samples);
  }
  {
    auto l = r.child("lptail");
    l.numbers("epsilons", c.lptail.epsilons);
    l.numbers("multipliers", c.lptail.multipliers);
    l.unsigned_int("samples", c.lptail.samples);
    l.choice("flavor", c.lptail.flavor, &parse_flavor);
  }
}

void check_eps_grid(const std::vector<double>& eps, const std::string& at,
                    std::vector<std::string>& errors) {
  if (eps.empty()) errors.push_back(at + ": must not be empty");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) errors.push_back(at + ": values must be > 0");
    if (i > 0 && !(eps[i] < eps[i - 1])) errors.push_back(at + ": must be strictly decreasing");
  }
}

void check_modes(const std::vector<ModeAmplitude>& modes, int n, const std::string& at,
                 std::vector<std::string>& errors) {
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto k = modes[i].k;
    const long k2 = static_cast<long>(k.k1) * k.k1 + static_cast<long>(k.k2) * k.k2;
    if (k2 == 0 || k2 > static_cast<long>(n) * n) {
      errors.push_back(at + "[" + std::to_string(i) + "]: mode (" + std::to_string(k.k1) + "," +
                       std::to_string(k.k2) + ") is outside the grid 0 < |k|^2 <= N^2");
    }
  }
}

void validate_config(const RunConfig& c, std::vector<std::string>& errors,
                     std::vector<std::string>& warnings) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), c.command) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    errors.push_back("command: unknown command '" + c.command + "' (expected one of " + list + ")");
  }
  if (c.run_id.empty() || c.run_id.find_first_of(",\"\n\r") != std::string::npos) {
    errors.push_back("run_id: must be non-empty without commas, quotes or newlines");
  }
  if (c.workers < 1) errors.push_back("workers: must be >= 1");
  if (c.stride < 1) errors.push_back("stride: must be >= 1");
  if (c.output_dir.empty()) errors.push_back("output_dir: must not be empty");

  bool dyn_ok = true;
  try {
    c.dynamics.validate();
  } catch (const ConfigError& e) {
    errors.push_back(std::string("dynamics: ") + e.what());
    dyn_ok = false;
  }
  const double alpha = c.dynamics.alpha;
  if (c.dynamics.outside_subcritical()) {
    std::ostringstream w;
    w << "dynamics.alpha = " << alpha << " <= 1/2: outside subcritical theory, results carry no guarantee";
    warnings.push_back(w.str());
  }
  if (!integrability_holds(alpha, c.analysis.p)) {
    std::ostringstream msg;
    msg << "analysis.p = " << c.analysis.p
        << " violates the integrability condition 0 < 1/p < alpha - 1/2 (alpha = " << alpha << ")";
    if (c.dynamics.outside_subcritical()) {
      warnings.push_back(msg.str());
    } else {
      errors.push_back(msg.str());
    }
  }
  const int n = c.dynamics.resolution;

  const auto& in = c.initial;
  if (in.kind == "modes") {
    check_modes(in.modes, n, "initial.modes", errors);
  } else if (in.kind == "file") {
    if (in.path.empty()) errors.push_back("initial.path: required for kind 'file'");
  } else if (in.kind != "random" && in.kind != "zero") {
    errors.push_back("initial.kind: unknown kind '" + in.kind + "' (modes, random, zero, file)");
  }

  const auto& nl = c.noise.nonlinearity;
  if (nl.kind != "constant" && nl.kind != "identity" && nl.kind != "table") {
    errors.push_back("noise.nonlinearity.kind: unknown kind '" + nl.kind + "' (constant, identity, table)");
  }
  if (c.noise.directions.empty()) errors.push_back("noise.directions: need at least one direction");
  for (std::size_t i = 0; i < c.noise.directions.size(); ++i) {
    check_modes(c.noise.directions[i].modes, n, "noise.directions[" + std::to_string(i) + "].modes", errors);
  }
  const std::size_t m = c.noise.directions.size();
  std::optional<NoiseModel> G;
  if (dyn_ok && errors.empty()) {
    try {
      G.emplace(build_noise(c, make_grid(n)));
    } catch (const ConfigError& e) {
      errors.push_back(std::string("noise: ") + e.what());
    }
  }

  if (c.control.cells > 0 && c.control.values.size() > 1 && c.control.values.size() != c.control.cells) {
    errors.push_back("control.values: expected 1 or control.cells rows");
  }
  for (std::size_t i = 0; i < c.control.values.size(); ++i) {
    if (c.control.values[i].size() != m) {
      errors.push_back("control.values[" + std::to_string(i) + "]: expected " + std::to_string(m) +
                       " entries (one per noise direction)");
    }
  }

  const auto& sim = c.simulate;
  if (sim.process != "deterministic" && sim.process != "small-noise" && sim.process != "small-time" &&
      sim.process != "diffusion-only") {
    errors.push_back("simulate.process: unknown process '" + sim.process + "'");
  }
  if (!(sim.epsilon >= 0.0)) errors.push_back("simulate.epsilon: must be >= 0");

  if (c.delayed.deltas.empty()) errors.push_back("delayed.deltas: must not be empty");
  // Divisibility depends on the horizon, which other commands are free to change.
  for (double d : c.command == "delayed" ? c.delayed.deltas : std::vector<double>{}) {
    if (!(d > 0.0)) {
      errors.push_back("delayed.deltas: values must be > 0");
      continue;
    }
    const double q = c.dynamics.horizon / d;
    if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, q)) {
      errors.push_back("delayed.deltas: " + format_number(d) + " does not divide the horizon");
    }
    if (c.dynamics.dt > d * (1.0 + 1e-12)) {
      errors.push_back("delayed.deltas: " + format_number(d) + " is smaller than dt");
    }
  }

  const auto& a = c.action;
  if (a.penalties.empty()) errors.push_back("action.penalties: must not be empty");
  for (std::size_t i = 0; i < a.penalties.size(); ++i) {
    if (!(a.penalties[i] > 0.0)) errors.push_back("action.penalties: values must be > 0");
    if (i > 0 && !(a.penalties[i] > a.penalties[i - 1])) {
      errors.push_back("action.penalties: must be strictly increasing");
    }
  }
  if (a.max_iterations < 1) errors.push_back("action.max_iterations: must be >= 1");
  if (!(a.gradient_tolerance > 0.0)) errors.push_back("action.gradient_tolerance: must be > 0");
  if (a.target == TargetKind::Ball && !(a.radius >= 0.0)) errors.push_back("action.radius: must be >= 0");
  if (a.observable == ObservableKind::Coefficient) check_modes({{a.mode, 0.0}}, n, "action.mode", errors);

  const auto& mc = c.mc;
  check_eps_grid(mc.epsilons, "mc.epsilons", errors);
  if (mc.samples < 1) errors.push_back("mc.samples: must be >= 1");
  if (mc.observable == ObservableKind::Coefficient) check_modes({{mc.mode, 0.0}}, n, "mc.mode", errors);

  check_eps_grid(c.equiv.epsilons, "equiv.epsilons", errors);
  if (c.equiv.samples < 1) errors.push_back("equiv.samples: must be >= 1");

  check_eps_grid(c.lptail.epsilons, "lptail.epsilons", errors);
  if (c.lptail.samples < 1) errors.push_back("lptail.samples: must be >= 1");
  if (c.lptail.multipliers.empty()) errors.push_back("lptail.multipliers: must not be empty");
  for (std::size_t i = 0; i < c.lptail.multipliers.size(); ++i) {
    if (!(c.lptail.multipliers[i] > 0.0)) errors.push_back("lptail.multipliers: values must be > 0");
    if (i > 0 && !(c.lptail.multipliers[i] > c.lptail.multipliers[i - 1])) {
      errors.push_back("lptail.multipliers: must be strictly increasing");
    }
  }
}

}  // namespace

ParsedConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigErrors({std::string("malformed JSON: ") + e.what()});
  }
  ParsedConfig out;
  std::vector<std::string> errors;
  read_config(root, out.config, errors);
  if (errors.empty()) validate_config(out.config, errors, out.warnings);
  if (!errors.empty()) throw ConfigErrors(std::move(errors));
  return out;
}

ParsedConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigErrors({"cannot open config file " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string echo_config(const RunConfig& cfg) { return to_json(cfg).dump(2); }

std::string config_hash(const RunConfig& cfg) {
  const std::string text = echo_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- builders ---------------------------------------------------------------------

namespace {

SpectralField field_from_modes(const GridPtr& grid, const std::vector<ModeAmplitude>& modes) {
  SpectralField f(grid);
  for (const auto& m : modes) {
    auto idx = grid->index_of(m.k);
    if (!idx) throw ConfigError("mode outside the grid");
    f[*idx] += m.amplitude;
  }
  return f;
}

}  // namespace

SpectralField build_initial(const RunConfig& cfg, const GridPtr& grid) {
  const auto& in = cfg.initial;
  if (in.kind == "zero") return SpectralField(grid);
  if (in.kind == "modes") return field_from_modes(grid, in.modes);
  if (in.kind == "random") {
    GaussianStream rng(in.seed);
    SpectralField f(grid);
    const auto mags = grid->magnitudes();
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = in.scale * rng() * std::pow(mags[i], -in.decay);
    return f;
  }
  if (in.kind == "file") {
    auto snap = load_snapshot(in.path);
    if (snap.field.grid().resolution() != grid->resolution()) {
      throw ConfigError("initial snapshot resolution " + std::to_string(snap.field.grid().resolution()) +
                        " does not match dynamics.resolution " + std::to_string(grid->resolution()));
    }
    SpectralField f(grid);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = snap.field[i];
    return f;
  }
  throw ConfigError("unknown initial kind '" + in.kind + "'");
}

NoiseModel build_noise(const RunConfig& cfg, const GridPtr& grid) {
  const auto& nl = cfg.noise.nonlinearity;
  PointwiseMap g = PointwiseMap::identity();
  if (nl.kind == "constant") {
    g = PointwiseMap::constant(nl.value);
  } else if (nl.kind == "table") {
    g = PointwiseMap::table(nl.nodes, nl.values, nl.derivative_bound);
  } else if (nl.kind != "identity") {
    throw ConfigError("unknown nonlinearity kind '" + nl.kind + "'");
  }
  std::vector<NoiseCoefficient> dirs;
  for (const auto& d : cfg.noise.directions) {
    NoiseCoefficient b{d.constant, std::nullopt};
    if (!d.modes.empty()) b.field = field_from_modes(grid, d.modes);
    dirs.push_back(std::move(b));
  }
  return NoiseModel(grid, std::move(dirs), g, cfg.noise.declared_bound, cfg.noise.smoothness);
}

Control build_control(const RunConfig& cfg, std::size_t dimension) {
  const std::size_t cells = cfg.control.cells ? cfg.control.cells : cfg.dynamics.steps();
  const auto& rows = cfg.control.values;
  if (rows.empty()) return Control::zeros(dimension, cfg.dynamics.horizon, cells);
  if (rows.size() == 1) return Control::constant(dimension, cfg.dynamics.horizon, cells, rows[0]);
  if (rows.size() != cells) throw ConfigError("control.values: expected 1 or control.cells rows");
  Control v = Control::zeros(dimension, cfg.dynamics.horizon, cells);
  for (std::size_t c = 0; c < cells; ++c) {
    if (rows[c].size() != dimension) throw ConfigError("control.values: row length mismatch");
    std::copy(rows[c].begin(), rows[c].end(), v.cell(c).begin());
  }
  return v;
}

// --- snapshots ---------------------------------------------------------------------

namespace {

constexpr std::size_t kHeaderBytes = 36;

void put_u32(std::vector<unsigned char>& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(x >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(x >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

std::uint32_t get_u32(const std::vector<unsigned char>& b, std::size_t at) {
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return x;
}

std::uint64_t get_u64(const std::vector<unsigned char>& b, std::size_t at) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return x;
}

double get_f64(const std::vector<unsigned char>& b, std::size_t at) {
  return std::bit_cast<double>(get_u64(b, at));
}

[[noreturn]] void bad_snapshot(const std::string& msg) { throw std::runtime_error("SQGF snapshot: " + msg); }

}  // namespace

std::vector<unsigned char> encode_snapshot(const SpectralField& f, double alpha, double kappa) {
  std::vector<unsigned char> out;
  out.reserve(kHeaderBytes + 8 * f.size());
  for (char c : {'S', 'Q', 'G', 'F'}) out.push_back(static_cast<unsigned char>(c));
  put_u32(out, kSnapshotVersion);
  put_u32(out, static_cast<std::uint32_t>(f.grid().resolution()));
  put_f64(out, alpha);
  put_f64(out, kappa);
  put_u64(out, f.size());
  for (double c : f.coeffs()) put_f64(out, c);
  return out;
}

Snapshot decode_snapshot(const std::vector<unsigned char>& b) {
  if (b.size() < 4 || std::memcmp(b.data(), "SQGF", 4) != 0) bad_snapshot("bad magic at byte 0 (expected \"SQGF\")");
  if (b.size() < kHeaderBytes) {
    bad_snapshot("truncated header: " + std::to_string(b.size()) + " bytes, need " +
                 std::to_string(kHeaderBytes));
  }
  const std::uint32_t version = get_u32(b, 4);
  if (version != kSnapshotVersion) {
    bad_snapshot("unsupported version " + std::to_string(version) + " in version field at byte 4 (expected " +
                 std::to_string(kSnapshotVersion) + ")");
  }
  const std::uint32_t n = get_u32(b, 8);
  if (n < 1 || n > static_cast<std::uint32_t>(WaveGrid::kMaxResolution)) {
    bad_snapshot("resolution " + std::to_string(n) + " at byte 8 out of range");
  }
  const double alpha = get_f64(b, 12);
  const double kappa = get_f64(b, 20);
  const std::uint64_t count = get_u64(b, 28);
  auto grid = make_grid(static_cast<int>(n));
  if (count != grid->size()) {
    bad_snapshot("coefficient count " + std::to_string(count) + " at byte 28 does not match N = " +
                 std::to_string(n) + " (expected " + std::to_string(grid->size()) + ")");
  }
  const std::size_t need = kHeaderBytes + 8 * count;
  if (b.size() < need) {
    bad_snapshot("truncated coefficient data: file ends at byte " + std::to_string(b.size()) +
                 ", coefficients need up to byte " + std::to_string(need));
  }
  if (b.size() > need) {
    bad_snapshot(std::to_string(b.size() - need) + " trailing bytes after byte " + std::to_string(need));
  }
  Snapshot s{SpectralField(grid), alpha, kappa};
  for (std::size_t i = 0; i < count; ++i) s.field[i] = get_f64(b, kHeaderBytes + 8 * i);
  return s;
}

void save_snapshot(const SpectralField& f, const fs::path& path, double alpha, double kappa) {
  const auto bytes = encode_snapshot(f, alpha, kappa);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write snapshot " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for snapshot " + path.string());
}

Snapshot load_snapshot(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

// --- results table ---------------------------------------------------------------------

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_row(const TableRow& r) {
  std::ostringstream os;
  os << r.run_id << ',' << r.flavor << ',' << format_number(r.epsilon) << ',' << format_number(r.m_or_eta)
     << ',' << r.method << ',' << r.n_samples << ',' << format_number(r.p_hat) << ','
     << format_number(r.ci_lo) << ',' << format_number(r.ci_hi) << ','
     << (r.eps_log_p ? format_number(*r.eps_log_p) : std::string("-inf")) << ',' << r.seed << ','
     << format_number(r.wallclock_s);
  return os.str();
}

void write_table(const std::vector<TableRow>& rows, const fs::path& path) {
  bool need_header = true;
  if (fs::exists(path) && fs::file_size(path) > 0) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != kTableHeader) {
      throw std::runtime_error("results table " + path.string() + ": header mismatch (schema drift): found '" +
                               first + "', expected '" + kTableHeader + "'");
    }
    need_header = false;
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot open results table " + path.string());
  if (need_header) out << kTableHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
  if (!out) throw std::runtime_error("write failed for results table " + path.string());
}

std::vector<TableRow> read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results table " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kTableHeader) throw std::runtime_error("results table " + path.string() + ": header mismatch");
  std::vector<TableRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 12) {
      throw std::runtime_error("results table line " + std::to_string(lineno) + ": expected 12 fields, found " +
                               std::to_string(f.size()));
    }
    auto num = [&](const std::string& s) {
      char* end = nullptr;
      double x = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0') {
        throw std::runtime_error("results table line " + std::to_string(lineno) + ": bad number '" + s + "'");
      }
      return x;
    };
    TableRow r;
    r.run_id = f[0];
    r.flavor = f[1];
    r.epsilon = num(f[2]);
    r.m_or_eta = num(f[3]);
    r.method = f[4];
    r.n_samples = std::stoull(f[5]);
    r.p_hat = num(f[6]);
    r.ci_lo = num(f[7]);
    r.ci_hi = num(f[8]);
    if (f[9] != "-inf") r.eps_log_p = num(f[9]);
    r.seed = std::stoull(f[10]);
    r.wallclock_s = num(f[11]);
    rows.push_back(std::move(r));
  }
  return rows;
}

TableRow make_row(const std::string& run_id, const std::string& flavor, double epsilon, double m_or_eta,
                  const ProbabilityEstimate& est, std::uint64_t seed, double wallclock_s) {
  TableRow r;
  r.run_id = run_id;
  r.flavor = flavor;
  r.epsilon = epsilon;
  r.m_or_eta = m_or_eta;
  r.method = to_string(est.method);
  r.n_samples = est.samples;
  r.p_hat = est.p_hat;
  r.ci_lo = est.ci_lo;
  r.ci_hi = est.ci_hi;
  r.eps_log_p = est.eps_log_p;
  r.seed = seed;
  r.wallclock_s = wallclock_s;
  return r;
}

// --- experiments ---------------------------------------------------------------------

namespace {

const std::vector<std::string> kArtifacts{"manifest.json",   "error.json",  "results.csv",  "trajectory.csv",
                                          "final.sqgf",      "control.csv", "convergence.csv",
                                          "diagnostics.csv"};

struct Context {
  const RunConfig& cfg;
  fs::path out;
  GridPtr grid;
  SpectralField theta0;
  NoiseModel G;
  std::vector<std::string> outputs;
  json summary = json::object();
};

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!on_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point start_;
};

RecordOptions record_options(const RunConfig& cfg) {
  RecordOptions r;
  r.stride = cfg.stride;
  r.keep_snapshots = cfg.snapshots;
  r.delta = cfg.analysis.delta;
  r.p = cfg.analysis.p;
  r.track_lp = true;
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_trajectory(Context& cx, const Trajectory& tr) {
  std::ostringstream os;
  os << "time,l2,h_alpha,h_delta,h_delta_alpha,h_minus_half,lp\n";
  for (std::size_t i = 0; i < tr.stamps(); ++i) {
    const auto& n = tr.norms[i];
    os << format_number(tr.times[i]) << ',' << format_number(n.l2) << ',' << format_number(n.h_alpha) << ','
       << format_number(n.h_delta) << ',' << format_number(n.h_delta_alpha) << ','
       << format_number(n.h_minus_half) << ',' << format_number(n.lp) << '\n';
  }
  write_text(cx.out / "trajectory.csv", os.str());
  cx.outputs.push_back("trajectory.csv");
  save_snapshot(tr.final_state, cx.out / "final.sqgf", cx.cfg.dynamics.alpha, cx.cfg.dynamics.kappa);
  cx.outputs.push_back("final.sqgf");
  if (!tr.snapshots.empty()) {
    fs::create_directories(cx.out / "snapshots");
    for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
      char name[40];
      const auto step = static_cast<unsigned long long>(std::llround(tr.times[i] / cx.cfg.dynamics.dt));
      std::snprintf(name, sizeof name, "step_%08llu.sqgf", step);
      save_snapshot(tr.snapshots[i], cx.out / "snapshots" / name, cx.cfg.dynamics.alpha, cx.cfg.dynamics.kappa);
      cx.outputs.push_back(std::string("snapshots/") + name);
    }
  }
  const auto& last = tr.norms.back();
  cx.summary["final_l2"] = last.l2;
  cx.summary["final_h_alpha"] = last.h_alpha;
  cx.summary["stamps"] = tr.stamps();
  if (!cx.cfg.dynamics.outside_subcritical() && integrability_holds(cx.cfg.dynamics.alpha, cx.cfg.analysis.p)) {
    auto rep = monitor_apriori(tr, cx.cfg.analysis.delta, cx.cfg.analysis.p);
    cx.summary["apriori"] = {{"sup_energy", rep.sup_energy},
                             {"dissipation_integral", rep.dissipation_integral},
                             {"transport_functional", rep.transport_functional},
                             {"n0", rep.n0},
                             {"finite", rep.finite}};
  }
}

void cmd_simulate(Context& cx) {
  const auto& cfg = cx.cfg;
  const auto rec = record_options(cfg);
  const auto& proc = cfg.simulate.process;
  if (proc == "deterministic") {
    write_trajectory(cx, solve_deterministic(cx.theta0, cfg.dynamics, rec));
    return;
  }
  auto path = NoisePath::generate(cfg.seed, cx.G.dimension(), cfg.dynamics.dt, cfg.dynamics.steps());
  const double eps = cfg.simulate.epsilon;
  Trajectory tr;
  if (proc == "small-noise") {
    tr = simulate_small_noise(cx.theta0, eps, cx.G, cfg.dynamics, path, rec);
  } else if (proc == "small-time") {
    tr = simulate_small_time(cx.theta0, eps, cx.G, cfg.dynamics, path, rec);
  } else {
    tr = simulate_diffusion_only(cx.theta0, eps, cx.G, cfg.dynamics, path, rec);
  }
  write_trajectory(cx, tr);
}

void cmd_skeleton(Context& cx) {
  const auto v = build_control(cx.cfg, cx.G.dimension());
  cx.summary["action"] = action(v);
  write_trajectory(cx, solve_skeleton(cx.theta0, v, cx.G, cx.cfg.dynamics, record_options(cx.cfg)));
}

double sup_distance(const Trajectory& a, const Trajectory& b) {
  double d = 0.0;
  const std::size_t n = std::min(a.snapshots.size(), b.snapshots.size());
  for (std::size_t i = 0; i < n; ++i) d = std::max(d, l2_norm(a.snapshots[i] - b.snapshots[i]));
  return d;
}

void cmd_delayed(Context& cx) {
  const auto& cfg = cx.cfg;
  RecordOptions rec;
  rec.stride = 1;
  rec.keep_snapshots = true;
  rec.track_lp = false;
  std::optional<Control> v;
  if (cfg.delayed.controlled) v = build_control(cfg, cx.G.dimension());
  const Trajectory ref = v ? solve_skeleton(cx.theta0, *v, cx.G, cfg.dynamics, rec)
                           : solve_deterministic(cx.theta0, cfg.dynamics, rec);
  std::ostringstream os;
  os << "delta,sup_l2_distance,final_l2_distance\n";
  json rows = json::array();
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (double delta : cfg.delayed.deltas) {
    const Trajectory tr = solve_delayed_mollified(cx.theta0, delta, v ? &*v : nullptr, v ? &cx.G : nullptr,
                                                  cfg.dynamics, rec);
    const double sup = sup_distance(tr, ref);
    const double fin = l2_norm(tr.final_state - ref.final_state);
    os << format_number(delta) << ',' << format_number(sup) << ',' << format_number(fin) << '\n';
    rows.push_back({{"delta", delta}, {"sup_l2_distance", sup}, {"final_l2_distance", fin}});
    if (!(sup < prev)) monotone = false;
    prev = sup;
  }
  write_text(cx.out / "convergence.csv", os.str());
  cx.outputs.push_back("convergence.csv");
  cx.summary["convergence"] = rows;
  cx.summary["monotone_decreasing"] = monotone;
}

ActionProblem make_problem(const Context& cx, ObservableKind obs, Wavevector mode, Target target,
                           SkeletonFlavor flavor) {
  const auto& a = cx.cfg.action;
  ActionProblem p(cx.theta0, cx.G, cx.cfg.dynamics);
  p.flavor = flavor;
  p.observable = {obs, mode};
  p.target = target;
  p.control_cells = a.control_cells;
  p.penalties = a.penalties;
  p.settings.max_iterations = a.max_iterations;
  p.settings.gradient_tolerance = a.gradient_tolerance;
  return p;
}

json rate_summary(const RateEstimate& r, std::optional<double> reference) {
  json j = {{"rate", r.value},           {"observable", r.observable}, {"residual", r.residual},
            {"converged", r.converged},  {"restored", r.restored},     {"iterations", r.trace.size()},
            {"message", r.message},      {"reference_rate", optional_json(reference)}};
  if (reference && *reference != 0.0) j["relative_error"] = std::abs(r.value - *reference) / std::abs(*reference);
  return j;
}

void write_control(Context& cx, const Control& v) {
  std::ostringstream os;
  os << "cell_start,cell_end";
  for (std::size_t j = 0; j < v.dimension(); ++j) os << ",v" << j + 1;
  os << '\n';
  for (std::size_t c = 0; c < v.cells(); ++c) {
    os << format_number(v.grid()[c]) << ',' << format_number(v.grid()[c + 1]);
    for (double x : v.cell(c)) os << ',' << format_number(x);
    os << '\n';
  }
  write_text(cx.out / "control.csv", os.str());
  cx.outputs.push_back("control.csv");
}

int cmd_action(Context& cx) {
  const auto& a = cx.cfg.action;
  auto p = make_problem(cx, a.observable, a.mode, {a.target, a.eta, a.radius}, a.flavor);
  auto r = minimize_action(p);
  cx.summary["action"] = rate_summary(r, a.reference_rate);
  write_control(cx, r.control);
  return kExitOk;
}

void cmd_mc(Context& cx) {
  const auto& cfg = cx.cfg;
  const auto& mc = cfg.mc;
  RareEventSpec spec;
  spec.flavor = mc.flavor;
  spec.observable = {mc.observable, mc.mode};
  spec.sup_over_stamps = mc.sup_over_stamps;
  spec.stride = cfg.stride;
  spec.eta = mc.eta;
  spec.direction = mc.direction;
  std::optional<double> i_ref = mc.reference_rate;
  std::optional<Control> tilt;
  if (mc.method == Estimator::Tilted) {
    Target t{mc.direction == Direction::AtLeast ? TargetKind::AtLeast : TargetKind::AtMost, mc.eta, 0.0};
    auto flavor = mc.flavor == Flavor::SmallNoise ? SkeletonFlavor::SmallNoise : SkeletonFlavor::SmallTimeDriftFree;
    auto r = minimize_action(make_problem(cx, mc.observable, mc.mode, t, flavor));
    cx.summary["tilt"] = rate_summary(r, mc.reference_rate);
    if (!i_ref) i_ref = r.value;
    tilt = std::move(r.control);
    write_control(cx, *tilt);
  }
  std::vector<TableRow> rows;
  ScalingStudy study;
  study.method = mc.method;
  {
    std::vector<std::string> errs;
    check_eps_grid(mc.epsilons, "mc.epsilons", errs);
    if (!errs.empty()) throw ConfigErrors(errs);
  }
  for (double eps : mc.epsilons) {
    Stopwatch sw(cfg.record_wallclock);
    auto est = estimate_probability(spec, cx.theta0, cx.G, cfg.dynamics, eps, mc.samples, cfg.seed, mc.method,
                                    tilt ? &*tilt : nullptr, cfg.workers);
    rows.push_back(make_row(cfg.run_id, to_string(mc.flavor), eps, mc.eta, est, cfg.seed, sw.seconds()));
    study.points.push_back({eps, est});
  }
  write_table(rows, cx.out / "results.csv");
  cx.outputs.push_back("results.csv");
  auto fit = scaling_fit(study, i_ref);
  cx.summary["scaling_fit"] = {{"informative", fit.informative},
                               {"slope", fit.slope},
                               {"limit", fit.limit},
                               {"reference_rate", optional_json(i_ref)},
                               {"relative_gap", optional_json(fit.relative_gap)},
                               {"note", fit.note}};
}

void cmd_equiv(Context& cx) {
  const auto& cfg = cx.cfg;
  Stopwatch sw(cfg.record_wallclock);
  auto rep = exponential_equivalence(cx.theta0, cfg.equiv.epsilons, cfg.equiv.eta, cfg.equiv.samples, cfg.seed,
                                     cfg.dynamics, cx.G, cfg.stride, cfg.workers);
  const double per = sw.seconds() / static_cast<double>(rep.points.size());
  std::vector<TableRow> rows;
  json gaps = json::array();
  for (const auto& pt : rep.points) {
    rows.push_back(make_row(cfg.run_id, "equivalence", pt.epsilon, rep.eta, pt.estimate, cfg.seed, per));
    gaps.push_back({{"epsilon", pt.epsilon}, {"mean_sup_gap", pt.mean_sup_gap}});
  }
  write_table(rows, cx.out / "results.csv");
  cx.outputs.push_back("results.csv");
  cx.summary["strictly_decreasing"] = rep.strictly_decreasing;
  cx.summary["separated_by_ci"] = rep.separated_by_ci;
  cx.summary["mean_sup_gap"] = gaps;
  cx.summary["note"] = rep.note;
}

void cmd_lptail(Context& cx) {
  const auto& cfg = cx.cfg;
  const double p = cfg.analysis.p;
  const double base = std::pow(lp_norm(to_physical(cx.theta0), p), p);
  std::vector<double> thresholds;
  for (double m : cfg.lptail.multipliers) thresholds.push_back(m * base);
  Stopwatch sw(cfg.record_wallclock);
  auto tab = lp_tail_study(cx.theta0, cfg.lptail.epsilons, thresholds, p, cfg.lptail.samples, cfg.seed,
                           cfg.dynamics, cx.G, cfg.lptail.flavor, cfg.stride, cfg.workers);
  const double per = sw.seconds() / static_cast<double>(cfg.lptail.epsilons.size());
  std::vector<TableRow> rows;
  for (const auto& cell : tab.cells) {
    rows.push_back(make_row(cfg.run_id, to_string(cfg.lptail.flavor), cell.epsilon, cell.M, cell.estimate,
                            cfg.seed, per));
  }
  write_table(rows, cx.out / "results.csv");
  cx.outputs.push_back("results.csv");
  cx.summary["initial_lp_power"] = tab.initial_lp_power;
  cx.summary["non_increasing"] = tab.non_increasing;
  cx.summary["n0"] = transport_exponent(cfg.dynamics.alpha, p);
}

json hypotheses_json(const ValidationReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"name", c.name},
                      {"passed", c.passed ? json(*c.passed) : json(nullptr)},
                      {"value", c.value},
                      {"detail", c.detail}});
  }
  return {{"r", rep.r}, {"all_passed", rep.all_passed()}, {"checks", checks}};
}

void write_manifest(const RunConfig& cfg, const fs::path& out, const std::string& status, int exit_code,
                    const std::vector<std::string>& outputs, const std::vector<std::string>& warnings,
                    const json& summary, const json& hypotheses) {
  json m;
  m["run_id"] = cfg.run_id;
  m["command"] = cfg.command;
  m["config_hash"] = config_hash(cfg);
  m["seed"] = cfg.seed;
  m["workers"] = cfg.workers;
  m["status"] = status;
  m["exit_code"] = exit_code;
  std::vector<std::string> files = outputs;
  m["outputs"] = files;
  m["warnings"] = warnings;
  m["summary"] = summary;
  m["hypotheses"] = hypotheses;
  m["config"] = to_json(cfg);
  write_text(out / "manifest.json", m.dump(2) + "\n");
}

void write_error(const fs::path& out, const std::string& kind, const std::string& message, const json& extra) {
  json e = {{"status", "error"}, {"kind", kind}, {"message", message}};
  if (!extra.is_null()) e["diagnostics"] = extra;
  write_text(out / "error.json", e.dump(2) + "\n");
}

}  // namespace

void write_config_error(const fs::path& dir, const ConfigError& e) {
  fs::create_directories(dir);
  json details = nullptr;
  if (auto* all = dynamic_cast<const ConfigErrors*>(&e)) details = all->errors();
  write_error(dir, "config", e.what(), details);
}

int run_experiment(const RunConfig& cfg, const std::vector<std::string>& warnings) {
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  for (const auto& name : kArtifacts) fs::remove(out / name);
  fs::remove_all(out / "snapshots");

  std::vector<std::string> outputs;
  json summary = json::object();
  json hypotheses = nullptr;
  auto fail = [&](int code, const std::string& kind, const std::string& msg, const json& extra) {
    write_error(out, kind, msg, extra);
    outputs.push_back("error.json");
    write_manifest(cfg, out, "error", code, outputs, warnings, summary, hypotheses);
    return code;
  };
  try {
    auto grid = make_grid(cfg.dynamics.resolution);
    Context cx{cfg, out, grid, build_initial(cfg, grid), build_noise(cfg, grid), {}, json::object()};
    const auto rep = validate_hypotheses(cx.G, cfg.dynamics.alpha, cfg.analysis.p, cfg.analysis.delta);
    hypotheses = hypotheses_json(rep);
    int code = kExitOk;
    try {
      if (cfg.command == "simulate") {
        cmd_simulate(cx);
      } else if (cfg.command == "skeleton") {
        cmd_skeleton(cx);
      } else if (cfg.command == "delayed") {
        cmd_delayed(cx);
      } else if (cfg.command == "action") {
        code = cmd_action(cx);
      } else if (cfg.command == "mc") {
        cmd_mc(cx);
      } else if (cfg.command == "equiv") {
        cmd_equiv(cx);
      } else if (cfg.command == "lptail") {
        cmd_lptail(cx);
      } else if (cfg.command == "validate") {
        code = rep.all_passed() ? kExitOk : kExitValidation;
      } else {
        throw ConfigError("unknown command '" + cfg.command + "'");
      }
    } catch (...) {
      outputs = cx.outputs;
      summary = cx.summary;
      throw;
    }
    outputs = cx.outputs;
    summary = cx.summary;
    write_manifest(cfg, out, code == kExitOk ? "ok" : "failed-validation", code, outputs, warnings, summary,
                   hypotheses);
    return code;
  } catch (const BlowUpError& e) {
    json d = {{"step", e.step()}, {"time", e.time()}, {"last_l2", e.last_l2()}, {"last_h_alpha", e.last_h_alpha()}};
    std::ostringstream os;
    os << "step,time,last_l2,last_h_alpha\n"
       << e.step() << ',' << format_number(e.time()) << ',' << format_number(e.last_l2()) << ','
       << format_number(e.last_h_alpha()) << '\n';
    write_text(out / "diagnostics.csv", os.str());
    outputs.push_back("diagnostics.csv");
    return fail(kExitRuntime, "blow-up", e.what(), d);
  } catch (const ConfigErrors& e) {
    return fail(kExitConfig, "config", e.what(), json(e.errors()));
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "config", e.what(), nullptr);
  } catch (const std::exception& e) {
    return fail(kExitRuntime, "runtime", e.what(), nullptr);
  }
}

}  // namespace sqg
