#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sqglab/io.hpp"

namespace py = pybind11;

namespace {

py::array_t<double> to_array(std::span<const double> v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

sqg::SpectralField field_from(const sqg::GridPtr& grid, py::array_t<double, py::array::c_style | py::array::forcecast> c) {
  if (c.ndim() != 1) throw std::invalid_argument("coefficients must be one-dimensional");
  return sqg::SpectralField(grid, std::vector<double>(c.data(), c.data() + c.size()));
}

py::dict trajectory_dict(const sqg::Trajectory& tr) {
  std::vector<double> l2, ha, hd, hm, lp;
  for (const auto& n : tr.norms) {
    l2.push_back(n.l2);
    ha.push_back(n.h_alpha);
    hd.push_back(n.h_delta);
    hm.push_back(n.h_minus_half);
    lp.push_back(n.lp);
  }
  py::dict d;
  d["time"] = to_array(tr.times);
  d["l2"] = to_array(l2);
  d["h_alpha"] = to_array(ha);
  d["h_delta"] = to_array(hd);
  d["h_minus_half"] = to_array(hm);
  d["lp"] = to_array(lp);
  d["final"] = to_array(tr.final_state.coeffs());
  return d;
}

py::dict row_dict(const sqg::TableRow& r) {
  py::dict d;
  d["run_id"] = r.run_id;
  d["flavor"] = r.flavor;
  d["epsilon"] = r.epsilon;
  d["M_or_eta"] = r.m_or_eta;
  d["method"] = r.method;
  d["n_samples"] = r.n_samples;
  d["p_hat"] = r.p_hat;
  d["ci_lo"] = r.ci_lo;
  d["ci_hi"] = r.ci_hi;
  d["eps_log_p"] = r.eps_log_p ? py::object(py::float_(*r.eps_log_p)) : py::object(py::none());
  d["seed"] = r.seed;
  d["wallclock_s"] = r.wallclock_s;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SQG numerical lab bindings";

  py::register_exception<sqg::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<sqg::BlowUpError>(m, "BlowUpError", PyExc_RuntimeError);

  py::class_<sqg::WaveGrid, std::shared_ptr<sqg::WaveGrid>>(m, "WaveGrid")
      .def_property_readonly("resolution", &sqg::WaveGrid::resolution)
      .def_property_readonly("size", &sqg::WaveGrid::size)
      .def_property_readonly("physical_size", &sqg::WaveGrid::physical_size)
      .def_property_readonly("wavevectors",
                             [](const sqg::WaveGrid& g) {
                               std::vector<std::pair<int, int>> out;
                               for (auto k : g.wavevectors()) out.emplace_back(k.k1, k.k2);
                               return out;
                             })
      .def("index_of", [](const sqg::WaveGrid& g, int k1, int k2) { return g.index_of({k1, k2}); });

  m.def("make_grid", [](int n) { return std::const_pointer_cast<sqg::WaveGrid>(sqg::make_grid(n)); },
        py::arg("resolution"));

  m.def(
      "l2_norm",
      [](std::shared_ptr<sqg::WaveGrid> g, py::array_t<double> c) { return sqg::l2_norm(field_from(g, c)); },
      py::arg("grid"), py::arg("coeffs"));
  m.def(
      "sobolev_norm",
      [](std::shared_ptr<sqg::WaveGrid> g, py::array_t<double> c, double s) {
        return sqg::sobolev_norm(field_from(g, c), s);
      },
      py::arg("grid"), py::arg("coeffs"), py::arg("s"));
  m.def(
      "to_physical",
      [](std::shared_ptr<sqg::WaveGrid> g, py::array_t<double> c) {
        auto phys = sqg::to_physical(field_from(g, c));
        const auto n = static_cast<py::ssize_t>(phys.points_per_axis());
        py::array_t<double> a({n, n});
        std::copy(phys.values().begin(), phys.values().end(), a.mutable_data());
        return a;
      },
      py::arg("grid"), py::arg("coeffs"));

  m.def(
      "save_snapshot",
      [](const std::filesystem::path& path, std::shared_ptr<sqg::WaveGrid> g, py::array_t<double> c, double alpha,
         double kappa) { sqg::save_snapshot(field_from(g, c), path, alpha, kappa); },
      py::arg("path"), py::arg("grid"), py::arg("coeffs"), py::arg("alpha") = 0.0, py::arg("kappa") = 0.0);
  m.def(
      "load_snapshot",
      [](const std::filesystem::path& path) {
        auto s = sqg::load_snapshot(path);
        py::dict d;
        d["resolution"] = s.field.grid().resolution();
        d["alpha"] = s.alpha;
        d["kappa"] = s.kappa;
        d["coeffs"] = to_array(s.field.coeffs());
        return d;
      },
      py::arg("path"));

  m.def(
      "parse_config",
      [](const std::string& text) {
        auto parsed = sqg::parse_config(text);
        return py::make_tuple(sqg::echo_config(parsed.config), parsed.warnings);
      },
      py::arg("text"), "Returns (effective config JSON, warnings); raises ConfigError listing every problem.");
  m.def(
      "config_hash", [](const std::string& text) { return sqg::config_hash(sqg::parse_config(text).config); },
      py::arg("text"));

  m.def(
      "run",
      [](const std::string& text, std::optional<std::string> out, std::optional<std::uint64_t> seed,
         std::optional<unsigned> workers, std::optional<std::size_t> stride) {
        auto parsed = sqg::parse_config(text);
        auto& cfg = parsed.config;
        if (out) cfg.output_dir = *out;
        if (seed) cfg.seed = *seed;
        if (workers) cfg.workers = *workers;
        if (stride) cfg.stride = *stride;
        if (cfg.workers < 1 || cfg.stride < 1) throw sqg::ConfigError("workers and stride must be >= 1");
        py::gil_scoped_release release;
        return sqg::run_experiment(cfg, parsed.warnings);
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::arg("workers") = py::none(), py::arg("stride") = py::none(),
      "Runs the configured command; returns the exit code.");

  m.def(
      "trajectory",
      [](const std::string& text) {
        const auto cfg = sqg::parse_config(text).config;
        auto grid = sqg::make_grid(cfg.dynamics.resolution);
        auto theta0 = sqg::build_initial(cfg, grid);
        sqg::RecordOptions rec;
        rec.stride = cfg.stride;
        rec.keep_snapshots = false;
        rec.delta = cfg.analysis.delta;
        rec.p = cfg.analysis.p;
        sqg::Trajectory tr;
        {
          py::gil_scoped_release release;
          if (cfg.simulate.process == "deterministic") {
            tr = sqg::solve_deterministic(theta0, cfg.dynamics, rec);
          } else {
            auto G = sqg::build_noise(cfg, grid);
            auto path = sqg::NoisePath::generate(cfg.seed, G.dimension(), cfg.dynamics.dt, cfg.dynamics.steps());
            const double eps = cfg.simulate.epsilon;
            if (cfg.simulate.process == "small-noise") {
              tr = sqg::simulate_small_noise(theta0, eps, G, cfg.dynamics, path, rec);
            } else if (cfg.simulate.process == "small-time") {
              tr = sqg::simulate_small_time(theta0, eps, G, cfg.dynamics, path, rec);
            } else {
              tr = sqg::simulate_diffusion_only(theta0, eps, G, cfg.dynamics, path, rec);
            }
          }
        }
        return trajectory_dict(tr);
      },
      py::arg("config"), "Integrates the config's simulate process in memory.");

  m.attr("TABLE_HEADER") = sqg::kTableHeader;
  m.def(
      "read_table",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& r : sqg::read_table(path)) out.append(row_dict(r));
        return out;
      },
      py::arg("path"));

  m.def("analytic_rate_linear", &sqg::analytic_rate_linear, py::arg("lambda_mode"), py::arg("b"), py::arg("eta"),
        py::arg("T"));
  m.def(
      "wilson_interval",
      [](double k, double n, double z) {
        auto i = sqg::wilson_interval(k, n, z);
        return py::make_tuple(i.lo, i.hi);
      },
      py::arg("k"), py::arg("n"), py::arg("z") = sqg::kZ95);
}
