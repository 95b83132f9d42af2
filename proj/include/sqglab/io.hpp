#pragma once

// Run configuration (JSON), experiment dispatch, SQGF snapshots and the
// results table.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sqglab/dynamics.hpp"
#include "sqglab/ldp.hpp"
#include "sqglab/noise.hpp"
#include "sqglab/rate.hpp"
#include "sqglab/spectral.hpp"
#include "sqglab/stochastic.hpp"

namespace sqg {

// Config problems, all of them.
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct ModeAmplitude {
  Wavevector k;
  double amplitude = 0.0;
  friend bool operator==(const ModeAmplitude&, const ModeAmplitude&) = default;
};

struct InitialSpec {
  std::string kind = "modes";  // modes | random | zero | file
  std::vector<ModeAmplitude> modes{{{1, 0}, 1.0}};
  std::uint64_t seed = 1;
  double decay = 2.0;
  double scale = 1.0;
  std::string path;
  friend bool operator==(const InitialSpec&, const InitialSpec&) = default;
};

struct NonlinearitySpec {
  std::string kind = "constant";  // constant | identity | table
  double value = 1.0;
  std::vector<double> nodes;
  std::vector<double> values;
  double derivative_bound = 0.0;
  friend bool operator==(const NonlinearitySpec&, const NonlinearitySpec&) = default;
};

struct DirectionSpec {
  double constant = 0.0;
  std::vector<ModeAmplitude> modes;
  friend bool operator==(const DirectionSpec&, const DirectionSpec&) = default;
};

struct NoiseSpec {
  NonlinearitySpec nonlinearity;
  std::vector<DirectionSpec> directions{{0.0, {{{1, 0}, 1.0}}}};
  std::optional<double> declared_bound;
  double smoothness = 1.0;
  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct ControlSpec {
  std::size_t cells = 0;  // 0: one cell per step
  std::vector<std::vector<double>> values;  // per cell; a single row is held constant
  friend bool operator==(const ControlSpec&, const ControlSpec&) = default;
};

struct AnalysisSpec {
  double p = 8.0;
  double delta = 1.0;
  friend bool operator==(const AnalysisSpec&, const AnalysisSpec&) = default;
};

struct SimulateSpec {
  std::string process = "deterministic";  // deterministic | small-noise | small-time | diffusion-only
  double epsilon = 0.0;
  friend bool operator==(const SimulateSpec&, const SimulateSpec&) = default;
};

struct DelayedSpec {
  std::vector<double> deltas{0.2, 0.1, 0.05, 0.025};
  bool controlled = false;
  friend bool operator==(const DelayedSpec&, const DelayedSpec&) = default;
};

struct ActionSpec {
  SkeletonFlavor flavor = SkeletonFlavor::SmallNoise;
  ObservableKind observable = ObservableKind::Coefficient;
  Wavevector mode{1, 0};
  TargetKind target = TargetKind::AtLeast;
  double eta = 1.0;
  double radius = 0.0;
  std::size_t control_cells = 0;
  std::vector<double> penalties{10.0, 1e2, 1e3, 1e4};
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  std::optional<double> reference_rate;
  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

struct McSpec {
  Flavor flavor = Flavor::SmallNoise;
  ObservableKind observable = ObservableKind::Coefficient;
  Wavevector mode{1, 0};
  bool sup_over_stamps = false;
  double eta = 1.0;
  Direction direction = Direction::AtLeast;
  std::vector<double> epsilons{0.1, 0.05};
  std::size_t samples = 100;
  Estimator method = Estimator::Naive;
  std::optional<double> reference_rate;
  friend bool operator==(const McSpec&, const McSpec&) = default;
};

struct EquivSpec {
  std::vector<double> epsilons{0.2, 0.1, 0.05};
  double eta = 1e-3;
  std::size_t samples = 100;
  friend bool operator==(const EquivSpec&, const EquivSpec&) = default;
};

struct LpTailSpec {
  std::vector<double> epsilons{0.2, 0.1};
  std::vector<double> multipliers{2.0, 4.0, 8.0};  // M in units of |theta0|_{L^p}^p
  std::size_t samples = 100;
  Flavor flavor = Flavor::SmallTime;
  friend bool operator==(const LpTailSpec&, const LpTailSpec&) = default;
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "skeleton", "delayed", "action",
                                              "mc",       "equiv",    "lptail",  "validate"};
  return names;
}

struct RunConfig {
  std::string command = "validate";
  std::string run_id = "run";
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string output_dir = "out";
  std::size_t stride = 1;
  bool snapshots = false;
  bool record_wallclock = false;
  DynamicsConfig dynamics;
  InitialSpec initial;
  NoiseSpec noise;
  AnalysisSpec analysis;
  ControlSpec control;
  SimulateSpec simulate;
  DelayedSpec delayed;
  ActionSpec action;
  McSpec mc;
  EquivSpec equiv;
  LpTailSpec lptail;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ParsedConfig {
  RunConfig config;
  std::vector<std::string> warnings;
};

// Throws ConfigErrors listing every problem found.
ParsedConfig parse_config(const std::string& text);
ParsedConfig load_config(const std::filesystem::path& path);
// Canonical JSON of the effective config (sorted keys, every field present).
std::string echo_config(const RunConfig& cfg);
// FNV-1a 64 of echo_config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

// Builders for the objects a config describes.
SpectralField build_initial(const RunConfig& cfg, const GridPtr& grid);
NoiseModel build_noise(const RunConfig& cfg, const GridPtr& grid);
Control build_control(const RunConfig& cfg, std::size_t dimension);

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitRuntime = 2,
  kExitValidation = 3,
};

// Runs the configured subcommand and writes its artifacts plus manifest.json
// into cfg.output_dir; failures leave error.json and a nonzero status.
int run_experiment(const RunConfig& cfg, const std::vector<std::string>& warnings = {});
// error.json for a config that never got as far as run_experiment.
void write_config_error(const std::filesystem::path& dir, const ConfigError& e);

// --- SQGF snapshots ------------------------------------------------------------

inline constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
  SpectralField field;
  double alpha = 0.0;
  double kappa = 0.0;
};

// Layout (little-endian): "SQGF", u32 version, u32 N, f64 alpha, f64 kappa,
// u64 count, count x f64 coefficients in canonical order.
std::vector<unsigned char> encode_snapshot(const SpectralField& f, double alpha, double kappa);
Snapshot decode_snapshot(const std::vector<unsigned char>& bytes);
void save_snapshot(const SpectralField& f, const std::filesystem::path& path, double alpha = 0.0,
                   double kappa = 0.0);
Snapshot load_snapshot(const std::filesystem::path& path);

// --- results table ---------------------------------------------------------------

inline constexpr const char* kTableHeader =
    "run_id,flavor,epsilon,M_or_eta,method,n_samples,p_hat,ci_lo,ci_hi,eps_log_p,seed,wallclock_s";

struct TableRow {
  std::string run_id;
  std::string flavor;
  double epsilon = 0.0;
  double m_or_eta = 0.0;
  std::string method;
  std::size_t n_samples = 0;
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::optional<double> eps_log_p;  // written as -inf when absent
  std::uint64_t seed = 0;
  double wallclock_s = 0.0;
  friend bool operator==(const TableRow&, const TableRow&) = default;
};

std::string format_number(double x);
std::string format_row(const TableRow& row);
// Appends rows, writing the header only into a new or empty file.  An
// existing file whose first line is not the header is rejected.
void write_table(const std::vector<TableRow>& rows, const std::filesystem::path& path);
std::vector<TableRow> read_table(const std::filesystem::path& path);

TableRow make_row(const std::string& run_id, const std::string& flavor, double epsilon,
                  double m_or_eta, const ProbabilityEstimate& est, std::uint64_t seed,
                  double wallclock_s);

}  // namespace sqg
