// sqglab: run one experiment from a JSON config.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sqglab/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"SQG numerical lab"};
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::size_t> stride;
  app.add_option("--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out, "output directory (overrides output_dir)");
  app.add_option("--seed", seed, "master seed (overrides seed)");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--stride", stride, "record every K-th step")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  sqg::ParsedConfig parsed;
  try {
    parsed = sqg::load_config(config_path);
  } catch (const sqg::ConfigError& e) {
    std::cerr << e.what() << '\n';
    if (out) {
      try {
        sqg::write_config_error(*out, e);
      } catch (const std::exception& w) {
        std::cerr << "could not write error record: " << w.what() << '\n';
      }
    }
    return sqg::kExitConfig;
  }
  auto& cfg = parsed.config;
  if (out) cfg.output_dir = *out;
  if (seed) cfg.seed = *seed;
  if (workers) cfg.workers = *workers;
  if (stride) cfg.stride = *stride;

  for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << '\n';
  const int code = sqg::run_experiment(cfg, parsed.warnings);
  const auto manifest = std::filesystem::path(cfg.output_dir) / "manifest.json";
  if (code == sqg::kExitOk) {
    std::cout << cfg.command << " ok: " << manifest.string() << '\n';
  } else {
    std::cerr << cfg.command << " failed (exit " << code << "), see "
              << (std::filesystem::path(cfg.output_dir) / (code == sqg::kExitValidation ? "manifest.json" : "error.json"))
                     .string()
              << '\n';
  }
  return code;
}
