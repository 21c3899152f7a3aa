#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "carleman_lab/config.hpp"
#include "carleman_lab/parallel.hpp"
#include "carleman_lab/run.hpp"

namespace cl = carleman_lab;

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo laboratory for discrete Carleman estimates of semi-discrete stochastic parabolic equations",
               "carleman-lab"};
  app.set_version_flag("--version", CARLEMAN_LAB_VERSION);
  std::string command, config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  app.add_option("command", command, "verify-identities | simulate | verify-carleman | inverse-source | cauchy")
      ->required()
      ->check(CLI::IsMember(cl::known_commands()));
  app.add_option("--config", config_path, "JSON experiment config")->required();
  app.add_option("--out", out_dir, "output directory (created if missing)");
  app.add_option("--seed", seed, "master seed; overrides ensemble.seed");
  app.add_option("--threads", threads, "worker threads; falls back to CARLEMAN_LAB_THREADS, then 1")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot read config " << config_path << "\n";
    return 1;
  }
  std::ostringstream text;
  text << in.rdbuf();

  cl::ExperimentConfig cfg;
  try {
    cfg = cl::parse_config(text.str(), command);
  } catch (const cl::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  if (seed) cfg.ensemble.seed = *seed;

  cl::RunOptions opt;
  opt.out_dir = out_dir;
  opt.threads = cl::resolve_threads(threads);
  const auto res = cl::run(cfg, opt);
  if (res.exit_code != 0) {
    std::cerr << "error: " << res.message << "\n";
    return res.exit_code;
  }
  for (const auto& f : res.files) std::cout << f.string() << "\n";
  return 0;
}
