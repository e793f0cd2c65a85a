// Command-line driver: parse a run config, apply overrides, and execute
// the sweep or Monte Carlo session pipeline.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qkdsim/config.hpp"
#include "qkdsim/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Passive decoy-state BB84 key-rate simulator"};

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_path;
  qkdsim::RunOptions opt;

  app.add_option("--config", config_path, "run configuration file (key = value lines)");
  app.add_option("--set", overrides, "override a config key, e.g. --set locc=2")
      ->take_all();
  app.add_option("--out", out_path, "CSV output path");
  app.add_flag("--summary-only", opt.summary_only, "print summary lines, skip the CSV");
  app.add_flag("--gnuplot", opt.gnuplot, "also emit a two-column (l_km, rate) file");
  app.add_option("--record", opt.record_path, "write the Monte Carlo session record here");
  app.add_option("--replay", opt.replay_path, "load a session record instead of simulating");

  CLI11_PARSE(app, argc, argv);

  qkdsim::RunConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        std::cerr << "config error: cannot open " << config_path << "\n";
        return 1;
      }
      std::ostringstream buf;
      buf << in.rdbuf();
      cfg = qkdsim::parse_config(buf.str());
    }
    for (const std::string& ov : overrides) {
      const std::size_t eq = ov.find('=');
      if (eq == std::string::npos) {
        std::cerr << "config error: --set expects key=value, got '" << ov << "'\n";
        return 1;
      }
      qkdsim::apply_config_entry(cfg, qkdsim::detail::trim(ov.substr(0, eq)),
                                 qkdsim::detail::trim(ov.substr(eq + 1)));
    }
    if (!out_path.empty()) cfg.out = out_path;
    qkdsim::validate_config(cfg);
  } catch (const qkdsim::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  return qkdsim::run(cfg, opt);
}
