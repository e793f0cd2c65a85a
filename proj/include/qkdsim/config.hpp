// Line-oriented `key = value` run configuration with validation.

#ifndef QKDSIM_CONFIG_HPP
#define QKDSIM_CONFIG_HPP

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

#include "qkdsim/keyrate.hpp"

namespace qkdsim {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  SourceKind source = SourceKind::Poissonian;
  bool chi_auto = true;
  double chi = 0.1;

  double alpha = 0.21;
  double eta_bob = 0.045;
  double y0 = 1.7e-6;
  double e_det = 0.033;

  int n_bins = 8;
  double eta_tmd = 0.5;
  int n_max = kDefaultNMax;

  int locc = 1;
  bool filtered = false;
  EstimationKind estimation = EstimationKind::Exact;
  double f_ec = 1.22;

  double l_start = 0.0;
  double l_end = 220.0;
  double l_step = 1.0;

  bool montecarlo = false;
  std::int64_t n_total = 1000000;
  std::uint64_t seed = 42;
  std::int64_t m_subset = 100000;
  double delta_scale = 0.5;
  double stat_tol = 1e-7;

  std::string out = "sweep.csv";

  SweepContext context() const {
    SweepContext ctx;
    ctx.source_kind = source;
    ctx.chi_auto = chi_auto;
    ctx.chi = chi;
    ctx.channel = {alpha, eta_bob, y0, e_det};
    ctx.tmd = {n_bins, eta_tmd, n_max};
    ctx.filtered = filtered;
    ctx.locc = locc;
    ctx.estimation = estimation;
    ctx.f_ec = f_ec;
    ctx.stat_tol = stat_tol;
    return ctx;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline double parse_double(const std::string& v, const std::string& key, int line) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size())
    throw config_error("line " + std::to_string(line) + ": bad numeric value for '" +
                       key + "': " + v);
  return d;
}

inline std::int64_t parse_int(const std::string& v, const std::string& key, int line) {
  std::size_t pos = 0;
  std::int64_t i = 0;
  try {
    i = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size())
    throw config_error("line " + std::to_string(line) + ": bad integer value for '" +
                       key + "': " + v);
  return i;
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value, int line = 0) {
  using detail::parse_double;
  using detail::parse_int;
  auto range_error = [&](const std::string& what) -> config_error {
    return config_error("line " + std::to_string(line) + ": " + what +
                        " for key '" + key + "': " + value);
  };

  if (key == "source") {
    if (value == "poissonian") cfg.source = SourceKind::Poissonian;
    else if (value == "thermal") cfg.source = SourceKind::Thermal;
    else if (value == "singlephoton") cfg.source = SourceKind::SinglePhoton;
    else throw range_error("unknown source kind");
  } else if (key == "chi") {
    if (value == "auto") {
      cfg.chi_auto = true;
    } else {
      cfg.chi = parse_double(value, key, line);
      cfg.chi_auto = false;
      if (cfg.chi <= 0.0 || cfg.chi > 0.5) throw range_error("chi outside (0, 0.5]");
    }
  } else if (key == "alpha") {
    cfg.alpha = parse_double(value, key, line);
    if (cfg.alpha < 0.0) throw range_error("negative fibre loss");
  } else if (key == "eta_bob") {
    cfg.eta_bob = parse_double(value, key, line);
    if (cfg.eta_bob < 0.0 || cfg.eta_bob > 1.0) throw range_error("value outside [0,1]");
  } else if (key == "y0") {
    cfg.y0 = parse_double(value, key, line);
    if (cfg.y0 < 0.0 || cfg.y0 > 1.0) throw range_error("value outside [0,1]");
  } else if (key == "e_det") {
    cfg.e_det = parse_double(value, key, line);
    if (cfg.e_det < 0.0 || cfg.e_det > 1.0) throw range_error("value outside [0,1]");
  } else if (key == "n_bins") {
    cfg.n_bins = static_cast<int>(parse_int(value, key, line));
    if (cfg.n_bins < 1) throw range_error("n_bins must be >= 1");
  } else if (key == "eta_tmd") {
    cfg.eta_tmd = parse_double(value, key, line);
    if (cfg.eta_tmd < 0.0 || cfg.eta_tmd > 1.0) throw range_error("value outside [0,1]");
  } else if (key == "n_max") {
    cfg.n_max = static_cast<int>(parse_int(value, key, line));
    if (cfg.n_max < 1) throw range_error("n_max must be >= 1");
  } else if (key == "locc") {
    const std::int64_t v = parse_int(value, key, line);
    if (v != 1 && v != 2) throw range_error("locc must be 1 or 2");
    cfg.locc = static_cast<int>(v);
  } else if (key == "filtered") {
    if (value == "on") cfg.filtered = true;
    else if (value == "off") cfg.filtered = false;
    else throw range_error("expected on/off");
  } else if (key == "estimation") {
    if (value == "exact") cfg.estimation = EstimationKind::Exact;
    else if (value == "bounds") cfg.estimation = EstimationKind::Bounds;
    else throw range_error("expected exact/bounds");
  } else if (key == "f_ec") {
    cfg.f_ec = parse_double(value, key, line);
    if (cfg.f_ec < 1.0) throw range_error("f_ec must be >= 1");
  } else if (key == "l_start") {
    cfg.l_start = parse_double(value, key, line);
    if (cfg.l_start < 0.0) throw range_error("negative distance");
  } else if (key == "l_end") {
    cfg.l_end = parse_double(value, key, line);
    if (cfg.l_end < 0.0) throw range_error("negative distance");
  } else if (key == "l_step") {
    cfg.l_step = parse_double(value, key, line);
    if (cfg.l_step <= 0.0) throw range_error("step must be > 0");
  } else if (key == "montecarlo") {
    if (value == "on") cfg.montecarlo = true;
    else if (value == "off") cfg.montecarlo = false;
    else throw range_error("expected on/off");
  } else if (key == "n_total") {
    cfg.n_total = parse_int(value, key, line);
    if (cfg.n_total < 1) throw range_error("n_total must be >= 1");
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_int(value, key, line));
  } else if (key == "m_subset") {
    cfg.m_subset = parse_int(value, key, line);
    if (cfg.m_subset < 1) throw range_error("m_subset must be >= 1");
  } else if (key == "delta_scale") {
    cfg.delta_scale = parse_double(value, key, line);
    if (cfg.delta_scale < 0.0) throw range_error("delta_scale must be >= 0");
  } else if (key == "stat_tol") {
    cfg.stat_tol = parse_double(value, key, line);
    if (cfg.stat_tol < 0.0) throw range_error("stat_tol must be >= 0");
  } else if (key == "out") {
    cfg.out = value;
  } else {
    throw config_error("line " + std::to_string(line) + ": unknown key '" + key + "'");
  }
}

inline void validate_config(const RunConfig& cfg) {
  if (cfg.l_end < cfg.l_start)
    throw config_error("sweep grid not ascending: l_end < l_start");
  if (cfg.montecarlo && cfg.chi_auto)
    throw config_error("montecarlo mode needs a fixed chi (set chi = <value>)");
  if (cfg.m_subset > cfg.n_total)
    throw config_error("m_subset exceeds n_total");
}

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw config_error("line " + std::to_string(line_no) + ": expected key = value");
    apply_config_entry(cfg, key, value, line_no);
  }
  validate_config(cfg);
  return cfg;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "source = "
     << (cfg.source == SourceKind::Poissonian  ? "poissonian"
         : cfg.source == SourceKind::Thermal   ? "thermal"
                                               : "singlephoton")
     << "\n";
  if (cfg.chi_auto) os << "chi = auto\n";
  else os << "chi = " << format_number(cfg.chi) << "\n";
  os << "alpha = " << format_number(cfg.alpha) << "\n";
  os << "eta_bob = " << format_number(cfg.eta_bob) << "\n";
  os << "y0 = " << format_number(cfg.y0) << "\n";
  os << "e_det = " << format_number(cfg.e_det) << "\n";
  os << "n_bins = " << cfg.n_bins << "\n";
  os << "eta_tmd = " << format_number(cfg.eta_tmd) << "\n";
  os << "n_max = " << cfg.n_max << "\n";
  os << "locc = " << cfg.locc << "\n";
  os << "filtered = " << (cfg.filtered ? "on" : "off") << "\n";
  os << "estimation = "
     << (cfg.estimation == EstimationKind::Exact ? "exact" : "bounds") << "\n";
  os << "f_ec = " << format_number(cfg.f_ec) << "\n";
  os << "l_start = " << format_number(cfg.l_start) << "\n";
  os << "l_end = " << format_number(cfg.l_end) << "\n";
  os << "l_step = " << format_number(cfg.l_step) << "\n";
  os << "montecarlo = " << (cfg.montecarlo ? "on" : "off") << "\n";
  os << "n_total = " << cfg.n_total << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "m_subset = " << cfg.m_subset << "\n";
  os << "delta_scale = " << format_number(cfg.delta_scale) << "\n";
  os << "stat_tol = " << format_number(cfg.stat_tol) << "\n";
  os << "out = " << cfg.out << "\n";
  return os.str();
}

}  // namespace qkdsim

#endif  // QKDSIM_CONFIG_HPP
