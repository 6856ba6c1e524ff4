#include "config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace moco {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("config: bad integer for '" + key + "': " + v);
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("config: bad unsigned integer for '" + key + "': " + v);
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(r)) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("config: bad number for '" + key + "': " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: bad flag for '" + key + "' (use on/off): " + v);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double ExperimentConfig::max_rot_rad() const { return max_rot_deg * 3.141592653589793 / 180.0; }

std::filesystem::path ExperimentConfig::out_dir() const {
  std::filesystem::path p(out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("MRMOCO_OUT_ROOT")) {
      return std::filesystem::path(root) / p;
    }
  }
  return p;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"version", [](auto& c, auto&, auto& v) { c.version = v; }},
      {"name", [](auto& c, auto&, auto& v) { c.name = v; }},
      {"n", [](auto& c, auto& k, auto& v) { c.n = to_int(k, v); }},
      {"spokes", [](auto& c, auto& k, auto& v) { c.spokes = to_int(k, v); }},
      {"readout", [](auto& c, auto& k, auto& v) { c.readout = to_int(k, v); }},
      {"n_exc", [](auto& c, auto& k, auto& v) { c.n_exc = to_int(k, v); }},
      {"n_coils", [](auto& c, auto& k, auto& v) { c.n_coils = to_int(k, v); }},
      {"phantom", [](auto& c, auto&, auto& v) { c.phantom = v; }},
      {"phantom_blur", [](auto& c, auto& k, auto& v) { c.phantom_blur = to_double(k, v); }},
      {"motion", [](auto& c, auto&, auto& v) { c.motion = v; }},
      {"max_rot_deg", [](auto& c, auto& k, auto& v) { c.max_rot_deg = to_double(k, v); }},
      {"max_shift_frac", [](auto& c, auto& k, auto& v) { c.max_shift_frac = to_double(k, v); }},
      {"max_shear", [](auto& c, auto& k, auto& v) { c.max_shear = to_double(k, v); }},
      {"ffd_amp_frac", [](auto& c, auto& k, auto& v) { c.ffd_amp_frac = to_double(k, v); }},
      {"ffd_nodes", [](auto& c, auto& k, auto& v) { c.ffd_nodes = to_int(k, v); }},
      {"spline_order", [](auto& c, auto& k, auto& v) { c.spline_order = to_int(k, v); }},
      {"noise", [](auto& c, auto& k, auto& v) { c.noise = to_double(k, v); }},
      {"sampling", [](auto& c, auto&, auto& v) { c.sampling = v; }},
      {"nufft_width", [](auto& c, auto& k, auto& v) { c.nufft_width = to_int(k, v); }},
      {"dcf_iters", [](auto& c, auto& k, auto& v) { c.dcf_iters = to_int(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"out", [](auto& c, auto&, auto& v) { c.out = v; }},
      {"threads", [](auto& c, auto& k, auto& v) { c.threads = to_int(k, v); }},
      {"cg_iters", [](auto& c, auto& k, auto& v) { c.cg_iters = to_int(k, v); }},
      {"sub_cg_iters", [](auto& c, auto& k, auto& v) { c.sub_cg_iters = to_int(k, v); }},
      {"tol", [](auto& c, auto& k, auto& v) { c.tol = to_double(k, v); }},
      {"positivity", [](auto& c, auto& k, auto& v) { c.positivity = to_bool(k, v); }},
      {"tv_lambda", [](auto& c, auto& k, auto& v) { c.tv_lambda = to_double(k, v); }},
      {"tv_iters", [](auto& c, auto& k, auto& v) { c.tv_iters = to_int(k, v); }},
      {"est_iters", [](auto& c, auto& k, auto& v) { c.est_iters = to_int(k, v); }},
      {"est_pyramid", [](auto& c, auto& k, auto& v) { c.est_pyramid = to_int(k, v); }},
      {"est_steps", [](auto& c, auto& k, auto& v) { c.est_steps = to_int(k, v); }},
      {"est_smoothness", [](auto& c, auto& k, auto& v) { c.est_smoothness = to_double(k, v); }},
      {"est_window", [](auto& c, auto& k, auto& v) { c.est_window = to_int(k, v); }},
      {"levels", [](auto& c, auto& k, auto& v) { c.levels = to_int(k, v); }},
      {"cor_iters", [](auto& c, auto& k, auto& v) { c.cor_iters = to_int(k, v); }},
      {"cor_cg_iters", [](auto& c, auto& k, auto& v) { c.cor_cg_iters = to_int(k, v); }},
      {"backtrack", [](auto& c, auto& k, auto& v) { c.backtrack = to_int(k, v); }},
      {"projector", [](auto& c, auto&, auto& v) { c.projector = v; }},
      {"projector_spacing",
       [](auto& c, auto& k, auto& v) { c.projector_spacing = to_double(k, v); }},
      {"baseline_rigid", [](auto& c, auto& k, auto& v) { c.baseline_rigid = to_bool(k, v); }},
  };

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    it->second(cfg, key, value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "version = " << c.version << "\n";
  o << "name = " << c.name << "\n";
  o << "n = " << c.n << "\n";
  o << "spokes = " << c.spokes << "\n";
  o << "readout = " << c.readout << "\n";
  o << "n_exc = " << c.n_exc << "\n";
  o << "n_coils = " << c.n_coils << "\n";
  o << "phantom = " << c.phantom << "\n";
  o << "phantom_blur = " << fmt_double(c.phantom_blur) << "\n";
  o << "motion = " << c.motion << "\n";
  o << "max_rot_deg = " << fmt_double(c.max_rot_deg) << "\n";
  o << "max_shift_frac = " << fmt_double(c.max_shift_frac) << "\n";
  o << "max_shear = " << fmt_double(c.max_shear) << "\n";
  o << "ffd_amp_frac = " << fmt_double(c.ffd_amp_frac) << "\n";
  o << "ffd_nodes = " << c.ffd_nodes << "\n";
  o << "spline_order = " << c.spline_order << "\n";
  o << "noise = " << fmt_double(c.noise) << "\n";
  o << "sampling = " << c.sampling << "\n";
  o << "nufft_width = " << c.nufft_width << "\n";
  o << "dcf_iters = " << c.dcf_iters << "\n";
  o << "seed = " << c.seed << "\n";
  o << "out = " << c.out << "\n";
  o << "threads = " << c.threads << "\n";
  o << "cg_iters = " << c.cg_iters << "\n";
  o << "sub_cg_iters = " << c.sub_cg_iters << "\n";
  o << "tol = " << fmt_double(c.tol) << "\n";
  o << "positivity = " << (c.positivity ? "on" : "off") << "\n";
  o << "tv_lambda = " << fmt_double(c.tv_lambda) << "\n";
  o << "tv_iters = " << c.tv_iters << "\n";
  o << "est_iters = " << c.est_iters << "\n";
  o << "est_pyramid = " << c.est_pyramid << "\n";
  o << "est_steps = " << c.est_steps << "\n";
  o << "est_smoothness = " << fmt_double(c.est_smoothness) << "\n";
  o << "est_window = " << c.est_window << "\n";
  o << "levels = " << c.levels << "\n";
  o << "cor_iters = " << c.cor_iters << "\n";
  o << "cor_cg_iters = " << c.cor_cg_iters << "\n";
  o << "backtrack = " << c.backtrack << "\n";
  o << "projector = " << c.projector << "\n";
  o << "projector_spacing = " << fmt_double(c.projector_spacing) << "\n";
  o << "baseline_rigid = " << (c.baseline_rigid ? "on" : "off") << "\n";
  return o.str();
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (c.n < 8 || c.n % 2 != 0) fail("n must be even and >= 8");
  if (c.spokes < 1) fail("spokes must be >= 1");
  if (c.readout < 2) fail("readout must be >= 2");
  if (c.n_exc < 1) fail("n_exc must be >= 1");
  if (c.spokes % c.n_exc != 0) fail("spokes must be divisible by n_exc");
  if (c.n_coils < 1) fail("n_coils must be >= 1");
  phantom_kind_from_string(c.phantom);
  if (c.phantom_blur < 0) fail("phantom_blur must be >= 0");
  motion_class_from_string(c.motion);
  if (c.max_rot_deg < 0 || c.max_rot_deg > 45) fail("max_rot_deg must be in [0, 45]");
  if (c.max_shift_frac < 0 || c.max_shift_frac > 0.25) fail("max_shift_frac must be in [0, 0.25]");
  if (c.ffd_amp_frac < 0 || c.ffd_amp_frac > 0.25) fail("ffd_amp_frac must be in [0, 0.25]");
  if (c.ffd_nodes < 2) fail("ffd_nodes must be >= 2");
  if (c.spline_order != 1 && c.spline_order != 3) fail("spline_order must be 1 or 3");
  if (c.noise < 0) fail("noise must be >= 0");
  sampling_path_from_string(c.sampling);
  if (c.nufft_width < 2 || c.nufft_width > 16) fail("nufft_width must be in [2, 16]");
  if (c.dcf_iters < 1) fail("dcf_iters must be >= 1");
  if (c.out.empty()) fail("out must not be empty");
  if (c.threads < 1) fail("threads must be >= 1");
  if (c.cg_iters < 1 || c.sub_cg_iters < 1 || c.cor_cg_iters < 1) fail("cg iterations must be >= 1");
  if (c.tol < 0) fail("tol must be >= 0");
  if (c.tv_lambda < 0) fail("tv_lambda must be >= 0");
  if (c.tv_iters < 1) fail("tv_iters must be >= 1");
  if (c.est_iters < 1 || c.est_pyramid < 1 || c.est_steps < 1) fail("estimate iterations must be >= 1");
  if (c.est_smoothness < 0) fail("est_smoothness must be >= 0");
  if (c.est_window < 1) fail("est_window must be >= 1");
  if (c.levels < 0) fail("levels must be >= 0");
  if (c.n % (1 << c.levels) != 0 || (c.n >> c.levels) < 8) {
    fail("n must stay even and >= 8 at the coarsest level");
  }
  if (c.cor_iters < 1) fail("cor_iters must be >= 1");
  if (c.backtrack < 0) fail("backtrack must be >= 0");
  if (c.projector != "spline" && c.projector != "identity") {
    fail("projector must be spline or identity");
  }
  if (c.projector_spacing < 1) fail("projector_spacing must be >= 1");
}

}  // namespace moco
