#include "core/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace papercut {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "shell.youngs_modulus",
      "shell.poisson_ratio",
      "shell.thickness",
      "shell.areal_density",
      "shell.bending_stiffness",
      "shell.gravity",
      "shell.contact_stiffness",
      "shell.contact_margin",
      "shell.friction",
      "sim.step_size",
      "sim.max_newton_iterations",
      "sim.gradient_tolerance",
      "scissor.blade_length",
      "scissor.blade_offset",
      "scissor.blade_half_thickness",
      "scissor.max_open_angle",
      "paper.width",
      "paper.height",
      "paper.edge_length",
      "camera.image_width",
      "camera.image_height",
      "camera.fx",
      "camera.fy",
      "camera.cx",
      "camera.cy",
      "camera.near",
      "camera.far",
      "camera.position",
      "camera.target",
      "camera.up",
      "perception.pool_size",
      "perception.noise_amp",
      "perception.crop_half_extent",
      "perception.sample_count",
      "perception.mask_width",
      "pipeline.track",
      "pipeline.basic_length",
      "pipeline.filter_tau",
      "pipeline.perturb_prob",
      "pipeline.perturb_max_angle",
      "pipeline.horizon",
      "pipeline.primitive_cap",
      "pipeline.settle_steps",
      "pipeline.observations",
      "pipeline.fracture_tolerance",
      "pipeline.chamfer_samples",
      "pipeline.randomize_size",
      "pipeline.randomize_density",
      "pipeline.randomize_youngs",
  };
  return keys;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

double parse_double(const std::string& key, const std::string& tok) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::Parse, "config key '" + key + "': bad numeric value '" + tok + "'");
  }
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string value = trim(line.substr(key.size()));
    if (!known_keys().count(key)) {
      fail(ErrorCode::Parse,
           "unknown config key '" + key + "' (line " + std::to_string(lineno) + ")");
    }
    if (value.empty()) {
      fail(ErrorCode::Parse, "config key '" + key + "' has no value");
    }
    cfg.entries_[key] = value;
  }
  return cfg;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

ConfigMap ConfigMap::defaults() {
  static const char* text = R"(
shell.youngs_modulus 3e9
shell.poisson_ratio 0.3
shell.thickness 1e-4
shell.areal_density 0.075
shell.gravity 0 -9.81 0
shell.contact_stiffness 1e5
shell.contact_margin 1e-3
shell.friction 0.3
sim.step_size 0.005
sim.max_newton_iterations 50
sim.gradient_tolerance 1e-6
scissor.blade_length 0.08
scissor.blade_offset 0.001
scissor.blade_half_thickness 0.00075
scissor.max_open_angle 0.5235987755982988
paper.width 0.210
paper.height 0.297
paper.edge_length 0.005
camera.image_width 640
camera.image_height 480
camera.fx 600
camera.fy 600
camera.cx 320
camera.cy 240
camera.near 0.05
camera.far 2.0
camera.position 0.105 0.1485 0.5
camera.target 0.105 0.1485 0.0
camera.up 0 1 0
perception.pool_size 3
perception.noise_amp 0.002
perception.crop_half_extent 0.015
perception.sample_count 1024
perception.mask_width 0.001
pipeline.track easy
pipeline.basic_length 0.015
pipeline.filter_tau 1.0
pipeline.perturb_prob 0.3
pipeline.perturb_max_angle 0.0872664625997165
pipeline.horizon 4
pipeline.primitive_cap 200
pipeline.settle_steps 10
pipeline.observations 1
pipeline.fracture_tolerance 0.001
pipeline.chamfer_samples 512
pipeline.randomize_size 1.0 1.0
pipeline.randomize_density 0.075 0.075
pipeline.randomize_youngs 3e9 3e9
)";
  return parse_string(text);
}

ConfigMap ConfigMap::load(const std::string& path) {
  ConfigMap cfg = defaults();
  if (!path.empty()) cfg.merge_from(parse_file(path));
  return cfg;
}

bool ConfigMap::has(const std::string& key) const { return entries_.count(key) > 0; }

double ConfigMap::get_double(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::Parse, "missing config key '" + key + "'");
  auto toks = tokens(it->second);
  if (toks.size() != 1) fail(ErrorCode::Parse, "config key '" + key + "' is not scalar");
  return parse_double(key, toks[0]);
}

int ConfigMap::get_int(const std::string& key) const {
  double v = get_double(key);
  int i = int(std::lround(v));
  if (std::abs(v - i) > 1e-9) fail(ErrorCode::Parse, "config key '" + key + "' is not integral");
  return i;
}

std::string ConfigMap::get_string(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::Parse, "missing config key '" + key + "'");
  return it->second;
}

std::vector<double> ConfigMap::get_doubles(const std::string& key, size_t count) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::Parse, "missing config key '" + key + "'");
  auto toks = tokens(it->second);
  if (toks.size() != count) {
    fail(ErrorCode::Parse, "config key '" + key + "' expects " + std::to_string(count) +
                               " values, got " + std::to_string(toks.size()));
  }
  std::vector<double> out;
  out.reserve(count);
  for (const auto& t : toks) out.push_back(parse_double(key, t));
  return out;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  if (!known_keys().count(key)) fail(ErrorCode::Parse, "unknown config key '" + key + "'");
  entries_[key] = value;
}

void ConfigMap::set_double(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  set(key, buf);
}

void ConfigMap::merge_from(const ConfigMap& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string ConfigMap::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries_) out << k << " " << v << "\n";
  return out.str();
}

}  // namespace papercut
