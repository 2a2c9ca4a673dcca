#include "bevplan/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace bevplan {

namespace {

// Single flat key registry with defaults. Seeds, paths, and scene counts
// are CLI flags, not config keys, so datasets from different seeds share a
// digest while structural changes refuse to mix.
const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      // model
      {"d_model", "64"},
      {"heads", "4"},
      {"n_agent_tokens", "8"},
      {"k", "20"},
      {"token_layers", "2"},
      {"conv_c1", "16"},
      {"conv_c2", "32"},
      {"point_enc_dim", "16"},
      {"diffusion_steps", "50"},
      {"beta_lo", "0.0001"},
      {"beta_hi", "0.02"},
      {"t_start", "10"},
      {"coord_norm", "32"},
      {"deform_points", "4"},
      {"region_cell_cap", "64"},
      {"use_refiner", "1"},
      {"use_proposal", "1"},
      {"use_fgsim", "1"},
      {"use_modulation", "1"},
      {"num_classes", "2"},
      {"precision", "f32"},
      // scene generation
      {"lane_width", "3.5"},
      {"gen_min_agents", "0"},
      {"gen_max_agents", "6"},
      {"gen_families", "straight,curve,tee,lead,pedestrian"},
      {"cruise_min", "3.5"},
      {"cruise_max", "6.5"},
      // training (batch_size 384 is the full-scale reference value; 16 is
      // the desk default)
      {"lr", "0.0004"},
      {"weight_decay", "0.0001"},
      {"batch_size", "16"},
      {"epochs_stage1", "4"},
      {"epochs_stage2", "10"},
      {"freeze_perception", "0"},
      {"w_seg", "14"},
      {"w_type", "10"},
      {"w_box", "1"},
      {"w_cls", "10"},
      {"w_reg", "8"},
      {"w_pro", "12"},
      {"w_ref", "12"},
      {"w_perc", "1"},
      // evaluation / closed loop
      {"ec_threshold", "0.5"},
      {"replan_period", "0.5"},
      {"episode_horizon", "12"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.values_ = default_values();
  return cfg;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg = defaults();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (default_values().count(key) == 0) throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  try {
    return std::stod(str(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number: " + str(key));
  }
}

int RunConfig::integer(const std::string& key) const {
  const double v = number(key);
  return static_cast<int>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config key " + key + " is not a flag: " + v);
}

std::string RunConfig::canonical_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
  return out.str();
}

uint64_t RunConfig::digest() const { return fnv1a64(canonical_text()); }

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.d_model = integer("d_model");
  m.heads = integer("heads");
  m.n_agent_tokens = integer("n_agent_tokens");
  m.k = integer("k");
  m.token_layers = integer("token_layers");
  m.conv_c1 = integer("conv_c1");
  m.conv_c2 = integer("conv_c2");
  m.point_enc_dim = integer("point_enc_dim");
  m.diffusion_steps = integer("diffusion_steps");
  m.beta_lo = number("beta_lo");
  m.beta_hi = number("beta_hi");
  m.t_start = integer("t_start");
  m.coord_norm = number("coord_norm");
  m.deform_points = integer("deform_points");
  m.region_cell_cap = integer("region_cell_cap");
  m.use_refiner = flag("use_refiner");
  m.use_proposal = flag("use_proposal");
  m.use_fgsim = flag("use_fgsim");
  m.use_modulation = flag("use_modulation");
  m.num_classes = integer("num_classes");
  const std::string& prec = str("precision");
  if (prec == "f32") m.precision = Precision::f32r;
  else if (prec == "f64") m.precision = Precision::f64;
  else throw ConfigError("precision must be f32 or f64, got " + prec);
  return m;
}

GenConfig RunConfig::gen() const {
  GenConfig g;
  g.lane_width = number("lane_width");
  g.min_agents = integer("gen_min_agents");
  g.max_agents = integer("gen_max_agents");
  g.cruise_min = number("cruise_min");
  g.cruise_max = number("cruise_max");
  g.families.clear();
  std::istringstream in(str("gen_families"));
  std::string token;
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (token == "straight") g.families.push_back(SceneFamily::kStraight);
    else if (token == "curve") g.families.push_back(SceneFamily::kCurve);
    else if (token == "tee") g.families.push_back(SceneFamily::kTee);
    else if (token == "lead") g.families.push_back(SceneFamily::kLeadVehicle);
    else if (token == "pedestrian") g.families.push_back(SceneFamily::kCrossingPedestrian);
    else if (!token.empty()) throw ConfigError("unknown scene family: " + token);
  }
  if (g.families.empty()) throw ConfigError("gen_families is empty");
  return g;
}

TrainSettings RunConfig::train() const {
  TrainSettings t;
  t.epochs_stage1 = integer("epochs_stage1");
  t.epochs_stage2 = integer("epochs_stage2");
  t.batch_size = integer("batch_size");
  t.freeze_perception = flag("freeze_perception");
  t.opt.lr = number("lr");
  t.opt.weight_decay = number("weight_decay");
  t.weights.w_seg = number("w_seg");
  t.weights.w_type = number("w_type");
  t.weights.w_box = number("w_box");
  t.weights.w_cls = number("w_cls");
  t.weights.w_reg = number("w_reg");
  t.weights.w_pro = number("w_pro");
  t.weights.w_ref = number("w_ref");
  t.weights.w_perc = number("w_perc");
  return t;
}

EvalSettings RunConfig::eval() const {
  EvalSettings e;
  e.ec_threshold = number("ec_threshold");
  e.replan_period = number("replan_period");
  e.episode_horizon = number("episode_horizon");
  return e;
}

}  // namespace bevplan
