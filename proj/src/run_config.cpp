#include "swinseg3d/run_config.hpp"

#include <fstream>
#include <sstream>

#include "swinseg3d/text.hpp"

namespace swinseg3d {

namespace {

std::vector<std::pair<std::string, std::string>> synth_entries(const SynthSpec& s) {
  return {{"synth_depth", std::to_string(s.depth)},
          {"synth_height", std::to_string(s.height)},
          {"synth_width", std::to_string(s.width)},
          {"lesions_min", std::to_string(s.lesions_min)},
          {"lesions_max", std::to_string(s.lesions_max)},
          {"radius_min", format_double(s.radius_min)},
          {"radius_max", format_double(s.radius_max)},
          {"pet_hot_min", format_double(s.pet_hot_min)},
          {"pet_hot_max", format_double(s.pet_hot_max)},
          {"pet_background", format_double(s.pet_background)},
          {"ct_base", format_double(s.ct_base)},
          {"ct_gradient", format_double(s.ct_gradient)},
          {"ct_noise", format_double(s.ct_noise)},
          {"synth_seed", std::to_string(s.seed)}};
}

bool apply_synth(SynthSpec& s, const std::string& k, const std::string& v) {
  if (k == "synth_depth") s.depth = parse_size(v, k);
  else if (k == "synth_height") s.height = parse_size(v, k);
  else if (k == "synth_width") s.width = parse_size(v, k);
  else if (k == "lesions_min") s.lesions_min = parse_size(v, k);
  else if (k == "lesions_max") s.lesions_max = parse_size(v, k);
  else if (k == "radius_min") s.radius_min = parse_double(v, k);
  else if (k == "radius_max") s.radius_max = parse_double(v, k);
  else if (k == "pet_hot_min") s.pet_hot_min = parse_double(v, k);
  else if (k == "pet_hot_max") s.pet_hot_max = parse_double(v, k);
  else if (k == "pet_background") s.pet_background = parse_double(v, k);
  else if (k == "ct_base") s.ct_base = parse_double(v, k);
  else if (k == "ct_gradient") s.ct_gradient = parse_double(v, k);
  else if (k == "ct_noise") s.ct_noise = parse_double(v, k);
  else if (k == "synth_seed") s.seed = parse_u64(v, k);
  else return false;
  return true;
}

bool apply_run(RunConfig& c, const std::string& k, const std::string& v) {
  if (k == "data_dir") c.data_dir = v;
  else if (k == "out_dir") c.out_dir = v;
  else if (k == "synth_count") c.synth_count = parse_size(v, k);
  else if (k == "timing_runs") c.timing_runs = parse_size(v, k);
  else return c.model.apply(k, v) || c.train.apply(k, v) || apply_synth(c.synth, k, v);
  return true;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
  synth.seed = seed;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (synth.lesions_min > synth.lesions_max) throw ConfigError("lesions_min exceeds lesions_max");
  if (synth.radius_min > synth.radius_max) throw ConfigError("radius_min exceeds radius_max");
  if (timing_runs == 0) throw ConfigError("timing_runs must be >= 1");
}

bool RunConfig::operator==(const RunConfig& o) const { return serialize_run_config(*this) == serialize_run_config(o); }

std::uint64_t case_seed(std::uint64_t seed, std::size_t index) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) + 1;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (!apply_run(cfg, key, value)) throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  auto section = [&](const char* title, const std::vector<std::pair<std::string, std::string>>& entries) {
    os << "# " << title << '\n';
    for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  };
  section("model", cfg.model.to_entries());
  section("training", cfg.train.to_entries());
  section("synthetic data", synth_entries(cfg.synth));
  section("run",
          {{"data_dir", cfg.data_dir},
           {"out_dir", cfg.out_dir},
           {"synth_count", std::to_string(cfg.synth_count)},
           {"timing_runs", std::to_string(cfg.timing_runs)}});
  return os.str();
}

}  // namespace swinseg3d
