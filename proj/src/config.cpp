#include "sdp/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace sdp {

const std::map<std::string, RunConfig::Spec>& RunConfig::specs() {
  using K = Kind;
  static const std::map<std::string, Spec> s = {
      {"seed", {K::U64, "0"}},

      {"env.l1", {K::Double, "0.5"}},
      {"env.l2", {K::Double, "0.5"}},
      {"env.m1", {K::Double, "1.0"}},
      {"env.m2", {K::Double, "1.0"}},
      {"env.damping", {K::Double, "0.3"}},
      {"env.dt", {K::Double, "0.05"}},
      {"env.vel_clamp", {K::Double, "2.0"}},
      {"env.annulus_min", {K::Double, "0.2"}},
      {"env.annulus_max", {K::Double, "1.0"}},
      {"env.max_steps", {K::Int, "100"}},
      {"env.tolerance", {K::Double, "0.3"}},

      {"cbf.center_x", {K::Double, "0.5"}},
      {"cbf.center_y", {K::Double, "0.5"}},
      {"cbf.radius", {K::Double, "0.25"}},
      {"cbf.lambda", {K::Double, "0.99"}},

      {"collect.episodes", {K::Int, "300"}},
      {"collect.steps", {K::Int, "100"}},

      {"diff.K", {K::Int, "50"}},
      {"diff.mode", {K::String, "signal"}},
      {"diff.cosine_s", {K::Double, "0.008"}},
      {"diff.beta_clip", {K::Double, "0.999"}},
      {"diff.gamma", {K::Double, "0.997"}},

      {"model.backbone", {K::String, "conv"}},
      {"model.blocks", {K::Int, "3"}},
      {"model.channels", {K::IntList, "16,32,16"}},
      {"model.kernel", {K::Int, "5"}},
      {"model.emb_dim", {K::Int, "32"}},
      {"model.mlp_hidden", {K::Int, "256"}},

      {"train.steps", {K::Int, "20000"}},
      {"train.batch", {K::Int, "32"}},
      {"train.lr", {K::Double, "2e-4"}},
      {"train.weight_decay", {K::Double, "1e-4"}},
      {"train.seed", {K::U64, "0"}},
      {"train.holdout_frac", {K::Double, "0.1"}},
      {"train.log_every", {K::Int, "100"}},
      {"train.eval_windows", {K::Int, "512"}},

      {"plan.batch", {K::Int, "64"}},
      {"plan.horizon", {K::Int, "16"}},
      {"plan.eta1", {K::Double, "0.001"}},
      {"plan.eta2", {K::Double, "5.0"}},
      {"plan.mode", {K::String, "combined"}},
      {"plan.grad_point", {K::String, "mean"}},
      {"plan.inpaint_tail", {K::Bool, "false"}},
      {"plan.svg_count", {K::Int, "8"}},

      {"eval.episodes", {K::Int, "20"}},
      {"eval.seeds", {K::Int, "3"}},
      {"eval.target_mode", {K::String, "any"}},
      {"eval.near_factor", {K::Double, "1.5"}},
  };
  return s;
}

RunConfig::RunConfig() {
  for (const auto& [key, spec] : specs()) values_[key] = spec.def;
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, spec] : specs()) k.push_back(key);
    return k;
  }();
  return keys;
}

void RunConfig::validate(const std::string& key, const std::string& value) const {
  auto it = specs().find(key);
  if (it == specs().end()) throw ConfigError("unknown config key: " + key);
  const char* b = value.data();
  const char* e = b + value.size();
  switch (it->second.kind) {
    case Kind::Double: {
      try {
        std::size_t pos = 0;
        (void)std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a number: '" + value + "'");
      }
      break;
    }
    case Kind::Int: {
      int v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e)
        throw ConfigError("config key " + key + ": not an integer: '" + value + "'");
      break;
    }
    case Kind::U64: {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e)
        throw ConfigError("config key " + key + ": not a u64: '" + value + "'");
      break;
    }
    case Kind::Bool: {
      if (value != "true" && value != "false")
        throw ConfigError("config key " + key + ": expected true/false, got '" + value + "'");
      break;
    }
    case Kind::IntList: {
      std::stringstream ss(value);
      std::string item;
      bool any = false;
      while (std::getline(ss, item, ',')) {
        int v = 0;
        auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || p != item.data() + item.size())
          throw ConfigError("config key " + key + ": bad integer list: '" + value + "'");
        any = true;
      }
      if (!any) throw ConfigError("config key " + key + ": empty list");
      break;
    }
    case Kind::String:
      break;
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  validate(key, value);
  values_[key] = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.erase(0, 1);
    set(key, value);
  }
}

double RunConfig::get_double(const std::string& key) const {
  return std::stod(values_.at(key));
}

int RunConfig::get_int(const std::string& key) const {
  return std::stoi(values_.at(key));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return std::stoull(values_.at(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  return values_.at(key) == "true";
}

const std::string& RunConfig::get_string(const std::string& key) const {
  return values_.at(key);
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(values_.at(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  for (const auto& [key, value] : values_) {
    switch (specs().at(key).kind) {
      case Kind::Double:
        j[key] = std::stod(value);
        break;
      case Kind::Int:
        j[key] = std::stoi(value);
        break;
      case Kind::U64:
        j[key] = std::stoull(value);
        break;
      case Kind::Bool:
        j[key] = (value == "true");
        break;
      default:
        j[key] = value;
        break;
    }
  }
  return j;
}

}  // namespace sdp
