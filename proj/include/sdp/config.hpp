#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value configuration. Precedence: built-in defaults, then a config
// file, then --set overrides. Unknown keys are rejected by name so typos fail
// loudly instead of silently falling back to a default.
class RunConfig {
 public:
  RunConfig();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  // Full effective configuration, typed, sorted by key. Embedded verbatim in
  // every artifact header so artifacts can be regenerated from themselves.
  nlohmann::json to_json() const;

  static const std::vector<std::string>& known_keys();

 private:
  enum class Kind { Double, Int, U64, Bool, String, IntList };
  struct Spec {
    Kind kind;
    std::string def;
  };
  static const std::map<std::string, Spec>& specs();

  void validate(const std::string& key, const std::string& value) const;

  std::map<std::string, std::string> values_;
};

}  // namespace sdp
