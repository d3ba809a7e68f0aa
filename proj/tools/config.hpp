#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpm/gmm.hpp"
#include "dpm/model.hpp"
#include "dpm/simulation.hpp"

namespace dpm::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct KeyInfo {
  const char* key;
  const char* fallback;
  const char* doc;
};

// every accepted key with its default, in manifest order
const std::vector<KeyInfo>& known_keys();

// Plain `key = value` lines; '#' starts a comment. Unknown keys and
// duplicates are errors.
class Config {
 public:
  Config();
  static Config parse(std::istream& in, const std::string& origin);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool explicitly_set(const std::string& key) const { return explicit_.count(key) > 0; }

  int get_int(const std::string& key) const;
  long long get_long(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated, empty -> {}
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  // resolved key = value lines in known_keys() order
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

ModelSpec model_spec(const Config& cfg);
// theta from a comma-separated flat list (gamma then beta); empty -> fallback
Theta parse_theta(const ModelSpec& spec, const std::string& text, const Theta& fallback);
Design design_of(const Config& cfg, const ModelSpec& spec);
EstimateConfig estimate_config(const Config& cfg, const ModelSpec& spec, EstimatorKind kind);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

} // namespace dpm::cli
