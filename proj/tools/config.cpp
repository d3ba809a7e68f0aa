#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dpm::cli {

const std::vector<KeyInfo>& known_keys() {
  static const std::vector<KeyInfo> keys = {
      {"model.family", "arp", "arp | var1 | mar1 | net3"},
      {"model.p", "1", "lag order (arp)"},
      {"model.T", "3", "observed periods after the initial block"},
      {"model.M", "2", "layers (var1)"},
      {"model.C", "2", "non-reference alternatives (mar1)"},
      {"model.Kx", "1", "covariates per layer and period"},
      {"seed", "1", "master seed for simulation, sweeps and Monte Carlo"},
      {"threads", "0", "worker threads, 0 = DPM_THREADS or 1"},
      {"data.input", "", "panel CSV; empty = simulate from the design block"},
      {"data.design", "default", "default | ar3 | var1 (the last two fix the model block)"},
      {"data.N", "1000", "simulated units"},
      {"data.theta", "", "true parameter for simulation, flat gamma then beta; empty = design default"},
      {"data.effect", "covariate_sum", "covariate_sum | constant | none"},
      {"data.effect_value", "0", "fixed effect for data.effect = constant"},
      {"moments.prune", "1", "drop moments that are zero for more than this fraction of units"},
      {"instruments.atoms", "const", "const, y0:i[..j], x:layer:k:t[..t2], custom:name"},
      {"estimator.kind", "rescaled", "identity | rescaled | iterated"},
      {"estimator.theta0", "", "starting value, flat gamma then beta; empty = zeros"},
      {"estimator.gtol", "1e-8", "gradient infinity-norm tolerance"},
      {"estimator.xtol", "1e-10", "step infinity-norm tolerance"},
      {"estimator.ftol", "0", "relative objective decrease over 3 iterations; 0 = off"},
      {"estimator.max_iter", "500", "optimizer iterations per round"},
      {"estimator.max_outer", "50", "weight updates (iterated)"},
      {"estimator.outer_tol", "1e-4", "parameter change that ends the iterated rounds"},
      {"estimator.variance", "true", "compute sandwich standard errors"},
      {"verify.draws", "20", "random (theta, a, x, y0) draws for the validity sweep"},
      {"verify.rank_cases", "1:3,1:4,1:5,2:4,2:5,3:5,2:3,3:4", "p:T pairs for the rank table (arp)"},
      {"verify.pf_trials", "1000", "random trials for the partial-fraction identities"},
      {"counterfactual.theta", "", "parameter for the counterfactuals; empty = estimate first"},
      {"counterfactual.periods", "", "periods t for the marginal effects; empty = every valid t"},
      {"counterfactual.rest", "", "older lags (p-1 values) for the marginal effects"},
      {"counterfactual.y0", "", "restrict to units with this initial block; empty = all"},
      {"counterfactual.path", "", "multi-period target path k_1..k_s; empty = skip"},
      {"counterfactual.from", "", "origin lags for the path, most recent first"},
      {"counterfactual.start", "", "period t of the path origin; empty = p"},
      {"montecarlo.reps", "100", "replications"},
      {"montecarlo.estimators", "identity,rescaled", "estimators compared on every replication"},
      {"montecarlo.density_points", "101", "grid points of the estimate densities"},
      {"output.dir", "out", "directory for every written file"},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

Config::Config() {
  for (const auto& k : known_keys()) values_[k.key] = k.fallback;
}

Config Config::parse(std::istream& in, const std::string& origin) {
  Config c;
  std::string line;
  int no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (seen.count(key))
      throw ConfigError(origin + ":" + std::to_string(no) + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(seen[key]) + ")");
    seen[key] = no;
    try {
      c.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

void Config::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = value;
  explicit_[key] = true;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  const auto r = std::from_chars(b, e, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != e)
    throw ConfigError("key '" + key + "': '" + text + "' is not a valid number");
  return v;
}

} // namespace

int Config::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
long long Config::get_long(const std::string& key) const { return parse_number<long long>(key, get(key)); }
std::uint64_t Config::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
double Config::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  const std::string& v = get(key);
  if (trim(v).empty()) return {};
  return split(v, ',');
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) out.push_back(parse_number<double>(key, s));
  return out;
}

std::vector<int> Config::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : get_list(key)) out.push_back(parse_number<int>(key, s));
  return out;
}

std::string Config::dump() const {
  std::ostringstream o;
  for (const auto& k : known_keys()) o << k.key << " = " << values_.at(k.key) << "\n";
  return o.str();
}

ModelSpec model_spec(const Config& cfg) {
  const std::string design = cfg.get("data.design");
  if (design == "ar3") return ModelSpec::arp(3, 5, 1);
  if (design == "var1") return ModelSpec::var1(2, 3, 1);
  if (design != "default") throw ConfigError("data.design must be default, ar3 or var1");
  Family f;
  try {
    f = parse_family(cfg.get("model.family"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model.family: ") + e.what());
  }
  ModelSpec spec;
  const int T = cfg.get_int("model.T"), Kx = cfg.get_int("model.Kx");
  try {
    switch (f) {
      case Family::ARP: spec = ModelSpec::arp(cfg.get_int("model.p"), T, Kx); break;
      case Family::VAR1: spec = ModelSpec::var1(cfg.get_int("model.M"), T, Kx); break;
      case Family::MAR1: spec = ModelSpec::mar1(cfg.get_int("model.C"), T, Kx); break;
      case Family::NET3: spec = ModelSpec::net3(T, Kx); break;
    }
    spec.check();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model block: ") + e.what());
  }
  return spec;
}

Theta parse_theta(const ModelSpec& spec, const std::string& text, const Theta& fallback) {
  if (trim(text).empty()) return fallback;
  const auto parts = split(text, ',');
  if ((int)parts.size() != spec.n_theta())
    throw ConfigError("parameter list has " + std::to_string(parts.size()) + " values, the model needs " +
                      std::to_string(spec.n_theta()));
  Eigen::VectorXd v(spec.n_theta());
  for (size_t i = 0; i < parts.size(); ++i) v[i] = parse_number<double>("theta", parts[i]);
  return Theta::from_flat(spec, v);
}

Design design_of(const Config& cfg, const ModelSpec& spec) {
  const long long N = cfg.get_long("data.N");
  const std::uint64_t seed = cfg.get_u64("seed");
  const std::string name = cfg.get("data.design");
  Design d = name == "ar3" ? ar3_design(N, seed) : name == "var1" ? var1_design(N, seed) : default_design(spec, N, seed);
  d.theta = parse_theta(spec, cfg.get("data.theta"), d.theta);
  const std::string eff = cfg.get("data.effect");
  if (eff == "covariate_sum") d.effect = EffectRule::CovariateSum;
  else if (eff == "constant") d.effect = EffectRule::Constant;
  else if (eff == "none") d.effect = EffectRule::None;
  else throw ConfigError("data.effect must be covariate_sum, constant or none");
  d.effect_value = cfg.get_double("data.effect_value");
  if (N < 1) throw ConfigError("data.N must be at least 1");
  return d;
}

EstimateConfig estimate_config(const Config& cfg, const ModelSpec& spec, EstimatorKind kind) {
  EstimateConfig ec;
  ec.kind = kind;
  try {
    ec.instruments = InstrumentSpec::parse(cfg.get("instruments.atoms"));
    ec.instruments.check(spec);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("instruments.atoms: ") + e.what());
  }
  if (!trim(cfg.get("estimator.theta0")).empty())
    ec.theta0 = parse_theta(spec, cfg.get("estimator.theta0"), Theta::zeros(spec));
  ec.optim.gtol = cfg.get_double("estimator.gtol");
  ec.optim.xtol = cfg.get_double("estimator.xtol");
  ec.optim.ftol = cfg.get_double("estimator.ftol");
  ec.optim.max_iter = cfg.get_int("estimator.max_iter");
  ec.max_outer = cfg.get_int("estimator.max_outer");
  ec.outer_tol = cfg.get_double("estimator.outer_tol");
  ec.prune_threshold = cfg.get_double("moments.prune");
  ec.compute_variance = cfg.get_bool("estimator.variance");
  if (ec.optim.max_iter < 1 || ec.max_outer < 1) throw ConfigError("iteration limits must be positive");
  return ec;
}

} // namespace dpm::cli
