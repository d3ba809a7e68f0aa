#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "dpm/counterfactual.hpp"
#include "dpm/oracle.hpp"
#include "dpm/parallel.hpp"
#include "dpm/simulation.hpp"

namespace dpm::cli {

namespace fs = std::filesystem;

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate", "estimate", "verify", "count", "ame", "montecarlo"};
  return names;
}

namespace {

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VerificationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string pad(const std::string& s, size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

fs::path output_dir(const Config& cfg) {
  const fs::path dir = cfg.get("output.dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg) {
  write_file(dir / "manifest.txt", "# dpm " + command + "\n" + cfg.dump());
}

void apply_threads(const Config& cfg) {
  const int n = cfg.get_int("threads");
  if (n < 0) throw ConfigError("threads must be >= 0");
  if (n > 0) set_thread_count(n);
}

EstimatorKind estimator_kind(const std::string& s) {
  try {
    return parse_estimator(s);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("estimator: ") + e.what());
  }
}

std::string theta_block(const ModelSpec& spec, const std::string& prefix, const Eigen::VectorXd& v) {
  std::ostringstream o;
  const auto names = spec.param_names();
  for (size_t j = 0; j < names.size(); ++j) o << prefix << names[j] << " = " << format_double(v[j]) << "\n";
  return o.str();
}

} // namespace

Dataset load_data(const Config& cfg, const ModelSpec& spec) {
  const std::string input = cfg.get("data.input");
  if (!input.empty()) return read_panel_file(input, spec);
  return simulate(design_of(cfg, spec));
}

int cmd_simulate(const Config& cfg, std::ostream& out) {
  apply_threads(cfg);
  const ModelSpec spec = model_spec(cfg);
  const Design d = design_of(cfg, spec);
  const Dataset data = simulate(d);
  const fs::path dir = output_dir(cfg);
  std::ostringstream csv;
  write_panel(csv, data);
  write_file(dir / "data.csv", csv.str());
  write_file(dir / "truth.txt", theta_block(spec, "theta.", d.theta.flat()));
  write_manifest(dir, "simulate", cfg);
  out << "simulated " << data.units.size() << " units (" << family_name(spec.family) << ", T=" << spec.T << ") -> "
      << (dir / "data.csv").string() << "\n";
  return kOk;
}

int cmd_estimate(const Config& cfg, std::ostream& out) {
  apply_threads(cfg);
  const ModelSpec spec = model_spec(cfg);
  const EstimateConfig ec = estimate_config(cfg, spec, estimator_kind(cfg.get("estimator.kind")));
  const Dataset data = load_data(cfg, spec);
  const GmmResult res = estimate(data, ec);

  std::ostringstream r;
  r << "estimator = " << estimator_name(res.kind) << "\n";
  r << "converged = " << (res.converged ? "true" : "false") << "\n";
  r << "message = " << res.message << "\n";
  r << "units = " << res.n_units << "\n";
  r << "moment_functions = " << res.ids.size() << "\n";
  r << "instruments = " << ec.instruments.to_string() << "\n";
  r << "objective = " << format_double(res.objective) << "\n";
  r << "iterations = " << res.iterations << "\n";
  r << "rounds = " << res.rounds << "\n";
  r << "weight_condition = " << format_double(res.weight_condition) << "\n";
  r << theta_block(spec, "theta.", res.theta_flat);
  if (res.has_covariance) {
    r << theta_block(spec, "se.", res.cov.se);
    r << "covariance.rank = " << res.cov.rank << "\n";
    r << "covariance.pseudo_inverse = " << (res.cov.pseudo_inverse ? "true" : "false") << "\n";
    const auto names = spec.param_names();
    for (size_t i = 0; i < names.size(); ++i)
      for (size_t j = 0; j < names.size(); ++j)
        r << "cov." << names[i] << "." << names[j] << " = " << format_double(res.cov.covariance(i, j)) << "\n";
  }
  for (size_t i = 0; i < res.warnings.size(); ++i) r << "warning." << i + 1 << " = " << res.warnings[i] << "\n";

  const fs::path dir = output_dir(cfg);
  write_file(dir / "results.txt", r.str());
  write_manifest(dir, "estimate", cfg);

  out << estimator_name(res.kind) << " GMM, N=" << res.n_units << ", " << res.ids.size() << " moment functions x "
      << ec.instruments.size() << " instruments\n";
  out << pad("parameter", 14) << pad("estimate", 14) << "se\n";
  const auto names = spec.param_names();
  for (size_t j = 0; j < names.size(); ++j)
    out << pad(names[j], 14) << pad(fixed(res.theta_flat[j]), 14)
        << (res.has_covariance ? fixed(res.cov.se[j]) : std::string("-")) << "\n";
  out << "objective " << sci(res.objective) << ", " << res.iterations << " iterations, " << res.message << "\n";
  for (const auto& w : res.warnings) out << "warning: " << w << "\n";
  if (!res.converged) throw NotConverged(res.message);
  return kOk;
}

int cmd_verify(const Config& cfg, std::ostream& out) {
  apply_threads(cfg);
  const ModelSpec spec = model_spec(cfg);
  const int draws = cfg.get_int("verify.draws");
  if (draws < 1) throw ConfigError("verify.draws must be at least 1");
  std::ostringstream r;
  bool ok = true;
  auto line = [&](const std::string& name, double value, double tol) {
    const bool pass = value < tol;
    ok = ok && pass;
    r << pad(name, 34) << sci(value) << "  (< " << sci(tol) << ") " << (pass ? "ok" : "FAIL") << "\n";
  };

  const auto ids = enumerate_moments(spec);
  r << "model " << family_name(spec.family) << " T=" << spec.T << "\n";
  r << "moment functions " << ids.size();
  const long long formula = moment_count_formula(spec);
  if (formula >= 0) {
    r << " (closed form " << formula << ")";
    ok = ok && formula == (long long)ids.size();
  }
  r << "\n";
  if (!ids.empty()) {
    const SweepReport s = validity_sweep(spec, draws, cfg.get_u64("seed"));
    line("max |E[psi | y0, x, a]|", s.max_moment, 1e-10);
    line("max |E[phi or zeta] - pi|", s.max_transition, 1e-10);
    r << "  worst moment " << s.worst_moment << ", worst chain " << s.worst_chain << "\n";
  }
  if (spec.family == Family::ARP) {
    r << "rank table (p T expected rank nullity)\n";
    for (const auto& c : cfg.get_list("verify.rank_cases")) {
      const auto pt = split(c, ':');
      if (pt.size() != 2) throw ConfigError("verify.rank_cases entries look like p:T");
      ModelSpec rs;
      try {
        rs = ModelSpec::arp(std::stoi(pt[0]), std::stoi(pt[1]), 1);
        rs.check();
      } catch (const std::exception& e) {
        throw ConfigError("verify.rank_cases entry '" + c + "': " + e.what());
      }
      const auto [th, u] = spread_design(rs);
      const RankReport rep = rank_of_image(rs, th, u);
      const bool match = rep.rank == rep.expected_rank;
      ok = ok && match;
      r << "  " << rs.p << " " << rs.T << " " << rep.expected_rank << " " << rep.rank << " " << rep.nullity << " "
        << (match ? "ok" : "FAIL") << "\n";
    }
  }
  line("partial-fraction identities", check_partial_fractions(cfg.get_int("verify.pf_trials"), cfg.get_u64("seed")),
       1e-12);
  r << (ok ? "all checks passed" : "some checks FAILED") << "\n";

  const fs::path dir = output_dir(cfg);
  write_file(dir / "verify.txt", r.str());
  write_manifest(dir, "verify", cfg);
  out << r.str();
  if (!ok) throw VerificationFailed("see verify.txt");
  return kOk;
}

int cmd_count(const Config& cfg, std::ostream& out) {
  const ModelSpec spec = model_spec(cfg);
  const auto ids = enumerate_moments(spec);
  std::ostringstream r;
  r << ids.size() << "\n";
  for (const auto& id : ids) r << id.label() << "\n";
  const fs::path dir = output_dir(cfg);
  write_file(dir / "count.txt", r.str());
  write_manifest(dir, "count", cfg);
  out << r.str();
  return kOk;
}

int cmd_ame(const Config& cfg, std::ostream& out) {
  apply_threads(cfg);
  const ModelSpec spec = model_spec(cfg);
  const Dataset data = load_data(cfg, spec);

  Theta th;
  Eigen::MatrixXd cov;
  const Eigen::MatrixXd* covp = nullptr;
  std::string source;
  if (!trim(cfg.get("counterfactual.theta")).empty()) {
    th = parse_theta(spec, cfg.get("counterfactual.theta"), Theta::zeros(spec));
    source = "given";
  } else {
    const EstimateConfig ec = estimate_config(cfg, spec, estimator_kind(cfg.get("estimator.kind")));
    const GmmResult res = estimate(data, ec);
    if (!res.converged) throw NotConverged(res.message);
    th = res.theta;
    if (res.has_covariance) {
      cov = res.cov.covariance;
      covp = &cov;
    }
    source = estimator_name(res.kind) + " estimate";
  }

  Subpopulation sub;
  const auto y0 = cfg.get_ints("counterfactual.y0");
  if (!y0.empty()) sub.y0 = y0;
  std::vector<int> periods = cfg.get_ints("counterfactual.periods");
  if (periods.empty())
    for (int t = spec.lags(); t <= spec.T - 1; ++t) periods.push_back(t);
  const auto rest = cfg.get_ints("counterfactual.rest");

  std::ostringstream r;
  r << "# counterfactuals at the " << source << ", subpopulation " << sub.describe() << "\n";
  r << theta_block(spec, "theta.", th.flat());
  auto row = [&](const std::string& key, const AverageEstimate& e) {
    r << key << " = " << format_double(e.value) << "\n";
    r << key << ".se = " << format_double(e.se_total) << "\n";
    r << key << ".n = " << e.n << "\n";
    out << pad(key, 34) << pad(fixed(e.value), 12) << fixed(e.se_total) << "\n";
  };
  out << pad("quantity", 34) << pad("value", 12) << "se\n";

  auto state_key = [](const std::vector<int>& s) {
    std::string o;
    for (size_t i = 0; i < s.size(); ++i) o += (i ? "_" : "") + std::to_string(s[i]);
    return o;
  };
  for (int t : periods) {
    if (spec.family == Family::ARP) {
      row("ame.t" + std::to_string(t), ame(data, th, sub, t, rest, covp));
      for (int code = 0; code < (1 << spec.p); ++code) {
        std::vector<int> from(spec.p);
        for (int b = 0; b < spec.p; ++b) from[b] = (code >> (spec.p - 1 - b)) & 1;
        row("prob1.t" + std::to_string(t) + ".from_" + state_key(from),
            average_transition_probability(data, th, sub, TransitionState{from, 1, t}, covp));
      }
    } else {
      for (int k = 0; k < spec.support(); ++k)
        row("stay.t" + std::to_string(t) + ".state_" + std::to_string(k),
            average_transition_probability(data, th, sub, TransitionState{{k}, k, t}, covp));
    }
  }

  const auto path = cfg.get_ints("counterfactual.path");
  if (!path.empty()) {
    const auto from = cfg.get_ints("counterfactual.from");
    const int start = trim(cfg.get("counterfactual.start")).empty() ? spec.lags() : cfg.get_int("counterfactual.start");
    const PanelUnit* first = nullptr;
    for (const auto& u : data.units)
      if (sub.matches(spec, u)) {
        first = &u;
        break;
      }
    if (!first) throw DomainError("empty subpopulation (" + sub.describe() + ")");
    const PartialFractionPlan plan = plan_multiperiod(spec, th, start, from, path, *first);
    row("path.t" + std::to_string(start) + ".from_" + state_key(from) + ".to_" + state_key(path),
        multiperiod_average(data, th, plan, sub, true));
  }

  const fs::path dir = output_dir(cfg);
  write_file(dir / "counterfactual.txt", r.str());
  write_manifest(dir, "ame", cfg);
  return kOk;
}

int cmd_montecarlo(const Config& cfg, std::ostream& out) {
  apply_threads(cfg);
  const ModelSpec spec = model_spec(cfg);
  const Design design = design_of(cfg, spec);
  const int reps = cfg.get_int("montecarlo.reps");
  if (reps < 1) throw ConfigError("montecarlo.reps must be at least 1");
  std::vector<EstimatorRun> runs;
  for (const auto& name : cfg.get_list("montecarlo.estimators")) {
    EstimatorRun er;
    er.name = name;
    er.config = estimate_config(cfg, spec, estimator_kind(name));
    runs.push_back(er);
  }
  if (runs.empty()) throw ConfigError("montecarlo.estimators is empty");
  const MonteCarloResult mc = monte_carlo(design, runs, reps, cfg.get_u64("seed"));

  const fs::path dir = output_dir(cfg);
  const auto names = spec.param_names();
  std::ostringstream t;
  t << "# Performance of GMM estimators: " << family_name(spec.family) << ", T=" << spec.T << ", N=" << design.N
    << ", reps=" << reps << "\n";
  t << pad("parameter", 14) << pad("truth", 10);
  for (const auto& e : mc.estimators) t << pad(e.name + ".bias", 18) << pad(e.name + ".mae", 18);
  t << "\n";
  for (size_t j = 0; j < names.size(); ++j) {
    t << pad(names[j], 14) << pad(fixed(mc.estimators[0].params[j].truth, 3), 10);
    for (const auto& e : mc.estimators)
      t << pad(fixed(e.params[j].median_bias, 4), 18) << pad(fixed(e.params[j].mae, 4), 18);
    t << "\n";
  }
  t << pad("convergence", 24);
  for (const auto& e : mc.estimators) t << pad(fixed(e.convergence, 3), 36);
  t << "\n";
  write_file(dir / "montecarlo.txt", t.str());
  out << t.str();

  const int points = cfg.get_int("montecarlo.density_points");
  for (const auto& e : mc.estimators) {
    std::ostringstream est;
    est << "rep,converged";
    for (const auto& n : names) est << "," << n;
    est << "\n";
    for (size_t r = 0; r < e.estimates.size(); ++r) {
      est << r + 1 << "," << (e.ok[r] ? 1 : 0);
      for (Eigen::Index j = 0; j < e.estimates[r].size(); ++j) est << "," << format_double(e.estimates[r][j]);
      est << "\n";
    }
    write_file(dir / ("estimates_" + e.name + ".csv"), est.str());
    for (size_t j = 0; j < names.size(); ++j) {
      std::vector<double> v;
      for (size_t r = 0; r < e.estimates.size(); ++r)
        if (e.ok[r]) v.push_back(e.estimates[r][j]);
      std::ostringstream dens;
      dens << "x,y\n";
      for (const auto& [x, y] : kernel_density(v, points)) dens << format_double(x) << "," << format_double(y) << "\n";
      write_file(dir / ("density_" + e.name + "_" + names[j] + ".csv"), dens.str());
    }
  }
  write_manifest(dir, "montecarlo", cfg);
  return kOk;
}

int run_command(const std::string& name, const Config& cfg, std::ostream& out, std::ostream& err) {
  auto fail = [&](const std::string& cls, const std::string& msg, int code) {
    std::string one = msg;
    for (char& c : one)
      if (c == '\n' || c == '\r') c = ' ';
    err << "error: " << cls << ": " << one << "\n";
    return code;
  };
  try {
    if (name == "simulate") return cmd_simulate(cfg, out);
    if (name == "estimate") return cmd_estimate(cfg, out);
    if (name == "verify") return cmd_verify(cfg, out);
    if (name == "count") return cmd_count(cfg, out);
    if (name == "ame" || name == "counterfactual") return cmd_ame(cfg, out);
    if (name == "montecarlo") return cmd_montecarlo(cfg, out);
    return fail("ConfigError", "unknown command '" + name + "'", kConfigError);
  } catch (const ConfigError& e) {
    return fail("ConfigError", e.what(), kConfigError);
  } catch (const DataError& e) {
    return fail("DataError", e.what(), kDataError);
  } catch (const IndexCollision& e) {
    return fail("IndexCollision", e.what(), kFailure);
  } catch (const DimensionError& e) {
    return fail("DimensionError", e.what(), kConfigError);
  } catch (const DomainError& e) {
    return fail("DomainError", e.what(), kConfigError);
  } catch (const NotConverged& e) {
    return fail("NotConverged", e.what(), kNotConverged);
  } catch (const VerificationFailed& e) {
    return fail("VerificationFailed", e.what(), kFailure);
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), kFailure);
  }
}

} // namespace dpm::cli
