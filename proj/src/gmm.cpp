#include "dpm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>

#include "dpm/oracle.hpp"
#include "dpm/parallel.hpp"

namespace dpm {

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}
std::map<std::string, InstrumentFn>& registry() {
  static std::map<std::string, InstrumentFn> r;
  return r;
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
  return out;
}

int to_int(const std::string& s, const std::string& atom) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DomainError("bad instrument atom '" + atom + "'");
  }
}

// "a..b" -> [a, b]; plain "a" -> [a, a]
std::pair<int, int> range_of(const std::string& s, const std::string& atom) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) {
    const int v = to_int(s, atom);
    return {v, v};
  }
  const int a = to_int(s.substr(0, dots), atom), b = to_int(s.substr(dots + 2), atom);
  if (b < a) throw DomainError("empty range in instrument atom '" + atom + "'");
  return {a, b};
}

int initial_components(const ModelSpec& spec) {
  switch (spec.family) {
    case Family::ARP: return spec.p;
    case Family::VAR1:
    case Family::NET3: return spec.M;
    case Family::MAR1: return spec.C;
  }
  return 0;
}

double initial_value(const ModelSpec& spec, const PanelUnit& u, int i) {
  switch (spec.family) {
    case Family::ARP: return u.y0.at(i - 1);
    case Family::VAR1:
    case Family::NET3: return bit_of(u.y0.at(0), i - 1, spec.M);
    case Family::MAR1: return u.y0.at(0) == i ? 1.0 : 0.0;
  }
  return 0.0;
}

double covariate_value(const ModelSpec& spec, const PanelUnit& u, const InstrumentAtom& a) {
  const int per = spec.layers() * spec.Kx;
  const int off = (a.index - 1) * spec.Kx + (a.k - 1);
  if (a.t >= 1) return u.x.at((a.t - 1) * per + off);
  const int npre = static_cast<int>(u.x_pre.size()) / per;
  const int row = npre - 1 + a.t;  // pre-sample periods are 1-npre..0
  if (row < 0) throw DimensionError("instrument " + a.to_string() + " needs a missing covariate period");
  return u.x_pre[row * per + off];
}

} // namespace

// Instruments

std::string InstrumentAtom::to_string() const {
  switch (kind) {
    case Kind::Constant: return "const";
    case Kind::Initial: return "y0:" + std::to_string(index);
    case Kind::Covariate:
      return "x:" + std::to_string(index) + ":" + std::to_string(k) + ":" + std::to_string(t);
    case Kind::Custom: return "custom:" + name;
  }
  return "";
}

InstrumentAtom InstrumentAtom::parse(const std::string& s) {
  const InstrumentSpec sp = InstrumentSpec::parse(s);
  if (sp.atoms.size() != 1) throw DomainError("'" + s + "' is not a single instrument atom");
  return sp.atoms[0];
}

void register_instrument(const std::string& name, InstrumentFn fn) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(fn);
}

InstrumentSpec InstrumentSpec::constant_only() {
  InstrumentSpec s;
  s.atoms.push_back(InstrumentAtom{});
  return s;
}

InstrumentSpec InstrumentSpec::parse(const std::string& text) {
  InstrumentSpec out;
  for (const std::string& tok : split(text, ',')) {
    if (tok.empty()) continue;
    const auto parts = split(tok, ':');
    InstrumentAtom a;
    if (parts[0] == "const" && parts.size() == 1) {
      out.atoms.push_back(a);
    } else if (parts[0] == "y0" && parts.size() == 2) {
      const auto [lo, hi] = range_of(parts[1], tok);
      a.kind = InstrumentAtom::Kind::Initial;
      for (int i = lo; i <= hi; ++i) {
        a.index = i;
        out.atoms.push_back(a);
      }
    } else if (parts[0] == "x" && parts.size() == 4) {
      a.kind = InstrumentAtom::Kind::Covariate;
      a.index = to_int(parts[1], tok);
      a.k = to_int(parts[2], tok);
      const auto [lo, hi] = range_of(parts[3], tok);
      for (int t = lo; t <= hi; ++t) {
        a.t = t;
        out.atoms.push_back(a);
      }
    } else if (parts[0] == "custom" && parts.size() == 2 && !parts[1].empty()) {
      a.kind = InstrumentAtom::Kind::Custom;
      a.name = parts[1];
      out.atoms.push_back(a);
    } else {
      throw DomainError("bad instrument atom '" + tok + "'");
    }
  }
  if (out.atoms.empty()) throw DomainError("instrument list is empty");
  return out;
}

std::string InstrumentSpec::to_string() const {
  std::string s;
  for (size_t i = 0; i < atoms.size(); ++i) s += (i ? "," : "") + atoms[i].to_string();
  return s;
}

void InstrumentSpec::check(const ModelSpec& spec) const {
  if (atoms.empty()) throw DomainError("instrument list is empty");
  for (const auto& a : atoms) {
    switch (a.kind) {
      case InstrumentAtom::Kind::Constant: break;
      case InstrumentAtom::Kind::Initial:
        if (a.index < 1 || a.index > initial_components(spec))
          throw DimensionError("instrument " + a.to_string() + " is outside the initial condition");
        break;
      case InstrumentAtom::Kind::Covariate:
        if (a.index < 1 || a.index > spec.layers() || a.k < 1 || a.k > spec.Kx || a.t > spec.T)
          throw DimensionError("instrument " + a.to_string() + " does not name a covariate");
        break;
      case InstrumentAtom::Kind::Custom: {
        std::lock_guard<std::mutex> lock(registry_mutex());
        if (!registry().count(a.name)) throw DomainError("unknown custom instrument '" + a.name + "'");
        break;
      }
    }
  }
}

std::vector<double> instrument_values(const ModelSpec& spec, const InstrumentSpec& inst, const PanelUnit& unit) {
  std::vector<double> z;
  z.reserve(inst.atoms.size());
  for (const auto& a : inst.atoms) {
    switch (a.kind) {
      case InstrumentAtom::Kind::Constant: z.push_back(1.0); break;
      case InstrumentAtom::Kind::Initial: z.push_back(initial_value(spec, unit, a.index)); break;
      case InstrumentAtom::Kind::Covariate: z.push_back(covariate_value(spec, unit, a)); break;
      case InstrumentAtom::Kind::Custom: {
        InstrumentFn fn;
        {
          std::lock_guard<std::mutex> lock(registry_mutex());
          auto it = registry().find(a.name);
          if (it == registry().end()) throw DomainError("unknown custom instrument '" + a.name + "'");
          fn = it->second;
        }
        z.push_back(fn(spec, unit));
        break;
      }
    }
  }
  return z;
}

std::vector<double> stack_moments(const ModelSpec& spec, const std::vector<MomentId>& ids,
                                  const InstrumentSpec& inst, const PanelUnit& unit, const Theta& th,
                                  bool rescaled) {
  th.check(spec);
  inst.check(spec);
  for (const auto& id : ids) check_moment(spec, id);
  const auto z = instrument_values(spec, inst, unit);
  const UnitMoments um = evaluate_unit(spec, ids, unit, th, rescaled);
  const size_t L = z.size();
  std::vector<double> m(ids.size() * L);
  for (size_t j = 0; j < ids.size(); ++j) {
    const double v = rescaled ? um.value[j] / um.factor[j] : um.value[j];
    for (size_t l = 0; l < L; ++l) m[j * L + l] = v * z[l];
  }
  return m;
}

// Moment problem

namespace {

bool unit_less(const PanelUnit& a, const PanelUnit& b) {
  if (a.y0 != b.y0) return a.y0 < b.y0;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.x_pre < b.x_pre;
}
bool unit_equal(const PanelUnit& a, const PanelUnit& b) {
  return a.y0 == b.y0 && a.y == b.y && a.x == b.x && a.x_pre == b.x_pre;
}

constexpr std::size_t kChunk = 128;

} // namespace

MomentProblem::MomentProblem(const Dataset& data, std::vector<MomentId> ids, InstrumentSpec inst, bool rescaled)
    : spec_(data.spec), ids_(std::move(ids)), inst_(std::move(inst)), rescaled_(rescaled) {
  spec_.check();
  inst_.check(spec_);
  if (ids_.empty()) throw DomainError("moment list is empty");
  for (const auto& id : ids_) check_moment(spec_, id);
  if (data.units.empty()) throw DomainError("dataset has no units");
  const auto bad = validate_dataset(spec_, data.units);
  if (!bad.empty())
    throw DimensionError("unit " + std::to_string(bad[0].unit) + ": " + bad[0].field + ": " + bad[0].message);

  std::vector<std::size_t> order(data.units.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return unit_less(data.units[a], data.units[b]); });
  for (std::size_t i : order) {
    if (!groups_.empty() && unit_equal(groups_.back(), data.units[i])) {
      count_.back() += 1.0;
    } else {
      groups_.push_back(data.units[i]);
      count_.push_back(1.0);
    }
  }
  n_ = static_cast<long long>(data.units.size());
  z_.resize(groups_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) z_[g] = instrument_values(spec_, inst_, groups_[g]);
  if (rescaled_) {
    std::map<std::vector<int>, int> seen;
    structure_of_.resize(groups_.size());
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      auto it = seen.find(groups_[g].y0);
      if (it == seen.end()) {
        it = seen.emplace(groups_[g].y0, static_cast<int>(structures_.size())).first;
        structures_.emplace_back(spec_, ids_, groups_[g].y0);
      }
      structure_of_[g] = it->second;
    }
  }
}

void MomentProblem::unit_moments(const Theta& th, std::size_t g, double* out) const {
  const UnitMoments um = rescaled_ ? evaluate_unit(spec_, ids_, groups_[g], th, structures_[structure_of_[g]])
                                   : evaluate_unit(spec_, ids_, groups_[g], th, false);
  const auto& z = z_[g];
  const size_t L = z.size();
  for (size_t j = 0; j < ids_.size(); ++j) {
    const double v = rescaled_ ? um.value[j] / um.factor[j] : um.value[j];
    for (size_t l = 0; l < L; ++l) out[j * L + l] = v * z[l];
  }
}

Eigen::VectorXd MomentProblem::mean(const Eigen::VectorXd& theta) const {
  const Theta th = Theta::from_flat(spec_, theta);
  const int d = dim();
  const std::size_t G = groups_.size();
  const std::size_t nchunks = (G + kChunk - 1) / kChunk;
  std::vector<Eigen::VectorXd> part(nchunks, Eigen::VectorXd::Zero(d));
  parallel_chunks(G, kChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    Eigen::VectorXd m(d);
    for (std::size_t g = b; g < e; ++g) {
      unit_moments(th, g, m.data());
      part[c] += count_[g] * m;
    }
  });
  Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
  for (const auto& p : part) s += p;
  return s / static_cast<double>(n_);
}

Eigen::MatrixXd MomentProblem::second_moment(const Eigen::VectorXd& theta) const {
  const Theta th = Theta::from_flat(spec_, theta);
  const int d = dim();
  const std::size_t G = groups_.size();
  const std::size_t nchunks = (G + kChunk - 1) / kChunk;
  std::vector<Eigen::MatrixXd> part(nchunks, Eigen::MatrixXd::Zero(d, d));
  parallel_chunks(G, kChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    Eigen::VectorXd m(d);
    for (std::size_t g = b; g < e; ++g) {
      unit_moments(th, g, m.data());
      part[c].selfadjointView<Eigen::Lower>().rankUpdate(m, count_[g]);
    }
  });
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
  for (const auto& p : part) S += p;
  S = S.selfadjointView<Eigen::Lower>();
  return S / static_cast<double>(n_);
}

Eigen::MatrixXd MomentProblem::jacobian(const Eigen::VectorXd& theta, double scale) const {
  Eigen::MatrixXd J(dim(), theta.size());
  Eigen::VectorXd tp = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = scale * (1.0 + std::abs(theta[j]));
    tp[j] = theta[j] + h;
    const Eigen::VectorXd mp = mean(tp);
    tp[j] = theta[j] - h;
    const Eigen::VectorXd mm = mean(tp);
    tp[j] = theta[j];
    J.col(j) = (mp - mm) / (2.0 * h);
  }
  return J;
}

std::vector<double> MomentProblem::null_fraction(const Eigen::VectorXd& theta) const {
  const Theta th = Theta::from_flat(spec_, theta);
  std::vector<double> frac(ids_.size(), 0.0);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const UnitMoments um = evaluate_unit(spec_, ids_, groups_[g], th, false);
    for (size_t j = 0; j < ids_.size(); ++j)
      if (um.value[j] == 0.0) frac[j] += count_[g];
  }
  for (auto& f : frac) f /= static_cast<double>(n_);
  return frac;
}

// Weights

WeightMatrix WeightMatrix::identity(int dim) {
  WeightMatrix w;
  w.identity_ = true;
  w.W_ = Eigen::MatrixXd::Identity(dim, dim);
  return w;
}

WeightMatrix WeightMatrix::from_second_moment(const Eigen::MatrixXd& S) {
  WeightMatrix w;
  w.identity_ = false;
  w.W_ = 0.5 * (S + S.transpose());
  const Eigen::Index L = w.W_.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w.W_, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  w.condition_ = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  w.llt_.compute(w.W_);
  if (w.llt_.info() != Eigen::Success || !(w.condition_ < 1.0 / std::numeric_limits<double>::epsilon())) {
    const double ridge = 1e-10 * w.W_.trace() / static_cast<double>(L);
    w.llt_.compute(w.W_ + std::max(ridge, std::numeric_limits<double>::min()) *
                              Eigen::MatrixXd::Identity(L, L));
    w.ridged_ = true;
  }
  return w;
}

Eigen::VectorXd WeightMatrix::solve(const Eigen::VectorXd& v) const { return identity_ ? v : llt_.solve(v); }
Eigen::MatrixXd WeightMatrix::solve(const Eigen::MatrixXd& v) const { return identity_ ? v : llt_.solve(v); }
Eigen::MatrixXd WeightMatrix::inverse() const {
  return solve(Eigen::MatrixXd(Eigen::MatrixXd::Identity(W_.rows(), W_.cols())));
}

double gmm_objective(const MomentProblem& prob, const Eigen::VectorXd& theta, const WeightMatrix& W) {
  const Eigen::VectorXd m = prob.mean(theta);
  return m.dot(W.solve(m));
}

// Estimation

std::string estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Identity: return "identity";
    case EstimatorKind::Rescaled: return "rescaled";
    case EstimatorKind::Iterated: return "iterated";
  }
  return "";
}

EstimatorKind parse_estimator(const std::string& s) {
  if (s == "identity") return EstimatorKind::Identity;
  if (s == "rescaled") return EstimatorKind::Rescaled;
  if (s == "iterated") return EstimatorKind::Iterated;
  throw DomainError("unknown estimator '" + s + "'");
}

namespace {

// GMM objective with Gauss-Newton curvature for the BFGS start
OptimResult run_gmm(const MomentProblem& prob, const WeightMatrix& W, const Eigen::VectorXd& x0,
                    const OptimOptions& opt) {
  struct Memo {
    Eigen::VectorXd x, m;
  };
  auto memo = std::make_shared<Memo>();
  auto mean_at = [&prob, memo](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    if (memo->x.size() == x.size() && memo->x == x) return memo->m;
    memo->x = x;
    memo->m = prob.mean(x);
    return memo->m;
  };
  Objective obj;
  obj.value = [&W, mean_at](const Eigen::VectorXd& x) {
    const Eigen::VectorXd m = mean_at(x);
    return m.dot(W.solve(m));
  };
  obj.gradient = [&prob, &W, &opt, mean_at](const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd* H0) {
    const Eigen::VectorXd m = mean_at(x);
    const Eigen::MatrixXd J = prob.jacobian(x, opt.fd_scale);
    const Eigen::MatrixXd AJ = W.solve(J);
    g = 2.0 * AJ.transpose() * m;
    if (H0) *H0 = 2.0 * J.transpose() * AJ;
  };
  return minimize(obj, x0, opt);
}

} // namespace

Covariance asymptotic_variance(const MomentProblem& prob, const Eigen::VectorXd& theta, const WeightMatrix& W) {
  Covariance c;
  const Eigen::MatrixXd M = prob.jacobian(theta, 1e-5);
  const Eigen::MatrixXd S = prob.second_moment(theta);
  const Eigen::MatrixXd AM = W.solve(M);
  Eigen::MatrixXd B = M.transpose() * AM;
  B = 0.5 * (B + B.transpose());
  const Eigen::MatrixXd mid = AM.transpose() * S * AM;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  Eigen::VectorXd inv(ev.size());
  c.rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > 1e-12 * top) {
      inv[i] = 1.0 / ev[i];
      ++c.rank;
    } else {
      inv[i] = 0.0;
    }
  }
  c.pseudo_inverse = c.rank < ev.size();
  const Eigen::MatrixXd Binv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  Eigen::MatrixXd V = Binv * mid * Binv;
  c.avar = 0.5 * (V + V.transpose());
  c.covariance = c.avar / static_cast<double>(prob.n_units());
  c.se = c.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return c;
}

GmmResult estimate(const Dataset& data, const EstimateConfig& cfg) {
  data.spec.check();
  GmmResult res;
  res.kind = cfg.kind;
  std::vector<MomentId> ids = cfg.ids.empty() ? enumerate_moments(data.spec) : cfg.ids;
  if (ids.empty())
    throw DomainError("no valid moment functions: the panel is too short for the lag order (T must be at least " +
                      std::to_string(data.spec.lags() + 2) + ")");
  const int k = data.spec.n_theta();
  if (static_cast<long long>(data.units.size()) <= k)
    throw DomainError("need more units than parameters");
  const Theta th0 = cfg.theta0 ? *cfg.theta0 : Theta::zeros(data.spec);
  th0.check(data.spec);
  Eigen::VectorXd x = th0.flat();

  if (cfg.prune_threshold < 1.0) {
    const MomentProblem raw(data, ids, InstrumentSpec::constant_only(), false);
    const auto frac = raw.null_fraction(x);
    std::vector<MomentId> kept;
    for (size_t j = 0; j < ids.size(); ++j) {
      if (frac[j] > cfg.prune_threshold)
        res.warnings.push_back("pruned " + ids[j].label() + " (null for " + std::to_string(frac[j]) + " of units)");
      else
        kept.push_back(ids[j]);
    }
    if (kept.empty()) throw DomainError("every moment function was pruned");
    ids = kept;
  }

  const bool rescaled = cfg.kind == EstimatorKind::Rescaled;
  const MomentProblem prob(data, ids, cfg.instruments, rescaled);
  WeightMatrix W = WeightMatrix::identity(prob.dim());

  OptimResult r = run_gmm(prob, W, x, cfg.optim);
  res.iterations = r.iterations;
  res.converged = r.converged;
  res.message = r.message;
  res.objective_trace.push_back(r.f);
  x = r.x;

  if (cfg.kind == EstimatorKind::Iterated && r.converged) {
    Eigen::MatrixXd prevS;
    res.converged = false;
    res.rounds = 0;
    for (int s = 1; s <= cfg.max_outer; ++s) {
      const Eigen::MatrixXd S = prob.second_moment(x);
      W = WeightMatrix::from_second_moment(S);
      if (W.ridged()) res.warnings.push_back("round " + std::to_string(s) + ": weight matrix regularized");
      if (prevS.size()) res.weight_change_trace.push_back((S - prevS).norm());
      prevS = S;
      r = run_gmm(prob, W, x, cfg.optim);
      res.iterations += r.iterations;
      res.rounds = s;
      res.objective_trace.push_back(r.f);
      const double step = (r.x - x).norm();
      x = r.x;
      if (!r.converged) {
        res.message = "round " + std::to_string(s) + ": " + r.message;
        break;
      }
      if (step < cfg.outer_tol) {
        res.converged = true;
        res.message = "weight iteration converged after " + std::to_string(s) + " rounds";
        break;
      }
    }
    if (!res.converged && res.message.rfind("round", 0) != 0)
      res.message = "weight iteration did not settle in " + std::to_string(cfg.max_outer) + " rounds";
  }

  res.theta_flat = x;
  res.theta = Theta::from_flat(data.spec, x);
  res.objective = r.f;
  res.weight_condition = W.is_identity() ? 1.0 : W.condition();
  res.moment_means = prob.mean(x);
  res.ids = ids;
  res.n_units = prob.n_units();
  if (cfg.compute_variance) {
    res.cov = asymptotic_variance(prob, x, W);
    res.has_covariance = true;
    if (res.cov.pseudo_inverse)
      res.warnings.push_back("singular bread matrix, rank " + std::to_string(res.cov.rank));
  }
  return res;
}

// Efficiency bound

namespace {

Eigen::Vector2d psi_pair(const ModelSpec& spec, const PanelUnit& u, const Theta& th) {
  return {closed_form_psi_t3(spec, 0, u, th), closed_form_psi_t3(spec, 1, u, th)};
}

Eigen::MatrixXd psi_pair_grad(const ModelSpec& spec, const PanelUnit& u, const Theta& th) {
  const auto g0 = closed_form_psi_t3_grad(spec, 0, u, th);
  const auto g1 = closed_form_psi_t3_grad(spec, 1, u, th);
  Eigen::MatrixXd D(2, g0.size());
  for (size_t j = 0; j < g0.size(); ++j) {
    D(0, j) = g0[j];
    D(1, j) = g1[j];
  }
  return D;
}

} // namespace

EfficiencyBound efficiency_bound_ar1_t3(const ModelSpec& spec, const std::vector<PanelUnit>& x_sample,
                                        const Theta& th, const HeterogeneityMixture& mix) {
  if (spec.family != Family::ARP || spec.p != 1 || spec.T != 3)
    throw DimensionError("efficiency bound needs an AR(1) model with T = 3");
  th.check(spec);
  if (mix.support.empty() || mix.support.size() != mix.weight.size())
    throw DimensionError("mixture support and weights differ in length");
  const double wsum = std::accumulate(mix.weight.begin(), mix.weight.end(), 0.0);
  if (!(wsum > 0)) throw DomainError("mixture weights must be positive");
  if (x_sample.empty()) throw DomainError("empty covariate sample");

  const int k = spec.n_theta();
  EfficiencyBound out;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
  int used = 0;
  for (const PanelUnit& base : x_sample) {
    BoundPoint pt;
    pt.prob.assign(8, 0.0);
    for (size_t i = 0; i < mix.support.size(); ++i) {
      const auto p = history_probabilities(spec, th, FixedEffect{{mix.support[i]}}, base);
      for (int h = 0; h < 8; ++h) pt.prob[h] += mix.weight[i] / wsum * p[h];
    }
    pt.D = Eigen::MatrixXd::Zero(2, k);
    pt.Sigma.setZero();
    PanelUnit u = base;
    for (int h = 0; h < 8; ++h) {
      u.y = Path(spec, base.y0, h).outcomes(spec.T);
      const Eigen::Vector2d ps = psi_pair(spec, u, th);
      pt.D += pt.prob[h] * psi_pair_grad(spec, u, th);
      pt.Sigma += pt.prob[h] * ps * ps.transpose();
    }
    Eigen::LLT<Eigen::Matrix2d> llt(pt.Sigma);
    const double tr = pt.Sigma.trace();
    if (llt.info() != Eigen::Success || !(pt.Sigma.determinant() > 1e-14 * tr * tr)) {
      pt.ok = false;
      ++out.dropped;
      out.points.push_back(std::move(pt));
      continue;
    }
    pt.Omega = llt.solve(pt.D).transpose();
    info += pt.Omega * pt.D;
    ++used;
    out.points.push_back(std::move(pt));
  }
  if (used == 0) throw DomainError("every covariate draw has a singular moment covariance");
  info /= used;
  info = 0.5 * (info + info.transpose());
  out.V0 = info.inverse();
  return out;
}

Eigen::VectorXd efficient_moment(const ModelSpec& spec, const BoundPoint& pt, const PanelUnit& unit,
                                 const Theta& th) {
  if (!pt.ok) throw DomainError("bound point was dropped");
  return -pt.Omega * psi_pair(spec, unit, th);
}

} // namespace dpm
