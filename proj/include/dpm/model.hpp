#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dpm {

enum class Family { ARP, VAR1, MAR1, NET3 };

std::string family_name(Family f);
Family parse_family(const std::string& s);

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Outcome encoding per period:
//   ARP          0/1
//   VAR1, NET3   bit-packed vector, layer 1 is the most significant bit
//   MAR1         label 0..C (0 is the reference alternative)
struct ModelSpec {
  Family family = Family::ARP;
  int p = 1;
  int T = 3;
  int M = 1;
  int C = 1;
  int Kx = 1;

  static ModelSpec arp(int p, int T, int Kx = 1);
  static ModelSpec var1(int M, int T, int Kx = 1);
  static ModelSpec mar1(int C, int T, int Kx = 1);
  static ModelSpec net3(int T, int Kx = 1);

  void check() const;

  int lags() const { return family == Family::ARP ? p : 1; }
  int support() const;
  int layers() const;     // covariate layers per period
  int lag_states() const; // distinct lag codes feeding one index
  int fe_dim() const;
  int n_gamma() const;
  int n_beta() const;
  int n_theta() const { return n_gamma() + n_beta(); }
  std::vector<std::string> param_names() const;
  long long n_histories() const;
};

struct Theta {
  // ARP   gamma = (g_1..g_p)               beta = (b_1..b_Kx)
  // VAR1  gamma = M x M row-major g_{mj}   beta = layer-major M x Kx
  // MAR1  gamma = C x C row-major g_{kl}   beta = (C+1) x Kx, row 0 = reference
  //       (k = destination, l = origin, both 1..C; reference row/col are 0)
  // NET3  gamma = (g, delta)               beta = (b_1..b_Kx), shared by the dyads
  std::vector<double> gamma;
  std::vector<double> beta;

  static Theta zeros(const ModelSpec& spec);
  static Theta from_flat(const ModelSpec& spec, const Eigen::VectorXd& v);
  Eigen::VectorXd flat() const;
  void check(const ModelSpec& spec) const;
};

struct FixedEffect {
  std::vector<double> a; // ARP 1, VAR1 M, MAR1 C (reference is 0), NET3 3
};

struct PanelUnit {
  std::vector<int> y0;        // ARP: Y_{1-p}..Y_0 (oldest first); otherwise one code
  std::vector<int> y;         // periods 1..T
  std::vector<double> x;      // period-major: [t-1][layer][k]
  std::vector<double> x_pre;  // optional pre-sample covariates, same layout, oldest first

  double xv(const ModelSpec& spec, int t, int layer, int k) const {
    return x[((t - 1) * spec.layers() + layer) * spec.Kx + k];
  }
  const double* xrow(const ModelSpec& spec, int t) const {
    return x.data() + (t - 1) * spec.layers() * spec.Kx;
  }
};

struct TransitionState {
  std::vector<int> from; // ARP: p lags, most recent first; otherwise {code}
  int to = 0;
  int t = 1;             // transition into period t+1
};

// Full outcome sequence including the initial block. Y(s) for s in [1-lags, T].
class Path {
 public:
  Path() = default;
  Path(const ModelSpec& spec, const std::vector<int>& y0, const std::vector<int>& y);
  Path(const ModelSpec& spec, const std::vector<int>& y0, long long history);

  int Y(int s) const { return seq_[s + off_]; }
  // overwrite periods 1..T with the given history index, keeping the initial block
  void set_history(const ModelSpec& spec, long long history);
  int lag_code(const ModelSpec& spec, int s) const;
  const std::vector<int>& seq() const { return seq_; }
  std::vector<int> outcomes(int T) const;

 private:
  std::vector<int> seq_;
  int off_ = 0;
};

inline int bit_of(int code, int m, int M) { return (code >> (M - 1 - m)) & 1; }

// layer m of the state part of the index at lag code `lag`
double state_index(const ModelSpec& spec, const Theta& th, int layer, int lag);
// layer m of the covariate part; MAR1 returns the index relative to the reference
double covariate_index(const ModelSpec& spec, const Theta& th, int layer, const double* xrow);

inline double clamp_exp(double z) {
  if (z > 700.0) z = 700.0;
  if (z < -700.0) z = -700.0;
  return std::exp(z);
}
double log1pexp(double z);

// exp(index) for every (layer, period 1..T, lag code) of one unit
class IndexTable {
 public:
  IndexTable() = default;
  IndexTable(const ModelSpec& spec, const Theta& th, const PanelUnit& u);

  double index(int layer, int s, int lag) const { return idx_[at(layer, s, lag)]; }
  double ex(int layer, int s, int lag) const { return ex_[at(layer, s, lag)]; }
  const double* ex_row(int layer, int s) const { return ex_.data() + at(layer, s, 0); }

 private:
  int at(int layer, int s, int lag) const { return (layer * T_ + (s - 1)) * L_ + lag; }
  int T_ = 0, L_ = 0;
  std::vector<double> idx_, ex_;
};

double transition_probability(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                              const std::vector<double>& x_next, const TransitionState& st);

// log P(next = to | lag code, covariate row, effect); no argument checks
double log_transition(const ModelSpec& spec, const Theta& th, const FixedEffect& a, const double* xrow,
                      int lag, int to);
void check_effect(const ModelSpec& spec, const FixedEffect& a);

double history_probability(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                           const PanelUnit& u, const std::vector<int>& y_path);

struct Violation {
  int unit;
  int period; // 0 for unit-level problems
  std::string field;
  std::string message;
};

std::vector<Violation> validate_dataset(const ModelSpec& spec, const std::vector<PanelUnit>& units);

} // namespace dpm
