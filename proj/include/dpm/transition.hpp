#pragma once

#include <vector>

#include "dpm/model.hpp"

namespace dpm {

// Target transition and anchor offsets s_1 > ... > s_J (empty = plain phi).
// ARP target.from is the p-vector y_1..y_p with target.to == y_1.
// VAR1/MAR1/NET3 targets are same-state: from = {k}, to = k.
struct ChainSpec {
  TransitionState target;
  std::vector<int> offsets;
};

// Evaluates transition functions for one unit at one parameter value.
// The index table is built once; the outcome path can be swapped cheaply,
// which is how rescaling and the oracle enumerate histories.
class Evaluator {
 public:
  Evaluator(const ModelSpec& spec, const Theta& th, const PanelUnit& u);

  void set_path(const std::vector<int>& y);
  void set_history(long long h);
  const Path& path() const { return path_; }
  const IndexTable& table() const { return table_; }
  const ModelSpec& spec() const { return spec_; }

  // target: ARP p-vector (most recent first); otherwise {k}
  double phi(const int* target, int t) const;
  double zeta(const int* target, int t, const std::vector<int>& offsets) const;
  double chain(const ChainSpec& c) const;

  // weight attached to offset s when Y_s != target (Y_s = l for the
  // multivariate families)
  double weight(const int* target, int t, int s) const;

 private:
  void refresh();
  double ar_phi(const int* y, int t) const;
  double mv_phi(int k, int t) const;
  double mn_phi(int k, int t) const;
  double mu(int layer, int s) const { return mu_[layer * (T_ + 1) + s]; }

  ModelSpec spec_;
  IndexTable table_;
  std::vector<int> y0_;
  Path path_;
  int T_;
  std::vector<double> mu_; // exp of the realized index, [layer][s]
  std::vector<int> lag_;   // realized lag code per period
};

void check_chain(const ModelSpec& spec, const ChainSpec& c);

double phi_ar1(const ModelSpec& spec, int k, int t, const PanelUnit& u, const Theta& th);
double zeta_ar1(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th);
double phi_arp(const ModelSpec& spec, const std::vector<int>& target, int t, const PanelUnit& u, const Theta& th);
double zeta_arp(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th);
double phi_var1(const ModelSpec& spec, int k, int t, const PanelUnit& u, const Theta& th);
double zeta_var1(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th);
double phi_mar1(const ModelSpec& spec, int k, int t, const PanelUnit& u, const Theta& th);
double zeta_mar1(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th);
double phi_network(const ModelSpec& spec, int d, int t, const PanelUnit& u, const Theta& th);
double zeta_network(const ModelSpec& spec, const ChainSpec& c, const PanelUnit& u, const Theta& th);

// Transition probability a chain maps to, for fixed effect a.
double chain_target_probability(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                                const PanelUnit& u, const ChainSpec& c);

} // namespace dpm
