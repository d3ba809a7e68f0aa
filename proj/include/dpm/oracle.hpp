#pragma once

#include <cstdint>
#include <string>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpm/model.hpp"

namespace dpm {

constexpr long long kMaxHistories = 1LL << 24;

// f receives the history index (period 1 least significant) and its path.
using HistoryFn = std::function<double(long long, const Path&)>;

// All history probabilities given (y0, x, a), canonical order.
std::vector<double> history_probabilities(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                                          const PanelUnit& unit);

// E[f | y0, x, a] by full enumeration with compensated summation.
double conditional_expectation(const ModelSpec& spec, const Theta& th, const FixedEffect& a,
                               const PanelUnit& unit, const HistoryFn& f);

// Neumaier summation helper, also used by the other modules
class CompensatedSum {
 public:
  void add(double v) {
    const double t = s_ + v;
    c_ += std::abs(s_) >= std::abs(v) ? (s_ - t) + v : (v - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0, c_ = 0.0;
};

struct LambdaMatrix {
  Eigen::MatrixXd P;         // histories x grid nodes
  std::vector<double> grid;  // fixed-effect values
  Theta theta;
  PanelUnit unit;
};

std::vector<double> chebyshev_grid(int n, double lo, double hi);
LambdaMatrix build_lambda(const ModelSpec& spec, const Theta& th, const PanelUnit& unit,
                          const std::vector<double>& grid);

struct RankReport {
  int rank = 0;
  int nullity = 0;
  int expected_rank = 0;
  int grid_size = 0;
  double min_index_gap = 0.0;  // smallest gap between distinct lag-state indices across periods
  bool degenerate = false;     // gap below 1e-8
  std::vector<double> singular_values;
};

// (T-p+1) 2^p when T >= p+1, otherwise 2^T
int expected_rank(const ModelSpec& spec);

// Numerical rank of the Lambda matrix; scalar fixed effect families only.
// Rows and columns are scaled to unit norm before the SVD.
RankReport rank_of_image(const ModelSpec& spec, const Theta& th, const PanelUnit& unit,
                         const std::vector<double>& a_grid, double tol = 1e-9);
// default grid: 4 x expected rank Chebyshev nodes on [-6, 6]
RankReport rank_of_image(const ModelSpec& spec, const Theta& th, const PanelUnit& unit, double tol = 1e-9);

// Orthonormal basis (columns) of the left null space of Lambda
Eigen::MatrixXd left_null_basis(const LambdaMatrix& L, double tol = 1e-9);

// AR(p) parameters and covariates whose reachable indices are evenly spread
// over an interval of the given width centred at 0. Random draws put many
// indices within 1e-2 of each other and the sampled Lambda matrix then loses
// rank numerically.
std::pair<Theta, PanelUnit> spread_design(const ModelSpec& spec, double width = 12.0);

// Scalar partial-fraction identities behind the chained functions.
double partial_fraction_multinomial(const std::vector<double>& u, const std::vector<double>& v,
                                    const std::vector<double>& a, int j);  // j = -1 for the first identity
double partial_fraction_product(const std::vector<double>& u, const std::vector<double>& v,
                                const std::vector<double>& a, int k);
double check_partial_fractions(int trials, std::uint64_t seed);

// Random (theta, a, x, y0) for sweeps: gamma and a uniform on [-1.5, 1.5],
// beta uniform on [-1, 1], covariates standard normal.
struct Instance {
  Theta theta;
  FixedEffect a;
  PanelUnit unit;
};
Instance random_instance(const ModelSpec& spec, std::uint64_t key);

// Worst |E[psi]| over every enumerated moment and worst |E[phi or zeta] - pi|
// over every chain they use plus every plain phi, across random draws.
struct SweepReport {
  int draws = 0;
  int moments = 0;
  int chains = 0;
  double max_moment = 0.0;
  double max_transition = 0.0;
  std::string worst_moment;
  std::string worst_chain;
};
SweepReport validity_sweep(const ModelSpec& spec, int draws, std::uint64_t seed);

} // namespace dpm
