#include <algorithm>

#include "doctest.h"
#include "dpm/simulation.hpp"
#include "helpers.hpp"

using namespace dpm;
using testing::sigmoid;

namespace {

// share of units whose observed periods are all zero, from a 200k-unit
// reference run of the AR(3) design (seed 20240611)
constexpr double kAr3AllZero = 0.086390;

EstimatorRun run(const std::string& name, EstimatorKind kind) {
  EstimatorRun r;
  r.name = name;
  r.config.kind = kind;
  r.config.instruments = InstrumentSpec::parse("const,y0:1");
  r.config.compute_variance = false;
  return r;
}

} // namespace

TEST_CASE("no dependence and no effect gives fair coins") {
  Design d = default_design(ModelSpec::arp(1, 4), 16000, 2);
  d.theta = Theta::zeros(d.spec);
  d.effect = EffectRule::None;
  const Dataset data = simulate(d);
  const double sd = std::sqrt(0.25 / 16000.0);
  for (int t = 0; t < 4; ++t) {
    double s = 0.0;
    for (const auto& u : data.units) s += u.y[t];
    CHECK(std::abs(s / 16000.0 - 0.5) < 3 * sd);
  }
}

TEST_CASE("simulation is a pure function of the seed") {
  for (const auto& spec : {ModelSpec::arp(3, 5), ModelSpec::var1(2, 3), ModelSpec::mar1(2, 3), ModelSpec::net3(3)}) {
    const Design d = default_design(spec, 300, 42);
    const Dataset a = simulate(d), b = simulate(d);
    for (size_t i = 0; i < a.units.size(); ++i) {
      CHECK(a.units[i].y == b.units[i].y);
      CHECK(a.units[i].y0 == b.units[i].y0);
      CHECK(a.units[i].x == b.units[i].x);
    }
    // any prefix of a larger run is the smaller run
    Design big = d;
    big.N = 500;
    const Dataset c = simulate(big);
    for (size_t i = 0; i < a.units.size(); ++i) CHECK(c.units[i].y == a.units[i].y);
    CHECK(simulate_unit(d, 17).x == a.units[17].x);
    CHECK(validate_dataset(spec, a.units).empty());
    Design other = d;
    other.seed = 43;
    CHECK(simulate(other).units[0].x != a.units[0].x);
  }
}

TEST_CASE("AR(3) design matches the reference all-zero share") {
  const Dataset data = simulate(ar3_design(20000, 808));
  long long z = 0;
  for (const auto& u : data.units) z += std::all_of(u.y.begin(), u.y.end(), [](int v) { return v == 0; });
  CHECK(std::abs(static_cast<double>(z) / 20000.0 - kAr3AllZero) < 0.02);
}

TEST_CASE("fixed-effect rules") {
  Design d = ar3_design(10, 1);
  const PanelUnit u = simulate_unit(d, 3);
  double s = 0.0;
  for (double v : u.x_pre) s += v;
  for (double v : u.x) s += v;
  CHECK(effect_of(d, u).a[0] == doctest::Approx(s / std::sqrt(8.0)).epsilon(1e-14));
  d.effect = EffectRule::Constant;
  d.effect_value = 1.25;
  CHECK(effect_of(d, u).a[0] == 1.25);
  d.effect = EffectRule::None;
  CHECK(effect_of(d, u).a[0] == 0.0);
}

TEST_CASE("simulated transitions follow the model") {
  // with a known constant effect, the number of ones after each (lag, covariate
  // bucket) cell matches the summed model probabilities
  const double a = 0.4;
  Design d = default_design(ModelSpec::arp(2, 4), 50000, 5);
  d.effect = EffectRule::Constant;
  d.effect_value = a;
  const Dataset data = simulate(d);
  double ones[4][4] = {}, mean[4][4] = {}, var[4][4] = {};
  for (const auto& u : data.units) {
    const Path path(d.spec, u.y0, u.y);
    for (int t = 1; t <= 4; ++t) {
      const int lag = path.lag_code(d.spec, t);
      const double x = u.xv(d.spec, t, 0, 0);
      const int bucket = x < -0.67 ? 0 : x < 0.0 ? 1 : x < 0.67 ? 2 : 3;
      const double p = sigmoid(state_index(d.spec, d.theta, 0, lag) + d.theta.beta[0] * x + a);
      ones[lag][bucket] += path.Y(t);
      mean[lag][bucket] += p;
      var[lag][bucket] += p * (1 - p);
    }
  }
  for (int l = 0; l < 4; ++l)
    for (int b = 0; b < 4; ++b) {
      CAPTURE(l);
      CAPTURE(b);
      CHECK(std::abs(ones[l][b] - mean[l][b]) < 4.0 * std::sqrt(var[l][b]));
    }
}

TEST_CASE("Monte Carlo harness") {
  const Design d = default_design(ModelSpec::arp(1, 4), 800, 3);
  const MonteCarloResult one = monte_carlo(d, {run("rescaled", EstimatorKind::Rescaled)}, 1, 77);
  REQUIRE(one.estimators.size() == 1);
  const EstimatorSummary& s = one.estimators[0];
  REQUIRE(s.converged == 1);
  for (size_t j = 0; j < s.params.size(); ++j) {
    CHECK(s.params[j].median_bias == s.estimates[0][j] - s.params[j].truth);
    CHECK(s.params[j].mae == std::abs(s.params[j].median_bias));
  }
  // the data stream of rep r is the simulation at rep_seed(seed, r)
  Design r0 = d;
  r0.seed = rep_seed(77, 0);
  EstimateConfig cfg = run("x", EstimatorKind::Rescaled).config;
  cfg.theta0 = d.theta;
  const GmmResult direct = estimate(simulate(r0), cfg);
  CHECK(direct.theta_flat == s.estimates[0]);

  const auto ab = monte_carlo(d, {run("identity", EstimatorKind::Identity), run("rescaled", EstimatorKind::Rescaled)}, 3, 5);
  const auto ba = monte_carlo(d, {run("rescaled", EstimatorKind::Rescaled), run("identity", EstimatorKind::Identity)}, 3, 5);
  for (int k = 0; k < 2; ++k) {
    const auto& x = ab.estimators[k];
    const auto& y = ba.estimators[1 - k];
    CHECK(x.name == y.name);
    for (int r = 0; r < 3; ++r) CHECK(x.estimates[r] == y.estimates[r]);
    for (size_t j = 0; j < x.params.size(); ++j) CHECK(x.params[j].median_bias == y.params[j].median_bias);
  }
  CHECK_THROWS_AS(monte_carlo(d, {run("rescaled", EstimatorKind::Rescaled)}, 0, 1), DomainError);
}

TEST_CASE("summary helpers") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(std::isnan(median({})));
  std::vector<double> v;
  Stream rng(hash_key(1, 2));
  for (int i = 0; i < 2000; ++i) v.push_back(rng.normal());
  const auto dens = kernel_density(v, 201);
  REQUIRE(dens.size() == 201);
  double area = 0.0;
  for (size_t i = 1; i < dens.size(); ++i)
    area += 0.5 * (dens[i].second + dens[i - 1].second) * (dens[i].first - dens[i - 1].first);
  CHECK(area == doctest::Approx(1.0).epsilon(0.02));
}
