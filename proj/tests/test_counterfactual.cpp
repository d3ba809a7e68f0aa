#include <algorithm>

#include "doctest.h"
#include "dpm/counterfactual.hpp"
#include "dpm/simulation.hpp"
#include "helpers.hpp"

using namespace dpm;
using testing::draw;
using testing::make_unit;
using testing::sigmoid;

namespace {

std::vector<double> probes(int n) {
  std::vector<double> a(n);
  for (int i = 0; i < n; ++i) a[i] = -8.0 + 16.0 * i / (n - 1);
  return a;
}

Design constant_effect(const ModelSpec& spec, long long N, std::uint64_t seed, double a) {
  Design d = default_design(spec, N, seed);
  d.effect = EffectRule::Constant;
  d.effect_value = a;
  return d;
}

} // namespace

TEST_CASE("one-step plans are the transition probability") {
  const ModelSpec spec = ModelSpec::arp(2, 4, 1);
  const Instance in = draw(spec, 0);
  const PartialFractionPlan p0 = plan_multiperiod(spec, in.theta, 2, {0, 1}, {0}, in.unit);
  REQUIRE(p0.terms.size() == 1);
  CHECK(p0.mu == 0.0);
  CHECK(p0.terms[0].lambda == 1.0);
  const PartialFractionPlan p1 = plan_multiperiod(spec, in.theta, 2, {0, 1}, {1}, in.unit);
  CHECK(p1.mu == 1.0);
  CHECK(p1.terms[0].lambda == -1.0);
  for (double a : probes(11)) {
    CHECK(plan_value(spec, in.theta, p1, in.unit, a) ==
          doctest::Approx(path_probability(spec, in.theta, 2, {0, 1}, {1}, in.unit, a)).epsilon(1e-14));
  }
}

TEST_CASE("survivor plan coefficients") {
  const ModelSpec spec = ModelSpec::arp(2, 5, 1);
  for (int i = 0; i < 10; ++i) {
    const Instance in = draw(spec, i);
    const double z = in.theta.gamma[0] + (in.unit.xv(spec, 4, 0, 0) - in.unit.xv(spec, 5, 0, 0)) * in.theta.beta[0];
    const PartialFractionPlan plan = plan_multiperiod(spec, in.theta, 3, {1, 1}, {0, 0}, in.unit);
    REQUIRE(plan.terms.size() == 2);
    CHECK(plan.mu == 0.0);
    CHECK(plan.terms[0].lambda == doctest::Approx(-std::exp(z) / (1.0 - std::exp(z))).epsilon(1e-12));
    CHECK(plan.terms[1].lambda == doctest::Approx(1.0 / (1.0 - std::exp(z))).epsilon(1e-12));
    CHECK(plan.terms[0].state == std::vector<int>{1, 1});
    CHECK(plan.terms[1].state == std::vector<int>{0, 1});
    CHECK(plan.terms[0].complement);
    CHECK_FALSE(plan.terms[1].complement);
    CHECK(plan_residual(spec, in.theta, plan, in.unit, probes(100)) < 1e-9);
  }
}

TEST_CASE("plans reproduce path probabilities at every effect value") {
  for (const auto& spec : {ModelSpec::arp(1, 5, 1), ModelSpec::arp(2, 5, 1), ModelSpec::arp(3, 6, 1)}) {
    for (int i = 0; i < 20; ++i) {
      const Instance in = draw(spec, i, 77);
      Stream rng(hash_key(77, i, 1));
      const int s = 1 + static_cast<int>(rng.next_u64() % 3);
      const int t = spec.p + static_cast<int>(rng.next_u64() % (spec.T - spec.p - s + 1));
      std::vector<int> from(spec.p), path(s);
      for (auto& v : from) v = static_cast<int>(rng.next_u64() & 1);
      for (auto& v : path) v = static_cast<int>(rng.next_u64() & 1);
      try {
        const PartialFractionPlan plan = plan_multiperiod(spec, in.theta, t, from, path, in.unit);
        double scale = 1.0;
        for (const auto& term : plan.terms) scale = std::max(scale, std::abs(term.lambda));
        CHECK(plan_residual(spec, in.theta, plan, in.unit, probes(100)) < 1e-9 * scale);
        const bool ones = std::all_of(path.begin(), path.end(), [](int v) { return v == 1; });
        CHECK(plan.mu == (ones ? 1.0 : 0.0));
      } catch (const IndexCollision&) {
        // random draws may put two poles within 1e-8; skip those
      }
    }
  }
}

TEST_CASE("colliding indices are reported") {
  const ModelSpec spec = ModelSpec::arp(2, 5, 1);
  Theta th = Theta::zeros(spec);
  th.gamma = {0.0, 0.7};
  th.beta = {0.5};
  const PanelUnit x = make_unit(spec, {1, 1}, {0, 0, 0, 0, 0}, {0.3, 0.3, 0.3, 0.3, 0.3});
  CHECK_THROWS_AS(plan_multiperiod(spec, th, 3, {1, 1}, {0, 0}, x), IndexCollision);
  try {
    plan_multiperiod(spec, th, 3, {1, 1}, {0, 0}, x);
  } catch (const IndexCollision& e) {
    CHECK(std::string(e.what()).find("periods 4") != std::string::npos);
  }
  CHECK_THROWS_AS(plan_multiperiod(spec, th, 1, {1, 1}, {0}, x), DomainError);
  CHECK_THROWS_AS(plan_multiperiod(spec, th, 3, {1, 1}, {0, 0, 0}, x), DomainError);
}

TEST_CASE("plan with zero coefficients averages to its constant") {
  const Dataset data = simulate(default_design(ModelSpec::arp(1, 4), 200, 3));
  PartialFractionPlan plan;
  plan.t = 1;
  plan.from = {1};
  plan.path = {1, 1};
  plan.mu = 0.37;
  plan.terms = {PlanTerm{0.0, 1, {1}, true}, PlanTerm{0.0, 2, {1}, true}};
  const AverageEstimate e = multiperiod_average(data, default_design(data.spec, 1, 1).theta, plan,
                                                Subpopulation{}, false);
  CHECK(e.value == doctest::Approx(0.37).epsilon(1e-15));
  CHECK(e.se == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("average transition probabilities") {
  const Design d = default_design(ModelSpec::arp(1, 4), 2000, 9);
  const Dataset data = simulate(d);
  Dataset one = data;
  one.units.resize(1);
  const AverageEstimate single = average_transition_probability(one, d.theta, Subpopulation{}, TransitionState{{1}, 1, 2});
  CHECK(single.value == phi_ar1(d.spec, 1, 2, one.units[0], d.theta));
  CHECK(single.n == 1);
  const AverageEstimate p00 = average_transition_probability(data, d.theta, Subpopulation{}, TransitionState{{0}, 0, 2});
  const AverageEstimate p10 = average_transition_probability(data, d.theta, Subpopulation{}, TransitionState{{0}, 1, 2});
  CHECK(p00.value + p10.value == doctest::Approx(1.0).epsilon(1e-12));
  Subpopulation none;
  none.y0 = std::vector<int>{7};
  CHECK_THROWS_AS(average_transition_probability(data, d.theta, none, TransitionState{{0}, 0, 2}), DomainError);
  Subpopulation zeros;
  zeros.y0 = std::vector<int>{0};
  CHECK(zeros.matches(d.spec, make_unit(d.spec, {0}, {1, 1, 1, 1}, {})));
  CHECK_FALSE(zeros.matches(d.spec, make_unit(d.spec, {1}, {1, 1, 1, 1}, {})));
  Subpopulation band;
  band.bands = {XBand{1, 1, 2, 0.5, 0.1}};
  CHECK(band.matches(d.spec, make_unit(d.spec, {0}, {0, 0, 0, 0}, {9.0, 0.45, 0.0, 0.0})));
  CHECK_FALSE(band.matches(d.spec, make_unit(d.spec, {0}, {0, 0, 0, 0}, {9.0, 0.65, 0.0, 0.0})));
}

TEST_CASE("average marginal effect at a single known effect") {
  const double a = -0.3;
  const Design d = constant_effect(ModelSpec::arp(1, 4), 20000, 14, a);
  const Dataset data = simulate(d);
  const AverageEstimate e = ame(data, d.theta, Subpopulation{}, 2);
  double want = 0.0;
  for (const auto& u : data.units) {
    const double xb = d.theta.beta[0] * u.xv(d.spec, 3, 0, 0) + a;
    want += sigmoid(d.theta.gamma[0] + xb) - sigmoid(xb);
  }
  want /= static_cast<double>(data.units.size());
  CHECK(std::abs(e.value - want) < 4.0 * e.se);
  CHECK(e.se > 0.0);
}

TEST_CASE("no state dependence means no marginal effect") {
  Design d = default_design(ModelSpec::arp(1, 4), 20000, 15);
  d.theta.gamma = {0.0};
  const AverageEstimate e = ame(simulate(d), d.theta, Subpopulation{}, 2);
  CHECK(std::abs(e.value) < 4.0 * e.se);
}

TEST_CASE("positive state dependence gives a positive effect") {
  const Design d = default_design(ModelSpec::arp(1, 4), 20000, 16);
  const AverageEstimate e = ame(simulate(d), d.theta, Subpopulation{}, 2);
  CHECK(e.value > 4.0 * e.se);
}

TEST_CASE("multi-period average at a single known effect") {
  const double a = 0.2;
  const Design d = constant_effect(ModelSpec::arp(2, 5), 20000, 17, a);
  const Dataset data = simulate(d);
  const PartialFractionPlan plan = plan_multiperiod(d.spec, d.theta, 3, {1, 1}, {0, 0}, data.units[0]);
  const AverageEstimate e = multiperiod_average(data, d.theta, plan, Subpopulation{});
  double want = 0.0;
  for (const auto& u : data.units) want += path_probability(d.spec, d.theta, 3, {1, 1}, {0, 0}, u, a);
  want /= static_cast<double>(data.units.size());
  CHECK(std::abs(e.value - want) < 4.0 * e.se);
  CHECK(e.value > -4.0 * e.se);
  CHECK(e.value < 1.0 + 4.0 * e.se);
}

TEST_CASE("vector models refuse marginal effects") {
  const Dataset data = simulate(default_design(ModelSpec::var1(2, 3), 200, 2));
  const Theta th = default_design(data.spec, 1, 1).theta;
  CHECK_THROWS_AS(ame(data, th, Subpopulation{}, 1), DomainError);
  CHECK_THROWS_AS(average_transition_probability(data, th, Subpopulation{}, TransitionState{{1}, 2, 1}), DomainError);
  const AverageEstimate same = average_transition_probability(data, th, Subpopulation{}, TransitionState{{1}, 1, 1});
  CHECK(same.n == 200);
  CHECK_THROWS_AS(plan_multiperiod(data.spec, th, 1, {1}, {1}, data.units[0]), DomainError);
}
