#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "dpm/gmm.hpp"
#include "dpm/simulation.hpp"
#include "helpers.hpp"

using namespace dpm;
using testing::draw;
using testing::make_unit;

namespace {

EstimateConfig quick(EstimatorKind kind, const std::string& inst = "const") {
  EstimateConfig c;
  c.kind = kind;
  c.instruments = InstrumentSpec::parse(inst);
  return c;
}

} // namespace

TEST_CASE("instrument parsing") {
  const InstrumentSpec s = InstrumentSpec::parse("const, y0:1..2, x:1:1:1..3");
  CHECK(s.size() == 6);
  CHECK(InstrumentSpec::parse(s.to_string()).to_string() == s.to_string());
  CHECK_THROWS_AS(InstrumentSpec::parse("const,z:1"), DomainError);
  CHECK_THROWS_AS(InstrumentSpec::parse("x:1:1:3..1"), DomainError);
  CHECK_THROWS_AS(InstrumentSpec::parse(""), DomainError);
  const ModelSpec spec = ModelSpec::arp(1, 3);
  CHECK_THROWS_AS(InstrumentSpec::parse("y0:2").check(spec), DimensionError);
  CHECK_THROWS_AS(InstrumentSpec::parse("x:1:2:1").check(spec), DimensionError);
  CHECK_THROWS_AS(InstrumentSpec::parse("custom:nope").check(spec), DomainError);
  register_instrument("first_x_squared", [](const ModelSpec& sp, const PanelUnit& u) {
    const double v = u.xv(sp, 1, 0, 0);
    return v * v;
  });
  const PanelUnit u = make_unit(spec, {1}, {0, 1, 0}, {3.0, 0.0, 0.0});
  const auto z = instrument_values(spec, InstrumentSpec::parse("const,y0:1,custom:first_x_squared"), u);
  CHECK(z == std::vector<double>{1.0, 1.0, 9.0});
}

TEST_CASE("stacked moment vector") {
  const ModelSpec spec = ModelSpec::arp(1, 5, 3);
  auto ids = enumerate_moments(spec);
  ids.resize(6);
  const InstrumentSpec inst = InstrumentSpec::parse("const,y0:1,x:1:1:1..5,x:1:2:1..5,x:1:3:1..4");
  REQUIRE(inst.size() == 16);
  const Instance in = draw(spec, 1);
  const auto m = stack_moments(spec, ids, inst, in.unit, in.theta, false);
  CHECK(m.size() == 96);
  const auto z = instrument_values(spec, inst, in.unit);
  for (int j = 0; j < 6; ++j)
    for (int l = 0; l < 16; ++l) CHECK(m[j * 16 + l] == psi(spec, ids[j], in.unit, in.theta) * z[l]);
  // constant only: the raw values
  const auto raw = stack_moments(spec, ids, InstrumentSpec::constant_only(), in.unit, in.theta, false);
  for (int j = 0; j < 6; ++j) CHECK(raw[j] == psi(spec, ids[j], in.unit, in.theta));
  const auto res = stack_moments(spec, ids, InstrumentSpec::constant_only(), in.unit, in.theta, true);
  for (int j = 0; j < 6; ++j)
    CHECK(res[j] == doctest::Approx(raw[j] / rescale_factor(spec, ids[j], in.unit, in.theta)).epsilon(1e-14));
}

TEST_CASE("a unit with every moment at zero stacks to zeros") {
  const ModelSpec spec = ModelSpec::arp(1, 3, 1);
  Theta th = Theta::zeros(spec);
  th.beta = {0.9};
  for (int y3 = 0; y3 < 2; ++y3) {
    const PanelUnit u = make_unit(spec, {1}, {0, 0, y3}, {0.2, 0.2, 0.2});
    for (double v : stack_moments(spec, enumerate_moments(spec), InstrumentSpec::parse("const,x:1:1:1..3"), u, th, false))
      CHECK(v == 0.0);
  }
}

TEST_CASE("identity weight objective is the squared mean norm") {
  const Dataset data = simulate(default_design(ModelSpec::arp(1, 4), 300, 5));
  const MomentProblem prob(data, enumerate_moments(data.spec), InstrumentSpec::parse("const,y0:1"), false);
  Eigen::VectorXd th(2);
  th << 0.3, -0.2;
  const Eigen::VectorXd m = prob.mean(th);
  CHECK(gmm_objective(prob, th, WeightMatrix::identity(prob.dim())) == doctest::Approx(m.squaredNorm()).epsilon(1e-14));
  // instrument order only permutes the vector
  const MomentProblem swapped(data, enumerate_moments(data.spec), InstrumentSpec::parse("y0:1,const"), false);
  CHECK(gmm_objective(swapped, th, WeightMatrix::identity(prob.dim())) ==
        doctest::Approx(gmm_objective(prob, th, WeightMatrix::identity(prob.dim()))).epsilon(1e-14));
  const Eigen::VectorXd ms = swapped.mean(th);
  for (int j = 0; j < (int)prob.ids().size(); ++j) {
    CHECK(ms[2 * j] == m[2 * j + 1]);
    CHECK(ms[2 * j + 1] == m[2 * j]);
  }
}

TEST_CASE("weight matrix regularization") {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(3, 3);
  S(0, 0) = 2.0;
  S(1, 1) = 1.0;
  const WeightMatrix W = WeightMatrix::from_second_moment(S);
  CHECK(W.ridged());
  const Eigen::VectorXd v = W.solve(Eigen::VectorXd(Eigen::VectorXd::Ones(3)));
  CHECK(v.allFinite());
  const WeightMatrix good = WeightMatrix::from_second_moment(Eigen::MatrixXd::Identity(3, 3) * 4.0);
  CHECK_FALSE(good.ridged());
  CHECK(good.solve(Eigen::VectorXd(Eigen::VectorXd::Ones(3)))[1] == doctest::Approx(0.25));
  CHECK(good.condition() == doctest::Approx(1.0));
}

TEST_CASE("estimates do not depend on unit order or replication") {
  Dataset data = simulate(default_design(ModelSpec::arp(1, 4), 1500, 8));
  const EstimateConfig cfg = quick(EstimatorKind::Rescaled, "const,y0:1");
  const GmmResult a = estimate(data, cfg);
  REQUIRE(a.converged);
  Dataset perm = data;
  std::reverse(perm.units.begin(), perm.units.end());
  std::rotate(perm.units.begin(), perm.units.begin() + 377, perm.units.end());
  const GmmResult b = estimate(perm, cfg);
  CHECK(a.theta_flat == b.theta_flat);
  CHECK(a.objective == b.objective);
  CHECK(a.cov.covariance == b.cov.covariance);
  Dataset twice = data;
  twice.units.insert(twice.units.end(), data.units.begin(), data.units.end());
  const GmmResult c = estimate(twice, cfg);
  CHECK(a.theta_flat == c.theta_flat);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(c.cov.covariance(i, j) == doctest::Approx(0.5 * a.cov.covariance(i, j)).epsilon(1e-12));
}

TEST_CASE("exactly identified problem solves to zero") {
  // one moment, one parameter. With covariates the two T=3 moments can be
  // nearly collinear in a sample and then have no common root.
  const Dataset data = simulate(default_design(ModelSpec::arp(1, 3, 0), 4000, 12));
  EstimateConfig cfg = quick(EstimatorKind::Identity);
  cfg.ids = {enumerate_moments(data.spec).front()};
  const GmmResult r = estimate(data, cfg);
  CHECK(r.converged);
  CHECK(r.objective < 1e-12);
}

TEST_CASE("starting at the truth") {
  const Design d = default_design(ModelSpec::arp(2, 5), 3000, 21);
  const Dataset data = simulate(d);
  EstimateConfig cfg = quick(EstimatorKind::Rescaled, "const,y0:1..2");
  cfg.theta0 = d.theta;
  const GmmResult r = estimate(data, cfg);
  CHECK(r.converged);
  cfg.theta0.reset();
  const GmmResult cold = estimate(data, cfg);
  CHECK(r.iterations <= cold.iterations);
  CHECK((r.theta_flat - cold.theta_flat).lpNorm<Eigen::Infinity>() < 1e-3);
  CHECK(r.objective < 1e-3);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(r.theta_flat[j] - d.theta.flat()[j]) < 5 * r.cov.se[j] + 1e-3);
}

TEST_CASE("iterated estimator") {
  const Design d = default_design(ModelSpec::arp(1, 4), 4000, 33);
  const GmmResult r = estimate(simulate(d), quick(EstimatorKind::Iterated, "const,y0:1,x:1:1:1..4"));
  CHECK(r.converged);
  CHECK(r.rounds >= 1);
  CHECK(r.rounds <= 50);
  CHECK(r.objective_trace.size() == static_cast<size_t>(r.rounds) + 1);
  CHECK(r.weight_condition >= 1.0);
  for (int j = 0; j < 2; ++j) CHECK(std::abs(r.theta_flat[j] - d.theta.flat()[j]) < 5 * r.cov.se[j]);
}

TEST_CASE("estimation errors") {
  const Dataset short_panel = simulate(default_design(ModelSpec::arp(2, 3), 100, 1));
  CHECK_THROWS_AS(estimate(short_panel, quick(EstimatorKind::Rescaled)), DomainError);
  const Dataset tiny = simulate(default_design(ModelSpec::arp(1, 3), 2, 1));
  CHECK_THROWS_AS(estimate(tiny, quick(EstimatorKind::Rescaled)), DomainError);
  CHECK(parse_estimator("iterated") == EstimatorKind::Iterated);
  CHECK_THROWS_AS(parse_estimator("cue"), DomainError);
}

TEST_CASE("covariance is symmetric and positive semidefinite") {
  const Dataset data = simulate(default_design(ModelSpec::arp(1, 4, 2), 2000, 4));
  const GmmResult r = estimate(data, quick(EstimatorKind::Rescaled, "const,y0:1"));
  REQUIRE(r.has_covariance);
  const Eigen::MatrixXd& C = r.cov.covariance;
  CHECK((C - C.transpose()).norm() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  CHECK(es.eigenvalues().minCoeff() > -1e-14);
  for (int j = 0; j < 3; ++j) CHECK(r.cov.se[j] == doctest::Approx(std::sqrt(C(j, j))));
}

TEST_CASE("objective gradient by central differences") {
  const Dataset data = simulate(default_design(ModelSpec::arp(1, 4), 500, 6));
  // raw moments: the rescale factors sum absolute values and have kinks in theta
  const MomentProblem prob(data, enumerate_moments(data.spec), InstrumentSpec::constant_only(), false);
  const WeightMatrix W = WeightMatrix::identity(prob.dim());
  auto f = [&](const Eigen::VectorXd& x) { return gmm_objective(prob, x, W); };
  Eigen::VectorXd x(2);
  x << 0.4, 0.1;
  // Richardson: errors of h and h/2 central differences shrink by four
  const Eigen::VectorXd g_fine = fd_gradient(f, x, 1e-5);
  const Eigen::VectorXd g1 = fd_gradient(f, x, 4e-2), g2 = fd_gradient(f, x, 2e-2);
  for (int j = 0; j < 2; ++j) {
    const double ratio = (g1[j] - g_fine[j]) / (g2[j] - g_fine[j]);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("efficiency bound pieces") {
  const ModelSpec spec = ModelSpec::arp(1, 3, 1);
  Theta th = Theta::zeros(spec);
  th.gamma = {0.8};
  th.beta = {0.6};
  const HeterogeneityMixture mix{{-1.0, 0.5}, {0.4, 0.6}};
  std::vector<PanelUnit> xs;
  for (int i = 0; i < 30; ++i) xs.push_back(draw(spec, i).unit);
  const EfficiencyBound eb = efficiency_bound_ar1_t3(spec, xs, th, mix);
  CHECK(eb.dropped == 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> v0(eb.V0);
  CHECK(v0.eigenvalues().minCoeff() > 0.0);
  const auto ids = enumerate_moments(spec);
  for (size_t i = 0; i < xs.size(); ++i) {
    const BoundPoint& pt = eb.points[i];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(pt.Sigma);
    CHECK(es.eigenvalues().minCoeff() >= -1e-15);
    // E[psi | y0, x] under the mixture, differentiated numerically
    auto mean_psi = [&](const Theta& t, int k) {
      double s = 0.0;
      for (long long h = 0; h < 8; ++h) {
        PanelUnit u = xs[i];
        u.y = Path(spec, u.y0, h).outcomes(3);
        s += pt.prob[h] * psi(spec, ids[k], u, t);
      }
      return s;
    };
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 2; ++j) {
        const double h = 1e-5 * (1.0 + std::abs(th.flat()[j]));
        Eigen::VectorXd up = th.flat(), dn = th.flat();
        up[j] += h;
        dn[j] -= h;
        const double fd = (mean_psi(Theta::from_flat(spec, up), k) - mean_psi(Theta::from_flat(spec, dn), k)) / (2 * h);
        CHECK(std::abs(fd - pt.D(k, j)) < 1e-6);
      }
  }
}

TEST_CASE("pure model efficient moment is proportional to the conditional score") {
  const ModelSpec spec = ModelSpec::arp(1, 3, 0);
  for (double g : {0.7, -0.4, 1.3}) {
    Theta th = Theta::zeros(spec);
    th.gamma = {g};
    const PanelUnit base = make_unit(spec, {0}, {0, 0, 0}, {});
    const EfficiencyBound eb = efficiency_bound_ar1_t3(spec, {base}, th, HeterogeneityMixture{{-0.5, 0.3, 1.1}, {1, 2, 1}});
    double ratio = 0.0;
    for (long long h = 0; h < 8; ++h) {
      PanelUnit u = base;
      u.y = Path(spec, u.y0, h).outcomes(3);
      const double e = efficient_moment(spec, eb.points[0], u, th)[0];
      const double s = efficient_score_ar1_pure(spec, u, g).value;
      if (std::abs(s) < 1e-14) {
        CHECK(std::abs(e) < 1e-12);
        continue;
      }
      if (ratio == 0.0) ratio = e / s;
      CHECK(e == doctest::Approx(ratio * s).epsilon(1e-12));
    }
    CHECK(ratio != 0.0);
  }
}
