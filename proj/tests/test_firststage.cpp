#include "doctest.h"

#include <cmath>

#include "cesdem/firststage.hpp"
#include "cesdem/rng.hpp"
#include "support/binary_fixture.hpp"

using namespace cesdem;
using namespace cesdem::testsupport;

TEST_CASE("probit recovers its own DGP within 3 SE") {
  Vec delta_true(2);
  delta_true << 1.0, -0.5;
  const BinaryDgp dgp = probit_dgp(5000, delta_true, 0.3, 314);
  const MarketDataset data = binary_dataset(dgp.w, dgp.outcome);
  const FirstStageFit fit = probit_fit(data);

  // raw-scale coefficients against the truth
  REQUIRE(fit.delta_raw.size() == 2);
  for (int k = 0; k < 2; ++k) {
    const double se_raw = fit.se[k] * std::abs(fit.scale);
    CHECK(std::abs(fit.delta_raw[k] - delta_true[k]) < 3.0 * se_raw);
  }
  CHECK(std::abs(fit.intercept - 0.3) < 3.0 * fit.intercept_se);

  // normalized-scale display contract
  CHECK(fit.delta[0] == 1.0);
  CHECK(fit.delta[1] == doctest::Approx(fit.delta_raw[1] / fit.delta_raw[0]));

  for (Eigen::Index i = 0; i < fit.propensity.size(); ++i) {
    CHECK(fit.propensity[i] >= 0.0);
    CHECK(fit.propensity[i] <= 1.0);
  }
  CHECK(fit.optimizer.converged);
}

TEST_CASE("probit perfect separation") {
  Mat w(40, 1);
  std::vector<std::uint8_t> outcome(40, 1);
  Rng rng(5);
  for (int i = 0; i < 40; ++i) w(i, 0) = rng.normal();
  const MarketDataset data = binary_dataset(w, outcome);
  CHECK_THROWS_WITH_AS(probit_fit(data), doctest::Contains("separation"), Error);
}

TEST_CASE("ks_propensity hand cases") {
  SUBCASE("all neighbors share outcome 1 -> clamped top") {
    Vec idx(5);
    idx << 0.0, 0.1, 0.2, 0.3, 0.4;
    std::vector<std::uint8_t> outcome{0, 1, 1, 1, 1};
    CHECK(ks_propensity(idx, outcome, 0.5, 0) == 1.0 - 1e-12);
  }
  SUBCASE("two observations see only each other") {
    Vec idx(2);
    idx << 0.0, 1.0;
    std::vector<std::uint8_t> outcome{1, 0};
    CHECK(ks_propensity(idx, outcome, 3.0, 0) == 1e-12);        // sees only the 0
    CHECK(ks_propensity(idx, outcome, 3.0, 1) == 1.0 - 1e-12);  // sees only the 1
  }
  SUBCASE("independent outcomes flatten to one half") {
    const Eigen::Index n = 10000;
    Vec idx(n);
    std::vector<std::uint8_t> outcome(n);
    Rng rng(29);
    for (Eigen::Index i = 0; i < n; ++i) {
      idx[i] = rng.normal();
      outcome[i] = rng.uniform01() < 0.5 ? 1 : 0;
    }
    const double h = sample_std(idx) * std::pow(double(n), -1.0 / 7.0);
    for (Eigen::Index probe : {17, 400, 5000, 9000})
      CHECK(ks_propensity(idx, outcome, h, probe) == doctest::Approx(0.5).epsilon(0.1));
  }
  SUBCASE("input checks") {
    Vec idx(2);
    idx << 0.0, 1.0;
    std::vector<std::uint8_t> outcome{1, 0};
    CHECK_THROWS_AS(ks_propensity(idx, outcome, 0.0, 0), Error);
    CHECK_THROWS_AS(ks_propensity(idx, outcome, 1.0, 5), Error);
  }
}

TEST_CASE("klein-spady tracks the probit direction under gaussian errors") {
  Vec delta_true(3);
  delta_true << 1.0, -0.5, 0.8;
  const BinaryDgp dgp = probit_dgp(4000, delta_true, 0.2, 2718);
  const MarketDataset data = binary_dataset(dgp.w, dgp.outcome);

  FirstStageOptions opts;
  opts.multistart = 1;
  const FirstStageFit probit = probit_fit(data, opts);
  const FirstStageFit ks = klein_spady_fit(data, opts);

  CHECK(ks.method == FirstStageMethod::KleinSpady);
  CHECK(ks.delta[0] == 1.0);
  CHECK(std::isnan(ks.se[0]));  // normalized slot reports no SE
  for (int k = 1; k < 3; ++k) {
    const double gap = std::abs(ks.delta[k] - probit.delta[k]);
    const double se = std::sqrt(ks.se[k] * ks.se[k] + probit.se[k] * probit.se[k]);
    CHECK(gap < 3.0 * se);
  }
  // pseudo-likelihood at the winner is at least the value at the probit start
  const Vec center_index = dgp.w * probit.delta;
  const double ll_start = ks_pseudo_loglik(center_index, ks.outcome, ks.bandwidth);
  CHECK(ks.optimizer.value >= ll_start - 1e-9);

  // propensity field matches the leave-one-out estimator at delta-hat
  const double p0 = ks_propensity(ks.index_values, ks.outcome, ks.bandwidth, 0);
  CHECK(ks.propensity[0] == doctest::Approx(p0).epsilon(1e-12));
}

TEST_CASE("klein-spady normalized estimate is invariant to w scaling") {
  Vec delta_true(2);
  delta_true << 1.0, -0.7;
  const BinaryDgp dgp = probit_dgp(1200, delta_true, 0.0, 99);
  const MarketDataset data = binary_dataset(dgp.w, dgp.outcome);

  FirstStageOptions opts;
  opts.multistart = 1;
  const FirstStageFit base = klein_spady_fit(data, opts);

  // rescale every w column jointly; the pinned-to-1 estimate must not move
  MarketDataset scaled = data;
  scaled.w *= 4.0;
  const FirstStageFit resc = klein_spady_fit(scaled, opts);
  CHECK(resc.delta[1] == doctest::Approx(base.delta[1]).epsilon(5e-3));
}

TEST_CASE("klein-spady multistart determinism on a unimodal problem") {
  Vec delta_true(2);
  delta_true << 1.0, 0.6;
  const BinaryDgp dgp = probit_dgp(800, delta_true, 0.1, 1001);
  const MarketDataset data = binary_dataset(dgp.w, dgp.outcome);

  FirstStageOptions one;
  one.multistart = 1;
  FirstStageOptions several = one;
  several.multistart = 4;
  const FirstStageFit a = klein_spady_fit(data, one);
  const FirstStageFit b = klein_spady_fit(data, several);
  CHECK(a.delta[1] == doctest::Approx(b.delta[1]).epsilon(1e-5));

  const FirstStageFit c = klein_spady_fit(data, several);
  CHECK(b.delta == c.delta);  // bit-identical rerun
}

TEST_CASE("klein-spady bootstrap standard errors roughly match the sandwich") {
  Vec delta_true(2);
  delta_true << 1.0, -0.6;
  const BinaryDgp dgp = probit_dgp(900, delta_true, 0.2, 77);
  const MarketDataset data = binary_dataset(dgp.w, dgp.outcome);

  FirstStageOptions opts;
  opts.multistart = 1;
  const FirstStageFit sw = klein_spady_fit(data, opts);

  FirstStageOptions bopts = opts;
  bopts.se = FirstStageSe::Bootstrap;
  bopts.bootstrap_reps = 60;
  const FirstStageFit bs = klein_spady_fit(data, bopts);
  CHECK(bs.delta == sw.delta);
  CHECK(bs.se[1] > 0.0);
  CHECK(bs.se[1] / sw.se[1] > 0.4);
  CHECK(bs.se[1] / sw.se[1] < 2.5);
}

TEST_CASE("propensity_at behaviour") {
  Vec delta_true(2);
  delta_true << 1.0, -0.5;
  const BinaryDgp dgp = probit_dgp(2000, delta_true, 0.3, 314);
  const MarketDataset data = binary_dataset(dgp.w, dgp.outcome);
  const FirstStageFit probit = probit_fit(data);

  // probit link saturates
  CHECK(propensity_at_index(probit, 1e6) == doctest::Approx(1.0));
  CHECK(propensity_at_index(probit, -1e6) == doctest::Approx(0.0));

  // evaluating at a training point reproduces the stored propensity
  Vec w0 = data.w.row(7);
  CHECK(propensity_at(probit, w0) == doctest::Approx(probit.propensity[7]).epsilon(1e-12));

  FirstStageOptions opts;
  opts.multistart = 1;
  const FirstStageFit ks = klein_spady_fit(data, opts);
  const double stored = ks.propensity[7];  // leave-one-out
  const double full = propensity_at(ks, Vec(data.w.row(7)));
  CHECK(std::abs(full - stored) < 0.05);  // smoothing error only

  Vec wrong_dim(3);
  wrong_dim << 1, 2, 3;
  CHECK_THROWS_AS(propensity_at(ks, wrong_dim), Error);
}

TEST_CASE("ks_propensity invariant to observation relabeling") {
  Vec idx(6);
  idx << 0.3, -0.1, 0.7, 0.2, -0.5, 0.05;
  std::vector<std::uint8_t> outcome{1, 0, 1, 1, 0, 0};
  const double h = 0.4;
  const double base = ks_propensity(idx, outcome, h, 2);

  // swap rows 0 and 4 (evaluation point stays in slot 2)
  Vec idx2 = idx;
  std::swap(idx2[0], idx2[4]);
  std::vector<std::uint8_t> out2 = outcome;
  std::swap(out2[0], out2[4]);
  CHECK(ks_propensity(idx2, out2, h, 2) == doctest::Approx(base).epsilon(1e-15));

  // adding a constant to all index values leaves leave-one-out fits unchanged
  Vec shifted = idx.array() + 5.0;
  CHECK(ks_propensity(shifted, outcome, h, 2) == doctest::Approx(base).epsilon(1e-12));
}
