#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cesdem/dataset.hpp"
#include "cesdem/numerics.hpp"

namespace cesdem {

enum class FirstStageMethod { Probit, KleinSpady };

enum class FirstStageSe { Sandwich, Bootstrap };

struct FirstStageOptions {
  double c1 = 1.0;  // bandwidth constant
  int multistart = 100;
  std::uint64_t seed = 1;
  int normalized_component = 0;  // w column whose coefficient is pinned to 1
  FirstStageSe se = FirstStageSe::Sandwich;
  int bootstrap_reps = 200;  // only used when se == Bootstrap
  MaximizeOptions optimizer;
};

// First-stage sample = every non-numeraire row; outcome = 1{share > 0}.
struct FirstStageFit {
  FirstStageMethod method = FirstStageMethod::Probit;
  // normalized scale: delta[normalized_component] == 1 exactly
  Vec delta;
  Vec se;  // aligned with delta; NaN on the Klein-Spady normalized slot
  int normalized_component = 0;
  double scale = 1.0;  // raw coefficient of the normalized component (Probit)

  double intercept = 0.0;  // Probit only, raw scale
  double intercept_se = 0.0;
  Vec delta_raw;  // Probit only

  Vec index_values;  // w'delta on the normalized scale, training rows
  std::vector<std::uint8_t> outcome;
  Vec propensity;  // fitted P(share > 0 | w) per training row

  double bandwidth = 0.0;  // Klein-Spady smoothing bandwidth
  OptimizerReport optimizer;
  std::vector<std::string> warnings;
  std::vector<Eigen::Index> rows;  // dataset rows behind the training sample
};

FirstStageFit probit_fit(const MarketDataset& data, const FirstStageOptions& opts = {});

// Leave-one-out Nadaraya-Watson estimate of P(outcome=1 | index) at
// observation leave_out, clamped to [1e-12, 1-1e-12].
double ks_propensity(const Vec& index, const std::vector<std::uint8_t>& outcome,
                     double h, Eigen::Index leave_out);

FirstStageFit klein_spady_fit(const MarketDataset& data,
                              const FirstStageOptions& opts = {});

// Probit: Phi(intercept + scale * v); Klein-Spady: full-sample kernel fit.
double propensity_at_index(const FirstStageFit& fit, double index_value);
double propensity_at(const FirstStageFit& fit, const Vec& w);

// Eq.-style pseudo-log-likelihood of the outcome vector given an index; the
// Klein-Spady objective evaluated at arbitrary index values. Exposed for
// tests and the density module.
double ks_pseudo_loglik(const Vec& index, const std::vector<std::uint8_t>& outcome,
                        double h);

}  // namespace cesdem
