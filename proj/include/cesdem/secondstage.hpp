#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cesdem/dataset.hpp"
#include "cesdem/firststage.hpp"

namespace cesdem {

enum class SecondStageMethod { Powell, Heckman, LogitDrop, LogitImpute };

struct ZeroPolicy {
  enum class Mode { Drop, Impute };
  Mode mode = Mode::Drop;
  double imputed_value = 1e-8;
};

enum class PowellSe { Bootstrap, Sandwich, None };

struct SecondStageOptions {
  double c2 = 1.0;  // bandwidth constant for the pair weights
  PowellSe se = PowellSe::Bootstrap;
  int bootstrap_reps = 200;
  std::uint64_t seed = 2;
};

struct SecondStageFit {
  SecondStageMethod method = SecondStageMethod::Powell;
  std::string method_label;
  Vec coef;  // (price coefficient = -sigma, then x coefficients[, mills])
  Vec se;
  Mat covariance;
  std::vector<std::string> term_names;
  long n_effective = 0;   // N
  long d_uncensored = 0;  // D
  std::vector<std::string> warnings;

  double price_coefficient() const { return coef[0]; }
  double sigma_hat() const { return -coef[0]; }
};

// Pairwise-differenced weighted IV over all unordered pairs of uncensored
// observations pooled across markets; weights (1/h) K((w_i - w_j)'delta / h).
SecondStageFit powell_fit(const MarketDataset& data, const FirstStageFit& first,
                          const SecondStageOptions& opts = {});

// 2SLS with the inverse Mills ratio from the Probit index as an extra
// regressor; SEs carry the generated-regressor correction.
SecondStageFit heckman_fit(const MarketDataset& data, const FirstStageFit& probit,
                           const SecondStageOptions& opts = {});

SecondStageFit logit_fit(const MarketDataset& data, const ZeroPolicy& policy,
                         const SecondStageOptions& opts = {});

// exposed so the covariance routes can be cross-checked independently
Mat powell_covariance_sandwich(const MarketDataset& data, const FirstStageFit& first,
                               const SecondStageOptions& opts, const Vec& coef);
Mat powell_covariance_bootstrap(const MarketDataset& data, const FirstStageFit& first,
                                const SecondStageOptions& opts);

}  // namespace cesdem
