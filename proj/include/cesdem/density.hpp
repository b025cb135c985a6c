#pragma once

#include <cstdint>
#include <string>

#include "cesdem/firststage.hpp"

namespace cesdem {

// G_eta recovered from the fitted first-stage link, identified up to location
// and scale; isotonic correction keeps the cdf monotone.
struct EtaDensityEstimate {
  Vec grid;  // eta values, ascending
  Vec cdf;   // monotone nondecreasing, within [0,1]
  Vec pdf;   // central differences of the cdf
  bool degenerate = false;

  double cdf_span() const {
    return cdf.size() ? cdf[cdf.size() - 1] - cdf[0] : 0.0;
  }
  // first two moments implied by the cdf increments on the grid
  void implied_moments(double& mean, double& variance) const;
};

EtaDensityEstimate estimate_eta_cdf(const FirstStageFit& fit, int grid_size = 512);

// inverse-cdf draws restricted to the identified range, affine-adjusted so the
// sample hits the requested mean and (population) variance exactly
Vec sample_eta(const EtaDensityEstimate& estimate, long count, double target_mean,
               double target_variance, std::uint64_t seed);

void write_density_csv(const EtaDensityEstimate& estimate, const std::string& path);
void write_draws_csv(const Vec& draws, const std::string& path);

}  // namespace cesdem
