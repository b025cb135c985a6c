#include "cesdem/density.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cesdem/rng.hpp"

namespace cesdem {

namespace {

// pool-adjacent-violators, unit weights
void isotonic_inplace(Vec& y) {
  const Eigen::Index n = y.size();
  std::vector<double> value(n), weight(n);
  std::vector<Eigen::Index> size(n);
  Eigen::Index blocks = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    value[blocks] = y[i];
    weight[blocks] = 1.0;
    size[blocks] = 1;
    ++blocks;
    while (blocks > 1 && value[blocks - 2] > value[blocks - 1]) {
      const double w = weight[blocks - 2] + weight[blocks - 1];
      value[blocks - 2] =
          (value[blocks - 2] * weight[blocks - 2] + value[blocks - 1] * weight[blocks - 1]) / w;
      weight[blocks - 2] = w;
      size[blocks - 2] += size[blocks - 1];
      --blocks;
    }
  }
  Eigen::Index pos = 0;
  for (Eigen::Index b = 0; b < blocks; ++b)
    for (Eigen::Index k = 0; k < size[b]; ++k) y[pos++] = value[b];
}

}  // namespace

void EtaDensityEstimate::implied_moments(double& mean, double& variance) const {
  double mass = 0.0, m1 = 0.0, m2 = 0.0;
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    const double dg = cdf[i] - cdf[i - 1];
    const double mid = 0.5 * (grid[i] + grid[i - 1]);
    mass += dg;
    m1 += mid * dg;
    m2 += mid * mid * dg;
  }
  if (!(mass > 0.0)) {
    mean = 0.0;
    variance = 0.0;
    return;
  }
  mean = m1 / mass;
  variance = std::max(0.0, m2 / mass - mean * mean);
}

EtaDensityEstimate estimate_eta_cdf(const FirstStageFit& fit, int grid_size) {
  if (grid_size < 8) fail(ErrorKind::InvalidInput, "grid_size too small");
  if (fit.index_values.size() < 2)
    fail(ErrorKind::InvalidInput, "fit carries no index values");

  const double vmin = fit.index_values.minCoeff();
  const double vmax = fit.index_values.maxCoeff();
  double h = fit.bandwidth;
  if (!(h > 0.0)) h = 0.05 * (vmax - vmin);  // Probit fit has no bandwidth
  if (!((vmax - vmin) > 0.0))
    fail(ErrorKind::EstimatorFailure, "degenerate index range");

  EtaDensityEstimate est;
  est.grid.resize(grid_size);
  est.cdf.resize(grid_size);
  // propensity on the index grid [vmin-h, vmax+h]; eta support is its mirror
  const double lo = vmin - h;
  const double hi = vmax + h;
  for (int i = 0; i < grid_size; ++i) {
    const double v = lo + (hi - lo) * static_cast<double>(i) / (grid_size - 1);
    const double p = propensity_at_index(fit, v);
    // G_eta(-v) = 1 - P(buy | index v); flip v so the grid ascends in eta
    est.grid[grid_size - 1 - i] = -v;
    est.cdf[grid_size - 1 - i] = 1.0 - p;
  }
  isotonic_inplace(est.cdf);
  for (int i = 0; i < grid_size; ++i)
    est.cdf[i] = std::min(1.0, std::max(0.0, est.cdf[i]));

  est.pdf.resize(grid_size);
  const double step = (hi - lo) / (grid_size - 1);
  for (int i = 0; i < grid_size; ++i) {
    if (i == 0)
      est.pdf[i] = (est.cdf[1] - est.cdf[0]) / step;
    else if (i == grid_size - 1)
      est.pdf[i] = (est.cdf[i] - est.cdf[i - 1]) / step;
    else
      est.pdf[i] = (est.cdf[i + 1] - est.cdf[i - 1]) / (2.0 * step);
  }
  est.degenerate = est.cdf_span() < 0.05;
  return est;
}

Vec sample_eta(const EtaDensityEstimate& est, long count, double target_mean,
               double target_variance, std::uint64_t seed) {
  if (est.degenerate)
    fail(ErrorKind::EstimatorFailure,
         "density estimate is degenerate (flat link); sampling undefined");
  if (count < 2) fail(ErrorKind::InvalidInput, "need at least 2 draws");
  if (!(target_variance >= 0.0))
    fail(ErrorKind::InvalidInput, "target variance must be nonnegative");

  const Eigen::Index n = est.grid.size();
  const double p_lo = est.cdf[0];
  const double p_hi = est.cdf[n - 1];

  Vec draws(count);
  Rng rng(seed, 0xd3a51ull);
  for (long i = 0; i < count; ++i) {
    // restrict to the identified probability range; no endpoint atoms
    const double p = p_lo + (p_hi - p_lo) * rng.uniform01();
    const auto it = std::lower_bound(est.cdf.data(), est.cdf.data() + n, p);
    Eigen::Index j = static_cast<Eigen::Index>(it - est.cdf.data());
    if (j <= 0) j = 1;
    if (j >= n) j = n - 1;
    const double c0 = est.cdf[j - 1];
    const double c1 = est.cdf[j];
    const double t = c1 > c0 ? (p - c0) / (c1 - c0) : 0.5;
    draws[i] = est.grid[j - 1] + t * (est.grid[j] - est.grid[j - 1]);
  }

  const double mean = draws.mean();
  const double var = (draws.array() - mean).square().sum() / static_cast<double>(count);
  if (!(var > 0.0))
    fail(ErrorKind::EstimatorFailure, "sampled draws have zero variance");
  const double scale = std::sqrt(target_variance / var);
  for (long i = 0; i < count; ++i)
    draws[i] = target_mean + scale * (draws[i] - mean);
  return draws;
}

void write_density_csv(const EtaDensityEstimate& est, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write file: " + path);
  f << "eta,cdf,pdf\n";
  char buf[128];
  for (Eigen::Index i = 0; i < est.grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", est.grid[i], est.cdf[i],
                  est.pdf[i]);
    f << buf;
  }
}

void write_draws_csv(const Vec& draws, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write file: " + path);
  f << "draw\n";
  char buf[64];
  for (Eigen::Index i = 0; i < draws.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g\n", draws[i]);
    f << buf;
  }
}

}  // namespace cesdem
