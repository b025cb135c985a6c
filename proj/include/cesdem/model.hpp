#pragma once

#include <utility>
#include <vector>

#include "cesdem/numerics.hpp"

namespace cesdem {

// (sigma, alpha, beta, gamma, delta) of the exponential-index quality kernel:
// chi = 1{gamma + w'delta + eta > 0} * exp(alpha + x'beta + xi)
struct QualityKernelParams {
  double sigma = 2.0;  // elasticity of substitution, > 0
  double alpha = 0.0;
  Vec beta;
  double gamma = 0.0;
  Vec delta;

  void validate(Eigen::Index dim_x, Eigen::Index dim_w) const;
};

struct ProductPoint {
  double price = 1.0;
  Vec x;
  Vec w;
  double xi = 0.0;
  double eta = 0.0;

  double log_price() const;

  // p=1, x=w=0, xi=0; the gate is pinned open by eta = +inf so the numeraire
  // survives any gate intercept
  static ProductPoint numeraire(Eigen::Index dim_x, Eigen::Index dim_w);
};

// strictly open at index > 0; a tie at exactly 0 is closed
bool gate_open(const ProductPoint& point, const QualityKernelParams& params);

// alpha + x'beta + xi, the log of the kernel when the gate is open
double quality_log_index(const ProductPoint& point, const QualityKernelParams& params);

double eval_quality_kernel(const ProductPoint& point, const QualityKernelParams& params);

Vec marshallian_quantities(const std::vector<ProductPoint>& products,
                           const QualityKernelParams& params, double budget);

Vec predicted_shares(const std::vector<ProductPoint>& products,
                     const QualityKernelParams& params);

// ln(pi_j / pi_ref) for the j != ref with pi_j > 0; censored entries are
// excluded rather than mapped to -inf
std::vector<std::pair<Eigen::Index, double>> log_share_ratio(const Vec& shares,
                                                             Eigen::Index ref = 0);

struct ElasticityTable {
  Mat marshallian;  // (j,c); diagonal entries are own elasticities
  Mat hicksian;
  Vec income;  // identically 1
};

ElasticityTable elasticities(const Vec& budget_shares, double sigma);

// softmax of -sigma_i*ln(p_j) + x_j'beta_i + xi_j over the choice set
Vec rc_individual_shares(const std::vector<ProductPoint>& products, double sigma_i,
                         const Vec& beta_i);

}  // namespace cesdem
