#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cesdem/error.hpp"

namespace cesdem {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// standard normal density
double gaussian_kernel(double u);

// Phi and phi/Phi, stable in the deep lower tail
double normal_cdf(double v);
double log_normal_cdf(double v);
double inverse_mills(double v);

double sample_std(const Vec& v);  // n-1 denominator

// h_n = std(index) * C * n^(-1/7)
struct BandwidthRule {
  double constant = 1.0;
  double rate_exponent = 1.0 / 7.0;
  std::string scale_source;  // label for reports: whose index sets the scale
};

double bandwidth(const BandwidthRule& rule, const Vec& index_values);

using Objective = std::function<double(const Vec&)>;

struct MaximizeOptions {
  double grad_tol = 1e-6;
  int max_iterations = 500;
  double fd_step = 1e-6;  // h_k = fd_step * (1 + |x_k|)
};

struct OptimizerReport {
  Vec argmax;
  double value = -std::numeric_limits<double>::infinity();
  double grad_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  int start_index = -1;
  int starts_converged = 0;
  double grad_tol_used = 0;
};

class OptimizationFailure : public Error {
 public:
  OptimizationFailure(std::string msg, OptimizerReport best)
      : Error(ErrorKind::OptimizationFailure, std::move(msg)),
        best_effort(std::move(best)) {}
  OptimizerReport best_effort;
};

Vec numeric_gradient(const Objective& f, const Vec& x, double rel_step = 1e-6);
Mat numeric_hessian(const Objective& f, const Vec& x, double rel_step = 1e-4);

// BFGS ascent with central-difference gradients from every start; the best
// converged start wins. Deterministic given starts and objective. Throws
// OptimizationFailure carrying the best-effort report when nothing converges.
OptimizerReport maximize(const Objective& f, const std::vector<Vec>& starts,
                         const MaximizeOptions& opts = {});

// Random starts around `center` per the N(center, (1/5)diag(sqrt|center|))
// recipe; start 0 is always `center` itself. A zero center component gets
// zero spread, which the recipe implies literally.
std::vector<Vec> multistart_draws(const Vec& center, int count, std::uint64_t seed);

}  // namespace cesdem
