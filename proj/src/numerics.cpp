#include "cesdem/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cesdem/rng.hpp"

namespace cesdem {

double gaussian_kernel(double u) { return kInvSqrt2Pi * std::exp(-0.5 * u * u); }

double normal_cdf(double v) { return 0.5 * std::erfc(-v * M_SQRT1_2); }

double log_normal_cdf(double v) {
  if (v > -8.0) return std::log(normal_cdf(v));
  // asymptotic expansion; erfc underflows long before this matters
  return -0.5 * v * v - 0.5 * std::log(2.0 * kPi) - std::log(-v) +
         std::log1p(-1.0 / (v * v));
}

double inverse_mills(double v) {
  const double cdf = normal_cdf(v);
  if (cdf > 1e-300) return gaussian_kernel(v) / cdf;
  return -v;  // tail limit of phi/Phi
}

double sample_std(const Vec& v) {
  const auto n = v.size();
  if (n < 2) fail(ErrorKind::InvalidInput, "sample_std: need at least 2 values");
  const double mean = v.mean();
  const double ss = (v.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(n - 1));
}

double bandwidth(const BandwidthRule& rule, const Vec& index_values) {
  if (rule.constant <= 0.0)
    fail(ErrorKind::InvalidInput, "bandwidth: constant must be positive");
  const auto n = index_values.size();
  if (n < 2) fail(ErrorKind::Bandwidth, "bandwidth: need at least 2 observations");
  const double sd = sample_std(index_values);
  if (!(sd > 0.0))
    fail(ErrorKind::Bandwidth, "bandwidth: degenerate index (zero variance)");
  return sd * rule.constant * std::pow(static_cast<double>(n), -rule.rate_exponent);
}

Vec numeric_gradient(const Objective& f, const Vec& x, double rel_step) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * (1.0 + std::abs(x[k]));
    const double orig = x[k];
    xp[k] = orig + h;
    const double fp = f(xp);
    xp[k] = orig - h;
    const double fm = f(xp);
    xp[k] = orig;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat numeric_hessian(const Objective& f, const Vec& x, double rel_step) {
  const Eigen::Index n = x.size();
  Mat h(n, n);
  Vec step(n);
  for (Eigen::Index k = 0; k < n; ++k) step[k] = rel_step * (1.0 + std::abs(x[k]));
  const double f0 = f(x);
  Vec xp = x;
  Vec fpk(n), fmk(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    xp[k] = x[k] + step[k];
    fpk[k] = f(xp);
    xp[k] = x[k] - step[k];
    fmk[k] = f(xp);
    xp[k] = x[k];
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    h(k, k) = (fpk[k] - 2.0 * f0 + fmk[k]) / (step[k] * step[k]);
    for (Eigen::Index l = k + 1; l < n; ++l) {
      xp[k] = x[k] + step[k];
      xp[l] = x[l] + step[l];
      const double fpp = f(xp);
      xp[l] = x[l] - step[l];
      const double fpm = f(xp);
      xp[k] = x[k] - step[k];
      const double fmm = f(xp);
      xp[l] = x[l] + step[l];
      const double fmp = f(xp);
      xp[k] = x[k];
      xp[l] = x[l];
      h(k, l) = h(l, k) = (fpp - fpm - fmp + fmm) / (4.0 * step[k] * step[l]);
    }
  }
  return h;
}

namespace {

OptimizerReport bfgs_ascend(const Objective& f, const Vec& start,
                            const MaximizeOptions& opts) {
  OptimizerReport rep;
  const Eigen::Index n = start.size();
  Vec x = start;
  double fx = f(x);
  if (!std::isfinite(fx))
    fail(ErrorKind::InvalidInput, "maximize: objective not finite at a start");

  Mat hinv = Mat::Identity(n, n);
  Vec g = numeric_gradient(f, x, opts.fd_step);
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const double gnorm = g.cwiseAbs().maxCoeff();
    if (gnorm <= opts.grad_tol) {
      rep.converged = true;
      break;
    }
    Vec dir = hinv * g;  // ascent direction
    double slope = g.dot(dir);
    if (!(slope > 0.0)) {
      hinv = Mat::Identity(n, n);
      dir = g;
      slope = g.dot(dir);
      if (!(slope > 0.0)) break;  // zero gradient handled above; give up
    }
    // backtracking Armijo line search
    double step = 1.0;
    double fnew = fx;
    Vec xnew = x;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls) {
      xnew = x + step * dir;
      fnew = f(xnew);
      if (std::isfinite(fnew) && fnew >= fx + 1e-4 * step * slope) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;  // stalled; convergence decided by the gradient test
    Vec gnew = numeric_gradient(f, xnew, opts.fd_step);
    const Vec s = xnew - x;
    const Vec yv = gnew - g;
    const double sy = s.dot(yv);
    // BFGS update on the inverse Hessian of -f (sign-flipped via y -> -y)
    if (sy < -1e-12) {
      const double rho = -1.0 / sy;
      const Mat eye = Mat::Identity(n, n);
      const Mat left = eye + rho * s * yv.transpose();
      hinv = left * hinv * left.transpose() + rho * s * s.transpose();
    }
    x = xnew;
    fx = fnew;
    g = gnew;
  }
  rep.argmax = x;
  rep.value = fx;
  rep.grad_norm = g.cwiseAbs().maxCoeff();
  rep.iterations = it;
  rep.grad_tol_used = opts.grad_tol;
  if (rep.grad_norm <= opts.grad_tol) rep.converged = true;
  return rep;
}

}  // namespace

OptimizerReport maximize(const Objective& f, const std::vector<Vec>& starts,
                         const MaximizeOptions& opts) {
  if (starts.empty()) fail(ErrorKind::InvalidInput, "maximize: no starts given");
  OptimizerReport best;
  OptimizerReport best_any;
  int converged_count = 0;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    OptimizerReport rep = bfgs_ascend(f, starts[s], opts);
    rep.start_index = static_cast<int>(s);
    if (rep.value > best_any.value || best_any.start_index < 0) best_any = rep;
    if (rep.converged) {
      ++converged_count;
      if (rep.value > best.value || best.start_index < 0) best = rep;
    }
  }
  if (converged_count == 0) {
    std::ostringstream msg;
    msg << "maximize: no start converged (best gradient norm "
        << best_any.grad_norm << " after " << best_any.iterations
        << " iterations, tolerance " << opts.grad_tol << ")";
    throw OptimizationFailure(msg.str(), best_any);
  }
  best.starts_converged = converged_count;
  return best;
}

std::vector<Vec> multistart_draws(const Vec& center, int count, std::uint64_t seed) {
  if (count < 1) fail(ErrorKind::InvalidInput, "multistart_draws: count must be >= 1");
  std::vector<Vec> starts;
  starts.reserve(count);
  starts.push_back(center);
  Rng rng(seed, 0x6d73747274ull);  // dedicated stream for starts
  for (int s = 1; s < count; ++s) {
    Vec draw(center.size());
    for (Eigen::Index k = 0; k < center.size(); ++k) {
      const double sd = 0.2 * std::sqrt(std::abs(center[k]));
      draw[k] = center[k] + sd * rng.normal();
    }
    starts.push_back(std::move(draw));
  }
  return starts;
}

}  // namespace cesdem
