#include "cesdem/firststage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cesdem/fastexp.hpp"
#include "cesdem/parallel.hpp"
#include "cesdem/rng.hpp"

namespace cesdem {

namespace {

constexpr double kClamp = 1e-12;  // floor inside logs, replaces trimming

struct Sample {
  Mat w;  // n x k
  std::vector<std::uint8_t> outcome;
  std::vector<Eigen::Index> rows;
};

Sample first_stage_sample(const MarketDataset& data) {
  Sample s;
  const Eigen::Index n = data.n_rows();
  std::vector<Eigen::Index> keep;
  keep.reserve(n);
  for (Eigen::Index r = 0; r < n; ++r)
    if (!data.is_numeraire[r]) keep.push_back(r);
  s.w.resize(static_cast<Eigen::Index>(keep.size()), data.w.cols());
  s.outcome.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    s.w.row(static_cast<Eigen::Index>(i)) = data.w.row(keep[i]);
    s.outcome.push_back(data.censored[keep[i]] ? 0 : 1);
  }
  s.rows = std::move(keep);
  return s;
}

// leave-one-out numerator/denominator sums for every observation at once;
// 4-lane accumulators keep the summation order fixed and let the loop
// vectorize without reassociation flags
void ks_sums(const double* v, const double* d, Eigen::Index n, double h,
             double* num, double* den) {
  const double inv_h = 1.0 / h;
  const Eigen::Index tail = n - n % 4;
  const auto blocks = fixed_blocks(static_cast<std::size_t>(n), 128);
  parallel_for_index(blocks.size(), [&](std::size_t b) {
    for (std::size_t j = blocks[b].begin; j < blocks[b].end; ++j) {
      const double vj = v[j];
      double s0[4] = {0.0, 0.0, 0.0, 0.0};
      double s1[4] = {0.0, 0.0, 0.0, 0.0};
      for (Eigen::Index k = 0; k < tail; k += 4) {
        for (int l = 0; l < 4; ++l) {
          const double u = (v[k + l] - vj) * inv_h;
          const double e = exp_neg(-0.5 * u * u);
          s0[l] += e;
          s1[l] += e * d[k + l];
        }
      }
      double a0 = (s0[0] + s0[1]) + (s0[2] + s0[3]);
      double a1 = (s1[0] + s1[1]) + (s1[2] + s1[3]);
      for (Eigen::Index k = tail; k < n; ++k) {
        const double u = (v[k] - vj) * inv_h;
        const double e = exp_neg(-0.5 * u * u);
        a0 += e;
        a1 += e * d[k];
      }
      // remove the k == j term (kernel value 1 before normalization)
      num[j] = a1 - d[j];
      den[j] = a0 - 1.0;
    }
  });
}

double clamp_prob(double p) {
  return std::min(1.0 - kClamp, std::max(kClamp, p));
}

Vec rescale_to_normalization(const Vec& raw, int norm_idx) {
  const double pivot = raw[norm_idx];
  if (pivot == 0.0)
    fail(ErrorKind::EstimatorFailure,
         "normalized component has zero coefficient; pick another column");
  return raw / pivot;
}

}  // namespace

double ks_propensity(const Vec& index, const std::vector<std::uint8_t>& outcome,
                     double h, Eigen::Index leave_out) {
  const Eigen::Index n = index.size();
  if (n < 2) fail(ErrorKind::InvalidInput, "ks_propensity: need at least 2 observations");
  if (!(h > 0.0)) fail(ErrorKind::InvalidInput, "ks_propensity: bandwidth must be positive");
  if (leave_out < 0 || leave_out >= n)
    fail(ErrorKind::InvalidInput, "ks_propensity: leave_out out of range");
  const double target = index[leave_out];
  double s0 = 0.0, s1 = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k == leave_out) continue;
    const double u = (index[k] - target) / h;
    const double e = std::exp(-0.5 * u * u);
    s0 += e;
    s1 += e * (outcome[k] ? 1.0 : 0.0);
  }
  if (!(s0 > 0.0)) fail(ErrorKind::Internal, "ks_propensity: empty kernel sum");
  return clamp_prob(s1 / s0);
}

double ks_pseudo_loglik(const Vec& index, const std::vector<std::uint8_t>& outcome,
                        double h) {
  const Eigen::Index n = index.size();
  std::vector<double> d(n), num(n), den(n);
  for (Eigen::Index j = 0; j < n; ++j) d[j] = outcome[j] ? 1.0 : 0.0;
  ks_sums(index.data(), d.data(), n, h, num.data(), den.data());

  const auto blocks = fixed_blocks(static_cast<std::size_t>(n), 512);
  std::vector<double> partial(blocks.size(), 0.0);
  parallel_for_index(blocks.size(), [&](std::size_t b) {
    double acc = 0.0;
    for (std::size_t j = blocks[b].begin; j < blocks[b].end; ++j) {
      const double p = clamp_prob(num[j] / den[j]);
      acc += d[j] * std::log(p) + (1.0 - d[j]) * std::log(1.0 - p);
    }
    partial[b] = acc;
  });
  double ll = 0.0;
  for (double p : partial) ll += p;  // fixed reduction order
  return ll;
}

FirstStageFit probit_fit(const MarketDataset& data, const FirstStageOptions& opts) {
  const Sample s = first_stage_sample(data);
  const Eigen::Index n = s.w.rows();
  const Eigen::Index k = s.w.cols();
  if (n < k + 2) fail(ErrorKind::InvalidInput, "probit: too few observations");

  long ones = std::accumulate(s.outcome.begin(), s.outcome.end(), 0L);
  if (ones == 0 || ones == n) {
    std::ostringstream msg;
    msg << "probit: perfect separation, all outcomes are "
        << (ones == 0 ? 0 : 1) << " (separating direction: intercept "
        << (ones == 0 ? "-1" : "+1") << ")";
    fail(ErrorKind::EstimatorFailure, msg.str());
  }

  // theta = (intercept, delta_raw)
  auto loglik = [&](const Vec& theta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = theta[0] + s.w.row(i).dot(theta.tail(k));
      ll += s.outcome[i] ? log_normal_cdf(t) : log_normal_cdf(-t);
    }
    return ll;
  };

  Vec start = Vec::Zero(k + 1);
  OptimizerReport rep;
  try {
    rep = maximize(loglik, {start}, opts.optimizer);
  } catch (const OptimizationFailure& e) {
    fail(ErrorKind::EstimatorFailure, std::string("probit did not converge: ") + e.what());
  }
  if (rep.argmax.tail(k).cwiseAbs().maxCoeff() > 1e4) {
    // coefficients running away: quasi-separation
    Vec dir = rep.argmax.tail(k) / rep.argmax.tail(k).norm();
    std::ostringstream msg;
    msg << "probit: perfect separation suspected along direction (";
    for (Eigen::Index i = 0; i < k; ++i) msg << (i ? ", " : "") << dir[i];
    msg << ")";
    fail(ErrorKind::EstimatorFailure, msg.str());
  }

  const Mat hess = numeric_hessian(loglik, rep.argmax);
  Mat info = -hess;
  const Mat cov = info.ldlt().solve(Mat::Identity(k + 1, k + 1));

  FirstStageFit fit;
  fit.method = FirstStageMethod::Probit;
  fit.normalized_component = opts.normalized_component;
  fit.delta_raw = rep.argmax.tail(k);
  fit.intercept = rep.argmax[0];
  fit.intercept_se = std::sqrt(std::max(0.0, cov(0, 0)));
  fit.scale = fit.delta_raw[opts.normalized_component];
  fit.delta = rescale_to_normalization(fit.delta_raw, opts.normalized_component);
  fit.se.resize(k);
  for (Eigen::Index i = 0; i < k; ++i)
    fit.se[i] = std::sqrt(std::max(0.0, cov(i + 1, i + 1))) / std::abs(fit.scale);
  fit.index_values = s.w * fit.delta;
  fit.outcome = s.outcome;
  fit.rows = s.rows;
  fit.propensity.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    fit.propensity[i] =
        normal_cdf(fit.intercept + fit.scale * fit.index_values[i]);
  fit.optimizer = rep;
  return fit;
}

namespace {

struct KsProblem {
  const Mat& w;
  std::vector<double> d;
  int norm_idx;
  double h;

  Vec expand(const Vec& theta) const {
    Vec delta(theta.size() + 1);
    for (Eigen::Index i = 0, j = 0; i < delta.size(); ++i)
      delta[i] = (i == norm_idx) ? 1.0 : theta[j++];
    return delta;
  }

  double loglik(const Vec& theta) const {
    const Vec delta = expand(theta);
    const Vec v = w * delta;
    const Eigen::Index n = v.size();
    std::vector<double> num(n), den(n);
    ks_sums(v.data(), d.data(), n, h, num.data(), den.data());
    const auto blocks = fixed_blocks(static_cast<std::size_t>(n), 512);
    std::vector<double> partial(blocks.size(), 0.0);
    parallel_for_index(blocks.size(), [&](std::size_t b) {
      double acc = 0.0;
      for (std::size_t j = blocks[b].begin; j < blocks[b].end; ++j) {
        const double p = clamp_prob(num[j] / den[j]);
        acc += d[j] * std::log(p) + (1.0 - d[j]) * std::log(1.0 - p);
      }
      partial[b] = acc;
    });
    double ll = 0.0;
    for (double p : partial) ll += p;
    return ll;
  }

  // per-observation log-likelihood contributions, for the OPG scores
  Vec loglik_terms(const Vec& theta) const {
    const Vec delta = expand(theta);
    const Vec v = w * delta;
    const Eigen::Index n = v.size();
    std::vector<double> num(n), den(n);
    ks_sums(v.data(), d.data(), n, h, num.data(), den.data());
    Vec terms(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = clamp_prob(num[j] / den[j]);
      terms[j] = d[j] * std::log(p) + (1.0 - d[j]) * std::log(1.0 - p);
    }
    return terms;
  }
};

Mat ks_opg_scores(const KsProblem& prob, const Vec& theta) {
  const Eigen::Index n = prob.w.rows();
  const Eigen::Index kk = theta.size();
  Mat scores(n, kk);
  Vec tp = theta;
  for (Eigen::Index c = 0; c < kk; ++c) {
    const double h = 1e-5 * (1.0 + std::abs(theta[c]));
    tp[c] = theta[c] + h;
    const Vec up = prob.loglik_terms(tp);
    tp[c] = theta[c] - h;
    const Vec dn = prob.loglik_terms(tp);
    tp[c] = theta[c];
    scores.col(c) = (up - dn) / (2.0 * h);
  }
  return scores;
}

}  // namespace

FirstStageFit klein_spady_fit(const MarketDataset& data, const FirstStageOptions& opts) {
  const FirstStageFit probit = probit_fit(data, opts);
  const Sample s = first_stage_sample(data);
  const Eigen::Index n = s.w.rows();
  const Eigen::Index k = s.w.cols();

  BandwidthRule rule{opts.c1, 1.0 / 7.0, "probit index (normalized scale)"};
  const double h = bandwidth(rule, probit.index_values);

  KsProblem prob{s.w, {}, opts.normalized_component, h};
  prob.d.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) prob.d[i] = s.outcome[i] ? 1.0 : 0.0;

  // center = probit direction on the normalized scale, pinned component dropped
  Vec center(k - 1);
  for (Eigen::Index i = 0, j = 0; i < k; ++i)
    if (i != opts.normalized_component) center[j++] = probit.delta[i];

  const auto starts = multistart_draws(center, opts.multistart, opts.seed);
  OptimizerReport rep;
  try {
    rep = maximize([&](const Vec& t) { return prob.loglik(t); }, starts,
                   opts.optimizer);
  } catch (const OptimizationFailure& e) {
    std::ostringstream msg;
    msg << "Klein-Spady estimation failed: " << e.what() << " (bandwidth " << h
        << ", " << starts.size() << " starts)";
    fail(ErrorKind::EstimatorFailure, msg.str());
  }

  FirstStageFit fit;
  fit.method = FirstStageMethod::KleinSpady;
  fit.normalized_component = opts.normalized_component;
  fit.delta = prob.expand(rep.argmax);
  fit.scale = 1.0;
  fit.bandwidth = h;
  fit.index_values = s.w * fit.delta;
  fit.outcome = s.outcome;
  fit.rows = s.rows;
  fit.optimizer = rep;

  fit.propensity.resize(n);
  {
    std::vector<double> num(n), den(n);
    ks_sums(fit.index_values.data(), prob.d.data(), n, h, num.data(), den.data());
    for (Eigen::Index i = 0; i < n; ++i)
      fit.propensity[i] = clamp_prob(num[i] / den[i]);
  }

  fit.se = Vec::Constant(k, std::numeric_limits<double>::quiet_NaN());
  if (opts.se == FirstStageSe::Sandwich) {
    // pseudo-MLE sandwich over the free components
    const Mat hess =
        numeric_hessian([&](const Vec& t) { return prob.loglik(t); }, rep.argmax);
    const Mat scores = ks_opg_scores(prob, rep.argmax);
    const Mat opg = scores.transpose() * scores;
    const Mat hinv = hess.ldlt().solve(Mat::Identity(k - 1, k - 1));
    const Mat cov = hinv * opg * hinv.transpose();
    for (Eigen::Index i = 0, j = 0; i < k; ++i)
      if (i != opts.normalized_component)
        fit.se[i] = std::sqrt(std::max(0.0, cov(j, j))), ++j;
  } else {
    // nonparametric bootstrap over markets, refitting from the full-sample
    // estimate with a single start
    const auto by_market = data.rows_by_market();
    Mat draws(opts.bootstrap_reps, k - 1);
    std::vector<Eigen::Index> pos_of_row(data.n_rows(), -1);
    for (std::size_t i = 0; i < s.rows.size(); ++i)
      pos_of_row[s.rows[i]] = static_cast<Eigen::Index>(i);
    for (int rep_i = 0; rep_i < opts.bootstrap_reps; ++rep_i) {
      Rng rng(opts.seed, 0xb0075ull + static_cast<std::uint64_t>(rep_i));
      std::vector<Eigen::Index> picks;
      for (std::size_t m = 0; m < by_market.size(); ++m) {
        const auto& rows = by_market[rng.uniform_int(by_market.size())];
        for (Eigen::Index r : rows)
          if (pos_of_row[r] >= 0) picks.push_back(pos_of_row[r]);
      }
      Mat wb(static_cast<Eigen::Index>(picks.size()), k);
      std::vector<std::uint8_t> ob(picks.size());
      for (std::size_t i = 0; i < picks.size(); ++i) {
        wb.row(static_cast<Eigen::Index>(i)) = s.w.row(picks[i]);
        ob[i] = s.outcome[picks[i]];
      }
      KsProblem bp{wb, {}, opts.normalized_component, h};
      bp.d.resize(static_cast<Eigen::Index>(picks.size()));
      for (std::size_t i = 0; i < picks.size(); ++i) bp.d[i] = ob[i] ? 1.0 : 0.0;
      try {
        const OptimizerReport brep =
            maximize([&](const Vec& t) { return bp.loglik(t); }, {rep.argmax},
                     opts.optimizer);
        draws.row(rep_i) = brep.argmax;
      } catch (const OptimizationFailure&) {
        draws.row(rep_i) = rep.argmax;  // count a stalled replicate at the center
      }
    }
    for (Eigen::Index i = 0, j = 0; i < k; ++i) {
      if (i == opts.normalized_component) continue;
      const double mean = draws.col(j).mean();
      fit.se[i] = std::sqrt((draws.col(j).array() - mean).square().sum() /
                            std::max(1, opts.bootstrap_reps - 1));
      ++j;
    }
  }
  fit.se[opts.normalized_component] = std::numeric_limits<double>::quiet_NaN();
  return fit;
}

double propensity_at_index(const FirstStageFit& fit, double index_value) {
  if (fit.method == FirstStageMethod::Probit)
    return normal_cdf(fit.intercept + fit.scale * index_value);
  const Eigen::Index n = fit.index_values.size();
  double s0 = 0.0, s1 = 0.0;
  for (Eigen::Index kk = 0; kk < n; ++kk) {
    const double u = (fit.index_values[kk] - index_value) / fit.bandwidth;
    const double e = std::exp(-0.5 * u * u);
    s0 += e;
    s1 += e * (fit.outcome[kk] ? 1.0 : 0.0);
  }
  if (!(s0 > 0.0)) return 0.5;  // no kernel mass this far out
  return clamp_prob(s1 / s0);
}

double propensity_at(const FirstStageFit& fit, const Vec& w) {
  if (w.size() != fit.delta.size())
    fail(ErrorKind::InvalidInput, "propensity_at: w dimension mismatch");
  return propensity_at_index(fit, w.dot(fit.delta));
}

}  // namespace cesdem
