#include "cesdem/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cesdem {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dims(const ProductPoint& point, const QualityKernelParams& params) {
  if (point.x.size() != params.beta.size() || point.w.size() != params.delta.size()) {
    std::ostringstream msg;
    msg << "dimension mismatch: x " << point.x.size() << " vs beta "
        << params.beta.size() << ", w " << point.w.size() << " vs delta "
        << params.delta.size();
    fail(ErrorKind::InvalidInput, msg.str());
  }
}
}  // namespace

void QualityKernelParams::validate(Eigen::Index dim_x, Eigen::Index dim_w) const {
  if (!(sigma > 0.0)) fail(ErrorKind::InvalidInput, "sigma must be positive");
  if (beta.size() != dim_x)
    fail(ErrorKind::InvalidInput, "beta length does not match dim(x)");
  if (delta.size() != dim_w)
    fail(ErrorKind::InvalidInput, "delta length does not match dim(w)");
}

double ProductPoint::log_price() const {
  if (!(price > 0.0)) fail(ErrorKind::InvalidInput, "price must be positive");
  return std::log(price);
}

ProductPoint ProductPoint::numeraire(Eigen::Index dim_x, Eigen::Index dim_w) {
  ProductPoint p;
  p.price = 1.0;
  p.x = Vec::Zero(dim_x);
  p.w = Vec::Zero(dim_w);
  p.xi = 0.0;
  p.eta = kInf;
  return p;
}

bool gate_open(const ProductPoint& point, const QualityKernelParams& params) {
  check_dims(point, params);
  return params.gamma + point.w.dot(params.delta) + point.eta > 0.0;
}

double quality_log_index(const ProductPoint& point, const QualityKernelParams& params) {
  return params.alpha + point.x.dot(params.beta) + point.xi;
}

double eval_quality_kernel(const ProductPoint& point, const QualityKernelParams& params) {
  check_dims(point, params);
  if (!gate_open(point, params)) return 0.0;
  return std::exp(quality_log_index(point, params));
}

namespace {

// log numerator indices for open gates; closed gates marked -inf
Vec share_log_terms(const std::vector<ProductPoint>& products,
                    const QualityKernelParams& params, double price_exponent) {
  Vec terms(static_cast<Eigen::Index>(products.size()));
  for (std::size_t j = 0; j < products.size(); ++j) {
    const auto& p = products[j];
    check_dims(p, params);
    if (gate_open(p, params))
      terms[static_cast<Eigen::Index>(j)] =
          quality_log_index(p, params) + price_exponent * p.log_price();
    else
      terms[static_cast<Eigen::Index>(j)] = -kInf;
  }
  return terms;
}

double log_sum_exp(const Vec& terms) {
  const double m = terms.maxCoeff();
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (Eigen::Index j = 0; j < terms.size(); ++j) s += std::exp(terms[j] - m);
  return m + std::log(s);
}

}  // namespace

Vec marshallian_quantities(const std::vector<ProductPoint>& products,
                           const QualityKernelParams& params, double budget) {
  if (!(budget > 0.0)) fail(ErrorKind::InvalidInput, "budget must be positive");
  if (products.empty()) fail(ErrorKind::InvalidInput, "empty product list");
  const Vec numer = share_log_terms(products, params, -params.sigma);
  const Vec denom = share_log_terms(products, params, 1.0 - params.sigma);
  const double lse = log_sum_exp(denom);
  if (lse == -kInf)
    fail(ErrorKind::DegenerateDemand, "all gates closed: demand undefined");
  Vec q(numer.size());
  const double log_budget = std::log(budget);
  for (Eigen::Index j = 0; j < numer.size(); ++j)
    q[j] = numer[j] == -kInf ? 0.0 : std::exp(log_budget + numer[j] - lse);
  return q;
}

Vec predicted_shares(const std::vector<ProductPoint>& products,
                     const QualityKernelParams& params) {
  if (products.empty()) fail(ErrorKind::InvalidInput, "empty product list");
  const Vec terms = share_log_terms(products, params, -params.sigma);
  const double m = terms.maxCoeff();
  if (m == -kInf)
    fail(ErrorKind::DegenerateDemand, "all gates closed: shares undefined");
  Vec shares(terms.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < terms.size(); ++j) {
    shares[j] = terms[j] == -kInf ? 0.0 : std::exp(terms[j] - m);
    total += shares[j];
  }
  shares /= total;
  return shares;
}

std::vector<std::pair<Eigen::Index, double>> log_share_ratio(const Vec& shares,
                                                             Eigen::Index ref) {
  if (ref < 0 || ref >= shares.size())
    fail(ErrorKind::InvalidReference, "reference index out of range");
  if (!(shares[ref] > 0.0))
    fail(ErrorKind::InvalidReference, "reference share is zero");
  std::vector<std::pair<Eigen::Index, double>> out;
  out.reserve(shares.size() - 1);
  const double log_ref = std::log(shares[ref]);
  for (Eigen::Index j = 0; j < shares.size(); ++j) {
    if (j == ref || !(shares[j] > 0.0)) continue;
    out.emplace_back(j, std::log(shares[j]) - log_ref);
  }
  return out;
}

ElasticityTable elasticities(const Vec& budget_shares, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::InvalidInput, "sigma must be positive");
  const Eigen::Index n = budget_shares.size();
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (budget_shares[j] < 0.0)
      fail(ErrorKind::InvalidInput, "budget shares must be nonnegative");
    total += budget_shares[j];
  }
  // a numeraire remainder is allowed, so the sum may fall short of 1
  if (total > 1.0 + 1e-9)
    fail(ErrorKind::InvalidInput, "budget shares sum above 1");

  ElasticityTable table;
  table.marshallian.resize(n, n);
  table.hicksian.resize(n, n);
  table.income = Vec::Ones(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const double b = budget_shares[c];
      const double h = j == c ? -sigma * (1.0 - b) : sigma * b;
      table.hicksian(j, c) = h;
      // Slutsky with unit income elasticity, exact by construction
      table.marshallian(j, c) = h - b;
    }
  }
  return table;
}

Vec rc_individual_shares(const std::vector<ProductPoint>& products, double sigma_i,
                         const Vec& beta_i) {
  if (products.empty()) fail(ErrorKind::InvalidInput, "empty product list");
  if (!(sigma_i > 0.0)) fail(ErrorKind::InvalidInput, "sigma must be positive");
  Vec terms(static_cast<Eigen::Index>(products.size()));
  for (std::size_t j = 0; j < products.size(); ++j) {
    const auto& p = products[j];
    if (p.x.size() != beta_i.size())
      fail(ErrorKind::InvalidInput, "dimension mismatch between x and beta");
    terms[static_cast<Eigen::Index>(j)] =
        -sigma_i * p.log_price() + p.x.dot(beta_i) + p.xi;
  }
  const double m = terms.maxCoeff();
  Vec shares(terms.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < terms.size(); ++j) {
    shares[j] = std::exp(terms[j] - m);
    total += shares[j];
  }
  shares /= total;
  return shares;
}

}  // namespace cesdem
