#include "cesdem/secondstage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "cesdem/fastexp.hpp"
#include "cesdem/parallel.hpp"
#include "cesdem/rng.hpp"

namespace cesdem {

namespace {

std::string describe_null_direction(const Mat& m, const std::vector<std::string>& names) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
  const Vec dir = eig.eigenvectors().col(0);
  std::ostringstream out;
  for (Eigen::Index i = 0; i < dir.size(); ++i) {
    if (i) out << ", ";
    out << (i < static_cast<Eigen::Index>(names.size()) ? names[i] : "?") << "="
        << dir[i];
  }
  return out.str();
}

void check_conditioning(const Mat& m, const std::vector<std::string>& names,
                        const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
  const Vec ev = eig.eigenvalues().cwiseAbs();
  if (ev.minCoeff() <= ev.maxCoeff() * 1e-12)
    fail(ErrorKind::RankDeficient,
         std::string(what) + " is rank deficient; null direction: " +
             describe_null_direction(m, names));
}

// estimation rows + design blocks shared by every second-stage method
struct Design {
  std::vector<Eigen::Index> rows;  // dataset rows used
  Vec y;                           // ln(share / outside share)
  Mat r;                           // (phi, x)
  Mat z;                           // instruments: x block + extra z columns
  std::vector<int> market;
  std::vector<std::string> term_names;
  std::vector<std::string> z_names;
};

Design build_design(const MarketDataset& data, const ZeroPolicy* impute_policy) {
  Design dz;
  const Eigen::Index n = data.n_rows();

  std::vector<double> outside(data.n_markets(),
                              std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index r = 0; r < n; ++r)
    if (data.is_numeraire[r]) outside[data.market_index[r]] = data.share[r];

  for (Eigen::Index r = 0; r < n; ++r) {
    if (data.is_numeraire[r]) continue;
    const bool censored = data.censored[r] != 0;
    if (impute_policy == nullptr && censored) continue;
    if (impute_policy != nullptr && censored &&
        (data.price_missing[r] || data.impute_excluded[r]))
      continue;  // no usable price even after donor fills
    const double s0 = outside[data.market_index[r]];
    if (std::isnan(s0))
      fail(ErrorKind::InvalidInput, "market " + data.market_ids[r] +
                                        " lacks an outside-good share row");
    if (!(s0 > 0.0))
      fail(ErrorKind::InvalidInput,
           "outside-good share is zero in market " + data.market_ids[r] +
               "; log share ratios undefined");
    dz.rows.push_back(r);
  }

  const Eigen::Index m = static_cast<Eigen::Index>(dz.rows.size());
  const Eigen::Index kx = data.x.cols();

  // instruments: exogenous x block plus the z columns not already in x
  std::set<std::string> xset(data.x_names.begin(), data.x_names.end());
  std::vector<Eigen::Index> z_extra;
  for (std::size_t c = 0; c < data.z_names.size(); ++c)
    if (!xset.count(data.z_names[c])) z_extra.push_back(static_cast<Eigen::Index>(c));

  dz.y.resize(m);
  dz.r.resize(m, 1 + kx);
  dz.z.resize(m, static_cast<Eigen::Index>(z_extra.size()) + kx);
  dz.market.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index row = dz.rows[i];
    const double s0 = outside[data.market_index[row]];
    double share = data.share[row];
    if (impute_policy != nullptr && share == 0.0) share = impute_policy->imputed_value;
    dz.y[i] = std::log(share / s0);
    dz.r(i, 0) = data.log_price(row);
    if (std::isnan(dz.r(i, 0)))
      fail(ErrorKind::InvalidInput,
           "missing price on an estimation row (product " + data.product_ids[row] + ")");
    dz.r.block(i, 1, 1, kx) = data.x.row(row);
    for (std::size_t c = 0; c < z_extra.size(); ++c)
      dz.z(i, static_cast<Eigen::Index>(c)) = data.z(row, z_extra[c]);
    dz.z.block(i, static_cast<Eigen::Index>(z_extra.size()), 1, kx) = data.x.row(row);
    dz.market[i] = data.market_index[row];
  }

  dz.term_names.push_back("log_price");
  for (const auto& nme : data.x_names) dz.term_names.push_back(nme);
  for (Eigen::Index c : z_extra) dz.z_names.push_back(data.z_names[c]);
  for (const auto& nme : data.x_names) dz.z_names.push_back(nme);

  if (dz.z.cols() < dz.r.cols())
    fail(ErrorKind::UnderIdentified,
         "under-identified: " + std::to_string(dz.z.cols()) + " instruments for " +
             std::to_string(dz.r.cols()) + " regressors");
  return dz;
}

struct TwoSlsResult {
  Vec coef;
  Mat covariance;  // HC0
  Mat bread;       // (R'PzR)^-1 R'Z (Z'Z)^-1, reused by corrected covariances
  Vec residuals;
};

TwoSlsResult twosls(const Vec& y, const Mat& r, const Mat& z,
                    const std::vector<std::string>& names) {
  const Mat zz = z.transpose() * z;
  check_conditioning(zz, names, "instrument cross-moment matrix");
  const Mat zr = z.transpose() * r;
  const Vec zy = z.transpose() * y;
  const Mat zz_inv_zr = zz.ldlt().solve(zr);
  const Mat rpzr = zr.transpose() * zz_inv_zr;
  check_conditioning(rpzr, names, "projected regressor matrix");
  TwoSlsResult res;
  res.coef = rpzr.ldlt().solve(zz_inv_zr.transpose() * zy);
  res.residuals = y - r * res.coef;
  res.bread = rpzr.ldlt().solve(zz_inv_zr.transpose());
  // HC0 sandwich
  Mat meat = Mat::Zero(z.cols(), z.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = res.residuals[i];
    meat.noalias() += (e * e) * (z.row(i).transpose() * z.row(i));
  }
  res.covariance = res.bread * meat * res.bread.transpose();
  return res;
}

// ---------------------------------------------------------------------------
// Powell pair machinery

struct PairContext {
  Design design;
  Vec v;       // selection index per estimation row
  double h = 0.0;
  Mat proj;    // kz x kr projection (identity columns when exactly identified)
  bool over_identified = false;
};

struct PairMoments {
  Mat a;  // sum w dz dz'
  Mat b;  // sum w dz dr'
  Vec c;  // sum w dz dy
};

PairMoments accumulate_pairs(const Vec& v, const Mat& z, const Mat& r, const Vec& y,
                             double h) {
  const Eigen::Index m = v.size();
  const Eigen::Index kz = z.cols();
  const Eigen::Index kr = r.cols();
  const double inv_h = 1.0 / h;

  const auto blocks = fixed_blocks(static_cast<std::size_t>(m), 64);
  std::vector<PairMoments> partial(blocks.size());
  parallel_for_index(blocks.size(), [&](std::size_t bi) {
    Mat a = Mat::Zero(kz, kz);
    Mat b = Mat::Zero(kz, kr);
    Vec c = Vec::Zero(kz);
    Vec dz(kz), dr(kr);
    for (std::size_t ii = blocks[bi].begin; ii < blocks[bi].end; ++ii) {
      const Eigen::Index i = static_cast<Eigen::Index>(ii);
      const double vi = v[i];
      for (Eigen::Index j = i + 1; j < m; ++j) {
        const double u = (vi - v[j]) * inv_h;
        const double w = exp_neg(-0.5 * u * u) * kInvSqrt2Pi * inv_h;
        dz = z.row(i) - z.row(j);
        dr = r.row(i) - r.row(j);
        const double dy = y[i] - y[j];
        a.selfadjointView<Eigen::Lower>().rankUpdate(dz, w);
        b.noalias() += (w * dz) * dr.transpose();
        c.noalias() += (w * dy) * dz;
      }
    }
    partial[bi].a = a.selfadjointView<Eigen::Lower>();
    partial[bi].b = std::move(b);
    partial[bi].c = std::move(c);
  });

  PairMoments total{Mat::Zero(kz, kz), Mat::Zero(kz, kr), Vec::Zero(kz)};
  for (const auto& p : partial) {  // fixed reduction order
    total.a += p.a;
    total.b += p.b;
    total.c += p.c;
  }
  return total;
}

PairContext build_pair_context(const MarketDataset& data, const FirstStageFit& first,
                               const SecondStageOptions& opts) {
  PairContext ctx;
  ctx.design = build_design(data, nullptr);
  const Eigen::Index m = static_cast<Eigen::Index>(ctx.design.rows.size());
  if (m < 2) fail(ErrorKind::EstimatorFailure, "fewer than 2 uncensored observations");

  ctx.v.resize(m);
  for (Eigen::Index i = 0; i < m; ++i)
    ctx.v[i] = data.w.row(ctx.design.rows[i]).dot(first.delta);

  BandwidthRule rule{opts.c2, 1.0 / 7.0, "first-stage index, uncensored sample"};
  ctx.h = bandwidth(rule, ctx.v);
  ctx.over_identified = ctx.design.z.cols() > ctx.design.r.cols();
  return ctx;
}

Vec solve_pair_system(const PairContext& ctx, const PairMoments& mom, Mat* proj_out) {
  const auto& names = ctx.design.z_names;
  if (!ctx.over_identified) {
    check_conditioning(mom.b, ctx.design.term_names, "weighted pair cross-moment");
    if (proj_out) *proj_out = Mat::Identity(mom.b.rows(), mom.b.cols());
    return mom.b.partialPivLu().solve(mom.c);
  }
  check_conditioning(mom.a, names, "weighted instrument pair moment");
  const Mat proj = mom.a.ldlt().solve(mom.b);  // kz x kr
  const Mat g = proj.transpose() * mom.b;
  check_conditioning(g, ctx.design.term_names, "projected pair cross-moment");
  if (proj_out) *proj_out = proj;
  return g.ldlt().solve(proj.transpose() * mom.c);
}

Vec powell_point_estimate(const PairContext& ctx, Mat* proj_out) {
  const PairMoments mom = accumulate_pairs(ctx.v, ctx.design.z, ctx.design.r,
                                           ctx.design.y, ctx.h);
  return solve_pair_system(ctx, mom, proj_out);
}

Mat pair_sandwich(const PairContext& ctx, const Vec& coef, const Mat& proj) {
  const Eigen::Index m = ctx.v.size();
  const Eigen::Index kr = ctx.design.r.cols();
  const double inv_h = 1.0 / ctx.h;

  // G-hat and the Hajek projections s_i of the estimating kernel
  Mat s = Mat::Zero(m, kr);
  Mat ghat = Mat::Zero(kr, kr);
  {
    const auto blocks = fixed_blocks(static_cast<std::size_t>(m), 64);
    std::vector<Mat> s_part(blocks.size());
    std::vector<Mat> g_part(blocks.size());
    parallel_for_index(blocks.size(), [&](std::size_t bi) {
      Mat sloc = Mat::Zero(m, kr);
      Mat gloc = Mat::Zero(kr, kr);
      Vec dz(ctx.design.z.cols()), dr(kr), zt(kr);
      for (std::size_t ii = blocks[bi].begin; ii < blocks[bi].end; ++ii) {
        const Eigen::Index i = static_cast<Eigen::Index>(ii);
        for (Eigen::Index j = i + 1; j < m; ++j) {
          const double u = (ctx.v[i] - ctx.v[j]) * inv_h;
          const double w = exp_neg(-0.5 * u * u) * kInvSqrt2Pi * inv_h;
          dz = ctx.design.z.row(i) - ctx.design.z.row(j);
          dr = ctx.design.r.row(i) - ctx.design.r.row(j);
          const double dy = ctx.design.y[i] - ctx.design.y[j];
          zt.noalias() = proj.transpose() * dz;
          const double e = dy - dr.dot(coef);
          sloc.row(i) += (w * e) * zt.transpose();
          sloc.row(j) += (w * e) * zt.transpose();
          gloc.noalias() += (w * zt) * dr.transpose();
        }
      }
      s_part[bi] = std::move(sloc);
      g_part[bi] = std::move(gloc);
    });
    for (std::size_t b = 0; b < s_part.size(); ++b) {
      s += s_part[b];
      ghat += g_part[b];
    }
  }
  const double pairs = 0.5 * static_cast<double>(m) * static_cast<double>(m - 1);
  s /= static_cast<double>(m - 1);
  ghat /= pairs;

  const Eigen::RowVectorXd mean = s.colwise().mean();
  Mat cov_s = Mat::Zero(kr, kr);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::RowVectorXd c = s.row(i) - mean;
    cov_s.noalias() += c.transpose() * c;
  }
  cov_s /= static_cast<double>(m);

  const Mat ginv = ghat.partialPivLu().solve(Mat::Identity(kr, kr));
  return ginv * ((4.0 / static_cast<double>(m)) * cov_s) * ginv.transpose();
}

}  // namespace

Mat powell_covariance_sandwich(const MarketDataset& data, const FirstStageFit& first,
                               const SecondStageOptions& opts, const Vec& coef) {
  PairContext ctx = build_pair_context(data, first, opts);
  Mat proj;
  const PairMoments mom =
      accumulate_pairs(ctx.v, ctx.design.z, ctx.design.r, ctx.design.y, ctx.h);
  solve_pair_system(ctx, mom, &proj);
  return pair_sandwich(ctx, coef, proj);
}

Mat powell_covariance_bootstrap(const MarketDataset& data, const FirstStageFit& first,
                                const SecondStageOptions& opts) {
  PairContext ctx = build_pair_context(data, first, opts);
  const Eigen::Index m = ctx.v.size();
  const int n_markets = data.n_markets();

  // group estimation rows by market once
  std::vector<std::vector<Eigen::Index>> members(n_markets);
  for (Eigen::Index i = 0; i < m; ++i) members[ctx.design.market[i]].push_back(i);

  const Eigen::Index kr = ctx.design.r.cols();
  Mat draws(opts.bootstrap_reps, kr);
  parallel_for_index(static_cast<std::size_t>(opts.bootstrap_reps), [&](std::size_t rep) {
    Rng rng(opts.seed, 0xb5000ull + rep);
    std::vector<Eigen::Index> picks;
    picks.reserve(m);
    for (int mm = 0; mm < n_markets; ++mm) {
      const auto& rows = members[rng.uniform_int(static_cast<std::uint64_t>(n_markets))];
      picks.insert(picks.end(), rows.begin(), rows.end());
    }
    const Eigen::Index mb = static_cast<Eigen::Index>(picks.size());
    Vec vb(mb), yb(mb);
    Mat zb(mb, ctx.design.z.cols()), rb(mb, kr);
    for (Eigen::Index i = 0; i < mb; ++i) {
      vb[i] = ctx.v[picks[i]];
      yb[i] = ctx.design.y[picks[i]];
      zb.row(i) = ctx.design.z.row(picks[i]);
      rb.row(i) = ctx.design.r.row(picks[i]);
    }
    // delta-hat and bandwidth held at their full-sample values
    const PairMoments mom = accumulate_pairs(vb, zb, rb, yb, ctx.h);
    draws.row(static_cast<Eigen::Index>(rep)) = solve_pair_system(ctx, mom, nullptr);
  });

  const Eigen::RowVectorXd mean = draws.colwise().mean();
  Mat cov = Mat::Zero(kr, kr);
  for (Eigen::Index rep = 0; rep < draws.rows(); ++rep) {
    const Eigen::RowVectorXd c = draws.row(rep) - mean;
    cov.noalias() += c.transpose() * c;
  }
  cov /= std::max(1.0, static_cast<double>(draws.rows() - 1));
  return cov;
}

SecondStageFit powell_fit(const MarketDataset& data, const FirstStageFit& first,
                          const SecondStageOptions& opts) {
  PairContext ctx = build_pair_context(data, first, opts);
  Mat proj;
  const Vec coef = powell_point_estimate(ctx, &proj);

  SecondStageFit fit;
  fit.method = SecondStageMethod::Powell;
  fit.method_label = first.method == FirstStageMethod::KleinSpady ? "ks-powell"
                                                                  : "probit-powell";
  fit.coef = coef;
  fit.term_names = ctx.design.term_names;
  fit.d_uncensored = static_cast<long>(ctx.design.rows.size());
  fit.n_effective = data.n_products();

  if (data.n_markets() < 30 && opts.se == PowellSe::Bootstrap)
    fit.warnings.push_back("fewer than 30 markets: bootstrap covariance unreliable");

  switch (opts.se) {
    case PowellSe::Sandwich:
      fit.covariance = pair_sandwich(ctx, coef, proj);
      break;
    case PowellSe::Bootstrap:
      fit.covariance = powell_covariance_bootstrap(data, first, opts);
      break;
    case PowellSe::None:
      fit.covariance = Mat::Zero(coef.size(), coef.size());
      break;
  }
  fit.se = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

namespace {

// covariance accounting for the Mills column being built from estimated
// Probit coefficients; the Probit score noise enters through the moments
Mat heckman_corrected_covariance(const MarketDataset& data,
                                 const FirstStageFit& probit, const Design& dz,
                                 const Mat& z_full, const Vec& mills,
                                 const Vec& coef, const Vec& residuals,
                                 const Mat& bread) {
  const Eigen::Index kp = probit.delta_raw.size() + 1;
  const Eigen::Index kz = z_full.cols();
  const Eigen::Index d_count = static_cast<Eigen::Index>(dz.rows.size());
  const double coef_mills = coef[coef.size() - 1];

  // expected information and per-observation scores of the Probit stage
  Mat info = Mat::Zero(kp, kp);
  Mat scores(static_cast<Eigen::Index>(probit.rows.size()), kp);
  Vec wi(kp);
  for (std::size_t i = 0; i < probit.rows.size(); ++i) {
    const Eigen::Index row = probit.rows[i];
    wi[0] = 1.0;
    wi.tail(kp - 1) = data.w.row(row);
    const double v = probit.intercept + data.w.row(row).dot(probit.delta_raw);
    const double cdf = std::min(1.0 - 1e-12, std::max(1e-12, normal_cdf(v)));
    const double pdf = gaussian_kernel(v);
    const double d = probit.outcome[i] ? 1.0 : 0.0;
    info.noalias() += (pdf * pdf / (cdf * (1.0 - cdf))) * (wi * wi.transpose());
    scores.row(static_cast<Eigen::Index>(i)) =
        ((d - cdf) * pdf / (cdf * (1.0 - cdf))) * wi.transpose();
  }
  const Mat cov_p = info.ldlt().solve(Mat::Identity(kp, kp));

  // sum over estimation rows of d(z e)/d(delta'): the Mills slope channel
  Mat m_delta = Mat::Zero(kz, kp);
  for (Eigen::Index i = 0; i < d_count; ++i) {
    const Eigen::Index row = dz.rows[i];
    const double v = probit.intercept + data.w.row(row).dot(probit.delta_raw);
    const double dmills = -mills[i] * (v + mills[i]);
    wi[0] = 1.0;
    wi.tail(kp - 1) = data.w.row(row);
    m_delta.noalias() -=
        (coef_mills * dmills) * (z_full.row(i).transpose() * wi.transpose());
  }
  const Mat md_cov = m_delta * cov_p;

  // per full-sample observation: U_i = 1{est} z_i e_i + (sum dM) cov_p s_i
  std::vector<Eigen::Index> pos_in_design(data.n_rows(), -1);
  for (Eigen::Index i = 0; i < d_count; ++i) pos_in_design[dz.rows[i]] = i;
  Mat u(static_cast<Eigen::Index>(probit.rows.size()), kz);
  for (std::size_t i = 0; i < probit.rows.size(); ++i) {
    const Eigen::Index row = probit.rows[i];
    Eigen::RowVectorXd ui = Eigen::RowVectorXd::Zero(kz);
    const Eigen::Index pos = pos_in_design[row];
    if (pos >= 0) ui += residuals[pos] * z_full.row(pos);
    ui += (md_cov * scores.row(static_cast<Eigen::Index>(i)).transpose()).transpose();
    u.row(static_cast<Eigen::Index>(i)) = ui;
  }
  const Eigen::RowVectorXd mean = u.colwise().mean();
  Mat meat = Mat::Zero(kz, kz);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const Eigen::RowVectorXd c = u.row(i) - mean;
    meat.noalias() += c.transpose() * c;
  }
  return bread * meat * bread.transpose();
}

}  // namespace

SecondStageFit heckman_fit(const MarketDataset& data, const FirstStageFit& probit,
                           const SecondStageOptions& opts) {
  if (probit.method != FirstStageMethod::Probit)
    fail(ErrorKind::InvalidInput, "heckman_fit needs a Probit first stage");
  Design dz = build_design(data, nullptr);
  const Eigen::Index m = static_cast<Eigen::Index>(dz.rows.size());

  // inverse Mills ratio at the raw Probit index, appended to both blocks
  Vec mills(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double v =
        probit.intercept + data.w.row(dz.rows[i]).dot(probit.delta_raw);
    mills[i] = inverse_mills(v);
  }
  Mat r(m, dz.r.cols() + 1), z(m, dz.z.cols() + 1);
  r << dz.r, mills;
  z << dz.z, mills;
  dz.term_names.push_back("mills");
  dz.z_names.push_back("mills");

  TwoSlsResult res = twosls(dz.y, r, z, dz.z_names);

  SecondStageFit fit;
  fit.method = SecondStageMethod::Heckman;
  fit.method_label = "probit-heckman";
  fit.coef = res.coef;
  fit.term_names = dz.term_names;
  fit.d_uncensored = static_cast<long>(dz.rows.size());
  fit.n_effective = data.n_products();

  // empirical exclusion check: a Mills column spanned by (phi, x) leaves the
  // selection term unidentified
  {
    const Vec fitted =
        dz.r * (dz.r.transpose() * dz.r).ldlt().solve(dz.r.transpose() * mills);
    const double ss_res = (mills - fitted).squaredNorm();
    const double ss_tot = (mills.array() - mills.mean()).square().sum();
    if (!(ss_tot > 0.0) || ss_res / ss_tot < 1e-3)
      fit.warnings.push_back(
          "inverse Mills ratio nearly collinear with (log price, x); "
          "selection term not separately identified");
  }

  if (opts.se == PowellSe::None) {
    fit.covariance = Mat::Zero(res.coef.size(), res.coef.size());
    fit.se = Vec::Zero(res.coef.size());
    return fit;
  }

  fit.covariance = heckman_corrected_covariance(data, probit, dz, z, mills,
                                                res.coef, res.residuals, res.bread);
  if (!fit.covariance.allFinite()) {
    // bootstrap fallback over markets, refitting the Probit stage each time
    fit.warnings.push_back("generated-regressor correction failed; bootstrap SEs");
    const auto by_market = data.rows_by_market();
    Mat draws(opts.bootstrap_reps, res.coef.size());
    parallel_for_index(static_cast<std::size_t>(opts.bootstrap_reps),
                       [&](std::size_t rep) {
      Rng rng(opts.seed, 0x4ec4ull + rep);
      MarketDataset sample;
      sample.x_names = data.x_names;
      sample.w_names = data.w_names;
      sample.z_names = data.z_names;
      std::vector<std::pair<Eigen::Index, int>> rows;  // (source row, new market)
      for (int pick = 0; pick < data.n_markets(); ++pick) {
        const auto& mr = by_market[rng.uniform_int(
            static_cast<std::uint64_t>(data.n_markets()))];
        for (Eigen::Index rr : mr) rows.emplace_back(rr, pick);
      }
      const Eigen::Index nb = static_cast<Eigen::Index>(rows.size());
      sample.share.resize(nb);
      sample.price.resize(nb);
      sample.x.resize(nb, data.x.cols());
      sample.w.resize(nb, data.w.cols());
      sample.z.resize(nb, data.z.cols());
      for (Eigen::Index i = 0; i < nb; ++i) {
        const auto [src, mkt] = rows[i];
        sample.market_ids.push_back("b" + std::to_string(mkt));
        sample.product_ids.push_back(data.product_ids[src]);
        sample.market_index.push_back(mkt);
        sample.share[i] = data.share[src];
        sample.price[i] = data.price[src];
        sample.x.row(i) = data.x.row(src);
        sample.w.row(i) = data.w.row(src);
        sample.z.row(i) = data.z.row(src);
        sample.censored.push_back(data.censored[src]);
        sample.is_numeraire.push_back(data.is_numeraire[src]);
        sample.price_missing.push_back(data.price_missing[src]);
        sample.impute_excluded.push_back(data.impute_excluded[src]);
      }
      FirstStageOptions fo;
      fo.normalized_component = probit.normalized_component;
      const FirstStageFit pb = probit_fit(sample, fo);
      SecondStageOptions so = opts;
      so.se = PowellSe::None;
      const SecondStageFit hb = heckman_fit(sample, pb, so);
      draws.row(static_cast<Eigen::Index>(rep)) = hb.coef;
    });
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    Mat cov = Mat::Zero(res.coef.size(), res.coef.size());
    for (Eigen::Index rep = 0; rep < draws.rows(); ++rep) {
      const Eigen::RowVectorXd c = draws.row(rep) - mean;
      cov.noalias() += c.transpose() * c;
    }
    fit.covariance = cov / std::max(1.0, static_cast<double>(draws.rows() - 1));
  }
  fit.se = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

SecondStageFit logit_fit(const MarketDataset& data, const ZeroPolicy& policy,
                         const SecondStageOptions& opts) {
  (void)opts;
  const bool impute = policy.mode == ZeroPolicy::Mode::Impute;
  if (impute && !(policy.imputed_value > 0.0))
    fail(ErrorKind::InvalidInput, "imputed share value must be positive");
  Design dz = build_design(data, impute ? &policy : nullptr);

  TwoSlsResult res = twosls(dz.y, dz.r, dz.z, dz.z_names);

  SecondStageFit fit;
  fit.method = impute ? SecondStageMethod::LogitImpute : SecondStageMethod::LogitDrop;
  if (impute) {
    std::ostringstream label;
    label << "logit-impute:" << policy.imputed_value;
    fit.method_label = label.str();
  } else {
    fit.method_label = "logit-drop";
  }
  fit.coef = res.coef;
  fit.term_names = dz.term_names;
  fit.covariance = res.covariance;
  fit.se = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.d_uncensored = static_cast<long>(dz.rows.size());
  fit.n_effective = static_cast<long>(dz.rows.size());
  return fit;
}

}  // namespace cesdem
