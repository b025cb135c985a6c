#include "cesdem/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cesdem/rng.hpp"

namespace cesdem {

double eta_law_sd(EtaLaw law) {
  switch (law) {
    case EtaLaw::TypeIEV: return kPi / std::sqrt(6.0);
    case EtaLaw::Gaussian: return 1.0;
    case EtaLaw::Logistic: return kPi / std::sqrt(3.0);
  }
  return 1.0;
}

namespace {
double draw_eta(EtaLaw law, Rng& rng) {
  switch (law) {
    case EtaLaw::TypeIEV: return rng.gumbel() - kEulerMascheroni;  // mean zero
    case EtaLaw::Gaussian: return rng.normal();
    case EtaLaw::Logistic: return rng.logistic();
  }
  return 0.0;
}
}  // namespace

SimConfig SimConfig::defaults() {
  SimConfig c;
  c.params.sigma = 2.0;
  c.params.alpha = 1.0;
  c.params.beta = Vec(6);
  c.params.beta << 1.0, -2.0, 1.5, 0.3, 0.2, 0.4;
  c.params.gamma = c.params.alpha;
  c.params.delta = Vec(7);
  c.params.delta << c.params.beta[0], c.params.beta[1], c.params.beta[2],
      c.params.beta[3], c.params.beta[4], c.params.beta[5], 0.1;
  c.params.delta *= 0.25;
  return c;
}

SimConfig SimConfig::table1() {
  SimConfig c = defaults();
  c.params.gamma = 0.0;
  return c;
}

double price_psi(double z1, double z2, const Vec& x, double xi) {
  if (x.size() != 6) fail(ErrorKind::InvalidInput, "price_psi expects dim(x) == 6");
  return 2.0 + (2.0 * z1 + 4.0 * z2 + 2.0 * x[0] + x[0] * x[1] - x[1] * x[2] +
                5.0 * x[3] + 7.0 * x[4] + 9.0 * x[5] + 8.0 * xi) /
                   50.0;
}

MarketDraw draw_market(const SimConfig& config, long market_id, int n_products) {
  Rng rng(config.seed, static_cast<std::uint64_t>(market_id) + 1);
  const double eta_sd = eta_law_sd(config.eta_law);

  MarketDraw draw;
  draw.products.reserve(n_products + 1);
  draw.z.resize(n_products + 1, 2);
  for (int j = 0; j < n_products; ++j) {
    const double w1 = rng.lognormal(0.0, 1.0);
    const double w2 = rng.uniform(1.0, 5.0);
    const double w3 = static_cast<double>(rng.poisson(3.0));
    const double w4 = rng.normal();
    const auto brand = rng.uniform_int(static_cast<std::uint64_t>(config.n_brands));

    ProductPoint p;
    p.x = Vec::Zero(6);
    p.x[0] = w1;
    p.x[1] = w2;
    p.x[2] = w3;
    if (brand >= 1) p.x[2 + static_cast<Eigen::Index>(brand)] = 1.0;
    p.w = Vec::Zero(7);
    p.w.head(6) = p.x;
    p.w[6] = w4;

    p.eta = draw_eta(config.eta_law, rng);
    p.xi = config.xi_dependence_weight * p.eta / eta_sd +
           config.xi_noise_weight * rng.normal();
    const double z1 = rng.uniform(config.z_low, config.z_high);
    const double z2 = rng.uniform(config.z_low, config.z_high);
    draw.z(j, 0) = z1;
    draw.z(j, 1) = z2;
    p.price = price_psi(z1, z2, p.x, p.xi);
    if (!(p.price > 0.0))
      fail(ErrorKind::Internal, "nonpositive simulated price; extreme tail draw");
    draw.products.push_back(std::move(p));
  }
  draw.products.push_back(ProductPoint::numeraire(6, 7));
  draw.z.row(n_products).setZero();
  return draw;
}

SimOutput simulate(const SimConfig& config) {
  if (config.target_rows < 2)
    fail(ErrorKind::InvalidInput, "target_rows must be at least 2");
  if (config.min_products < 1 || config.max_products < config.min_products)
    fail(ErrorKind::InvalidInput, "bad products-per-market range");
  config.params.validate(6, 7);

  // market sizes first, so product draws stay within per-market substreams
  std::vector<int> counts;
  {
    Rng rng(config.seed, 0);
    long total = 0;
    while (total < config.target_rows) {
      int n = config.min_products +
              static_cast<int>(rng.uniform_int(
                  static_cast<std::uint64_t>(config.max_products - config.min_products + 1)));
      if (total + n > config.target_rows) n = static_cast<int>(config.target_rows - total);
      counts.push_back(n);
      total += n;
    }
  }

  SimOutput out;
  MarketDataset& d = out.data;
  d.x_names = {"w1", "w2", "w3", "brand1", "brand2", "brand3"};
  d.w_names = {"w1", "w2", "w3", "brand1", "brand2", "brand3", "w4"};
  d.z_names = {"z1", "z2"};

  const Eigen::Index total_rows =
      config.target_rows + static_cast<Eigen::Index>(counts.size());
  d.share.resize(total_rows);
  d.price.resize(total_rows);
  d.x.resize(total_rows, 6);
  d.w.resize(total_rows, 7);
  d.z.resize(total_rows, 2);
  d.censored.resize(total_rows);
  d.is_numeraire.resize(total_rows);
  d.price_missing.assign(total_rows, 0);
  d.impute_excluded.assign(total_rows, 0);
  d.market_ids.resize(total_rows);
  d.product_ids.resize(total_rows);
  d.market_index.resize(total_rows);
  out.xi.resize(total_rows);
  out.eta.resize(total_rows);
  out.gate.resize(total_rows);

  Eigen::Index row = 0;
  for (std::size_t m = 0; m < counts.size(); ++m) {
    const MarketDraw draw = draw_market(config, static_cast<long>(m), counts[m]);
    const Vec shares = predicted_shares(draw.products, config.params);
    for (std::size_t j = 0; j < draw.products.size(); ++j) {
      const auto& p = draw.products[j];
      const bool numeraire = j + 1 == draw.products.size();
      d.market_ids[row] = "m" + std::to_string(m);
      d.product_ids[row] = numeraire ? "outside" : "p" + std::to_string(j);
      d.market_index[row] = static_cast<int>(m);
      d.share[row] = shares[static_cast<Eigen::Index>(j)];
      d.censored[row] = d.share[row] == 0.0 ? 1 : 0;
      d.is_numeraire[row] = numeraire ? 1 : 0;
      const bool mask = config.mask_censored_prices && d.censored[row] && !numeraire;
      d.price[row] = mask ? std::numeric_limits<double>::quiet_NaN() : p.price;
      d.price_missing[row] = mask ? 1 : 0;
      d.x.row(row) = p.x;
      d.w.row(row) = p.w;
      d.z.row(row) = draw.z.row(static_cast<Eigen::Index>(j));
      out.xi[row] = p.xi;
      out.eta[row] = p.eta;
      out.gate[row] = gate_open(p, config.params) ? 1 : 0;
      ++row;
    }
  }
  d.validate();
  return out;
}

void write_latents_csv(const SimOutput& out, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write file: " + path);
  f << "market_id,product_id,xi,eta,gate\n";
  char buf[40];
  for (Eigen::Index r = 0; r < out.data.n_rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g", out.xi[r]);
    f << out.data.market_ids[r] << ',' << out.data.product_ids[r] << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", out.eta[r]);
    f << ',' << buf << ',' << int(out.gate[r]) << '\n';
  }
}

}  // namespace cesdem
