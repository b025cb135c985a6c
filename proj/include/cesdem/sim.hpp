#pragma once

#include <cstdint>

#include "cesdem/dataset.hpp"
#include "cesdem/model.hpp"

namespace cesdem {

enum class EtaLaw { TypeIEV, Gaussian, Logistic };

double eta_law_sd(EtaLaw law);

struct SimConfig {
  long target_rows = 10500;  // product rows; the last market is truncated to hit it
  int min_products = 2;
  int max_products = 5;

  // quality-kernel calibration; defaults follow the Monte Carlo design:
  // sigma=2, alpha=1, beta=(1,-2,1.5,.3,.2,.4), gamma=alpha, delta=(beta,.1)/4
  QualityKernelParams params;

  EtaLaw eta_law = EtaLaw::TypeIEV;

  // xi = dependence_weight * eta/sd(eta) + noise_weight * N(0,1); positive
  // dependence drives the choice-set selection bias
  double xi_dependence_weight = 0.5;
  double xi_noise_weight = 0.5;

  // cost-shock proxies z1, z2 ~ iid uniform(z_low, z_high)
  double z_low = 0.0;
  double z_high = 7.0;

  std::uint64_t seed = 12345;
  bool mask_censored_prices = false;  // mirror scanner data: no price without sales

  int n_brands = 4;  // brands 1..3 carry dummies; brand 0 is the base category

  static SimConfig defaults();
  // gate intercept 0 instead of gamma=alpha: reproduces the reported sample
  // composition (D/N ~ 0.48) of the benchmark table
  static SimConfig table1();
};

// deterministic price function: strictly increasing in xi, cost proxies weak
double price_psi(double z1, double z2, const Vec& x, double xi);

struct SimOutput {
  MarketDataset data;
  // latent truth aligned with data rows (numeraire rows carry xi=0, eta=+inf)
  Vec xi;
  Vec eta;
  std::vector<std::uint8_t> gate;
};

struct MarketDraw {
  std::vector<ProductPoint> products;  // numeraire appended last
  Mat z;                               // instruments per product row
};

// One market's draws from its own substream; market_id fixes the stream so
// markets can be generated in any order.
MarketDraw draw_market(const SimConfig& config, long market_id, int n_products);

SimOutput simulate(const SimConfig& config);

void write_latents_csv(const SimOutput& out, const std::string& path);

}  // namespace cesdem
