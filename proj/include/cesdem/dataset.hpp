#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cesdem/numerics.hpp"

namespace cesdem {

// Binds CSV headers to column roles. x/w may share headers (the model allows
// common components) and z may repeat exogenous x columns; key roles must not
// collide otherwise.
struct ColumnManifest {
  std::string market = "market_id";
  std::string product = "product_id";
  std::string share = "share";
  std::string price = "price";
  std::string numeraire = "is_numeraire";  // optional 0/1 flag column
  std::string censored = "censored";       // optional; derived from share when absent
  std::vector<std::string> x_cols;
  std::vector<std::string> w_cols;
  std::vector<std::string> z_cols;
  std::string promotion;  // optional; donor grouping for missing-price fills

  // quantity-based ingestion: shares are constructed, numeraire rows appended
  std::string quantity;
  std::string market_size;     // explicit per-row market size column
  std::string customer_count;  // per-capita rule: size = count * per_capita
  double per_capita = 100.0;

  static ColumnManifest simulated();  // canonical simulate schema
  static ColumnManifest load(const std::string& path);  // key=value file
};

// Long-format product x market panel. The numeraire appears as an ordinary
// row with price 1, x = 0 and share equal to the outside share.
struct MarketDataset {
  std::vector<std::string> market_ids;
  std::vector<std::string> product_ids;
  std::vector<int> market_index;  // dense market number per row
  Vec share;
  Vec price;  // NaN when masked/missing
  Mat x, w, z;
  std::vector<std::string> x_names, w_names, z_names;
  std::vector<std::uint8_t> censored;
  std::vector<std::uint8_t> is_numeraire;
  std::vector<std::uint8_t> price_missing;
  std::vector<std::uint8_t> impute_excluded;  // no donors for a price fill
  std::vector<std::string> promotion;         // empty when the role is unbound

  Eigen::Index n_rows() const { return share.size(); }
  int n_markets() const;
  long n_products() const;    // non-numeraire rows (the N of the tables)
  long n_uncensored() const;  // uncensored non-numeraire rows (the D)
  double log_price(Eigen::Index row) const;
  Eigen::Index numeraire_row(int market) const;  // -1 when absent

  std::vector<std::vector<Eigen::Index>> rows_by_market() const;

  // checks every schema invariant; throws Validation listing all violations
  void validate(bool outside_good_mode = true) const;
};

MarketDataset load_csv(const std::string& path, const ColumnManifest& manifest);

// fixed decimal formatting (17 significant digits), byte-identical per input
void write_csv(const MarketDataset& data, const std::string& path);

// s_j = q_j / market_size within one market; the numeraire takes the rest
struct ConstructedShares {
  Vec shares;
  double numeraire_share = 0.0;
  bool zero_outside = false;  // size exactly exhausted; logit needs s_0 > 0
};
ConstructedShares construct_shares(const Vec& quantities, double market_size);

// Fills missing prices (and missing z cells) of censored rows with the mean
// over uncensored donors of the same product and promotion status in other
// markets; rows without donors are flagged impute_excluded.
void fill_missing_prices(MarketDataset& data);

}  // namespace cesdem
