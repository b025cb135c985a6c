#include "cesdem/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cesdem {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& item : split_csv_line(s))
    if (!item.empty()) out.push_back(item);
  return out;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) {
    out = kNaN;
    return true;  // empty cell = missing value
  }
  if (cell == "inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  if (cell == "-inf") {
    out = -std::numeric_limits<double>::infinity();
    return true;
  }
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::string format_value(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

ColumnManifest ColumnManifest::simulated() {
  // canonical simulate schema: x = (w1..w3, brand1..brand3), w = x + (w4)
  ColumnManifest m;
  m.x_cols = {"w1", "w2", "w3", "brand1", "brand2", "brand3"};
  m.w_cols = m.x_cols;
  m.w_cols.push_back("w4");
  m.z_cols = {"z1", "z2"};
  return m;
}

ColumnManifest ColumnManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open manifest: " + path);
  ColumnManifest m;
  m.x_cols.clear();
  m.w_cols.clear();
  m.z_cols.clear();
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Io, "manifest line is not key=value: " + t);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "market") m.market = value;
    else if (key == "product") m.product = value;
    else if (key == "share") m.share = value;
    else if (key == "price") m.price = value;
    else if (key == "numeraire") m.numeraire = value;
    else if (key == "x") m.x_cols = split_list(value);
    else if (key == "w") m.w_cols = split_list(value);
    else if (key == "z") m.z_cols = split_list(value);
    else if (key == "promotion") m.promotion = value;
    else if (key == "quantity") m.quantity = value;
    else if (key == "market_size") m.market_size = value;
    else if (key == "customer_count") m.customer_count = value;
    else if (key == "per_capita") {
      if (!parse_double(value, m.per_capita))
        fail(ErrorKind::Io, "manifest per_capita is not numeric");
    } else {
      fail(ErrorKind::Io, "unknown manifest key: " + key);
    }
  }
  return m;
}

int MarketDataset::n_markets() const {
  int m = 0;
  for (int idx : market_index) m = std::max(m, idx + 1);
  return m;
}

long MarketDataset::n_products() const {
  long n = 0;
  for (Eigen::Index r = 0; r < n_rows(); ++r)
    if (!is_numeraire[r]) ++n;
  return n;
}

long MarketDataset::n_uncensored() const {
  long n = 0;
  for (Eigen::Index r = 0; r < n_rows(); ++r)
    if (!is_numeraire[r] && !censored[r]) ++n;
  return n;
}

double MarketDataset::log_price(Eigen::Index row) const {
  const double p = price[row];
  if (std::isnan(p)) return kNaN;
  if (!(p > 0.0)) fail(ErrorKind::InvalidInput, "nonpositive price in log_price");
  return std::log(p);
}

Eigen::Index MarketDataset::numeraire_row(int market) const {
  for (Eigen::Index r = 0; r < n_rows(); ++r)
    if (is_numeraire[r] && market_index[r] == market) return r;
  return -1;
}

std::vector<std::vector<Eigen::Index>> MarketDataset::rows_by_market() const {
  std::vector<std::vector<Eigen::Index>> by_market(n_markets());
  for (Eigen::Index r = 0; r < n_rows(); ++r)
    by_market[market_index[r]].push_back(r);
  return by_market;
}

void MarketDataset::validate(bool outside_good_mode) const {
  std::vector<std::string> violations;
  const Eigen::Index n = n_rows();

  auto sizes_ok = [&](std::size_t got, const char* what) {
    if (static_cast<Eigen::Index>(got) != n)
      violations.push_back(std::string(what) + " length does not match row count");
  };
  sizes_ok(market_ids.size(), "market_ids");
  sizes_ok(product_ids.size(), "product_ids");
  sizes_ok(censored.size(), "censored");
  sizes_ok(is_numeraire.size(), "is_numeraire");
  if (!violations.empty())
    fail(ErrorKind::Validation, "dataset structure broken: " + violations.front());

  for (Eigen::Index r = 0; r < n; ++r) {
    if (share[r] < 0.0 || share[r] > 1.0)
      violations.push_back("row " + std::to_string(r + 1) + ": share outside [0,1]");
    const bool zero_share = share[r] == 0.0;
    if (static_cast<bool>(censored[r]) != zero_share)
      violations.push_back("row " + std::to_string(r + 1) +
                           ": censored flag inconsistent with share");
    if (!censored[r] && !price_missing.empty() && price_missing[r] &&
        is_numeraire[r] == 0)
      violations.push_back("row " + std::to_string(r + 1) +
                           ": uncensored row with missing price");
  }

  // duplicate (market, product) keys
  {
    std::set<std::pair<std::string, std::string>> seen;
    for (Eigen::Index r = 0; r < n; ++r) {
      auto key = std::make_pair(market_ids[r], product_ids[r]);
      if (!seen.insert(key).second)
        violations.push_back("row " + std::to_string(r + 1) + ": duplicate key (" +
                             key.first + ", " + key.second + ")");
    }
  }

  const auto by_market = rows_by_market();
  for (std::size_t m = 0; m < by_market.size(); ++m) {
    double total = 0.0;
    int numeraires = 0;
    for (Eigen::Index r : by_market[m]) {
      total += share[r];
      numeraires += is_numeraire[r];
    }
    if (outside_good_mode && numeraires != 1)
      violations.push_back("market " + std::to_string(m) + ": expected one numeraire row, found " +
                           std::to_string(numeraires));
    if (outside_good_mode && std::abs(total - 1.0) > 1e-9)
      violations.push_back("market " + std::to_string(m) + ": shares sum to " +
                           std::to_string(total));
  }

  // exclusion restriction: at least one w column absent from the x block
  {
    std::set<std::string> xset(x_names.begin(), x_names.end());
    bool excluded = false;
    for (const auto& name : w_names)
      if (!xset.count(name)) excluded = true;
    if (!excluded && !w_names.empty())
      violations.push_back("exclusion restriction violated: every w column is in x");
  }

  if (!violations.empty()) {
    std::ostringstream msg;
    msg << violations.size() << " validation failure(s):";
    for (const auto& v : violations) msg << "\n  " << v;
    fail(ErrorKind::Validation, msg.str());
  }
}

namespace {

struct RawTable {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;
  std::unordered_map<std::string, int> index;

  int require(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end())
      fail(ErrorKind::Io, "missing required column: " + name);
    return it->second;
  }
  int optional(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }
};

RawTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open file: " + path);
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Io, "empty file: " + path);
  t.headers = split_csv_line(line);
  for (std::size_t k = 0; k < t.headers.size(); ++k)
    t.index.emplace(t.headers[k], static_cast<int>(k));
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.headers.size())
      fail(ErrorKind::Io, "row " + std::to_string(t.rows.size() + 2) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(t.headers.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

double numeric_cell(const RawTable& t, std::size_t row, int col) {
  double v;
  if (!parse_double(t.rows[row][col], v))
    fail(ErrorKind::Io, "non-numeric cell at row " + std::to_string(row + 2) +
                            ", column " + t.headers[col] + ": '" + t.rows[row][col] + "'");
  return v;
}

}  // namespace

MarketDataset load_csv(const std::string& path, const ColumnManifest& manifest) {
  const RawTable t = read_table(path);
  const bool quantity_mode = !manifest.quantity.empty();

  const int c_market = t.require(manifest.market);
  const int c_product = t.require(manifest.product);
  const int c_price = t.require(manifest.price);
  const int c_share = quantity_mode ? -1 : t.require(manifest.share);
  const int c_quantity = quantity_mode ? t.require(manifest.quantity) : -1;
  const int c_numeraire = quantity_mode ? -1 : t.optional(manifest.numeraire);
  const int c_censored =
      (quantity_mode || manifest.censored.empty()) ? -1 : t.optional(manifest.censored);
  const int c_promo =
      manifest.promotion.empty() ? -1 : t.require(manifest.promotion);
  const int c_size =
      manifest.market_size.empty() ? -1 : t.require(manifest.market_size);
  const int c_count =
      manifest.customer_count.empty() ? -1 : t.require(manifest.customer_count);
  if (quantity_mode && c_size < 0 && c_count < 0)
    fail(ErrorKind::Io, "quantity ingestion needs market_size or customer_count");

  std::vector<int> c_x, c_w, c_z;
  for (const auto& name : manifest.x_cols) c_x.push_back(t.require(name));
  for (const auto& name : manifest.w_cols) c_w.push_back(t.require(name));
  for (const auto& name : manifest.z_cols) c_z.push_back(t.require(name));

  const std::size_t raw_n = t.rows.size();
  MarketDataset d;
  d.x_names = manifest.x_cols;
  d.w_names = manifest.w_cols;
  d.z_names = manifest.z_cols;

  std::vector<double> shares, prices, quantities, sizes;
  shares.reserve(raw_n);
  std::unordered_map<std::string, int> market_of;
  for (std::size_t r = 0; r < raw_n; ++r) {
    const std::string mkt = t.rows[r][c_market];
    if (!market_of.count(mkt))
      market_of.emplace(mkt, static_cast<int>(market_of.size()));
    d.market_ids.push_back(mkt);
    d.product_ids.push_back(t.rows[r][c_product]);
    d.market_index.push_back(market_of[mkt]);
    prices.push_back(numeric_cell(t, r, c_price));
    if (quantity_mode) {
      quantities.push_back(numeric_cell(t, r, c_quantity));
      double size = kNaN;
      if (c_size >= 0) size = numeric_cell(t, r, c_size);
      else size = numeric_cell(t, r, c_count) * manifest.per_capita;
      sizes.push_back(size);
    } else {
      shares.push_back(numeric_cell(t, r, c_share));
    }
    d.is_numeraire.push_back(
        c_numeraire >= 0 ? (numeric_cell(t, r, c_numeraire) != 0.0 ? 1 : 0) : 0);
    if (c_promo >= 0) d.promotion.push_back(t.rows[r][c_promo]);
  }

  const auto fill_matrix = [&](Mat& out, const std::vector<int>& cols) {
    out.resize(static_cast<Eigen::Index>(raw_n), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < raw_n; ++r)
      for (std::size_t k = 0; k < cols.size(); ++k)
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
            numeric_cell(t, r, cols[k]);
  };
  fill_matrix(d.x, c_x);
  fill_matrix(d.w, c_w);
  fill_matrix(d.z, c_z);

  if (quantity_mode) {
    // construct shares market by market and append one numeraire row each
    d.share.resize(static_cast<Eigen::Index>(raw_n));
    d.price.resize(static_cast<Eigen::Index>(raw_n));
    for (std::size_t r = 0; r < raw_n; ++r) d.price[static_cast<Eigen::Index>(r)] = prices[r];

    std::vector<std::vector<Eigen::Index>> by_market(market_of.size());
    for (std::size_t r = 0; r < raw_n; ++r)
      by_market[d.market_index[r]].push_back(static_cast<Eigen::Index>(r));

    std::vector<double> numeraire_share(market_of.size());
    for (std::size_t m = 0; m < by_market.size(); ++m) {
      const auto& rows = by_market[m];
      Vec q(static_cast<Eigen::Index>(rows.size()));
      double size = 0.0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        q[static_cast<Eigen::Index>(k)] = quantities[rows[k]];
        size = sizes[rows[k]];
      }
      const ConstructedShares cs = construct_shares(q, size);
      for (std::size_t k = 0; k < rows.size(); ++k)
        d.share[rows[k]] = cs.shares[static_cast<Eigen::Index>(k)];
      numeraire_share[m] = cs.numeraire_share;
    }
    for (std::size_t m = 0; m < by_market.size(); ++m) {
      std::string mkt_id;
      for (auto& [name, idx] : market_of)
        if (idx == static_cast<int>(m)) mkt_id = name;
      d.market_ids.push_back(mkt_id);
      d.product_ids.push_back("outside");
      d.market_index.push_back(static_cast<int>(m));
      d.is_numeraire.push_back(1);
      if (c_promo >= 0) d.promotion.push_back("");
      const Eigen::Index nr = d.share.size();
      d.share.conservativeResize(nr + 1);
      d.price.conservativeResize(nr + 1);
      d.share[nr] = numeraire_share[m];
      d.price[nr] = 1.0;
      d.x.conservativeResize(nr + 1, Eigen::NoChange);
      d.w.conservativeResize(nr + 1, Eigen::NoChange);
      d.z.conservativeResize(nr + 1, Eigen::NoChange);
      d.x.row(nr).setZero();
      d.w.row(nr).setZero();
      d.z.row(nr).setZero();
    }
  } else {
    d.share.resize(static_cast<Eigen::Index>(raw_n));
    d.price.resize(static_cast<Eigen::Index>(raw_n));
    for (std::size_t r = 0; r < raw_n; ++r) {
      d.share[static_cast<Eigen::Index>(r)] = shares[r];
      d.price[static_cast<Eigen::Index>(r)] = prices[r];
    }
  }

  const Eigen::Index n = d.share.size();
  d.censored.resize(n);
  d.price_missing.resize(n);
  d.impute_excluded.assign(n, 0);
  for (Eigen::Index r = 0; r < n; ++r) {
    // honor an explicit censored column so validation can catch mismatches
    if (c_censored >= 0 && r < static_cast<Eigen::Index>(raw_n))
      d.censored[r] = numeric_cell(t, static_cast<std::size_t>(r), c_censored) != 0.0;
    else
      d.censored[r] = d.share[r] == 0.0 ? 1 : 0;
    d.price_missing[r] = std::isnan(d.price[r]) ? 1 : 0;
  }
  d.validate();
  return d;
}

void write_csv(const MarketDataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write file: " + path);
  out << "market_id,product_id,share,price,censored,is_numeraire";
  for (const auto& name : d.x_names) out << ',' << name;
  // w columns already in x are not repeated
  std::set<std::string> xset(d.x_names.begin(), d.x_names.end());
  std::vector<Eigen::Index> extra_w;
  for (std::size_t k = 0; k < d.w_names.size(); ++k)
    if (!xset.count(d.w_names[k])) {
      out << ',' << d.w_names[k];
      extra_w.push_back(static_cast<Eigen::Index>(k));
    }
  for (const auto& name : d.z_names) out << ',' << name;
  if (!d.promotion.empty()) out << ",promotion";
  out << '\n';
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    out << d.market_ids[r] << ',' << d.product_ids[r] << ','
        << format_value(d.share[r]) << ',' << format_value(d.price[r]) << ','
        << int(d.censored[r]) << ',' << int(d.is_numeraire[r]);
    for (Eigen::Index k = 0; k < d.x.cols(); ++k)
      out << ',' << format_value(d.x(r, k));
    for (Eigen::Index k : extra_w) out << ',' << format_value(d.w(r, k));
    for (Eigen::Index k = 0; k < d.z.cols(); ++k)
      out << ',' << format_value(d.z(r, k));
    if (!d.promotion.empty()) out << ',' << d.promotion[r];
    out << '\n';
  }
}

ConstructedShares construct_shares(const Vec& quantities, double market_size) {
  if (!(market_size > 0.0))
    fail(ErrorKind::InvalidInput, "market size must be positive");
  double total = 0.0;
  for (Eigen::Index j = 0; j < quantities.size(); ++j) {
    if (quantities[j] < 0.0)
      fail(ErrorKind::InvalidInput, "quantities must be nonnegative");
    total += quantities[j];
  }
  if (total > market_size * (1.0 + 1e-12))
    fail(ErrorKind::InvalidInput,
         "market size smaller than total quantity (infeasible)");
  ConstructedShares out;
  out.shares = quantities / market_size;
  out.numeraire_share = 1.0 - out.shares.sum();
  if (out.numeraire_share < 0.0) out.numeraire_share = 0.0;
  out.zero_outside = out.numeraire_share == 0.0;
  return out;
}

void fill_missing_prices(MarketDataset& d) {
  const Eigen::Index n = d.n_rows();
  if (d.impute_excluded.size() != static_cast<std::size_t>(n))
    d.impute_excluded.assign(n, 0);

  // donor groups keyed by (product, promotion status)
  auto group_key = [&](Eigen::Index r) {
    return d.product_ids[r] + "\x1f" +
           (d.promotion.empty() ? std::string() : d.promotion[r]);
  };
  struct Donor {
    double price_sum = 0.0;
    long price_n = 0;
    Vec z_sum;
    std::vector<long> z_n;
  };
  std::map<std::string, Donor> donors;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (d.is_numeraire[r] || d.censored[r]) continue;
    auto& g = donors[group_key(r)];
    if (g.z_sum.size() == 0) {
      g.z_sum = Vec::Zero(d.z.cols());
      g.z_n.assign(d.z.cols(), 0);
    }
    if (!std::isnan(d.price[r])) {
      g.price_sum += d.price[r];
      ++g.price_n;
    }
    for (Eigen::Index k = 0; k < d.z.cols(); ++k)
      if (!std::isnan(d.z(r, k))) {
        g.z_sum[k] += d.z(r, k);
        ++g.z_n[k];
      }
  }

  for (Eigen::Index r = 0; r < n; ++r) {
    if (d.is_numeraire[r] || !d.censored[r]) continue;
    bool incomplete = false;
    auto it = donors.find(group_key(r));
    if (std::isnan(d.price[r])) {
      if (it != donors.end() && it->second.price_n > 0) {
        d.price[r] = it->second.price_sum / it->second.price_n;
        d.price_missing[r] = 0;
      } else {
        incomplete = true;
      }
    }
    for (Eigen::Index k = 0; k < d.z.cols(); ++k) {
      if (!std::isnan(d.z(r, k))) continue;
      if (it != donors.end() && it->second.z_n[k] > 0)
        d.z(r, k) = it->second.z_sum[k] / it->second.z_n[k];
      else
        incomplete = true;
    }
    d.impute_excluded[r] = incomplete ? 1 : 0;
  }
}

}  // namespace cesdem
