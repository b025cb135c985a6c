#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cesdem/dataset.hpp"
#include "cesdem/sim.hpp"

using namespace cesdem;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/cesdem_test_") + name;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  f << body;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* kHeader =
    "market_id,product_id,share,price,censored,is_numeraire,x1,w2,z1\n";

ColumnManifest tiny_manifest() {
  ColumnManifest m;
  m.x_cols = {"x1"};
  m.w_cols = {"x1", "w2"};
  m.z_cols = {"z1"};
  return m;
}

}  // namespace

TEST_CASE("simulate -> write -> load round trip is lossless") {
  SimConfig config = SimConfig::table1();
  config.target_rows = 400;
  config.seed = 77;
  const SimOutput out = simulate(config);
  const std::string path = temp_path("roundtrip.csv");
  write_csv(out.data, path);

  const MarketDataset loaded = load_csv(path, ColumnManifest::simulated());
  REQUIRE(loaded.n_rows() == out.data.n_rows());
  for (Eigen::Index r = 0; r < loaded.n_rows(); ++r) {
    CHECK(loaded.market_ids[r] == out.data.market_ids[r]);
    CHECK(loaded.product_ids[r] == out.data.product_ids[r]);
    CHECK(loaded.share[r] == doctest::Approx(out.data.share[r]).epsilon(1e-12));
    CHECK(loaded.price[r] == doctest::Approx(out.data.price[r]).epsilon(1e-12));
    CHECK(loaded.censored[r] == out.data.censored[r]);
    CHECK(loaded.is_numeraire[r] == out.data.is_numeraire[r]);
    for (Eigen::Index c = 0; c < loaded.w.cols(); ++c)
      CHECK(loaded.w(r, c) == doctest::Approx(out.data.w(r, c)).epsilon(1e-12));
  }
  std::remove(path.c_str());
}

TEST_CASE("write_csv output is byte-identical across calls") {
  SimConfig config = SimConfig::table1();
  config.target_rows = 200;
  const SimOutput out = simulate(config);
  const std::string a = temp_path("bytes_a.csv");
  const std::string b = temp_path("bytes_b.csv");
  write_csv(out.data, a);
  write_csv(out.data, b);
  CHECK(read_file(a) == read_file(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("validation fixtures trigger every invariant") {
  const std::string path = temp_path("bad.csv");

  SUBCASE("missing numeraire row") {
    write_file(path, std::string(kHeader) +
                         "m0,p1,0.4,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,p2,0.6,1.5,0,0,0.5,0.2,0.3\n");
    CHECK_THROWS_WITH_AS(load_csv(path, tiny_manifest()),
                         doctest::Contains("numeraire"), Error);
  }
  SUBCASE("shares failing to sum to one") {
    write_file(path, std::string(kHeader) +
                         "m0,p1,0.4,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,out,0.3,1.0,0,1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(path, tiny_manifest()),
                         doctest::Contains("sum"), Error);
  }
  SUBCASE("censored flag inconsistent with share") {
    write_file(path, std::string(kHeader) +
                         "m0,p1,0.4,2.0,1,0,1.0,0.5,0.1\n"
                         "m0,out,0.6,1.0,0,1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(path, tiny_manifest()),
                         doctest::Contains("censored"), Error);
  }
  SUBCASE("duplicate market-product key") {
    write_file(path, std::string(kHeader) +
                         "m0,p1,0.2,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,p1,0.2,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,out,0.6,1.0,0,1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(path, tiny_manifest()),
                         doctest::Contains("duplicate"), Error);
  }
  SUBCASE("non-numeric cell") {
    write_file(path, std::string(kHeader) +
                         "m0,p1,abc,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,out,0.6,1.0,0,1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(path, tiny_manifest()),
                         doctest::Contains("non-numeric"), Error);
  }
  SUBCASE("missing required column") {
    ColumnManifest m = tiny_manifest();
    m.z_cols = {"zz_missing"};
    write_file(path, std::string(kHeader) +
                         "m0,p1,0.4,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,out,0.6,1.0,0,1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(path, m), doctest::Contains("zz_missing"), Error);
  }
  SUBCASE("exclusion restriction violated") {
    ColumnManifest m = tiny_manifest();
    m.w_cols = {"x1"};  // every w column sits in x
    write_file(path, std::string(kHeader) +
                         "m0,p1,0.4,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,out,0.6,1.0,0,1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(path, m), doctest::Contains("exclusion"), Error);
  }
  SUBCASE("share outside the unit interval") {
    write_file(path, std::string(kHeader) +
                         "m0,p1,1.4,2.0,0,0,1.0,0.5,0.1\n"
                         "m0,out,-0.4,1.0,0,1,0,0,0\n");
    CHECK_THROWS_AS(load_csv(path, tiny_manifest()), Error);
  }
  std::remove(path.c_str());
}

TEST_CASE("construct_shares") {
  Vec q(2);
  q << 10.0, 0.0;
  const ConstructedShares cs = construct_shares(q, 100.0);
  CHECK(cs.shares[0] == doctest::Approx(0.1));
  CHECK(cs.shares[1] == 0.0);
  CHECK(cs.numeraire_share == doctest::Approx(0.9));
  CHECK_FALSE(cs.zero_outside);

  Vec zeros = Vec::Zero(3);
  const ConstructedShares all_outside = construct_shares(zeros, 50.0);
  CHECK(all_outside.numeraire_share == doctest::Approx(1.0));

  Vec full(2);
  full << 60.0, 40.0;
  const ConstructedShares boundary = construct_shares(full, 100.0);
  CHECK(boundary.numeraire_share == 0.0);
  CHECK(boundary.zero_outside);  // flagged: logit needs s_0 > 0

  Vec over(1);
  over << 101.0;
  CHECK_THROWS_AS(construct_shares(over, 100.0), Error);
}

TEST_CASE("quantity ingestion constructs shares and numeraire rows") {
  const std::string path = temp_path("qty.csv");
  write_file(path,
             "store,upc,qty,customers,price,x1,w2,z1\n"
             "s1,a,100,10,2.0,1.0,0.5,0.1\n"
             "s1,b,300,10,1.5,0.5,0.2,0.3\n"
             "s2,a,0,5,,1.0,0.5,0.2\n");
  ColumnManifest m;
  m.market = "store";
  m.product = "upc";
  m.quantity = "qty";
  m.customer_count = "customers";
  m.per_capita = 100.0;
  m.x_cols = {"x1"};
  m.w_cols = {"x1", "w2"};
  m.z_cols = {"z1"};
  const MarketDataset d = load_csv(path, m);
  // two markets, each gains a numeraire row
  CHECK(d.n_rows() == 5);
  CHECK(d.n_markets() == 2);
  CHECK(d.n_products() == 3);
  CHECK(d.n_uncensored() == 2);
  // s1: size 1000; shares 0.1, 0.3, outside 0.6
  CHECK(d.share[0] == doctest::Approx(0.1));
  CHECK(d.share[1] == doctest::Approx(0.3));
  const Eigen::Index out1 = d.numeraire_row(0);
  REQUIRE(out1 >= 0);
  CHECK(d.share[out1] == doctest::Approx(0.6));
  CHECK(d.price[out1] == 1.0);
  // censored row kept its missing price
  CHECK(d.censored[2] == 1);
  CHECK(d.price_missing[2] == 1);
  std::remove(path.c_str());
}

TEST_CASE("fill_missing_prices uses product+promotion donors") {
  const std::string path = temp_path("fills.csv");
  write_file(path,
             "market_id,product_id,share,price,censored,is_numeraire,x1,w2,z1,promo\n"
             "m0,a,0.4,1.0,0,0,1,0.5,0.7,yes\n"
             "m0,out,0.6,1.0,0,1,0,0,0,\n"
             "m1,a,0.5,3.0,0,0,1,0.5,0.9,yes\n"
             "m1,out,0.5,1.0,0,1,0,0,0,\n"
             "m2,a,0,,1,0,1,0.5,,yes\n"
             "m2,b,0,,1,0,2,0.1,,no\n"
             "m2,c,0.2,2.5,0,0,1,0.3,0.4,no\n"
             "m2,out,0.8,1.0,0,1,0,0,0,\n");
  ColumnManifest m = tiny_manifest();
  m.promotion = "promo";
  MarketDataset d = load_csv(path, m);
  const Vec before = d.price;
  fill_missing_prices(d);
  // donors for (a, yes): prices 1.0 and 3.0 -> mean 2.0
  CHECK(d.price[4] == doctest::Approx(2.0));
  CHECK(d.price_missing[4] == 0);
  // z column filled from the same donors: (0.7 + 0.9)/2
  CHECK(d.z(4, 0) == doctest::Approx(0.8));
  // (b, no) has no donors -> excluded from impute-mode estimation
  CHECK(d.impute_excluded[5] == 1);
  // uncensored prices untouched bitwise
  CHECK(d.price[0] == before[0]);
  CHECK(d.price[2] == before[2]);
  CHECK(d.price[6] == before[6]);
  std::remove(path.c_str());
}

TEST_CASE("manifest file parsing") {
  const std::string path = temp_path("manifest.cfg");
  write_file(path,
             "# cola schema\n"
             "market = store_week\n"
             "product = upc\n"
             "share = s\n"
             "price = p\n"
             "x = size, bottles, diet\n"
             "w = size, bottles, diet, promo\n"
             "z = cost\n"
             "promotion = promo\n");
  const ColumnManifest m = ColumnManifest::load(path);
  CHECK(m.market == "store_week");
  CHECK(m.product == "upc");
  CHECK(m.x_cols == std::vector<std::string>{"size", "bottles", "diet"});
  REQUIRE(m.w_cols.size() == 4);
  CHECK(m.w_cols[3] == "promo");
  CHECK(m.z_cols == std::vector<std::string>{"cost"});
  CHECK(m.promotion == "promo");

  write_file(path, "bogus_key = 1\n");
  CHECK_THROWS_AS(ColumnManifest::load(path), Error);
  std::remove(path.c_str());
}
