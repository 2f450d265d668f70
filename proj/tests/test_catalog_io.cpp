#include <gtest/gtest.h>

#include <sstream>

#include "mtss/catalog_io.hpp"

using namespace mtss;

TEST(CatalogCsv, RoundTripIsExact) {
  Eigen::MatrixXd x(3, 2);
  x << 1.0, 0.1, 1.0, -2.5e-7, 1.0, 3.141592653589793;
  ItemCatalog cat(x);
  cat.item_ids = {10, 11, 42};
  cat.true_theta = Eigen::Vector3d(0.6, 0.7, 0.123456789012345);
  cat.revenues = Eigen::Vector3d(1.0, 2.0, 0.5);
  std::stringstream ss;
  write_catalog_csv(ss, cat);
  const ItemCatalog back = read_catalog_csv(ss);
  EXPECT_EQ(back.item_ids, cat.item_ids);
  EXPECT_EQ(back.features, cat.features);
  EXPECT_EQ(*back.true_theta, *cat.true_theta);
  EXPECT_EQ(*back.revenues, *cat.revenues);
}

TEST(CatalogCsv, OptionalColumnsAndCrlf) {
  std::istringstream in("item_id,x0,x1\r\n0,1,0.5\r\n1,1,-0.5\r\n");
  const ItemCatalog cat = read_catalog_csv(in);
  EXPECT_EQ(cat.n_items(), 2u);
  EXPECT_EQ(cat.dim(), 2u);
  EXPECT_FALSE(cat.true_theta.has_value());
  EXPECT_DOUBLE_EQ(cat.revenue(1), 1.0);
}

TEST(CatalogCsv, RejectsMalformedInput) {
  auto bad = [](const char* text) {
    std::istringstream in(text);
    return read_catalog_csv(in);
  };
  EXPECT_THROW(bad(""), ConfigError);
  EXPECT_THROW(bad("id,x0\n0,1\n"), ConfigError);
  EXPECT_THROW(bad("item_id,x0\n0,1,2\n"), ConfigError);
  EXPECT_THROW(bad("item_id,x0\n0,1e\n"), ConfigError);
  EXPECT_THROW(bad("item_id,x0\n0,1.000,5\n"), ConfigError);
  EXPECT_THROW(bad("item_id,x0,colour\n0,1,2\n"), ConfigError);
  EXPECT_THROW(bad("item_id,x0,revenue\n0,1,-1\n"), ConfigError);
  EXPECT_THROW(bad("item_id,x0\n"), ConfigError);
}
