#include "metastruct/label_model.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"

namespace metastruct {
namespace {

TEST(ValidateNtm, AcceptsIdentityAndBinaryExample) {
  EXPECT_TRUE(validate_ntm(Ntm::identity(2)));
  EXPECT_TRUE(validate_ntm(Ntm::from_rows({{0.79, 0.8}, {0.21, 0.2}})));
}

TEST(ValidateNtm, ReportsFirstBadColumn) {
  const auto verdict = validate_ntm(Ntm::from_rows({{0.5, 0.5}, {0.4, 0.5}}));
  EXPECT_FALSE(verdict);
  ASSERT_TRUE(verdict.column.has_value());
  EXPECT_EQ(*verdict.column, 0);
  EXPECT_NE(verdict.reason.find("0.9"), std::string::npos);
}

TEST(ValidateNtm, RejectsNegativeEntry) {
  const auto verdict = validate_ntm(Ntm::from_rows({{1.0, 1.1}, {0.0, -0.1}}));
  EXPECT_FALSE(verdict);
  EXPECT_EQ(verdict.column.value_or(-1), 1);
}

TEST(ValidateNtm, ColumnSumTolerance) {
  EXPECT_TRUE(validate_ntm(Ntm::from_columns({{0.5, 0.5 + 5e-10}, {0, 1}})));
  EXPECT_FALSE(validate_ntm(Ntm::from_columns({{0.5, 0.5 + 5e-9}, {0, 1}})));
}

TEST(NtmRank, ReferenceMatrices) {
  for (const auto& row : testing::reference_matrices()) {
    EXPECT_EQ(ntm_rank(Ntm::from_rows(row.rows)), row.rank);
  }
}

TEST(NtmRank, DuplicateColumnsGiveRankOne) {
  EXPECT_EQ(ntm_rank(Ntm::from_columns({{0.3, 0.7}, {0.3, 0.7}})), 1);
  EXPECT_EQ(ntm_rank(Ntm::from_columns({{0.2, 0.2, 0.6}, {0.2, 0.2, 0.6}, {0.2, 0.2, 0.6}})), 1);
}

TEST(NtmRank, IdentityIsFullRank) {
  for (int m = 2; m <= 8; ++m) EXPECT_EQ(ntm_rank(Ntm::identity(m)), m);
}

TEST(NtmRank, InvalidMatrixThrows) {
  EXPECT_THROW(ntm_rank(Ntm::from_rows({{0.5, 0.5}, {0.4, 0.5}})), Error);
}

TEST(Crd, SpotValues) {
  EXPECT_DOUBLE_EQ(crd(Ntm::identity(2)).min_distance, 2.0);
  EXPECT_NEAR(crd(Ntm::from_rows({{0.79, 0.8}, {0.21, 0.2}})).min_distance, 0.02, 1e-12);
  const auto t = crd(Ntm::from_rows(testing::reference_matrices()[1].rows));
  EXPECT_NEAR(t.min_distance, 0.6, 1e-12);
  EXPECT_EQ(t.min_u, 0);
  EXPECT_EQ(t.min_v, 2);
  EXPECT_NEAR(t(0, 1), 0.8, 1e-12);
  EXPECT_NEAR(t(1, 2), 1.0, 1e-12);
}

TEST(Crd, ReferenceMinimumDistances) {
  for (const auto& row : testing::reference_matrices()) {
    EXPECT_NEAR(crd(Ntm::from_rows(row.rows)).min_distance, row.min_crd, 1e-12);
  }
}

TEST(Crd, MetricProperties) {
  Rng rng(Seed{11});
  for (int trial = 0; trial < 200; ++trial) {
    const int m = rng.uniform_int(2, 6);
    const Ntm q = testing::random_ntm(m, rng);
    const auto t = crd(q);
    for (int u = 0; u < m; ++u) {
      EXPECT_EQ(t(u, u), 0.0);
      for (int v = 0; v < m; ++v) {
        EXPECT_EQ(t(u, v), t(v, u));
        EXPECT_GE(t(u, v), 0.0);
        EXPECT_LE(t(u, v), 2.0 + 1e-12);
      }
    }
  }
}

TEST(Crd, ZeroDistanceImpliesRankDeficiency) {
  Rng rng(Seed{12});
  for (int trial = 0; trial < 100; ++trial) {
    const int m = rng.uniform_int(2, 6);
    auto cols = std::vector<std::vector<double>>();
    const Ntm base = testing::random_ntm(m, rng);
    for (int i = 0; i < m; ++i) cols.emplace_back(base.column(i).begin(), base.column(i).end());
    const int u = rng.uniform_int(0, m - 1);
    int v = rng.uniform_int(0, m - 2);
    if (v >= u) ++v;
    cols[v] = cols[u];
    const Ntm q = Ntm::from_columns(cols);
    EXPECT_EQ(crd(q)(u, v), 0.0);
    EXPECT_LT(ntm_rank(q), m);
  }
}

TEST(Crd, InvariantUnderRowPermutation) {
  Rng rng(Seed{13});
  for (int trial = 0; trial < 100; ++trial) {
    const int m = rng.uniform_int(2, 6);
    const Ntm q = testing::random_ntm(m, rng);
    std::vector<int> perm(m);
    for (int i = 0; i < m; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    std::vector<std::vector<double>> cols(m, std::vector<double>(m));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) cols[i][perm[j]] = q(j, i);
    const auto a = crd(q), b = crd(Ntm::from_columns(cols));
    for (int u = 0; u < m; ++u)
      for (int v = 0; v < m; ++v) EXPECT_NEAR(a(u, v), b(u, v), 1e-12);
  }
}

TEST(NtmJson, RoundTrip) {
  Rng rng(Seed{14});
  const Ntm q = testing::random_ntm(4, rng);
  const Ntm back = ntm_from_json(nlohmann::json::parse(to_json(q).dump()));
  ASSERT_EQ(back.size(), 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(back(j, i), q(j, i), 1e-12);
}

TEST(NtmJson, ColumnsAreTrueClassFirst) {
  const auto j = nlohmann::json::parse(R"({"m": 2, "columns": [[0.79, 0.21], [0.8, 0.2]]})");
  const Ntm q = ntm_from_json(j);
  EXPECT_DOUBLE_EQ(q(1, 0), 0.21);  // P(observed 1 | true 0)
  EXPECT_DOUBLE_EQ(q(0, 1), 0.8);
}

TEST(NtmJson, RejectsMalformed) {
  EXPECT_THROW(ntm_from_json(nlohmann::json::parse(R"({"m": 3, "columns": [[1,0],[0,1]]})")), Error);
  EXPECT_THROW(ntm_from_json(nlohmann::json::parse(R"({"columns": [[1,0],[0,1]]})")), Error);
  EXPECT_THROW(ntm_from_json(nlohmann::json::parse(R"({"m": 2, "columns": [[1,0,0],[0,1]]})")), Error);
  EXPECT_THROW(ntm_from_json(nlohmann::json::parse(R"({"m": 2, "columns": [[0.5,0.6],[0,1]]})")), Error);
}

}  // namespace
}  // namespace metastruct
