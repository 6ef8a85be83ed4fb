#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "lopmap/error.hpp"
#include "lopmap/hashgrid/hashgrid.hpp"
#include "lopmap/rng.hpp"

using namespace lopmap;
using namespace lopmap::hashgrid;

namespace {

HashGridConfig small_config() {
  HashGridConfig c;
  c.levels = 4;
  c.features = 2;
  c.log2_table_size = 10;
  c.base_resolution = 16;
  c.finest_resolution = 128;
  c.bounds = Aabb(Vec3(0, 0, 0), Vec3(1, 1, 1));
  return c;
}

// Tables large enough that rounding does not hide structure.
BasicHashGrid<double> random_grid(const HashGridConfig& c, std::uint64_t seed) {
  BasicHashGrid<double> g(c);
  Rng rng(seed);
  for (auto& x : g.params()) x = rng.uniform(-1.0, 1.0);
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

Vec3 random_point(Rng& rng, const Aabb& b) {
  return Vec3(rng.uniform(b.min.x(), b.max.x()), rng.uniform(b.min.y(), b.max.y()),
              rng.uniform(b.min.z(), b.max.z()));
}

}  // namespace

TEST(HashGridConfig, ResolutionsRunFromBaseToFinest) {
  const HashGridConfig c;
  EXPECT_EQ(c.dim(), 18 * 8);
  EXPECT_DOUBLE_EQ(c.resolution(0), 16.0);
  EXPECT_DOUBLE_EQ(c.resolution(c.levels - 1), 512.0);
  for (int l = 1; l < c.levels; ++l) EXPECT_GT(c.resolution(l), c.resolution(l - 1));
}

TEST(HashGridConfig, DefaultParameterCount) {
  EXPECT_EQ(HashGridConfig{}.parameter_count(), std::size_t{18} * (std::size_t{1} << 20) * 8);
}

TEST(HashGridConfig, RejectsBadValues) {
  auto c = small_config();
  c.levels = 0;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.finest_resolution = 8;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.bounds = Aabb(Vec3(0, 0, 0), Vec3(1, 0, 1));
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidBounds);
  }
}

TEST(HashGridInit, CountRangeAndSeed) {
  const auto c = small_config();
  const auto a = HashGrid::init(c, 5);
  const auto b = HashGrid::init(c, 5);
  const auto other = HashGrid::init(c, 6);
  ASSERT_EQ(a.params().size(), c.parameter_count());
  EXPECT_EQ(a.params().size(), std::size_t{4} * 1024 * 2);
  for (float x : a.params()) {
    EXPECT_GE(x, -1e-4f);
    EXPECT_LE(x, 1e-4f);
  }
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), other.params());
}

TEST(HashGridEncode, CornerReturnsStoredRow) {
  const auto c = small_config();
  const auto g = random_grid(c, 1);
  // Level 0 has 16 cells per unit, so (3, 5, 7) / 16 sits on a corner.
  const auto enc = g.encode(Vec3(3.0 / 16, 5.0 / 16, 7.0 / 16));
  const std::uint32_t mask = (1u << c.log2_table_size) - 1;
  const std::uint32_t slot = (3u ^ (5u * 2654435761u) ^ (7u * 805459861u)) & mask;
  EXPECT_EQ(hash_corner(3, 5, 7, mask), slot);
  for (int f = 0; f < c.features; ++f) {
    EXPECT_DOUBLE_EQ(enc[f], g.params()[slot * c.features + f]);
  }
}

TEST(HashGridEncode, ZeroTablesGiveZero) {
  const BasicHashGrid<double> g(small_config());
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    for (double v : g.encode(random_point(rng, g.config().bounds))) EXPECT_EQ(v, 0.0);
  }
}

TEST(HashGridEncode, OutsidePointsAreClamped) {
  const auto g = random_grid(small_config(), 3);
  EXPECT_EQ(g.encode(Vec3(1.7, 0.25, -3.0)), g.encode(Vec3(1.0, 0.25, 0.0)));
}

TEST(HashGridEncode, NonFiniteThrows) {
  const auto g = random_grid(small_config(), 3);
  try {
    g.encode(Vec3(0.5, std::nan(""), 0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}

TEST(HashGridEncode, LipschitzAlongEachAxis) {
  auto c = small_config();
  c.bounds = Aabb(Vec3(-2, -1, 0), Vec3(2, 1, 1.5));
  const auto g = random_grid(c, 4);
  double max_abs = 0;
  for (double x : g.params()) max_abs = std::max(max_abs, std::abs(x));
  // Per level and feature, the slope of a trilinear cell is at most the corner
  // spread times cells per metre.
  const double longest = 4.0;
  const double k = std::sqrt(static_cast<double>(c.dim())) * 2.0 * max_abs *
                   c.resolution(c.levels - 1) / longest;
  const double eps = 1e-5;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = random_point(rng, c.bounds) * 0.99;
    const auto e0 = g.encode(p);
    for (int a = 0; a < 3; ++a) {
      Vec3 q = p;
      q[a] += eps;
      const auto e1 = g.encode(q);
      double d2 = 0;
      for (std::size_t j = 0; j < e0.size(); ++j) d2 += (e1[j] - e0[j]) * (e1[j] - e0[j]);
      EXPECT_LE(std::sqrt(d2), k * eps);
    }
  }
}

TEST(HashGridEncode, TrilinearWithinOneCell) {
  const auto c = small_config();
  const auto g = random_grid(c, 6);
  Rng rng(7);
  for (int level = 0; level < c.levels; ++level) {
    const double res = c.resolution(level);
    const int base[3] = {2, 3, 5};
    // Corner values of this level, read through encode itself.
    std::vector<std::vector<double>> corner(8);
    for (int k = 0; k < 8; ++k) {
      const Vec3 p((base[0] + (k & 1)) / res, (base[1] + ((k >> 1) & 1)) / res,
                   (base[2] + ((k >> 2) & 1)) / res);
      const auto e = g.encode(p);
      corner[k].assign(e.begin() + level * c.features, e.begin() + (level + 1) * c.features);
    }
    for (int t = 0; t < 20; ++t) {
      const double u = rng.uniform(0.01, 0.99), v = rng.uniform(0.01, 0.99),
                   w = rng.uniform(0.01, 0.99);
      const auto e = g.encode(Vec3((base[0] + u) / res, (base[1] + v) / res, (base[2] + w) / res));
      for (int f = 0; f < c.features; ++f) {
        double expect = 0;
        for (int k = 0; k < 8; ++k) {
          expect += ((k & 1) ? u : 1 - u) * (((k >> 1) & 1) ? v : 1 - v) *
                    (((k >> 2) & 1) ? w : 1 - w) * corner[k][f];
        }
        EXPECT_NEAR(e[level * c.features + f], expect, 1e-6);
      }
    }
  }
}

TEST(HashGridLocate, RowsStayInsideTheirLevel) {
  const auto c = small_config();
  const auto g = random_grid(c, 8);
  Rng rng(9);
  Corners<double> corners;
  for (int i = 0; i < 500; ++i) {
    g.locate(random_point(rng, c.bounds), corners);
    ASSERT_EQ(corners.rows.size(), std::size_t(8 * c.levels));
    double total = 0;
    for (std::size_t k = 0; k < corners.rows.size(); ++k) {
      const auto level = static_cast<std::uint32_t>(k / 8);
      EXPECT_GE(corners.rows[k], level << c.log2_table_size);
      EXPECT_LT(corners.rows[k], (level + 1) << c.log2_table_size);
      total += corners.weights[k];
    }
    EXPECT_NEAR(total, c.levels, 1e-12);
  }
  const std::uint32_t mask = (1u << 20) - 1;
  for (int i = 0; i < 1000; ++i) {
    const auto h = hash_corner(static_cast<std::int64_t>(rng.next() >> 40),
                               static_cast<std::int64_t>(rng.next() >> 40) - 5000,
                               static_cast<std::int64_t>(rng.next() >> 40), mask);
    EXPECT_LE(h, mask);
  }
}

TEST(HashGridBackward, CornerGetsWholeSlice) {
  const auto c = small_config();
  const auto g = random_grid(c, 10);
  std::vector<double> up(c.dim(), 0.0);
  up[0] = 1.5;
  up[1] = -2.0;
  const auto sg = g.encode_backward(Vec3(3.0 / 16, 5.0 / 16, 7.0 / 16), up);
  const std::uint32_t row = hash_corner(3, 5, 7, (1u << c.log2_table_size) - 1);
  ASSERT_EQ(sg.rows.size() * c.features, sg.values.size());
  double other = 0;
  for (std::size_t i = 0; i < sg.rows.size(); ++i) {
    if (sg.rows[i] == row) {
      EXPECT_DOUBLE_EQ(sg.values[i * 2], 1.5);
      EXPECT_DOUBLE_EQ(sg.values[i * 2 + 1], -2.0);
    } else if (sg.rows[i] < (1u << c.log2_table_size)) {
      other += std::abs(sg.values[i * 2]) + std::abs(sg.values[i * 2 + 1]);
    }
  }
  EXPECT_EQ(other, 0.0);
  EXPECT_LE(sg.rows.size(), std::size_t(8 * c.levels));
}

TEST(HashGridBackward, ZeroUpstreamGivesZero) {
  const auto g = random_grid(small_config(), 11);
  const std::vector<double> up(g.dim(), 0.0);
  const auto sg = g.encode_backward(Vec3(0.3, 0.6, 0.1), up);
  for (double v : sg.values) EXPECT_EQ(v, 0.0);
}

TEST(HashGridBackward, WrongUpstreamLength) {
  const auto g = random_grid(small_config(), 11);
  const std::vector<double> up(3, 1.0);
  EXPECT_THROW(g.encode_backward(Vec3(0.3, 0.6, 0.1), up), Error);
}

TEST(HashGridBackward, FiniteDifferencesOnTableEntries) {
  const auto c = small_config();
  auto g = random_grid(c, 12);
  Rng rng(13);
  const Vec3 p(0.4123, 0.2871, 0.7719);
  std::vector<double> up(c.dim());
  for (auto& u : up) u = rng.uniform(-1, 1);
  const auto sg = g.encode_backward(p, up);

  auto dense = std::vector<double>(g.params().size(), 0.0);
  for (std::size_t i = 0; i < sg.rows.size(); ++i) {
    for (int f = 0; f < c.features; ++f) {
      dense[sg.rows[i] * c.features + f] = sg.values[i * c.features + f];
    }
  }
  // 15 entries the point touches plus 5 anywhere in the table.
  std::vector<std::size_t> entries;
  for (int i = 0; i < 15; ++i) {
    const std::size_t r = sg.rows[rng.next() % sg.rows.size()];
    entries.push_back(r * c.features + rng.next() % c.features);
  }
  for (int i = 0; i < 5; ++i) entries.push_back(rng.next() % g.params().size());

  const double h = 1e-6;
  for (std::size_t e : entries) {
    const double saved = g.params()[e];
    g.params()[e] = saved + h;
    const double lp = dot(g.encode(p), up);
    g.params()[e] = saved - h;
    const double lm = dot(g.encode(p), up);
    g.params()[e] = saved;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(dense[e]), 1e-8});
    EXPECT_LT(std::abs(fd - dense[e]) / denom, 1e-4) << "entry " << e;
  }
}

TEST(HashGridBackward, MatchesDirectionalDerivative) {
  const auto c = small_config();
  const auto g = random_grid(c, 14);
  Rng rng(15);
  for (int t = 0; t < 10; ++t) {
    const Vec3 p = random_point(rng, c.bounds);
    std::vector<double> up(c.dim());
    for (auto& u : up) u = rng.uniform(-1, 1);
    std::vector<double> delta(g.params().size());
    for (auto& d : delta) d = rng.uniform(-1, 1);
    const auto sg = g.encode_backward(p, up);
    double analytic = 0;
    for (std::size_t i = 0; i < sg.rows.size(); ++i) {
      for (int f = 0; f < c.features; ++f) {
        analytic += sg.values[i * c.features + f] * delta[sg.rows[i] * c.features + f];
      }
    }
    // encode is linear in the tables, so encode(p; delta) is the derivative.
    BasicHashGrid<double> shifted(c);
    shifted.params() = delta;
    EXPECT_NEAR(dot(shifted.encode(p), up), analytic, 1e-5);
  }
}

TEST(HashGridBackward, MergeSumsDuplicates) {
  const auto sg = merge_rows<double>({7, 2, 7}, {1, 2, 3, 4, 5, 6}, 2);
  ASSERT_EQ(sg.rows, (std::vector<std::uint32_t>{2, 7}));
  EXPECT_EQ(sg.values, (std::vector<double>{3, 4, 6, 8}));
}
