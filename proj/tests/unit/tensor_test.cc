#include "fednewsrec/tensor.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <thread>
#include <vector>

#include "fednewsrec/error.h"
#include "fednewsrec/rng.h"

namespace fednewsrec {
namespace {

TEST(TensorTest, ShapeAndSizeAgree) {
  const Tensor t({3, 4});
  EXPECT_EQ(t.size(), 12u);
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.cols(), 4u);
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(TensorTest, VectorIsSingleRow) {
  const Tensor v = Tensor::vector({1, 2, 3});
  EXPECT_EQ(v.rank(), 1u);
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 3u);
}

TEST(TensorTest, ValueCountMismatchRejected) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), ShapeError);
}

TEST(TensorTest, ZeroDimensionRejected) {
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  EXPECT_THROW(Tensor::vector({}), ShapeError);
}

TEST(TensorTest, RowViewsAreRowMajor) {
  Tensor t = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(t.row(1)[0], 3.0);
  t.row(2)[1] = 9.0;
  EXPECT_EQ(t(2, 1), 9.0);
  EXPECT_EQ(t[5], 9.0);
}

TEST(TensorTest, FiniteCheck) {
  Tensor t({3});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(RngTest, SameSeedAndStreamSameSequence) {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngTest, DifferentStreamsDiffer) {
  Rng a(42, 0), b(42, 1), c(43, 0);
  const auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
  EXPECT_NE(x, y);
  EXPECT_NE(x, z);
}

TEST(RngTest, SplitIgnoresParentDraws) {
  Rng a(5);
  const Rng before = a.split(3);
  for (int i = 0; i < 10; ++i) a.next_u64();
  Rng after = a.split(3);
  Rng b = before;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(b.next_u64(), after.next_u64());
}

TEST(RngTest, SplitChildrenAreDistinct) {
  const Rng root(11);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    Rng child = root.split(k);
    firsts.insert(child.next_u64());
  }
  EXPECT_EQ(firsts.size(), 1000u);
  Rng nested = root.split(1).split(2);
  Rng flat = root.split(2);
  EXPECT_NE(nested.next_u64(), flat.next_u64());
}

TEST(RngTest, UniformInOpenUnitInterval) {
  Rng rng(12);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Mean of U(0,1) has standard error 1/sqrt(12 n) ~ 6.5e-4.
  EXPECT_NEAR(sum / n, 0.5, 4e-3);
}

TEST(RngTest, UniformIndexCoversRange) {
  Rng rng(13);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(7)];
  // Each count ~ Binomial(n, 1/7): sigma ~ 93.
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5 * 93.0);
}

TEST(RngTest, StreamsAreThreadIndependent) {
  const Rng root(99);
  std::vector<std::uint64_t> serial(8), threaded(8);
  for (std::size_t k = 0; k < 8; ++k) {
    Rng r = root.split(k);
    for (int i = 0; i < 1000; ++i) serial[k] ^= r.next_u64();
  }
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < 8; ++k) {
    pool.emplace_back([&, k] {
      Rng r = root.split(k);
      for (int i = 0; i < 1000; ++i) threaded[k] ^= r.next_u64();
    });
  }
  for (auto& t : pool) t.join();
  EXPECT_EQ(serial, threaded);
}

}  // namespace
}  // namespace fednewsrec
