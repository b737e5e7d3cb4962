#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "versnet/errors.hpp"
#include "versnet/tensor.hpp"

using namespace versnet;

TEST(TensorFill, ZeroAndConstant) {
  const Tensor z = tensor_fill({2, 2}, 0.0f);
  EXPECT_EQ(z.shape(), (Shape{2, 2}));
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
  const Tensor c = tensor_fill({3}, 1.5f);
  EXPECT_EQ(c.size(), 3u);
  for (float v : c.data()) EXPECT_EQ(v, 1.5f);
}

TEST(TensorFill, RejectsDegenerateDimension) {
  EXPECT_THROW(tensor_fill({2, 0}, 1.0f), InvalidArgument);
  EXPECT_THROW(tensor_fill({}, 1.0f), InvalidArgument);
}

TEST(TensorFill, RejectsNonFiniteValue) {
  EXPECT_THROW(tensor_fill({2}, std::nanf("")), InvalidArgument);
}

TEST(TensorRandn, ZeroStddevIsConstant) {
  Prng rng(1);
  const Tensor t = tensor_randn({50}, 3.0f, 0.0f, rng);
  for (float v : t.data()) EXPECT_EQ(v, 3.0f);
}

TEST(TensorRandn, NegativeStddevRejected) {
  Prng rng(1);
  EXPECT_THROW(tensor_randn({5}, 0.0f, -1.0f, rng), InvalidArgument);
}

TEST(TensorRandn, SameSeedBitwiseIdentical) {
  Prng a(42), b(42);
  EXPECT_EQ(tensor_randn({7, 9}, 0.0f, 1.0f, a), tensor_randn({7, 9}, 0.0f, 1.0f, b));
}

TEST(TensorRandn, SampleStatistics) {
  Prng rng(42);
  const Tensor t = tensor_randn({10000}, 0.0f, 1.0f, rng);
  double s = 0, s2 = 0;
  for (float v : t.data()) {
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double mean = s / 10000.0;
  const double sd = std::sqrt(s2 / 10000.0 - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(sd, 1.0, 0.05);
}

TEST(Prng, DistributionsInRange) {
  Prng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_GE(rng.exponential(), 0.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(Pad2d, ZeroPadIsIdentity) {
  Prng rng(3);
  const Tensor t = test_support::random_tensor({2, 3, 4}, rng);
  EXPECT_EQ(pad2d(t, Padding{}), t);
}

TEST(Pad2d, SingleElementLayout) {
  const Tensor t({1, 1, 1}, std::vector<float>{5.0f});
  const Tensor p = pad2d(t, Padding::uniform(1), 0.0f);
  EXPECT_EQ(p.shape(), (Shape{1, 3, 3}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(p.at(0, i, j), (i == 1 && j == 1) ? 5.0f : 0.0f);
  }
}

TEST(Pad2d, BorderValueAndRankCheck) {
  const Tensor t({1, 1, 1}, std::vector<float>{2.0f});
  const Tensor p = pad2d(t, Padding{0, 2, 1, 0}, -1.0f);
  EXPECT_EQ(p.shape(), (Shape{1, 3, 2}));
  EXPECT_EQ(p.at(0, 0, 1), 2.0f);
  EXPECT_EQ(p.at(0, 0, 0), -1.0f);
  EXPECT_EQ(p.at(0, 2, 1), -1.0f);
  EXPECT_THROW(pad2d(Tensor({4}, 0.0f), Padding::uniform(1)), ShapeError);
}

TEST(Crop2d, IdentityAndSelection) {
  const Tensor t({1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(crop2d(t, 0, 0, 2, 2), t);
  const Tensor c = crop2d(t, 0, 1, 1, 1);
  EXPECT_EQ(c.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(c[0], 2.0f);
}

TEST(Crop2d, OutOfRange) {
  const Tensor t({1, 2, 2}, 0.0f);
  EXPECT_THROW(crop2d(t, 1, 0, 2, 1), OutOfRange);
  EXPECT_THROW(crop2d(t, 0, 0, 0, 1), OutOfRange);
}

TEST(Crop2d, IndexOracle) {
  Prng rng(5);
  const Tensor t = test_support::random_tensor({3, 7, 8}, rng);
  const Tensor c = crop2d(t, 2, 3, 4, 5);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(c.at(ch, i, j), t.at(ch, 2 + i, 3 + j));
    }
  }
}

TEST(PadCrop, RoundTripProperty) {
  Prng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape s{1 + rng.below(3), 1 + rng.below(8), 1 + rng.below(8)};
    const Tensor t = test_support::random_tensor(s, rng);
    const Padding p{rng.below(4), rng.below(4), rng.below(4), rng.below(4)};
    EXPECT_EQ(crop2d(pad2d(t, p, 7.0f), p.top, p.left, s[1], s[2]), t);
  }
}

TEST(TensorOps, ArithmeticAndFinite) {
  Tensor a({3}, std::vector<float>{1, 2, 3});
  const Tensor b({3}, std::vector<float>{1, 1, 1});
  a += b;
  EXPECT_EQ(a, Tensor({3}, std::vector<float>{2, 3, 4}));
  a *= 0.5f;
  EXPECT_FLOAT_EQ(a.sum(), 4.5f);
  EXPECT_DOUBLE_EQ(dot(a, b), 4.5);
  EXPECT_TRUE(a.all_finite());
  EXPECT_THROW(a += Tensor({2}, 0.0f), ShapeError);
}

TEST(TensorIo, RoundTripBitExact) {
  Prng rng(2);
  const Tensor t = test_support::random_tensor({2, 3, 5}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.substr(0, 4), "VNT1");
  EXPECT_EQ(bytes.size(), 4u + 4u + 3 * 4u + 30 * 4u);
  EXPECT_EQ(read_tensor(ss), t);
}

TEST(TensorIo, LittleEndianLayout) {
  std::stringstream ss;
  write_tensor(ss, Tensor({1}, std::vector<float>{1.0f}));
  const std::string b = ss.str();
  // rank 1, dim 1, then 1.0f = 0x3f800000
  const unsigned char expect[] = {'V', 'N', 'T', '1', 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0x80, 0x3f};
  ASSERT_EQ(b.size(), sizeof expect);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(b[i]), expect[i]) << i;
}

TEST(TensorIo, BadMagicAndTruncation) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_tensor(bad), ParseError);
  std::stringstream ss;
  write_tensor(ss, Tensor({4}, 1.0f));
  std::string s = ss.str();
  s.resize(s.size() - 3);
  std::stringstream cut(s);
  EXPECT_THROW(read_tensor(cut), ParseError);
}
