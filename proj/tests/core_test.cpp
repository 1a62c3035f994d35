#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "sgan/adam.hpp"
#include "sgan/checkpoint.hpp"
#include "sgan/errors.hpp"
#include "sgan/params.hpp"
#include "sgan/random.hpp"

using namespace sgan;
namespace fs = std::filesystem;

namespace {

ParamSet sample_params() {
  ParamSet p;
  p.add("w", Tensor::from({2, 2}, {1, -2, 3, 0.5}));
  p.add("b", Tensor::from({2}, {0.1, -0.1}));
  p.add("running", Tensor::from({2}, {7, 8}), false);
  return p;
}

void set_grad(Tensor& t, std::vector<double> g) { std::copy(g.begin(), g.end(), t.grad().begin()); }

}  // namespace

TEST(Rng, FixedSequences) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
  // The mt19937_64 reference value for the 10000th draw with the default seed.
  Rng d(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = d.next();
  EXPECT_EQ(v, 9981545732273789042ull);
}

TEST(Rng, DistributionsLookRight) {
  Rng r(1);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  std::vector<int> counts(7);
  for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    ASSERT_TRUE(u >= 0.0 && u < 1.0);
  }
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
}

TEST(Params, HashCoversValuesAndTrainability) {
  ParamSet a = sample_params(), b = sample_params();
  EXPECT_EQ(a.hash(), b.hash());
  b.at("running").data()[0] = 9;
  EXPECT_EQ(a.hash(true), b.hash(true));
  EXPECT_NE(a.hash(false), b.hash(false));
  EXPECT_THROW(a.add("w", Tensor::zeros({1})), std::invalid_argument);
  EXPECT_THROW(a.at("missing"), std::out_of_range);
}

TEST(Params, CloneIsDeep) {
  ParamSet a = sample_params();
  ParamSet c = a.clone();
  c.at("w").data()[0] = 100;
  EXPECT_EQ(a.at("w")[0], 1.0);
  a.assign_from(c);
  EXPECT_EQ(a.at("w")[0], 100.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps') = lr * sign(g).
  ParamSet p = sample_params();
  for (auto& e : p.entries()) e.tensor.set_requires_grad(e.trainable);
  set_grad(p.at("w"), {0.5, -3, 1e-3, 0});
  set_grad(p.at("b"), {2, -2});
  Adam opt({0.1, 0.9, 0.999, 1e-8});
  opt.step(p);
  EXPECT_NEAR(p.at("w")[0], 1 - 0.1, 1e-7);
  EXPECT_NEAR(p.at("w")[1], -2 + 0.1, 1e-7);
  EXPECT_NEAR(p.at("w")[2], 3 - 0.1, 1e-4);
  EXPECT_EQ(p.at("w")[3], 0.5);
  EXPECT_EQ(p.at("running")[0], 7.0);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Adam, AscendIsMirrorOfDescend) {
  ParamSet a = sample_params(), b = sample_params();
  for (auto* p : {&a, &b}) {
    set_grad(p->at("w"), {1, 1, 1, 1});
    set_grad(p->at("b"), {1, 1});
  }
  Adam oa, ob;
  oa.step(a, Direction::Descend);
  ob.step(b, Direction::Ascend);
  EXPECT_DOUBLE_EQ(a.at("w")[0] - 1.0, -(b.at("w")[0] - 1.0));
}

TEST(Adam, MatchesReferenceOverSeveralSteps) {
  ParamSet p;
  p.add("x", Tensor::from({1}, {1.0}));
  Adam opt({0.01, 0.5, 0.999, 1e-8});
  double x = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2 * x;  // d/dx x^2
    set_grad(p.at("x"), {g});
    opt.step(p);
    m = 0.5 * m + 0.5 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.5, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.at("x")[0], x, 1e-14);
  }
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  ParamSet p = sample_params();
  set_grad(p.at("w"), {0, 0, 0, 0});
  set_grad(p.at("b"), {std::numeric_limits<double>::quiet_NaN(), 0});
  Adam opt;
  const auto before = p.hash();
  try {
    opt.step(p);
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(p.hash(), before);
}

TEST(Adam, StateRoundTripsThroughCheckpoint) {
  ParamSet p = sample_params(), q = sample_params();
  Adam a, b;
  for (int i = 0; i < 3; ++i) {
    set_grad(p.at("w"), {1, 2, 3, 4});
    set_grad(p.at("b"), {1, 1});
    a.step(p);
  }
  ParamSet state;
  a.export_state("opt", state);
  b.import_state("opt", state);
  q.assign_from(p);
  set_grad(p.at("w"), {1, -1, 1, -1});
  set_grad(q.at("w"), {1, -1, 1, -1});
  set_grad(p.at("b"), {0, 0});
  set_grad(q.at("b"), {0, 0});
  a.step(p);
  b.step(q);
  EXPECT_EQ(p.hash(), q.hash());
  EXPECT_EQ(b.step_count(), 4u);
}

TEST(Checkpoint, RoundTripIsExact) {
  ParamSet p = sample_params();
  p.at("w").data()[0] = 1.0 / 3.0;
  const fs::path path = fs::temp_directory_path() / "sgan_core_test.ckpt";
  save_checkpoint(path, p);
  const ParamSet q = load_checkpoint(path);
  EXPECT_EQ(q.hash(false), p.hash(false));
  EXPECT_FALSE(q.entries()[2].trainable);
  EXPECT_EQ(q.at("w").shape(), (Shape{2, 2}));
  fs::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path path = fs::temp_directory_path() / "sgan_core_bad.ckpt";
  std::ofstream(path, std::ios::binary) << "NOTACKPT";
  EXPECT_THROW(load_checkpoint(path), FormatError);
  save_checkpoint(path, sample_params());
  fs::resize_file(path, fs::file_size(path) - 5);
  EXPECT_THROW(load_checkpoint(path), FormatError);
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), FormatError);
  fs::remove(path);
}
