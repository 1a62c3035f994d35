#include <gtest/gtest.h>

#include "sgan/harness.hpp"

using namespace sgan;
using namespace sgan::harness;

TEST(Confusion, CountsAndAccuracy) {
  const std::vector<double> p{0.9, 0.2, 0.6, 0.4, 0.5};
  const std::vector<Label> y{Label::Stego, Label::Cover, Label::Cover, Label::Stego, Label::Stego};
  const Confusion c = confusion_from(p, y);
  EXPECT_EQ(c.true_positive, 1u);
  EXPECT_EQ(c.true_negative, 1u);
  EXPECT_EQ(c.false_positive, 1u);
  EXPECT_EQ(c.false_negative, 2u);  // exactly 0.5 is called cover
  EXPECT_DOUBLE_EQ(c.accuracy(), 0.4);
  EXPECT_THROW(confusion_from(p, std::vector<Label>(2)), std::invalid_argument);
}

TEST(Confusion, PerfectAndConstantPredictors) {
  std::vector<Label> y;
  std::vector<double> perfect, constant;
  for (int i = 0; i < 100; ++i) {
    y.push_back(i % 2 ? Label::Stego : Label::Cover);
    perfect.push_back(i % 2 ? 0.99 : 0.01);
    constant.push_back(0.3);
  }
  EXPECT_DOUBLE_EQ(confusion_from(perfect, y).accuracy(), 1.0);
  EXPECT_DOUBLE_EQ(confusion_from(constant, y).accuracy(), 0.5);
}

TEST(Pairs, CoverThenStegoWithSmallChanges) {
  const Dataset covers = synth_corpus(6, 16, 1);
  const stego::EmbedConfig embed{stego::Algorithm::Pm1, 0, 0.4, 0};
  const Dataset pairs = make_stego_pairs(covers.items, embed, 9);
  ASSERT_EQ(pairs.size(), 12u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(pairs.labels[2 * i], Label::Cover);
    EXPECT_EQ(pairs.labels[2 * i + 1], Label::Stego);
    EXPECT_EQ(pairs.items[2 * i], covers.items[i]);
    std::size_t changed = 0;
    for (std::size_t k = 0; k < covers.items[i].pixels().size(); ++k)
      changed += pairs.items[2 * i + 1].pixels()[k] != covers.items[i].pixels()[k];
    EXPECT_GT(changed, 0u);
    EXPECT_LE(changed, stego::capacity(covers.items[i], embed));
  }
  EXPECT_EQ(make_stego_pairs(covers.items, embed, 9).items, pairs.items);
  EXPECT_NE(make_stego_pairs(covers.items, embed, 10).items, pairs.items);
}

TEST(Steganalyser, RejectsSingleClassData) {
  Dataset d = synth_corpus(4, 16, 1);
  d.labels.assign(4, Label::Cover);
  EXPECT_THROW(train_steganalyser(d, {}), std::invalid_argument);
}

TEST(Steganalyser, TrainingIsDeterministic) {
  const Dataset pairs = make_stego_pairs(synth_corpus(16, 16, 2).items, {stego::Algorithm::Pm1, 0, 0.4, 0}, 3);
  SteganalyserTraining cfg;
  cfg.architecture.hidden_units = 8;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  auto a = train_steganalyser(pairs, cfg), b = train_steganalyser(pairs, cfg);
  EXPECT_EQ(a.network.params().hash(false), b.network.params().hash(false));
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  EXPECT_EQ(evaluate(a.network, pairs, "x").to_json(), evaluate(b.network, pairs, "x").to_json());
}

TEST(Plans, SeedInvariants) {
  SuiteConfig c;
  const auto plans = seed_variation_plans(c, "g.ckpt");
  ASSERT_EQ(plans.size(), 6u);
  for (const auto& p : plans) EXPECT_TRUE(p.violations().empty()) << to_string(p.id);
  EXPECT_EQ(plans[0].train_seeds, plans[0].test_seeds);  // C1 tests on its training containers
  EXPECT_NE(plans[1].train_seeds, plans[1].test_seeds);
  EXPECT_GT(plans[2].extra_tuning_epochs, 0u);
  EXPECT_EQ(plans[3].extra_tuning_epochs, 0u);
  EXPECT_GT(plans[5].extra_tuning_epochs, 0u);

  ExperimentPlan bad = plans[1];
  bad.test_seeds = bad.train_seeds;
  EXPECT_FALSE(bad.violations().empty());
  bad = plans[4];
  bad.test_seeds.push_back(bad.train_seeds.front());
  EXPECT_FALSE(bad.violations().empty());
  bad = plans[0];
  bad.extra_tuning_epochs = 1;
  EXPECT_FALSE(bad.violations().empty());
}

TEST(Reports, JsonOmitsRuntime) {
  Report r;
  r.plan_id = "C1";
  r.accuracy = 0.75;
  r.runtime_seconds = 12.5;
  const auto j = r.to_json();
  EXPECT_FALSE(j.contains("runtime_seconds"));
  EXPECT_EQ(r.timing_json().at("runtime_seconds"), 12.5);
}

TEST(SuiteConfig, JsonRoundTripAndUnknownKeys) {
  SuiteConfig c;
  c.corpus_size = 123;
  c.multi_test_seeds = {1, 2};
  const SuiteConfig back = suite_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto j = to_json(c);
  j["bogus"] = 1;
  EXPECT_THROW(suite_from_json(j), std::invalid_argument);
}

TEST(Containers, SeedsSplitEvenly) {
  nets::Network g(nets::build_generator(8, 2, 16), 1);
  const std::vector<std::uint64_t> seeds{5, 6, 7};
  const auto imgs = containers_from_seeds(g, seeds, 10, 8);
  ASSERT_EQ(imgs.size(), 10u);
  const auto first = training::generate(g, 4, 5, 8);  // remainder goes to the first seed
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(imgs[i], first[i]);
  EXPECT_EQ(containers_from_seeds(g, seeds, 10, 8), imgs);
}
