#include "sgan/harness.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "sgan/checkpoint.hpp"
#include "sgan/config_io.hpp"
#include "sgan/errors.hpp"
#include "sgan/random.hpp"

namespace sgan::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kPairStream = 0xa1a1;
constexpr std::uint64_t kOrderStream = 0x0bd1;
constexpr std::uint64_t kTrainPairs = 0x7a, kTestPairs = 0x7b;

json to_json(const SteganalyserTraining& s) {
  return {{"first_channels", s.architecture.first_channels},
          {"second_channels", s.architecture.second_channels},
          {"hidden_units", s.architecture.hidden_units},
          {"init", s.init == nets::WeightInit::He ? "he" : "dcgan"},
          {"adam", config::to_json(s.adam)},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"seed", s.seed}};
}

SteganalyserTraining steganalyser_from_json(const json& j, SteganalyserTraining s) {
  config::reject_unknown_keys(
      j, {"first_channels", "second_channels", "hidden_units", "init", "adam", "epochs", "batch_size", "seed"},
      "steganalyser");
  if (j.contains("first_channels")) s.architecture.first_channels = j.at("first_channels").get<std::size_t>();
  if (j.contains("second_channels")) s.architecture.second_channels = j.at("second_channels").get<std::size_t>();
  if (j.contains("hidden_units")) s.architecture.hidden_units = j.at("hidden_units").get<std::size_t>();
  if (j.contains("init")) {
    const auto name = j.at("init").get<std::string>();
    if (name != "he" && name != "dcgan") throw std::invalid_argument("steganalyser init must be he or dcgan");
    s.init = name == "he" ? nets::WeightInit::He : nets::WeightInit::Dcgan;
  }
  if (j.contains("adam")) s.adam = config::adam_from_json(j.at("adam"), s.adam);
  if (j.contains("epochs")) s.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

bool has_both_classes(const Dataset& d) {
  return std::find(d.labels.begin(), d.labels.end(), Label::Cover) != d.labels.end() &&
         std::find(d.labels.begin(), d.labels.end(), Label::Stego) != d.labels.end();
}

bool contains(std::span<const std::uint64_t> seeds, std::uint64_t s) {
  return std::find(seeds.begin(), seeds.end(), s) != seeds.end();
}

bool disjoint(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  return std::none_of(a.begin(), a.end(), [&](std::uint64_t s) { return contains(b, s); });
}

std::string seed_list(std::span<const std::uint64_t> seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
  return out;
}

// Trains a copy of the generator for extra epochs of plain GAN training on the real corpus.
nets::Network fine_tuned_generator(const ParamSet& checkpoint, const ExperimentContext& context, std::size_t epochs) {
  training::SganConfig cfg = context.generator_config;
  training::SganState state = training::restore_state(cfg, checkpoint);
  if (context.real_train == nullptr) throw std::invalid_argument("fine-tuning needs the real training corpus");
  training::TrainTrace trace;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto result = training::train_epoch(state, cfg, *context.real_train, trace);
    if (result.halted) throw NonFiniteError("generator fine-tuning halted: " + result.reason);
  }
  return std::move(state.generator);
}

nets::Network load_generator(const ParamSet& checkpoint, const training::SganConfig& cfg) {
  return std::move(training::restore_state(cfg, checkpoint).generator);
}

}  // namespace

Dataset make_stego_pairs(std::span<const Image> covers, const stego::EmbedConfig& embed, std::uint64_t seed) {
  Dataset out;
  out.split_seed = seed;
  out.items.reserve(covers.size() * 2);
  out.labels.reserve(covers.size() * 2);
  for (std::size_t i = 0; i < covers.size(); ++i) {
    stego::EmbedConfig cfg = embed;
    cfg.seed = derive_seed(seed, {kPairStream, i, 0});
    const auto payload =
        stego::random_payload(stego::capacity(covers[i], cfg), derive_seed(seed, {kPairStream, i, 1}), cfg.rate);
    out.items.push_back(covers[i]);
    out.labels.push_back(Label::Cover);
    out.items.push_back(stego::embed(covers[i], payload, cfg));
    out.labels.push_back(Label::Stego);
  }
  return out;
}

TrainedSteganalyser train_steganalyser(const Dataset& dataset, const SteganalyserTraining& config) {
  dataset.validate();
  if (!dataset.labeled() || !has_both_classes(dataset)) {
    throw std::invalid_argument("steganalyser training needs a labeled dataset with both classes");
  }
  if (config.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  const std::size_t size = dataset.items.front().width();
  TrainedSteganalyser out{
      nets::Network(nets::build_independent_steganalyser(size, config.architecture), derive_seed(config.seed, {1}), {},
                   config.init),
      {}};
  Adam adam(config.adam);
  auto& params = out.network.params();
  const std::size_t n = dataset.size();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, {kOrderStream, epoch}));
    const auto order = rng.permutation(n);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - start);
      std::vector<Image> images;
      std::vector<double> targets;
      images.reserve(m);
      for (std::size_t k = 0; k < m; ++k) {
        images.push_back(dataset.items[order[start + k]]);
        targets.push_back(dataset.labels[order[start + k]] == Label::Stego ? 1.0 : 0.0);
      }
      params.zero_grad();
      const Tensor prediction = out.network.forward(images_to_tensor(images), true);
      const Tensor loss = ops::bce_loss(prediction, Tensor::from({m, 1}, std::move(targets)));
      backward(loss);
      adam.step(params);
      loss_sum += loss.item();
      ++batches;
    }
    out.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  return out;
}

std::vector<double> predict(nets::Network& steganalyser, std::span<const Image> images) {
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(images.size());
  constexpr std::size_t kChunk = 128;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t m = std::min(kChunk, images.size() - start);
    const Tensor p = steganalyser.forward(images_to_tensor(images.subspan(start, m)), false);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

double Confusion::accuracy() const {
  return total() == 0 ? 0.0 : static_cast<double>(true_positive + true_negative) / static_cast<double>(total());
}

Confusion confusion_from(std::span<const double> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("predictions and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool says_stego = predictions[i] > 0.5;
    if (labels[i] == Label::Stego) {
      (says_stego ? c.true_positive : c.false_negative)++;
    } else {
      (says_stego ? c.false_positive : c.true_negative)++;
    }
  }
  return c;
}

json Report::to_json() const {
  return {{"plan", plan_id},
          {"accuracy", accuracy},
          {"confusion",
           {{"tp", confusion.true_positive},
            {"tn", confusion.true_negative},
            {"fp", confusion.false_positive},
            {"fn", confusion.false_negative}}},
          {"total", confusion.total()},
          {"train_seeds", train_seeds},
          {"test_seeds", test_seeds},
          {"config", config}};
}

json Report::timing_json() const { return {{"plan", plan_id}, {"runtime_seconds", runtime_seconds}}; }

Report evaluate(nets::Network& steganalyser, const Dataset& dataset, std::string plan_id) {
  dataset.validate();
  if (!dataset.labeled()) throw std::invalid_argument("evaluation needs a labeled dataset");
  const auto start = std::chrono::steady_clock::now();
  Report r;
  r.plan_id = std::move(plan_id);
  r.confusion = confusion_from(predict(steganalyser, dataset.items), dataset.labels);
  r.accuracy = r.confusion.accuracy();
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string to_string(PlanId id) {
  switch (id) {
    case PlanId::Real: return "REAL";
    case PlanId::C1: return "C1";
    case PlanId::C2: return "C2";
    case PlanId::C3: return "C3";
    case PlanId::C4: return "C4";
    case PlanId::C5: return "C5";
    case PlanId::C6: return "C6";
  }
  return "?";
}

std::vector<std::string> ExperimentPlan::violations() const {
  std::vector<std::string> v;
  const std::string name = to_string(id);
  const auto fail = [&](const std::string& why) { v.push_back(name + ": " + why); };
  if (id != PlanId::Real && (train_seeds.empty() || test_seeds.empty())) fail("train and test seed sets are required");
  if (train_covers < train_seeds.size() || test_covers < test_seeds.size()) fail("fewer covers than seeds");
  const bool tuned = id == PlanId::C3 || id == PlanId::C6;
  if (tuned && extra_tuning_epochs == 0) fail("needs extra tuning epochs > 0");
  if (!tuned && extra_tuning_epochs != 0) fail("must not tune the generator");
  switch (id) {
    case PlanId::C1:
      if (train_seeds != test_seeds) fail("train seeds must equal test seeds");
      break;
    case PlanId::C2:
    case PlanId::C3:
      if (test_seeds.size() != 1 || contains(train_seeds, test_seeds.front())) {
        fail("needs a single test seed outside the train seeds");
      }
      break;
    case PlanId::C4:
      if (train_seeds.size() < 2) fail("needs several train seeds");
      if (test_seeds.size() != 1 || !disjoint(train_seeds, test_seeds)) fail("needs one held-out test seed");
      break;
    case PlanId::C5:
    case PlanId::C6:
      if (train_seeds.size() < 2 || test_seeds.size() < 2) fail("needs multiple train and test seeds");
      if (!disjoint(train_seeds, test_seeds)) fail("train and test seeds must be disjoint");
      break;
    case PlanId::Real:
      break;
  }
  return v;
}

std::vector<Image> containers_from_seeds(nets::Network& generator, std::span<const std::uint64_t> seeds,
                                         std::size_t n, std::size_t z_dim) {
  if (seeds.empty()) throw std::invalid_argument("containers_from_seeds needs at least one seed");
  std::vector<Image> out;
  out.reserve(n);
  const std::size_t per = n / seeds.size(), extra = n % seeds.size();
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    auto images = training::generate(generator, per + (k == 0 ? extra : 0), seeds[k], z_dim);
    for (auto& img : images) out.push_back(std::move(img));
  }
  return out;
}

namespace {

// The steganalyser of a plan depends only on the generator checkpoint, the train seeds and
// sizes, so plans that share them (C1-C3, C5-C6) can reuse one trained network.
struct SteganalyserCache {
  std::map<std::string, nets::Network> networks;
};

std::string train_key(const ExperimentPlan& plan) {
  return plan.generator_checkpoint.string() + "|" + seed_list(plan.train_seeds) + "|" +
         std::to_string(plan.train_covers);
}

Report run_condition_cached(const ExperimentPlan& plan, const ExperimentContext& context, SteganalyserCache* cache) {
  const auto problems = plan.violations();
  if (!problems.empty()) throw std::invalid_argument(problems.front());
  if (!fs::exists(plan.generator_checkpoint)) {
    throw std::invalid_argument("generator checkpoint " + plan.generator_checkpoint.string() + " does not exist");
  }
  const auto start = std::chrono::steady_clock::now();
  const ParamSet checkpoint = load_checkpoint(plan.generator_checkpoint);
  const std::size_t z_dim = context.generator_config.z_dim;
  nets::Network generator = load_generator(checkpoint, context.generator_config);

  nets::Network* steganalyser = nullptr;
  nets::Network local;
  const std::string key = train_key(plan);
  if (cache && cache->networks.count(key)) {
    steganalyser = &cache->networks.at(key);
  } else {
    const auto train_covers = containers_from_seeds(generator, plan.train_seeds, plan.train_covers, z_dim);
    const Dataset train =
        make_stego_pairs(train_covers, context.embed, derive_seed(plan.train_seeds.front(), {kTrainPairs}));
    local = std::move(train_steganalyser(train, context.steganalyser).network);
    if (cache) {
      steganalyser = &cache->networks.emplace(key, std::move(local)).first->second;
    } else {
      steganalyser = &local;
    }
  }

  nets::Network test_generator =
      plan.extra_tuning_epochs > 0 ? fine_tuned_generator(checkpoint, context, plan.extra_tuning_epochs)
                                   : std::move(generator);
  const auto test_covers = containers_from_seeds(test_generator, plan.test_seeds, plan.test_covers, z_dim);
  // Same seed, same pairs: container seeds fully determine the stego copies.
  const std::uint64_t test_pair_seed = plan.id == PlanId::C1 ? derive_seed(plan.train_seeds.front(), {kTrainPairs})
                                                             : derive_seed(plan.test_seeds.front(), {kTestPairs});
  const Dataset test = make_stego_pairs(test_covers, context.embed, test_pair_seed);

  Report r = evaluate(*steganalyser, test, to_string(plan.id));
  r.train_seeds = plan.train_seeds;
  r.test_seeds = plan.test_seeds;
  r.config = {{"generator_checkpoint", plan.generator_checkpoint.filename().string()},
              {"extra_tuning_epochs", plan.extra_tuning_epochs},
              {"train_covers", plan.train_covers},
              {"test_covers", plan.test_covers},
              {"embed", config::to_json(context.embed)},
              {"steganalyser", to_json(context.steganalyser)},
              {"generator", config::to_json(context.generator_config)}};
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

Report run_condition(const ExperimentPlan& plan, const ExperimentContext& context) {
  return run_condition_cached(plan, context, nullptr);
}

json to_json(const SuiteConfig& c) {
  return {{"suite", c.suite},
          {"image_size", c.image_size},
          {"corpus_size", c.corpus_size},
          {"corpus_noise", c.corpus_noise},
          {"corpus_seed", c.corpus_seed},
          {"split_seed", c.split_seed},
          {"test_fraction", c.test_fraction},
          {"embed", config::to_json(c.embed)},
          {"steganalyser", to_json(c.steganalyser)},
          {"gan", config::to_json(c.gan)},
          {"gan_epochs", c.gan_epochs},
          {"shuffled_control", c.shuffled_control},
          {"generated_train_covers", c.generated_train_covers},
          {"generated_test_covers", c.generated_test_covers},
          {"primary_seed", c.primary_seed},
          {"held_out_seed", c.held_out_seed},
          {"multi_train_seeds", c.multi_train_seeds},
          {"multi_test_seeds", c.multi_test_seeds},
          {"tuning_epochs", c.tuning_epochs},
          {"dcgan_checkpoint", c.dcgan_checkpoint},
          {"sgan_checkpoint", c.sgan_checkpoint},
          {"train_first", c.train_first}};
}

SuiteConfig suite_from_json(const json& j) {
  SuiteConfig c;
  config::reject_unknown_keys(
      j,
      {"suite", "image_size", "corpus_size", "corpus_noise", "corpus_seed", "split_seed", "test_fraction", "embed",
       "steganalyser", "gan", "gan_epochs", "shuffled_control", "generated_train_covers", "generated_test_covers",
       "primary_seed", "held_out_seed", "multi_train_seeds", "multi_test_seeds", "tuning_epochs", "dcgan_checkpoint",
       "sgan_checkpoint", "train_first"},
      "suite");
  const auto read = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  read("suite", c.suite);
  read("image_size", c.image_size);
  read("corpus_size", c.corpus_size);
  read("corpus_noise", c.corpus_noise);
  read("corpus_seed", c.corpus_seed);
  read("split_seed", c.split_seed);
  read("test_fraction", c.test_fraction);
  if (j.contains("embed")) c.embed = config::embed_from_json(j.at("embed"), c.embed);
  if (j.contains("steganalyser")) c.steganalyser = steganalyser_from_json(j.at("steganalyser"), c.steganalyser);
  if (j.contains("gan")) c.gan = config::sgan_from_json(j.at("gan"), c.gan);
  read("gan_epochs", c.gan_epochs);
  read("shuffled_control", c.shuffled_control);
  read("generated_train_covers", c.generated_train_covers);
  read("generated_test_covers", c.generated_test_covers);
  read("primary_seed", c.primary_seed);
  read("held_out_seed", c.held_out_seed);
  read("multi_train_seeds", c.multi_train_seeds);
  read("multi_test_seeds", c.multi_test_seeds);
  read("tuning_epochs", c.tuning_epochs);
  read("dcgan_checkpoint", c.dcgan_checkpoint);
  read("sgan_checkpoint", c.sgan_checkpoint);
  read("train_first", c.train_first);
  if (c.suite != "real" && c.suite != "c1-c6" && c.suite != "all") {
    throw std::invalid_argument("suite must be real, c1-c6 or all");
  }
  c.gan.image_size = c.image_size;
  return c;
}

const Report* SuiteResult::find(const std::string& plan_id) const {
  for (const auto& r : reports)
    if (r.plan_id == plan_id) return &r;
  return nullptr;
}

std::vector<ExperimentPlan> seed_variation_plans(const SuiteConfig& c, const fs::path& checkpoint) {
  const std::vector<std::uint64_t> primary{c.primary_seed}, held_out{c.held_out_seed};
  const auto plan = [&](PlanId id, std::vector<std::uint64_t> train, std::vector<std::uint64_t> test,
                        std::size_t tuning) {
    ExperimentPlan p;
    p.id = id;
    p.train_seeds = std::move(train);
    p.test_seeds = std::move(test);
    p.extra_tuning_epochs = tuning;
    p.train_covers = c.generated_train_covers;
    p.test_covers = c.generated_test_covers;
    p.generator_checkpoint = checkpoint;
    return p;
  };
  return {plan(PlanId::C1, primary, primary, 0),
          plan(PlanId::C2, primary, held_out, 0),
          plan(PlanId::C3, primary, held_out, c.tuning_epochs),
          plan(PlanId::C4, c.multi_train_seeds, held_out, 0),
          plan(PlanId::C5, c.multi_train_seeds, c.multi_test_seeds, 0),
          plan(PlanId::C6, c.multi_train_seeds, c.multi_test_seeds, c.tuning_epochs)};
}

namespace {

// Trains a generator (GAN or SGAN) on the real corpus and writes its checkpoint.
void train_generator(const SuiteConfig& c, training::Mode mode, const Dataset& real, const fs::path& checkpoint,
                     std::ostream& log) {
  training::SganConfig cfg = c.gan;
  cfg.mode = mode;
  cfg.image_size = c.image_size;
  cfg.embed = c.embed;
  training::SganState state = training::init_state(cfg);
  training::TrainTrace trace;
  for (std::size_t e = 0; e < c.gan_epochs; ++e) {
    const auto result = training::train_epoch(state, cfg, real, trace);
    if (result.halted) throw NonFiniteError("generator training halted: " + result.reason);
    log << "  " << (mode == training::Mode::Gan ? "dcgan" : "sgan") << " epoch " << e + 1 << "/" << c.gan_epochs
        << " L_D=" << trace.mean_loss(training::StepKind::D, e) << " L_G=" << trace.mean_loss(training::StepKind::G, e)
        << '\n';
  }
  ParamSet saved = state.to_checkpoint();
  training::tag_architecture(saved, cfg);
  save_checkpoint(checkpoint, saved);
  trace.write_jsonl(fs::path(checkpoint).replace_extension(".trace.jsonl"));
}

fs::path resolve_checkpoint(const SuiteConfig& c, const std::string& configured, training::Mode mode,
                            const Dataset& real, const fs::path& out_dir, std::ostream& log) {
  if (!configured.empty()) {
    if (!fs::exists(configured)) {
      throw std::invalid_argument("generator checkpoint " + configured + " does not exist");
    }
    return configured;
  }
  const fs::path path = out_dir / (mode == training::Mode::Gan ? "dcgan.ckpt" : "sgan.ckpt");
  if (!c.train_first) throw std::invalid_argument("no checkpoint configured for " + path.filename().string() +
                                                  " and train_first is off");
  log << "training " << path.filename().string() << '\n';
  train_generator(c, mode, real, path, log);
  return path;
}

}  // namespace

SuiteResult run_suite(const SuiteConfig& c, const fs::path& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  SuiteResult result;
  const bool run_real = c.suite == "real" || c.suite == "all";
  const bool run_seeds = c.suite == "c1-c6" || c.suite == "all";

  const Dataset corpus = synth_corpus(c.corpus_size, c.image_size, c.corpus_seed, c.corpus_noise);
  const auto [real_train, real_test] = split(corpus, c.test_fraction, c.split_seed);

  training::SganConfig gan_cfg = c.gan;
  gan_cfg.mode = training::Mode::Gan;
  gan_cfg.image_size = c.image_size;
  gan_cfg.embed = c.embed;

  const fs::path dcgan = resolve_checkpoint(c, c.dcgan_checkpoint, training::Mode::Gan, real_train, out_dir, log);

  ExperimentContext context{gan_cfg, &real_train, c.embed, c.steganalyser};

  if (run_real) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path sgan = resolve_checkpoint(c, c.sgan_checkpoint, training::Mode::Sgan, real_train, out_dir, log);
    log << "training S* on real covers\n";
    const Dataset train = make_stego_pairs(real_train.items, c.embed, derive_seed(c.split_seed, {kTrainPairs}));
    const Dataset test = make_stego_pairs(real_test.items, c.embed, derive_seed(c.split_seed, {kTestPairs}));
    auto trained = train_steganalyser(train, c.steganalyser);
    const json echo = {{"corpus_size", c.corpus_size},   {"corpus_seed", c.corpus_seed},
                       {"corpus_noise", c.corpus_noise}, {"split_seed", c.split_seed},
                       {"embed", config::to_json(c.embed)}, {"steganalyser", to_json(c.steganalyser)}};
    Report real = evaluate(trained.network, test, "REAL");
    real.config = echo;
    real.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.reports.push_back(real);

    if (c.shuffled_control) {
      Dataset shuffled = train;
      Rng rng(derive_seed(c.split_seed, {0x5f}));
      rng.shuffle(std::span<Label>(shuffled.labels));
      auto control = train_steganalyser(shuffled, c.steganalyser);
      Report r = evaluate(control.network, test, "REAL_SHUFFLED");
      r.config = echo;
      result.reports.push_back(r);
    }

    training::SganConfig sgan_cfg = gan_cfg;
    sgan_cfg.mode = training::Mode::Sgan;
    const std::vector<std::uint64_t> test_seed{c.held_out_seed};
    for (const auto& [id, path, cfg] : {std::tuple{"CROSS_DCGAN", dcgan, gan_cfg}, std::tuple{"CROSS_SGAN", sgan, sgan_cfg}}) {
      auto generator = load_generator(load_checkpoint(path), cfg);
      const auto covers = containers_from_seeds(generator, test_seed, c.generated_test_covers, cfg.z_dim);
      const Dataset gen = make_stego_pairs(covers, c.embed, derive_seed(c.held_out_seed, {kTestPairs}));
      Report r = evaluate(trained.network, gen, id);
      r.test_seeds = test_seed;
      r.config = echo;
      r.config["generator_checkpoint"] = path.filename().string();
      result.reports.push_back(r);
    }
  }

  if (run_seeds) {
    SteganalyserCache cache;
    for (const auto& plan : seed_variation_plans(c, dcgan)) {
      auto problems = plan.violations();
      if (!problems.empty()) {
        result.violations.insert(result.violations.end(), problems.begin(), problems.end());
        continue;
      }
      log << "running " << to_string(plan.id) << '\n';
      result.reports.push_back(run_condition_cached(plan, context, &cache));
    }
  }

  std::ofstream reports(out_dir / "reports.jsonl", std::ios::trunc);
  std::ofstream timings(out_dir / "timings.jsonl", std::ios::trunc);
  for (const auto& r : result.reports) {
    reports << r.to_json().dump() << '\n';
    timings << r.timing_json().dump() << '\n';
  }
  std::ofstream(out_dir / "summary.txt", std::ios::trunc) << summary_table(result);
  return result;
}

std::string summary_table(const SuiteResult& result) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  const auto acc = [&](const std::string& id) -> std::string {
    const Report* r = result.find(id);
    if (!r) return "  -  ";
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << r->accuracy;
    return s.str();
  };
  if (result.find("REAL")) {
    out << "Accuracy of S* trained on real images\n";
    out << "| Test set         | SGAN  | DCGAN |\n";
    out << "|------------------|-------|-------|\n";
    out << "| Real images      |     " << acc("REAL") << "     |\n";
    out << "| Generated images | " << acc("CROSS_SGAN") << " | " << acc("CROSS_DCGAN") << " |\n";
    if (result.find("REAL_SHUFFLED")) out << "Label-shuffled control: " << acc("REAL_SHUFFLED") << '\n';
    out << '\n';
  }
  for (const auto& [title, ids] :
       {std::pair{"Training/testing on generated images, C1-C3", std::vector<std::string>{"C1", "C2", "C3"}},
        std::pair{"Training/testing on generated images, C4-C6", std::vector<std::string>{"C4", "C5", "C6"}}}) {
    if (!result.find(ids.front())) continue;
    out << title << '\n';
    out << "| Condition | Accuracy |\n";
    out << "|-----------|----------|\n";
    for (const auto& id : ids) out << "| " << std::left << std::setw(9) << id << " | " << acc(id) << "    |\n";
    out << '\n';
  }
  for (const auto& v : result.violations) out << "plan violation: " << v << '\n';
  return out.str();
}

}  // namespace sgan::harness
