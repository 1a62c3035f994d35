#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgan/image.hpp"
#include "sgan/nets.hpp"
#include "sgan/stego.hpp"
#include "sgan/training.hpp"

namespace sgan::harness {

/// Training setup for the independent steganalyser S*.
struct SteganalyserTraining {
  nets::SteganalyserOptions architecture{};
  nets::WeightInit init = nets::WeightInit::He;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 11;
};

/// Cover i at index 2i (label Cover), its stego copy at 2i+1 (label Stego). The payload and
/// embedding key of cover i are derived from (seed, i).
Dataset make_stego_pairs(std::span<const Image> covers, const stego::EmbedConfig& embed, std::uint64_t seed);

struct TrainedSteganalyser {
  nets::Network network;
  std::vector<double> epoch_losses;
};

/// Mini-batch Adam on binary cross-entropy. Rejects datasets without both classes.
TrainedSteganalyser train_steganalyser(const Dataset& dataset, const SteganalyserTraining& config);

/// S* outputs in (0,1) for each image.
std::vector<double> predict(nets::Network& steganalyser, std::span<const Image> images);

struct Confusion {
  std::size_t true_positive = 0;   // stego called stego
  std::size_t true_negative = 0;   // cover called cover
  std::size_t false_positive = 0;  // cover called stego
  std::size_t false_negative = 0;  // stego called cover
  std::size_t total() const { return true_positive + true_negative + false_positive + false_negative; }
  double accuracy() const;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Threshold 0.5 on predictions against labels.
Confusion confusion_from(std::span<const double> predictions, std::span<const Label> labels);

struct Report {
  std::string plan_id;
  double accuracy = 0.0;
  Confusion confusion;
  double runtime_seconds = 0.0;
  std::vector<std::uint64_t> train_seeds;  // every container seed consumed for training
  std::vector<std::uint64_t> test_seeds;   // every container seed consumed for testing
  nlohmann::json config;                   // echo of everything that determined the result

  /// Deterministic record (runtime excluded; see timing_json).
  nlohmann::json to_json() const;
  nlohmann::json timing_json() const;
};

Report evaluate(nets::Network& steganalyser, const Dataset& dataset, std::string plan_id);

enum class PlanId { Real, C1, C2, C3, C4, C5, C6 };
std::string to_string(PlanId id);

struct ExperimentPlan {
  PlanId id = PlanId::C1;
  std::vector<std::uint64_t> train_seeds;
  std::vector<std::uint64_t> test_seeds;
  std::size_t extra_tuning_epochs = 0;
  std::size_t train_covers = 1000;  // split evenly across train seeds
  std::size_t test_covers = 250;    // split evenly across test seeds
  std::filesystem::path generator_checkpoint;

  /// Human-readable list of violated invariants; empty when the plan is well-formed.
  std::vector<std::string> violations() const;
};

/// Generator and data needed to produce and fine-tune containers.
struct ExperimentContext {
  training::SganConfig generator_config;  // architecture and optimizer for the checkpoint
  const Dataset* real_train = nullptr;    // corpus used for fine-tuning (C3/C6)
  stego::EmbedConfig embed;
  SteganalyserTraining steganalyser;
};

/// Containers from a fixed generator: n images spread evenly over `seeds` (remainder to the first).
std::vector<Image> containers_from_seeds(nets::Network& generator, std::span<const std::uint64_t> seeds,
                                         std::size_t n, std::size_t z_dim);

/// Loads the generator, builds train/test stego pairs from the plan's seeds, trains S* and
/// evaluates it. C3/C6 fine-tune a copy of the generator before producing test containers.
Report run_condition(const ExperimentPlan& plan, const ExperimentContext& context);

/// Everything one experiment suite needs.
struct SuiteConfig {
  std::string suite = "all";  // real | c1-c6 | all
  std::size_t image_size = 16;
  std::size_t corpus_size = 2000;
  double corpus_noise = 0.6;
  std::uint64_t corpus_seed = 100;
  std::uint64_t split_seed = 101;
  double test_fraction = 0.1;
  stego::EmbedConfig embed{stego::Algorithm::Pm1, 0, 0.4, 7};
  SteganalyserTraining steganalyser{};
  training::SganConfig gan{};
  std::size_t gan_epochs = 5;
  bool shuffled_control = true;
  std::size_t generated_train_covers = 1000;
  std::size_t generated_test_covers = 250;
  std::uint64_t primary_seed = 1001;
  std::uint64_t held_out_seed = 2002;
  std::vector<std::uint64_t> multi_train_seeds{3001, 3002, 3003, 3004};
  std::vector<std::uint64_t> multi_test_seeds{4001, 4002, 4003, 4004};
  std::size_t tuning_epochs = 2;
  std::string dcgan_checkpoint;  // empty: train into the output directory
  std::string sgan_checkpoint;
  bool train_first = false;  // train missing generator checkpoints into the output directory
};

nlohmann::json to_json(const SuiteConfig& config);
SuiteConfig suite_from_json(const nlohmann::json& j);

struct SuiteResult {
  std::vector<Report> reports;
  std::vector<std::string> violations;
  const Report* find(const std::string& plan_id) const;
};

/// The plans C1..C6 for a generator checkpoint.
std::vector<ExperimentPlan> seed_variation_plans(const SuiteConfig& config, const std::filesystem::path& checkpoint);

/// Runs the selected suite, writing reports.jsonl, timings.jsonl and summary.txt into out_dir.
SuiteResult run_suite(const SuiteConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

/// Tables mirroring the layout of the published results (real/generated, C1-C3, C4-C6).
std::string summary_table(const SuiteResult& result);

}  // namespace sgan::harness
