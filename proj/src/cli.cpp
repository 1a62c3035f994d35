#include "sgan/cli.hpp"

#include <zlib.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "sgan/checkpoint.hpp"
#include "sgan/config_io.hpp"
#include "sgan/errors.hpp"
#include "sgan/harness.hpp"
#include "sgan/random.hpp"

namespace sgan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kPayloadStream = 0xb175;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("cannot write " + path.string());
}

// Config file keys (minus "command") merged over the defaults; a snapshot of another
// subcommand is rejected.
json merge_config(json base, const std::string& path, const std::string& command) {
  if (path.empty()) return base;
  json file = read_json(path);
  if (!file.is_object()) throw std::invalid_argument("config must be a JSON object");
  if (file.contains("command")) {
    if (file.at("command") != command) {
      throw std::invalid_argument("config was written by '" + file.at("command").get<std::string>() + "', not '" +
                                  command + "'");
    }
    file.erase("command");
  }
  base.merge_patch(file);
  return base;
}

template <typename T>
void override_key(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

fs::path default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? fs::path(env) : fs::path("sgan_out");
}

std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

// ---- embed / extract --------------------------------------------------------------------

struct EmbedArgs {
  std::optional<std::string> config, in, out, payload, manifest, algo;
  std::optional<std::size_t> random_bits, channel;
  std::optional<double> rate;
  std::optional<std::uint64_t> seed;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  json cfg = {{"in", ""}, {"out", ""},       {"payload", ""},  {"random_bits", 0}, {"algorithm", "pm1"},
              {"rate", 0.4}, {"channel", 0}, {"seed", 0},      {"manifest", ""}};
  cfg = merge_config(cfg, a.config.value_or(""), "embed");
  override_key(cfg, "in", a.in);
  override_key(cfg, "out", a.out);
  override_key(cfg, "payload", a.payload);
  override_key(cfg, "random_bits", a.random_bits);
  override_key(cfg, "algorithm", a.algo);
  override_key(cfg, "rate", a.rate);
  override_key(cfg, "channel", a.channel);
  override_key(cfg, "seed", a.seed);
  override_key(cfg, "manifest", a.manifest);
  config::reject_unknown_keys(cfg, {"in", "out", "payload", "random_bits", "algorithm", "rate", "channel", "seed",
                                    "manifest"},
                              "embed");

  const fs::path in = cfg.at("in").get<std::string>(), dst = cfg.at("out").get<std::string>();
  if (in.empty() || dst.empty()) throw std::invalid_argument("embed needs --in and --out");
  if (!is_lossless_path(dst)) throw std::invalid_argument("output " + dst.string() + " is not a lossless format");
  const std::string payload_path = cfg.at("payload").get<std::string>();
  const auto random_bits = cfg.at("random_bits").get<std::size_t>();
  if (payload_path.empty() == (random_bits == 0)) {
    throw std::invalid_argument("give exactly one of --payload and --random-bits");
  }
  stego::EmbedConfig embed{stego::algorithm_from_string(cfg.at("algorithm").get<std::string>()),
                           cfg.at("channel").get<std::size_t>(), cfg.at("rate").get<double>(),
                           cfg.at("seed").get<std::uint64_t>()};
  const fs::path manifest =
      cfg.at("manifest").get<std::string>().empty() ? fs::path(dst.string() + ".manifest.json")
                                                    : fs::path(cfg.at("manifest").get<std::string>());
  cfg["command"] = "embed";
  write_json(dst.string() + ".config.json", cfg);

  const Image cover = load_image(in);
  const stego::BitPayload payload =
      payload_path.empty() ? stego::random_payload(random_bits, derive_seed(embed.seed, {kPayloadStream}), embed.rate)
                           : stego::bytes_to_bits(read_bytes(payload_path), embed.rate);
  if (embed.channel >= cover.channels()) {
    throw std::invalid_argument("channel " + std::to_string(embed.channel) + " not present in " + in.string());
  }
  const Image stego_image = stego::embed(cover, payload, embed);
  save_image(stego_image, dst);
  const auto packed = stego::bits_to_bytes(payload);
  write_json(manifest, {{"algorithm", stego::to_string(embed.algorithm)},
                        {"channel", embed.channel},
                        {"rate", embed.rate},
                        {"seed", embed.seed},
                        {"n_bits", payload.size()},
                        {"width", cover.width()},
                        {"height", cover.height()},
                        {"channels", cover.channels()},
                        {"crc32", hex32(crc32_of(packed.bytes))}});
  out << "embedded " << payload.size() << " bits into " << dst.string() << " (capacity "
      << stego::capacity(cover, embed) << ")\n";
  return kOk;
}

struct ExtractArgs {
  std::optional<std::string> config, in, manifest, out;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  json cfg = {{"in", ""}, {"manifest", ""}, {"out", ""}};
  cfg = merge_config(cfg, a.config.value_or(""), "extract");
  override_key(cfg, "in", a.in);
  override_key(cfg, "manifest", a.manifest);
  override_key(cfg, "out", a.out);
  config::reject_unknown_keys(cfg, {"in", "manifest", "out"}, "extract");
  const fs::path in = cfg.at("in").get<std::string>(), dst = cfg.at("out").get<std::string>();
  const fs::path manifest_path = cfg.at("manifest").get<std::string>();
  if (in.empty() || dst.empty() || manifest_path.empty()) {
    throw std::invalid_argument("extract needs --in, --manifest and --out");
  }
  cfg["command"] = "extract";
  write_json(dst.string() + ".config.json", cfg);

  const json m = read_json(manifest_path);
  const Image image = load_image(in);
  if (m.at("width").get<std::size_t>() != image.width() || m.at("height").get<std::size_t>() != image.height() ||
      m.at("channels").get<std::size_t>() != image.channels()) {
    throw FormatError("manifest describes a " + std::to_string(m.at("width").get<std::size_t>()) + "x" +
                      std::to_string(m.at("height").get<std::size_t>()) + " image, " + in.string() + " is " +
                      std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  const stego::EmbedConfig embed{stego::algorithm_from_string(m.at("algorithm").get<std::string>()),
                                 m.at("channel").get<std::size_t>(), m.at("rate").get<double>(),
                                 m.at("seed").get<std::uint64_t>()};
  const auto bits = stego::extract(image, embed, m.at("n_bits").get<std::size_t>());
  const auto packed = stego::bits_to_bytes(bits);
  const std::string crc = hex32(crc32_of(packed.bytes));
  if (crc != m.at("crc32").get<std::string>()) {
    throw FormatError("payload checksum mismatch (manifest " + m.at("crc32").get<std::string>() + ", extracted " +
                      crc + "): wrong key or modified image");
  }
  write_bytes(dst, packed.bytes);
  out << "extracted " << bits.size() << " bits to " << dst.string() << '\n';
  return kOk;
}

// ---- train / generate ------------------------------------------------------------------

struct TrainArgs {
  std::optional<std::string> config, mode, out_dir, resume, data;
  std::optional<double> alpha;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

json data_defaults() {
  return {{"manifest", ""},     {"corpus_size", 2000}, {"corpus_noise", 0.6},
          {"corpus_seed", 100}, {"split_seed", 101},   {"test_fraction", 0.1}};
}

Dataset load_training_data(const json& d, std::size_t image_size) {
  config::reject_unknown_keys(d, {"manifest", "corpus_size", "corpus_noise", "corpus_seed", "split_seed",
                                  "test_fraction"},
                              "data");
  Dataset all;
  if (const auto manifest = d.at("manifest").get<std::string>(); !manifest.empty()) {
    all = read_dataset_manifest(manifest);
    for (auto& img : all.items) {
      if (img.width() < image_size || img.height() < image_size) {
        throw std::invalid_argument("manifest image smaller than " + std::to_string(image_size));
      }
      if (img.width() != image_size || img.height() != image_size) img = center_crop(img, image_size);
      if (img.channels() != 3) throw std::invalid_argument("training images must be RGB");
    }
  } else {
    all = synth_corpus(d.at("corpus_size").get<std::size_t>(), image_size, d.at("corpus_seed").get<std::uint64_t>(),
                       d.at("corpus_noise").get<double>());
  }
  return split(all, d.at("test_fraction").get<double>(), d.at("split_seed").get<std::uint64_t>()).first;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw FormatError("cannot write " + path.string());
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  json cfg = {{"gan", config::to_json(training::SganConfig{})}, {"data", data_defaults()}, {"resume", ""},
              {"out_dir", default_out_dir().string()}};
  cfg = merge_config(cfg, a.config.value_or(""), "train");
  if (a.mode) cfg["gan"]["mode"] = *a.mode;
  if (a.alpha) cfg["gan"]["alpha"] = *a.alpha;
  if (a.epochs) cfg["gan"]["epochs"] = *a.epochs;
  if (a.seed) {
    cfg["gan"]["param_seed"] = derive_seed(*a.seed, {1});
    cfg["gan"]["noise_seed"] = derive_seed(*a.seed, {2});
    cfg["gan"]["data_seed"] = derive_seed(*a.seed, {3});
    cfg["gan"]["embed_seed"] = derive_seed(*a.seed, {4});
  }
  if (a.data) cfg["data"]["manifest"] = *a.data;
  override_key(cfg, "resume", a.resume);
  override_key(cfg, "out_dir", a.out_dir);
  config::reject_unknown_keys(cfg, {"gan", "data", "resume", "out_dir"}, "train");
  const training::SganConfig gan = config::sgan_from_json(cfg.at("gan"));
  gan.validate();
  if (const auto w = gan.warning(); !w.empty()) err << "warning: " << w << '\n';
  const fs::path dir = cfg.at("out_dir").get<std::string>();
  cfg["command"] = "train";
  cfg["gan"] = config::to_json(gan);
  write_json(dir / "config.resolved.json", cfg);

  const Dataset data = load_training_data(cfg.at("data"), gan.image_size);
  const std::string resume = cfg.at("resume").get<std::string>();
  training::SganState state =
      resume.empty() ? training::init_state(gan) : training::restore_state(gan, load_checkpoint(resume));
  write_text(dir / "generator.net", state.generator.spec().to_text());
  write_text(dir / "discriminator.net", state.discriminator.spec().to_text());
  if (gan.mode == training::Mode::Sgan) write_text(dir / "steganalyser.net", state.steganalyser.spec().to_text());

  const fs::path trace_path = dir / "trace.jsonl";
  if (resume.empty()) fs::remove(trace_path);
  while (state.epoch < gan.epochs) {
    training::TrainTrace trace;
    const auto result = training::train_epoch(state, gan, data, trace);
    trace.write_jsonl(trace_path, true);
    if (result.halted) throw NonFiniteError(result.reason + " (trace kept in " + trace_path.string() + ")");
    ParamSet ckpt = state.to_checkpoint();
    training::tag_architecture(ckpt, gan);
    std::ostringstream name;
    name << "epoch_" << std::setw(3) << std::setfill('0') << state.epoch << ".ckpt";
    save_checkpoint(dir / name.str(), ckpt);
    save_checkpoint(dir / "latest.ckpt", ckpt);
    out << "epoch " << state.epoch << "/" << gan.epochs << " L_D=" << trace.mean_loss(training::StepKind::D, state.epoch - 1)
        << " L_G=" << trace.mean_loss(training::StepKind::G, state.epoch - 1);
    if (gan.mode == training::Mode::Sgan) out << " L_S=" << trace.mean_loss(training::StepKind::S, state.epoch - 1);
    out << '\n';
  }
  return kOk;
}

struct GenerateArgs {
  std::optional<std::string> config, checkpoint, out_dir;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  json cfg = {{"checkpoint", ""}, {"n", 16}, {"seed", 0}, {"out_dir", default_out_dir().string()}};
  cfg = merge_config(cfg, a.config.value_or(""), "generate");
  override_key(cfg, "checkpoint", a.checkpoint);
  override_key(cfg, "n", a.n);
  override_key(cfg, "seed", a.seed);
  override_key(cfg, "out_dir", a.out_dir);
  config::reject_unknown_keys(cfg, {"checkpoint", "n", "seed", "out_dir"}, "generate");
  const fs::path checkpoint = cfg.at("checkpoint").get<std::string>();
  if (checkpoint.empty()) throw std::invalid_argument("generate needs --checkpoint");
  if (!fs::exists(checkpoint)) throw std::invalid_argument("checkpoint " + checkpoint.string() + " does not exist");
  const fs::path dir = cfg.at("out_dir").get<std::string>();
  cfg["command"] = "generate";
  write_json(dir / "config.resolved.json", cfg);

  const ParamSet params = load_checkpoint(checkpoint);
  const training::SganConfig arch = training::architecture_from(params, {});
  auto state = training::restore_state(arch, params);
  const auto n = cfg.at("n").get<std::size_t>();
  const auto images = training::generate(state.generator, n, cfg.at("seed").get<std::uint64_t>(), arch.z_dim);
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::ostringstream name;
    name << "container_" << std::setw(5) << std::setfill('0') << i << ".png";
    save_image(images[i], dir / name.str());
  }
  out << "wrote " << n << " containers to " << dir.string() << '\n';
  return kOk;
}

// ---- experiment ------------------------------------------------------------------------

struct ExperimentArgs {
  std::optional<std::string> config, suite, out_dir, dcgan, sgan;
  bool train_first = false;
};

int cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
  json cfg = harness::to_json(harness::SuiteConfig{});
  cfg["out_dir"] = default_out_dir().string();
  cfg = merge_config(cfg, a.config.value_or(""), "experiment");
  override_key(cfg, "suite", a.suite);
  override_key(cfg, "out_dir", a.out_dir);
  override_key(cfg, "dcgan_checkpoint", a.dcgan);
  override_key(cfg, "sgan_checkpoint", a.sgan);
  if (a.train_first) cfg["train_first"] = true;
  const fs::path dir = cfg.at("out_dir").get<std::string>();
  cfg.erase("out_dir");
  const harness::SuiteConfig suite = harness::suite_from_json(cfg);
  for (const auto& plan : harness::seed_variation_plans(suite, "unused")) {
    if (const auto v = plan.violations(); !v.empty()) {
      for (const auto& line : v) out << "plan violation: " << line << '\n';
      return kUsage;
    }
  }
  json snapshot = harness::to_json(suite);
  snapshot["command"] = "experiment";
  snapshot["out_dir"] = dir.string();
  write_json(dir / "config.resolved.json", snapshot);

  const auto result = harness::run_suite(suite, dir, out);
  out << harness::summary_table(result);
  return result.violations.empty() ? kOk : kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SGAN toolkit: steganographic embedding, adversarial container generation, steganalysis experiments"};
  app.require_subcommand(1);

  EmbedArgs ea;
  auto* embed = app.add_subcommand("embed", "Hide a payload in a lossless image");
  embed->add_option("--config", ea.config, "JSON config or snapshot");
  embed->add_option("--in", ea.in, "Cover image");
  embed->add_option("--out", ea.out, "Stego image (png/ppm/pgm)");
  embed->add_option("--payload", ea.payload, "Payload file");
  embed->add_option("--random-bits", ea.random_bits, "Seeded random payload of N bits");
  embed->add_option("--algo", ea.algo, "lsb or pm1");
  embed->add_option("--rate", ea.rate, "Bits per pixel of the channel, in (0,1]");
  embed->add_option("--channel", ea.channel, "Channel index");
  embed->add_option("--seed", ea.seed, "Embedding key");
  embed->add_option("--manifest", ea.manifest, "Manifest path (default <out>.manifest.json)");

  ExtractArgs xa;
  auto* extract = app.add_subcommand("extract", "Recover a payload using its manifest");
  extract->add_option("--config", xa.config, "JSON config or snapshot");
  extract->add_option("--in", xa.in, "Stego image");
  extract->add_option("--manifest", xa.manifest, "Manifest written by embed");
  extract->add_option("--out", xa.out, "Payload output file");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a DCGAN or SGAN");
  train->add_option("--config", ta.config, "JSON config or snapshot");
  train->add_option("--mode", ta.mode, "gan or sgan");
  train->add_option("--alpha", ta.alpha, "Weight of the discriminator term");
  train->add_option("--epochs", ta.epochs, "Total epochs");
  train->add_option("--seed", ta.seed, "Derive all training seeds from this value");
  train->add_option("--data", ta.data, "Dataset manifest (default: synthetic corpus)");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train->add_option("--out-dir", ta.out_dir, std::string("Output directory (default $") + kOutDirEnv + ")");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Sample container images from a checkpoint");
  generate->add_option("--config", ga.config, "JSON config or snapshot");
  generate->add_option("--checkpoint", ga.checkpoint, "Generator checkpoint");
  generate->add_option("--n", ga.n, "Number of images");
  generate->add_option("--seed", ga.seed, "Noise seed");
  generate->add_option("--out-dir", ga.out_dir, std::string("Output directory (default $") + kOutDirEnv + ")");

  ExperimentArgs xp;
  auto* experiment = app.add_subcommand("experiment", "Run steganalysis experiment suites");
  experiment->add_option("--config", xp.config, "JSON config or snapshot");
  experiment->add_option("--suite", xp.suite, "real, c1-c6 or all");
  experiment->add_option("--out-dir", xp.out_dir, std::string("Output directory (default $") + kOutDirEnv + ")");
  experiment->add_option("--dcgan-checkpoint", xp.dcgan, "Plain GAN generator checkpoint");
  experiment->add_option("--sgan-checkpoint", xp.sgan, "SGAN generator checkpoint");
  experiment->add_flag("--train-first", xp.train_first, "Train missing generators first");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*embed) return cmd_embed(ea, out);
    if (*extract) return cmd_extract(xa, out);
    if (*train) return cmd_train(ta, out, err);
    if (*generate) return cmd_generate(ga, out);
    return cmd_experiment(xp, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: bad config value: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace sgan::cli
