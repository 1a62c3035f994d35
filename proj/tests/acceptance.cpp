// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every check ran to completion, whatever the verdicts; --strict
// turns any FAIL into exit status 1. Lines are also written to --results (default
// acceptance_results.txt in the working directory).

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sgan/cli.hpp"
#include "sgan/harness.hpp"
#include "sgan/stego.hpp"
#include "sgan/training.hpp"
#include "support/cases.hpp"

using namespace sgan;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(clock_type::time_point t) {
  return std::chrono::duration<double>(clock_type::now() - t).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image random_image(Rng& rng, std::size_t w, std::size_t h, std::size_t c) {
  Image img(w, h, c);
  for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// ---- 1 -----------------------------------------------------------------------------------
Verdict embedding_roundtrip() {
  const auto start = clock_type::now();
  std::size_t failures = 0, locality = 0;
  for (auto algo : {stego::Algorithm::Lsb, stego::Algorithm::Pm1}) {
    Rng rng(algo == stego::Algorithm::Lsb ? 101 : 202);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t w = 8 + rng.below(57), h = 8 + rng.below(57), ch = rng.coin() ? 3 : 1;
      const Image cover = random_image(rng, w, h, ch);
      const stego::EmbedConfig cfg{algo, rng.below(ch), rng.uniform(0.01, 0.4), rng.next()};
      const std::size_t n = stego::capacity(cover, cfg);
      const auto payload = stego::random_payload(n, rng.next(), cfg.rate);
      const Image out = stego::embed(cover, payload, cfg);
      if (!(stego::extract(out, cfg, n) == payload)) ++failures;
      if (algo != stego::Algorithm::Pm1) continue;
      for (std::size_t i = 0; i < cover.pixels().size(); ++i) {
        const int d = std::abs(int(out.pixels()[i]) - int(cover.pixels()[i]));
        if ((i % ch != cfg.channel && d != 0) || d > 1) ++locality;
      }
    }
  }
  const double t = seconds_since(start);
  return {failures == 0 && locality == 0 && t < 10.0,
          "2000 triples, " + std::to_string(failures) + " extraction failures, " + std::to_string(locality) +
              " locality violations, " + fmt(t, 2) + " s (limit 10 s)"};
}

// ---- 2 -----------------------------------------------------------------------------------
Verdict distortion_oracle() {
  Rng rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = 2 + rng.below(30), h = 2 + rng.below(30), ch = rng.coin() ? 3 : 1;
    const Image cover = random_image(rng, w, h, ch);
    Image stego_img = cover;
    for (auto& p : stego_img.pixels())
      if (rng.below(4) == 0) p = static_cast<std::uint8_t>(rng.below(256));
    std::vector<double> table(w * h * ch);
    for (double& v : table) v = rng.uniform(0.0, 10.0);
    const stego::CostFunction cost{"table", [&table, w, ch](const Image&, std::size_t x, std::size_t y, std::size_t c) {
                                     return table[(y * w + x) * ch + c];
                                   }};
    double expected = 0.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < ch; ++c)
          expected += table[(y * w + x) * ch + c] * std::abs(int(cover.at(x, y, c)) - int(stego_img.at(x, y, c)));
    const double got = stego::distortion(cover, stego_img, cost);
    worst = std::max(worst, std::abs(got - expected) / std::max(1.0, std::abs(expected)));
  }
  return {worst <= 1e-12, "100 pairs, worst relative difference " + fmt(worst * 1e12, 3) + "e-12 (limit 1e-12)"};
}

// ---- 3 -----------------------------------------------------------------------------------
Verdict autodiff() {
  const auto start = clock_type::now();
  std::size_t families = 0, failing = 0;
  double worst_plain = 0.0, worst_bn = 0.0;
  std::string failed;
  auto run = [&](const std::vector<sgan::testing::GradCase>& cases, bool losses) {
    for (const auto& c : cases) {
      ++families;
      const bool bn = c.batch_norm_path;
      const double tol = bn ? sgan::testing::kBatchNormTolerance : sgan::testing::kTolerance;
      bool ok = true;
      for (int i = 0; i < 20; ++i) {
        const auto r = c.run((losses ? 2000 : 1000) + i);
        (bn ? worst_bn : worst_plain) = std::max(bn ? worst_bn : worst_plain, r.relative_error);
        if (!(r.relative_error < tol) || r.checked == 0) ok = false;
      }
      if (!ok) {
        ++failing;
        failed += " " + c.name;
      }
    }
  };
  run(sgan::testing::layer_cases(), false);
  run(sgan::testing::loss_cases(), true);
  const double t = seconds_since(start);
  std::ostringstream d;
  d << families << " families x 20 instances, worst " << std::scientific << std::setprecision(2) << worst_plain
    << " (limit 1e-6) / " << worst_bn << " batch-norm path (limit 1e-4), " << std::fixed << t << " s (limit 120 s)";
  if (failing) d << "; failing:" << failed;
  return {failing == 0 && t < 120.0, d.str()};
}

// ---- 4 -----------------------------------------------------------------------------------
Verdict f0_fidelity() {
  const int raw[25] = {-1, 2, -2, 2, -1, 2, -6, 8, -6, 2, -2, 8, -12, 8, -2, 2, -6, 8, -6, 2, -1, 2, -2, 2, -1};
  const auto& k = nets::f0_kernel();
  bool entries = true;
  for (int i = 0; i < 25; ++i) entries = entries && k[i] == raw[i] / 12.0;

  nets::Network probe(nets::build_independent_steganalyser(16), 1);
  const auto& layer = probe.spec().layers.front();
  bool zero = layer.kind == nets::LayerKind::HighPass;
  for (int v = 0; v < 256 && zero; ++v) {
    const Tensor x = Tensor::full({1, 3, 16, 16}, pixel_to_unit(static_cast<std::uint8_t>(v)));
    const Tensor y = ops::zero_sum_filter(x, probe.params().at(layer.name + ".kernel"), layer.pad);
    for (double r : y.data()) zero = zero && r == 0.0;
  }

  const Dataset covers = synth_corpus(64, 16, 404);
  const Dataset pairs = harness::make_stego_pairs(covers.items, {stego::Algorithm::Pm1, 0, 0.4, 0}, 405);
  harness::SteganalyserTraining cfg;
  cfg.epochs = 2;
  auto trained = harness::train_steganalyser(pairs, cfg);
  const Tensor& after = trained.network.params().at(trained.network.spec().layers.front().name + ".kernel");
  bool unchanged = true;
  for (int i = 0; i < 25; ++i) unchanged = unchanged && after[i] == k[i];
  return {entries && zero && unchanged, std::string("entries ") + (entries ? "exact" : "WRONG") +
                                            ", constant response " + (zero ? "exactly zero" : "NONZERO") +
                                            " for all 256 levels, kernel after training " +
                                            (unchanged ? "bit-identical" : "CHANGED")};
}

training::SganConfig tiny_gan(training::Mode mode, double alpha) {
  training::SganConfig c;
  c.mode = mode;
  c.alpha = alpha;
  c.batch_size = 16;
  c.generator_channels = 4;
  c.critic_channels = 4;
  return c;
}

// ---- 5 -----------------------------------------------------------------------------------
Verdict alpha_endpoint() {
  const Dataset data = synth_corpus(64, 16, 505);
  const auto gan = tiny_gan(training::Mode::Gan, 0.85), sgan = tiny_gan(training::Mode::Sgan, 1.0);
  auto a = training::init_state(gan), b = training::init_state(sgan);
  training::TrainTrace ta, tb;
  bool same = true;
  for (int e = 0; e < 3; ++e) {
    training::train_epoch(a, gan, data, ta);
    training::train_epoch(b, sgan, data, tb);
    same = same && a.generator.params().hash(false) == b.generator.params().hash(false) &&
           a.discriminator.params().hash(false) == b.discriminator.params().hash(false);
  }
  return {same, "3 epochs, theta_G and theta_D hashes " + std::string(same ? "identical" : "DIFFER") +
                    " after every epoch (G " + std::to_string(a.generator.params().hash()) + ")"};
}

// ---- 6 -----------------------------------------------------------------------------------
Verdict schedule() {
  const Dataset data = synth_corpus(80, 16, 606);
  const auto cfg = tiny_gan(training::Mode::Sgan, 0.85);
  auto state = training::init_state(cfg);
  bool ok = true;
  std::string counts;
  for (int e = 0; e < 2; ++e) {
    training::TrainTrace trace;
    training::train_epoch(state, cfg, data, trace);
    const auto g = trace.count(training::StepKind::G), d = trace.count(training::StepKind::D),
               s = trace.count(training::StepKind::S);
    ok = ok && g == 2 * d && g == 2 * s && d == training::batches_per_epoch(data.size(), cfg.batch_size);
    counts += " epoch " + std::to_string(e + 1) + ": G=" + std::to_string(g) + " D=" + std::to_string(d) +
              " S=" + std::to_string(s) + ";";
  }
  return {ok, "per-epoch step counts" + counts};
}

// ---- 7-9 ---------------------------------------------------------------------------------
struct SuiteRun {
  harness::SuiteResult real, seeds;
  double real_seconds = 0.0, seeds_seconds = 0.0;
  bool ran = false;
};

double accuracy(const harness::SuiteResult& r, const std::string& id) {
  const auto* rep = r.find(id);
  return rep ? rep->accuracy : std::nan("");
}

SuiteRun run_suites(const fs::path& out, std::ostream& log) {
  SuiteRun s;
  harness::SuiteConfig c;
  c.train_first = true;
  c.suite = "real";
  auto start = clock_type::now();
  s.real = harness::run_suite(c, out / "real", log);
  s.real_seconds = seconds_since(start);
  c.suite = "c1-c6";
  c.dcgan_checkpoint = (out / "real" / "dcgan.ckpt").string();
  start = clock_type::now();
  s.seeds = harness::run_suite(c, out / "seeds", log);
  s.seeds_seconds = seconds_since(start);
  s.ran = true;
  return s;
}

Verdict steganalyser_pipeline(const SuiteRun& s) {
  const double real = accuracy(s.real, "REAL"), control = accuracy(s.real, "REAL_SHUFFLED");
  const bool ok = real > 0.7 && control >= 0.45 && control <= 0.55 && s.real_seconds < 600.0;
  return {ok, "REAL " + fmt(real) + " (need > 0.700), shuffled control " + fmt(control) +
                  " (need 0.45-0.55), real-image phase incl. generator training " + fmt(s.real_seconds, 1) +
                  " s (limit 600 s)"};
}

Verdict cross_domain(const SuiteRun& s) {
  const double real = accuracy(s.real, "REAL"), dc = accuracy(s.real, "CROSS_DCGAN"),
               sg = accuracy(s.real, "CROSS_SGAN");
  const bool drop = real - dc >= 0.2 && real - sg >= 0.2;
  const bool order = sg <= dc + 0.05;
  return {drop && order, "REAL " + fmt(real) + ", DCGAN containers " + fmt(dc) + ", SGAN containers " + fmt(sg) +
                             " (need drops >= 0.200 and SGAN <= DCGAN + 0.05)"};
}

Verdict seed_trends(const SuiteRun& s) {
  double a[7];
  for (int i = 1; i <= 6; ++i) a[i] = accuracy(s.seeds, "C" + std::to_string(i));
  const bool t1 = a[1] - a[2] >= 0.1, t2 = a[2] >= a[3] - 0.05, t3 = a[4] >= a[5] && a[5] >= a[6] - 0.05;
  const bool fast = s.seeds_seconds < 1800.0;
  std::ostringstream d;
  d << "C1..C6 = " << fmt(a[1]) << " " << fmt(a[2]) << " " << fmt(a[3]) << " " << fmt(a[4]) << " " << fmt(a[5])
    << " " << fmt(a[6]) << "; C1-C2>=0.1 " << (t1 ? "ok" : "NO") << ", C2>=C3-0.05 " << (t2 ? "ok" : "NO")
    << ", C4>=C5>=C6-0.05 " << (t3 ? "ok" : "NO") << ", " << fmt(s.seeds_seconds, 1) << " s (limit 1800 s)";
  return {t1 && t2 && t3 && fast && s.seeds.violations.empty(), d.str()};
}

// ---- 10 ----------------------------------------------------------------------------------
Verdict determinism(const fs::path& dir) {
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "sgan");
    return cli::run(args, sink, sink);
  };
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> mismatches;
  const auto same = [&](const std::string& a, const std::string& b) {
    if (!fs::exists(a) || slurp(a) != slurp(b)) mismatches.push_back(fs::path(b).filename().string());
  };
  bool ran = true;

  save_image(synth_corpus(1, 64, 1010).items[0], p("cover.png"));
  ran &= run({"embed", "--in", p("cover.png"), "--out", p("e1.png"), "--random-bits", "1000", "--seed", "9"}) == 0;
  {
    auto snap = nlohmann::json::parse(slurp(p("e1.png.config.json")));
    snap["out"] = p("e2.png");
    snap["manifest"] = "";
    std::ofstream(p("embed_snapshot.json")) << snap.dump();
  }
  ran &= run({"embed", "--config", p("embed_snapshot.json")}) == 0;
  same(p("e1.png"), p("e2.png"));
  same(p("e1.png.manifest.json"), p("e2.png.manifest.json"));

  nlohmann::json train = {{"gan", {{"epochs", 1}, {"generator_channels", 4}, {"critic_channels", 4}}},
                          {"data", {{"corpus_size", 96}}}};
  std::ofstream(p("train.json")) << train.dump();
  ran &= run({"train", "--config", p("train.json"), "--seed", "7", "--out-dir", p("t1")}) == 0;
  ran &= run({"train", "--config", p("t1/config.resolved.json"), "--out-dir", p("t2")}) == 0;
  same(p("t1/latest.ckpt"), p("t2/latest.ckpt"));

  ran &= run({"generate", "--checkpoint", p("t1/latest.ckpt"), "--n", "8", "--seed", "3", "--out-dir", p("g1")}) == 0;
  ran &= run({"generate", "--config", p("g1/config.resolved.json"), "--out-dir", p("g2")}) == 0;
  for (int i = 0; i < 8; ++i) same(p("g1/container_0000" + std::to_string(i) + ".png"), p("g2/container_0000" + std::to_string(i) + ".png"));

  harness::SuiteConfig c;
  c.corpus_size = 120;
  c.steganalyser.epochs = 2;
  c.gan_epochs = 1;
  c.gan.generator_channels = 4;
  c.gan.critic_channels = 4;
  c.generated_train_covers = 64;
  c.generated_test_covers = 32;
  c.tuning_epochs = 1;
  c.train_first = true;
  std::ofstream(p("suite.json")) << harness::to_json(c).dump();
  ran &= run({"experiment", "--config", p("suite.json"), "--out-dir", p("x1")}) == 0;
  ran &= run({"experiment", "--config", p("x1/config.resolved.json"), "--out-dir", p("x2")}) == 0;
  same(p("x1/reports.jsonl"), p("x2/reports.jsonl"));
  same(p("x1/dcgan.ckpt"), p("x2/dcgan.ckpt"));
  same(p("x1/sgan.ckpt"), p("x2/sgan.ckpt"));

  std::string detail = "embed, train, generate and experiment reruns from their snapshots: ";
  if (!ran) detail += "a command FAILED; ";
  detail += mismatches.empty() ? "all 15 outputs bit-identical" : std::to_string(mismatches.size()) + " mismatches";
  for (const auto& m : mismatches) detail += " " + m;
  return {ran && mismatches.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool strict = false, skip_suite = false;
  std::string work = "acceptance_work", results = "acceptance_results.txt";
  app.add_flag("--strict", strict, "Exit 1 when any criterion fails");
  app.add_flag("--skip-suite", skip_suite, "Skip criteria 7-9 (the experiment suite)");
  app.add_option("--work-dir", work, "Scratch directory");
  app.add_option("--results", results, "Where to write the verdict lines");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> lines;
  bool all = true;
  const auto report = [&](int id, const std::string& name, const std::function<Verdict()>& check) {
    const auto start = clock_type::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::ostringstream line;
    line << (v.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << name << ": " << v.detail << "  ["
         << fmt(seconds_since(start), 1) << " s]";
    std::cout << line.str() << std::endl;
    lines.push_back(line.str());
    all = all && v.pass;
  };

  report(1, "embedding roundtrip", embedding_roundtrip);
  report(2, "distortion oracle", distortion_oracle);
  report(3, "autodiff correctness", autodiff);
  report(4, "F0 fidelity", f0_fidelity);
  report(5, "alpha endpoint equivalence", alpha_endpoint);
  report(6, "schedule audit", schedule);

  if (!skip_suite) {
    SuiteRun suite;
    std::ostringstream log;
    try {
      suite = run_suites(fs::path(work) / "suite", log);
    } catch (const std::exception& e) {
      std::cout << "experiment suite threw: " << e.what() << std::endl;
    }
    const auto guarded = [&](Verdict (*f)(const SuiteRun&)) {
      return [&suite, f] { return suite.ran ? f(suite) : Verdict{false, "suite did not run"}; };
    };
    report(7, "steganalyser pipeline", guarded(steganalyser_pipeline));
    report(8, "cross-domain trend", guarded(cross_domain));
    report(9, "seed-variation trends", guarded(seed_trends));
    if (suite.ran) std::cout << harness::summary_table(suite.real) << harness::summary_table(suite.seeds);
  } else {
    for (int id : {7, 8, 9}) {
      const std::string line = "SKIP  " + std::to_string(id) + "  (--skip-suite)";
      std::cout << line << std::endl;
      lines.push_back(line);
    }
  }
  report(10, "determinism", [&] { return determinism(fs::path(work) / "determinism"); });

  std::ofstream out(results, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
  std::cout << (all ? "all criteria passed" : "some criteria failed") << std::endl;
  return strict && !all ? 1 : 0;
}
