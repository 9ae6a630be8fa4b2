// Runs every acceptance criterion and prints one PASS/FAIL line each.
#include "checks.hpp"

#include "faceanon/anonymizer.hpp"
#include "faceanon/checkpoint.hpp"
#include "faceanon/config.hpp"
#include "faceanon/detector.hpp"
#include "faceanon/evaluation.hpp"
#include "faceanon/toy_faces.hpp"
#include "faceanon/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <set>

using namespace faceanon;
namespace ch = faceanon::checks;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome from_checks(const std::vector<ch::Check>& checks, bool verbose) {
  if (verbose) {
    for (const auto& c : checks) std::cout << "    " << (c.pass ? "ok   " : "FAIL ") << c.name << ": " << c.detail << "\n";
  }
  return {ch::all_pass(checks), ch::summarize(checks)};
}

// State shared by the training and anonymization criteria.
struct ToyRun {
  RunConfig cfg;
  std::unique_ptr<FaceDataset> data;
  std::unique_ptr<ModelBundle<float>> models;
  std::vector<double> totals;
  double seconds = 0;
};

constexpr long kToySteps = 200;
constexpr std::size_t kWindow = 20;

std::unique_ptr<ToyRun> train_toy(const fs::path& work) {
  auto run = std::make_unique<ToyRun>();
  run->cfg = RunConfig::defaults("toy");
  run->cfg.out = work / "toy";
  run->cfg.data.root = work / "toy_raw";
  // 4 epochs of 64 samples cover the step budget at the constant rate.
  run->cfg.train.epochs = 4;
  run->cfg.train.lr_constant_epochs = 4;
  run->cfg.train.lr_decay_epochs = 0;
  run->cfg.train.max_steps = kToySteps;
  run->cfg.finalize();

  fs::remove_all(run->cfg.data.root);
  toy::write_dataset(run->cfg.data.root, toy::DatasetSpec{});
  const auto detector = make_detector(run->cfg.anonymizer.detector);
  run->data = std::make_unique<FaceDataset>(prepare_pairs(run->cfg.data, *detector));
  run->models = std::make_unique<ModelBundle<float>>(run->cfg.model, run->cfg.loss);

  const auto t0 = Clock::now();
  Trainer trainer(*run->models, *run->data, run->cfg.loss, run->cfg.train);
  trainer.run();
  run->seconds = seconds_since(t0);
  run->totals = trainer.generator_totals();
  return run;
}

Outcome toy_training(ToyRun& run) {
  const std::vector<double> ma = moving_average(run.totals, kWindow);
  if (ma.empty()) return {false, "fewer than " + std::to_string(kWindow) + " generator steps recorded"};
  const double drop = 1.0 - ma.back() / ma.front();
  const bool pass = run.data->size() == 64 && static_cast<long>(run.totals.size()) == kToySteps && drop >= 0.20 &&
                    run.seconds < 1800.0;
  return {pass, std::to_string(run.data->size()) + " images at " + std::to_string(run.cfg.model.image_size) + " px, " +
                    std::to_string(run.totals.size()) + " steps, moving average " + fmt("%.4f", ma.front()) + " -> " +
                    fmt("%.4f", ma.back()) + " (drop " + fmt("%.1f", 100 * drop) + "%, need >= 20%), " +
                    fmt("%.0f", run.seconds) + " s (limit 1800 s)"};
}

Outcome directional(ToyRun& run, const fs::path& work) {
  EmbeddingConfig ec;
  ec.image_size = run.cfg.model.image_size;
  ec.base_width = run.cfg.eval.base_width;
  ec.embedding_dim = run.cfg.eval.embedding_dim;
  ec.init_seed = run.cfg.seed;
  EmbeddingModel embedding(ec);
  const std::vector<double> losses = train_embedding(embedding, *run.data, run.cfg.eval.train);

  // Identities never seen by the generators or the embedding.
  toy::DatasetSpec held_spec;
  held_spec.identities = 12;
  held_spec.photos_per_identity = 4;
  held_spec.seed = 99;
  DatasetConfig held_cfg = run.cfg.data;
  held_cfg.root = work / "toy_heldout";
  fs::remove_all(held_cfg.root);
  toy::write_dataset(held_cfg.root, held_spec);
  const auto detector = make_detector(run.cfg.anonymizer.detector);
  const FaceDataset held(prepare_pairs(held_cfg, *detector));
  std::set<std::string> identities;
  for (std::size_t i = 0; i < held.size(); ++i) identities.insert(held[i].identity);

  run.models->set_training(false);
  const Anonymizer anonymizer(*run.models, *detector, run.cfg.anonymizer);
  const FaceAnonymizeFn anonymize = [&](const Rgb8Image& face) { return anonymizer.anonymize_crop(face); };
  const FaceAnonymizeFn passthrough = [](const Rgb8Image& face) { return face; };
  const EvalReport r = evaluate_anonymizer(embedding, anonymize, held, {{"heldout", &held}});
  const EvalReport p = evaluate_anonymizer(embedding, passthrough, held, {{"heldout", &held}});
  const double anon = r.datasets.front().mean_distance;
  const double pass_mean = p.datasets.front().mean_distance;
  const bool pass = identities.size() >= 10 && anon > r.criterion_same && pass_mean < 0.1 * r.criterion_same;
  return {pass, std::to_string(identities.size()) + " held-out identities, embedding loss " + fmt("%.3f", losses.front()) +
                    " -> " + fmt("%.3f", losses.back()) + "; criterion_same " + fmt("%.4f", r.criterion_same) +
                    ", criterion_diff " + fmt("%.4f", r.criterion_diff) + ", anonymized " + fmt("%.4f", anon) +
                    ", passthrough " + fmt("%.4f", pass_mean) + " (limit " + fmt("%.4f", 0.1 * r.criterion_same) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"faceanon acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "faceanon_acceptance";
  fs::path fixture = FACEANON_FIXTURE_DIR "/loss_oracles.json";
  std::vector<int> only;
  bool verbose = false;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--fixture", fixture, "loss oracle fixture")->check(CLI::ExistingFile);
  app.add_option("--only", only, "criteria to run (1-8)")->check(CLI::Range(1, 8));
  app.add_flag("-v,--verbose", verbose, "print every individual check");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  std::unique_ptr<ToyRun> toy_run;
  const auto toy = [&]() -> ToyRun& {
    if (!toy_run) toy_run = train_toy(work);
    return *toy_run;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness",
       [&] {
         const auto t0 = Clock::now();
         Outcome o = from_checks(ch::gradient_suite(20240601), verbose);
         const double s = seconds_since(t0);
         o.pass = o.pass && s < 120.0;
         o.detail += ", " + fmt("%.1f", s) + " s (limit 120 s)";
         return o;
       }},
      {"brute-force loss oracles", [&] { return from_checks(ch::loss_oracle_suite(fixture), verbose); }},
      {"mask algebra properties", [&] { return from_checks(ch::mask_property_suite(1000, 20240602), verbose); }},
      {"anonymization contracts", [&] { return from_checks(ch::anonymizer_contract_suite(20240603), verbose); }},
      {"toy training loss decrease", [&] { return toy_training(toy()); }},
      {"directional anonymization", [&] { return directional(toy(), work); }},
      {"determinism and checkpointing",
       [&] { return from_checks(ch::determinism_suite(work / "determinism", 20240607), verbose); }},
      {"margin monotonicity", [&] { return from_checks(ch::margin_monotonicity_suite(20240608), verbose); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "C" << id << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
