#include "faceanon/cli.hpp"

#include "faceanon/anonymizer.hpp"
#include "faceanon/checkpoint.hpp"
#include "faceanon/config.hpp"
#include "faceanon/dataset.hpp"
#include "faceanon/evaluation.hpp"
#include "faceanon/io.hpp"
#include "faceanon/toy_faces.hpp"
#include "faceanon/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>

namespace faceanon {

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> set;
  bool force = false;
  bool resume = false;
  bool passthrough = false;
  std::string input;
  std::string output;
  std::string toy_root;
  toy::DatasetSpec toy;
};

RunConfig resolve(const Options& o) {
  Overrides ov;
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) ov.emplace_back("run.seed", std::to_string(*o.seed));
  if (!o.out.empty()) ov.emplace_back("run.out", o.out);
  if (o.passthrough) ov.emplace_back("eval.passthrough", "true");
  return load_config(o.config, ov);
}

std::string supported_formats() {
  std::string s = "images:";
  for (const auto& e : supported_image_extensions()) s += " " + e;
  s += "; videos:";
  for (const auto& e : supported_video_extensions()) s += " " + e;
  return s;
}

int cmd_make_toy_data(const Options& o, std::ostream& out) {
  if (o.toy_root.empty()) throw ConfigError("make-toy-data needs an output directory");
  toy::DatasetSpec spec = o.toy;
  if (o.seed) spec.seed = *o.seed;
  if (fs::exists(o.toy_root) && !fs::is_empty(o.toy_root) && !o.force) {
    throw DatasetError(o.toy_root + " is not empty; pass --force to overwrite");
  }
  const int n = toy::write_dataset(o.toy_root, spec);
  out << "wrote " << n << " photo/mask pairs (" << spec.identities << " identities) to " << o.toy_root << '\n';
  return kExitOk;
}

int cmd_prepare(const RunConfig& cfg, const Options& o, std::ostream& out, std::ostream& err) {
  if (cfg.data.root.empty()) throw ConfigError("data.root is not set");
  const fs::path dir = cfg.prepared_dir();
  if (fs::exists(dir / "manifest.json")) {
    if (!o.force) throw DatasetError(dir.string() + " already holds a prepared dataset; pass --force to overwrite");
    fs::remove_all(dir);
  }
  const auto detector = make_detector(cfg.anonymizer.detector);
  PrepareStats stats;
  const std::vector<FaceSample> samples = prepare_pairs(cfg.data, *detector, &stats);
  for (const auto& w : stats.warnings) err << "warning: " << w << '\n';
  std::vector<std::string> stems;
  for (const auto& s : samples) stems.push_back(s.stem);
  stems.erase(std::unique(stems.begin(), stems.end()), stems.end());
  const StemSplit split = split_stems(stems, cfg.data.holdout, cfg.data.split_seed);
  const PreparedManifest m = save_prepared(dir, samples, split, cfg.data, stats);
  write_snapshot(cfg, dir / "config.ini");
  out << "stems: " << stats.stems << '\n'
      << "usable: " << stats.usable << '\n'
      << "skipped: " << stats.missing_mask + stats.missing_photo + stats.unreadable << '\n'
      << "no_face: " << stats.no_face << '\n'
      << "pairs_train: " << m.train << '\n'
      << "pairs_test: " << m.test << '\n'
      << "output: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const Options& o, std::ostream& out) {
  const FaceDataset data = load_prepared(cfg.prepared_dir(), "train");
  ModelBundle<float> models(cfg.model, cfg.loss);
  const fs::path root = cfg.checkpoint_root();
  const auto latest = latest_checkpoint(root);
  if (latest && !o.resume) {
    if (!o.force) throw CheckpointError(root.string() + " already has checkpoints; pass --resume to continue or --force to restart");
    fs::remove_all(root);
  }
  if (!latest && o.resume) throw CheckpointError("--resume: no checkpoint under " + root.string());
  Trainer trainer(models, data, cfg.loss, cfg.train);
  const std::uint64_t hash = cfg.model_hash();
  if (o.resume) {
    LoadOptions lo;
    lo.expected_config_hash = hash;
    trainer.resume(*latest, lo);
    out << "resumed from " << latest->string() << " at step " << trainer.global_step() << '\n';
  }
  write_snapshot(cfg, cfg.out / "config.ini");
  std::ofstream log(cfg.out / "train_log.jsonl", o.resume ? std::ios::app : std::ios::trunc);
  trainer.set_log(&log);
  trainer.run(root, hash);
  out << "steps: " << trainer.global_step() << '\n'
      << "epochs: " << trainer.epoch() << '\n'
      << "incidents: " << trainer.incidents().size() << '\n'
      << "checkpoint: " << latest_checkpoint(root)->string() << '\n';
  return kExitOk;
}

/// Generators of the latest checkpoint under the run directory.
std::unique_ptr<ModelBundle<float>> load_generators(const RunConfig& cfg, std::ostream& err) {
  const auto latest = latest_checkpoint(cfg.checkpoint_root());
  if (!latest) throw CheckpointError("no checkpoint under " + cfg.checkpoint_root().string() + "; run train first");
  auto models = std::make_unique<ModelBundle<float>>(cfg.model, cfg.loss);
  LoadOptions lo;
  lo.expected_config_hash = cfg.model_hash();
  lo.inference_only = true;
  const LoadResult r = load_checkpoint(*latest, *models, lo);
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  return models;
}

int cmd_anonymize(const RunConfig& cfg, const Options& o, std::ostream& out, std::ostream& err) {
  const fs::path in = o.input;
  const fs::path dst = o.output;
  const bool dir = fs::is_directory(in);
  if (!dir && !is_image_path(in) && !is_video_path(in)) {
    throw MediaError("unsupported media type '" + in.extension().string() + "' (supported " + supported_formats() + ")");
  }
  if (!fs::exists(in)) throw MediaError("input not found: " + in.string());
  if (!dir && !is_video_path(in) && !is_image_path(dst)) {
    throw MediaError("output must be an image file (supported " + supported_formats() + ")");
  }
  if (!dir && is_video_path(in) && !is_video_path(dst)) {
    throw MediaError("output must be a video file (supported " + supported_formats() + ")");
  }
  const auto models = load_generators(cfg, err);
  const auto detector = make_detector(cfg.anonymizer.detector);
  const Anonymizer anonymizer(*models, *detector, cfg.anonymizer);

  if (is_video_path(in)) {
    auto source = open_video(in);
    const SinkFactory sink = [&](Index w, Index h, double fps) { return create_video(dst, fps, w, h); };
    const VideoSummary s = anonymize_stream(*source, sink, anonymizer);
    const std::string text = s.to_text();
    std::ofstream(dst.string() + ".summary.txt") << text;
    out << text;
    return kExitOk;
  }

  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (dir) {
    fs::create_directories(dst);
    for (const auto& p : list_images(in)) jobs.emplace_back(p, dst / p.filename());
    if (jobs.empty()) throw MediaError("no images in " + in.string() + " (supported " + supported_formats() + ")");
  } else {
    jobs.emplace_back(in, dst);
  }
  std::size_t faces = 0;
  std::size_t anonymized = 0;
  for (const auto& [src, target] : jobs) {
    FrameReport report;
    const Rgb8Image result = anonymizer.anonymize_frame(read_image(src), &report);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    write_image(target, result);
    faces += report.faces.size();
    anonymized += report.anonymized();
  }
  out << "images: " << jobs.size() << '\n' << "faces: " << faces << '\n' << "faces_anonymized: " << anonymized << '\n';
  return kExitOk;
}

FaceDataset raw_dataset(const RunConfig& cfg, const fs::path& root) {
  DatasetConfig dc = cfg.data;
  dc.root = root;
  dc.resolution_set = {cfg.data.image_size};
  const auto detector = make_detector(cfg.anonymizer.detector);
  return FaceDataset(prepare_pairs(dc, *detector));
}

int cmd_train_embedding(const RunConfig& cfg, std::ostream& out) {
  const FaceDataset data = load_prepared(cfg.prepared_dir(), "train");
  EmbeddingModel model(EmbeddingConfig{cfg.data.image_size, cfg.eval.base_width, cfg.eval.embedding_dim, cfg.seed});
  const std::vector<double> losses = train_embedding(model, data, cfg.eval.train);
  model.save(cfg.embedding_dir());
  out << "steps: " << losses.size() << '\n';
  if (!losses.empty()) out << "loss_first: " << losses.front() << '\n' << "loss_last: " << losses.back() << '\n';
  out << "output: " << cfg.embedding_dir().string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (!fs::exists(cfg.embedding_dir() / "embedding.json")) {
    throw EvaluationError("no embedding checkpoint in " + cfg.embedding_dir().string() + "; run train-embedding first");
  }
  const EmbeddingModel model = EmbeddingModel::load(cfg.embedding_dir());
  if (model.config().image_size != cfg.data.image_size) {
    throw EvaluationError("embedding expects " + std::to_string(model.config().image_size) + " px faces, data is " +
                          std::to_string(cfg.data.image_size) + " px");
  }
  std::unique_ptr<ModelBundle<float>> models;
  std::unique_ptr<FaceDetector> detector;
  std::unique_ptr<Anonymizer> anonymizer;
  FaceAnonymizeFn fn = [](const Rgb8Image& x) { return x; };
  if (!cfg.eval.passthrough) {
    models = load_generators(cfg, err);
    detector = make_detector(cfg.anonymizer.detector);
    anonymizer = std::make_unique<Anonymizer>(*models, *detector, cfg.anonymizer);
    fn = [&](const Rgb8Image& x) { return anonymizer->anonymize_crop(x); };
  }

  const FaceDataset criterion = cfg.eval.criterion_root.empty() ? load_prepared(cfg.prepared_dir(), "test")
                                                                : raw_dataset(cfg, cfg.eval.criterion_root);
  std::vector<FaceDataset> owned;
  std::vector<NamedDataset> named;
  if (cfg.eval.datasets.empty()) {
    owned.push_back(load_prepared(cfg.prepared_dir(), "test"));
  } else {
    for (const auto& root : cfg.eval.datasets) owned.push_back(raw_dataset(cfg, root));
  }
  for (std::size_t i = 0; i < owned.size(); ++i) {
    const std::string name = cfg.eval.datasets.empty() ? "test" : cfg.eval.datasets[i].filename().string();
    named.push_back({name.empty() ? "dataset" + std::to_string(i) : name, &owned[i]});
  }
  const EvalReport report = evaluate_anonymizer(model, fn, criterion, named);
  const fs::path dir = cfg.out / "eval";
  fs::create_directories(dir);
  const std::string stem = cfg.eval.passthrough ? "report_passthrough" : "report";
  std::ofstream(dir / (stem + ".txt")) << report.to_text();
  std::ofstream(dir / (stem + ".csv")) << report.to_csv();
  out << report.to_text();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face anonymization: segmentation-to-synthesis training, inference and evaluation", "faceanon"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Seed for every random stream");
  app.add_option("--out", o.out, "Run directory (overrides FACEANON_OUT)");
  app.add_option("--set", o.set, "Override a config key: section.key=value")->allow_extra_args(false);

  auto* toy = app.add_subcommand("make-toy-data", "Render a synthetic face dataset with masks");
  toy->add_option("root", o.toy_root, "Output directory")->required();
  toy->add_option("--identities", o.toy.identities, "Number of identities")->capture_default_str();
  toy->add_option("--photos", o.toy.photos_per_identity, "Photos per identity")->capture_default_str();
  toy->add_option("--side", o.toy.side, "Photo side in pixels")->capture_default_str();
  toy->add_flag("--force", o.force, "Write into a non-empty directory");

  auto* prep = app.add_subcommand("prepare-data", "Crop, reduce masks and split the raw dataset");
  prep->add_flag("--force", o.force, "Overwrite an existing prepared dataset");

  auto* train = app.add_subcommand("train", "Train the segmentation and synthesis generators");
  train->add_flag("--resume", o.resume, "Continue from the latest checkpoint");
  train->add_flag("--force", o.force, "Discard existing checkpoints");

  auto* anon = app.add_subcommand("anonymize", "Anonymize an image, a directory of images or a video");
  anon->add_option("input", o.input, "Input image, directory or video")->required();
  anon->add_option("output", o.output, "Output path of the same kind")->required();

  auto* emb = app.add_subcommand("train-embedding", "Train the identity embedding used by eval");
  auto* eval = app.add_subcommand("eval", "Embedding distances between original and anonymized faces");
  eval->add_flag("--passthrough", o.passthrough, "Evaluate the identity mapping instead of the anonymizer");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (toy->parsed()) return cmd_make_toy_data(o, out);
    const RunConfig cfg = resolve(o);
    if (prep->parsed()) return cmd_prepare(cfg, o, out, err);
    if (train->parsed()) return cmd_train(cfg, o, out);
    if (anon->parsed()) return cmd_anonymize(cfg, o, out, err);
    if (emb->parsed()) return cmd_train_embedding(cfg, out);
    if (eval->parsed()) return cmd_eval(cfg, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << '\n';
    return kExitDataset;
  } catch (const CheckpointError& e) {
    err << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const EvaluationError& e) {
    err << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const MediaError& e) {
    err << "media error: " << e.what() << '\n';
    return kExitMedia;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitGeneric;
  }
  return kExitGeneric;
}

}  // namespace faceanon
