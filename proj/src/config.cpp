#include "faceanon/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace faceanon {

namespace pt = boost::property_tree;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ",";
    if constexpr (std::is_floating_point_v<T>) {
      s += fmt(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

std::string fmt_paths(const std::vector<fs::path>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i > 0 ? "," : "") + v[i].string();
  return s;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T v{};
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError("bad value for " + key + ": '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

pt::ptree to_tree(const RunConfig& c) {
  pt::ptree t;
  t.put("run.preset", c.preset);
  t.put("run.seed", std::to_string(c.seed));
  t.put("run.out", c.out.string());

  t.put("data.root", c.data.root.string());
  t.put("data.crop", c.data.crop_enabled ? "true" : "false");
  t.put("data.resolutions", fmt_list(c.data.resolution_set));
  t.put("data.image_size", std::to_string(c.data.image_size));
  t.put("data.holdout", std::to_string(c.data.holdout));

  const ModelConfig& m = c.model;
  t.put("model.image_size", std::to_string(m.image_size));
  t.put("model.seg_base_width", std::to_string(m.seg_base_width));
  t.put("model.seg_downsamplings", std::to_string(m.seg_downsamplings));
  t.put("model.seg_blocks", std::to_string(m.seg_blocks));
  t.put("model.disc_base_width", std::to_string(m.disc_base_width));
  t.put("model.disc_layers", std::to_string(m.disc_layers));
  t.put("model.syn_base_width", std::to_string(m.syn_base_width));
  t.put("model.syn_upsamplings", std::to_string(m.syn_upsamplings));
  t.put("model.syn_hidden", std::to_string(m.syn_hidden));
  t.put("model.syn_disc_base_width", std::to_string(m.syn_disc_base_width));
  t.put("model.syn_disc_layers", std::to_string(m.syn_disc_layers));
  t.put("model.psi_width_divisor", std::to_string(m.psi_width_divisor));
  t.put("model.psi_weights", m.psi_weights);

  const LossConfig& l = c.loss;
  t.put("loss.lambda_cyc", fmt(l.lambda_cyc));
  t.put("loss.lambda_s", fmt(l.lambda_s));
  t.put("loss.lambda_dist", fmt(l.lambda_dist));
  t.put("loss.margins", fmt_list(l.margins));
  t.put("loss.perceptual_layers", fmt_list(l.perceptual_layers));
  t.put("loss.components", fmt_list(l.components.labels()));
  t.put("loss.scales", std::to_string(l.scales));
  t.put("loss.log_eps", fmt(l.log_eps));
  t.put("loss.margin_percentile", fmt(l.margin_percentile));

  const TrainConfig& r = c.train;
  t.put("train.epochs", std::to_string(r.epochs));
  t.put("train.max_steps", std::to_string(r.max_steps));
  t.put("train.batch_size", std::to_string(r.batch_size));
  t.put("train.lr", fmt(r.lr));
  t.put("train.seg_beta1", fmt(r.seg_beta1));
  t.put("train.syn_beta1", fmt(r.syn_beta1));
  t.put("train.beta2", fmt(r.beta2));
  t.put("train.lr_constant_epochs", std::to_string(r.lr_constant_epochs));
  t.put("train.lr_decay_epochs", std::to_string(r.lr_decay_epochs));
  t.put("train.checkpoint_every", std::to_string(r.checkpoint_every));
  t.put("train.calibration_pairs", std::to_string(r.calibration_pairs));

  const AnonymizerConfig& a = c.anonymizer;
  t.put("anonymizer.ratio_threshold", fmt(a.ratio_threshold));
  t.put("anonymizer.max_refine_iters", std::to_string(a.max_refine_iters));
  t.put("anonymizer.refine_keep", fmt(a.refine_keep));
  t.put("anonymizer.context", fmt(a.context));
  t.put("anonymizer.detector", a.detector);

  const EvalSettings& e = c.eval;
  t.put("eval.base_width", std::to_string(e.base_width));
  t.put("eval.embedding_dim", std::to_string(e.embedding_dim));
  t.put("eval.steps", std::to_string(e.train.steps));
  t.put("eval.pairs_per_step", std::to_string(e.train.pairs_per_step));
  t.put("eval.lr", fmt(e.train.lr));
  t.put("eval.margin", fmt(e.train.margin));
  t.put("eval.criterion_root", e.criterion_root.string());
  t.put("eval.datasets", fmt_paths(e.datasets));
  t.put("eval.passthrough", e.passthrough ? "true" : "false");
  return t;
}

void from_tree(const pt::ptree& t, RunConfig& c) {
  auto str = [&](const std::string& k) { return t.get<std::string>(k); };
  auto i64 = [&](const std::string& k) { return parse_number<long>(k, str(k)); };
  auto int_ = [&](const std::string& k) { return parse_number<int>(k, str(k)); };
  auto dbl = [&](const std::string& k) { return parse_number<double>(k, str(k)); };
  auto ints = [&](const std::string& k) {
    std::vector<int> v;
    for (const auto& s : split_list(str(k))) v.push_back(parse_number<int>(k, s));
    return v;
  };

  c.preset = str("run.preset");
  c.seed = parse_number<std::uint64_t>("run.seed", str("run.seed"));
  c.out = str("run.out");

  c.data.root = str("data.root");
  c.data.crop_enabled = parse_bool("data.crop", str("data.crop"));
  c.data.resolution_set = ints("data.resolutions");
  c.data.image_size = int_("data.image_size");
  c.data.holdout = int_("data.holdout");

  ModelConfig& m = c.model;
  m.image_size = int_("model.image_size");
  m.seg_base_width = int_("model.seg_base_width");
  m.seg_downsamplings = int_("model.seg_downsamplings");
  m.seg_blocks = int_("model.seg_blocks");
  m.disc_base_width = int_("model.disc_base_width");
  m.disc_layers = int_("model.disc_layers");
  m.syn_base_width = int_("model.syn_base_width");
  m.syn_upsamplings = int_("model.syn_upsamplings");
  m.syn_hidden = int_("model.syn_hidden");
  m.syn_disc_base_width = int_("model.syn_disc_base_width");
  m.syn_disc_layers = int_("model.syn_disc_layers");
  m.psi_width_divisor = int_("model.psi_width_divisor");
  m.psi_weights = str("model.psi_weights");

  LossConfig& l = c.loss;
  l.lambda_cyc = dbl("loss.lambda_cyc");
  l.lambda_s = dbl("loss.lambda_s");
  l.lambda_dist = dbl("loss.lambda_dist");
  l.margins.clear();
  for (const auto& s : split_list(str("loss.margins"))) l.margins.push_back(parse_number<double>("loss.margins", s));
  l.perceptual_layers = ints("loss.perceptual_layers");
  try {
    l.components = ComponentSet(ints("loss.components"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("loss.components: " + std::string(e.what()));
  }
  l.scales = int_("loss.scales");
  l.log_eps = dbl("loss.log_eps");
  l.margin_percentile = dbl("loss.margin_percentile");

  TrainConfig& r = c.train;
  r.epochs = int_("train.epochs");
  r.max_steps = i64("train.max_steps");
  r.batch_size = int_("train.batch_size");
  r.lr = dbl("train.lr");
  r.seg_beta1 = dbl("train.seg_beta1");
  r.syn_beta1 = dbl("train.syn_beta1");
  r.beta2 = dbl("train.beta2");
  r.lr_constant_epochs = int_("train.lr_constant_epochs");
  r.lr_decay_epochs = int_("train.lr_decay_epochs");
  r.checkpoint_every = i64("train.checkpoint_every");
  r.calibration_pairs = int_("train.calibration_pairs");

  AnonymizerConfig& a = c.anonymizer;
  a.ratio_threshold = dbl("anonymizer.ratio_threshold");
  a.max_refine_iters = int_("anonymizer.max_refine_iters");
  a.refine_keep = dbl("anonymizer.refine_keep");
  a.context = dbl("anonymizer.context");
  a.detector = str("anonymizer.detector");

  EvalSettings& e = c.eval;
  e.base_width = int_("eval.base_width");
  e.embedding_dim = int_("eval.embedding_dim");
  e.train.steps = int_("eval.steps");
  e.train.pairs_per_step = int_("eval.pairs_per_step");
  e.train.lr = dbl("eval.lr");
  e.train.margin = dbl("eval.margin");
  e.criterion_root = str("eval.criterion_root");
  e.datasets.clear();
  for (const auto& s : split_list(str("eval.datasets"))) e.datasets.emplace_back(s);
  e.passthrough = parse_bool("eval.passthrough", str("eval.passthrough"));
}

/// Sets `key` in `tree`, rejecting keys the defaults do not know.
void set_known(pt::ptree& tree, const std::string& key, const std::string& value, const std::string& origin) {
  if (!tree.get_optional<std::string>(key)) throw ConfigError("unknown config key '" + key + "' (" + origin + ")");
  tree.put(key, value);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

RunConfig RunConfig::defaults(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == "toy") {
    c.model = ModelConfig::toy();
    c.data.image_size = c.model.image_size;
    c.data.resolution_set = {c.model.image_size};
    c.train.lr = 1e-3;
    c.eval.base_width = 16;
    c.eval.train.steps = 150;
  } else if (preset != "full") {
    throw ConfigError("unknown preset '" + preset + "' (expected full or toy)");
  }
  return c;
}

void RunConfig::finalize() {
  data.split_seed = seed;
  model.init_seed = seed;
  train.seed = seed;
  eval.train.seed = seed;
  data.refine = anonymizer.refine_options();
  if (data.image_size != model.image_size) {
    throw ConfigError("data.image_size (" + std::to_string(data.image_size) + ") must equal model.image_size (" +
                      std::to_string(model.image_size) + ")");
  }
  try {
    data.validate();
    model.validate();
    loss.validate();
    train.validate();
    anonymizer.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::uint64_t RunConfig::model_hash() const {
  const pt::ptree t = to_tree(*this);
  std::string s;
  for (const char* section : {"model", "loss"}) {
    for (const auto& [k, v] : t.get_child(section)) {
      if (std::string(section) == "loss" && k == "margins") continue;
      s += std::string(section) + "." + k + "=" + v.data() + "\n";
    }
  }
  s += "seed=" + std::to_string(seed) + "\n";
  return fnv1a(s);
}

RunConfig load_config(const fs::path& file, const Overrides& overrides) {
  pt::ptree from_file;
  if (!file.empty()) {
    if (!fs::exists(file)) throw ConfigError("config file not found: " + file.string());
    try {
      pt::read_ini(file.string(), from_file);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError("cannot parse " + file.string() + ": " + e.what());
    }
  }
  std::string preset = from_file.get<std::string>("run.preset", "full");
  for (const auto& [k, v] : overrides) {
    if (k == "run.preset") preset = trim(v);
  }
  pt::ptree tree = to_tree(RunConfig::defaults(preset));
  for (const auto& [section, body] : from_file) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside a section in " + file.string());
    for (const auto& [k, v] : body) set_known(tree, section + "." + k, v.data(), file.string());
  }
  if (const char* env = std::getenv("FACEANON_OUT"); env != nullptr && *env != '\0') tree.put("run.out", env);
  for (const auto& [k, v] : overrides) set_known(tree, k, v, "override");

  RunConfig c;
  from_tree(tree, c);
  c.finalize();
  return c;
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream o;
  pt::write_ini(o, to_tree(cfg));
  return o.str();
}

void write_snapshot(const RunConfig& cfg, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << to_ini(cfg);
  if (!out) throw ConfigError("cannot write config snapshot " + path.string());
}

}  // namespace faceanon
