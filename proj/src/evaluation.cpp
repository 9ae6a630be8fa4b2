#include "faceanon/evaluation.hpp"

#include "faceanon/checkpoint.hpp"
#include "faceanon/optim.hpp"
#include "faceanon/stats.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace faceanon {

using json = nlohmann::json;

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), tag};
  return std::mt19937_64(seq);
}

Tensor<float> stack(const std::vector<const Tensor<float>*>& photos) {
  const Shape one = photos.front()->shape();
  Tensor<float> out(Shape{static_cast<Index>(photos.size()), one.c, one.h, one.w});
  for (std::size_t k = 0; k < photos.size(); ++k) {
    out.array().segment(static_cast<Index>(k) * one.sample(), one.sample()) = photos[k]->array();
  }
  return out;
}

}  // namespace

EmbeddingModel::EmbeddingModel(const EmbeddingConfig& cfg) : cfg_(cfg) {
  if (cfg.image_size < 32 || cfg.base_width < 2 || cfg.embedding_dim < 1) {
    throw std::invalid_argument("invalid embedding configuration");
  }
  std::mt19937_64 rng = seeded(cfg.init_seed, 0, 0xe3bu);
  net_ = std::make_unique<nn::EmbeddingNet<float>>(nn::EmbeddingNetConfig{cfg.base_width, cfg.embedding_dim}, rng);
}

nn::EmbeddingNet<float>& EmbeddingModel::net() {
  if (!net_) throw EvaluationError("embedding model is not loaded");
  return *net_;
}

Eigen::MatrixXd EmbeddingModel::embed(const Tensor<float>& photos) const {
  if (!net_) throw EvaluationError("embedding model is not loaded");
  const Shape& s = photos.shape();
  if (s.c != 3 || s.h != cfg_.image_size || s.w != cfg_.image_size) {
    throw ShapeError("embed: expected (N,3," + std::to_string(cfg_.image_size) + "," + std::to_string(cfg_.image_size) +
                     ") photos, got " + to_string(s));
  }
  NoGradGuard guard;
  Eigen::MatrixXd out(s.n, cfg_.embedding_dim);
  // One sample at a time so an embedding never depends on its batch mates.
  for (Index n = 0; n < s.n; ++n) {
    const Tensor<float> e = net_->forward(constant(photos.slice(n, 1))).value();
    for (Index k = 0; k < cfg_.embedding_dim; ++k) out(n, k) = static_cast<double>(e.data()[k]);
  }
  return out;
}

void EmbeddingModel::save(const fs::path& dir) const {
  if (!net_) throw EvaluationError("embedding model is not loaded");
  fs::create_directories(dir);
  write_tensor_file<float>(dir / "embedding.bin", module_state(*net_));
  json j = {{"image_size", cfg_.image_size},
            {"base_width", cfg_.base_width},
            {"embedding_dim", cfg_.embedding_dim},
            {"init_seed", cfg_.init_seed}};
  std::ofstream out(dir / "embedding.json");
  out << j.dump(2) << '\n';
  if (!out) throw EvaluationError("cannot write " + (dir / "embedding.json").string());
}

EmbeddingModel EmbeddingModel::load(const fs::path& dir) {
  std::ifstream in(dir / "embedding.json");
  if (!in) throw EvaluationError("embedding checkpoint not found in " + dir.string() + " (run train-embedding first)");
  EmbeddingConfig cfg;
  try {
    const json j = json::parse(in);
    cfg.image_size = j.at("image_size").get<int>();
    cfg.base_width = j.at("base_width").get<int>();
    cfg.embedding_dim = j.at("embedding_dim").get<int>();
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw EvaluationError("malformed embedding.json: " + std::string(e.what()));
  }
  EmbeddingModel m(cfg);
  try {
    load_module_state(*m.net_, read_tensor_file<float>(dir / "embedding.bin"), "embedding");
  } catch (const CheckpointError& e) {
    throw EvaluationError(e.what());
  }
  return m;
}

double pair_distance(const EmbeddingModel& model, const Tensor<float>& a, const Tensor<float>& b) {
  const Eigen::MatrixXd ea = model.embed(a);
  const Eigen::MatrixXd eb = model.embed(b);
  if (ea.rows() != 1 || eb.rows() != 1) throw ShapeError("pair_distance expects single photos");
  return (ea.row(0) - eb.row(0)).norm();
}

std::vector<double> train_embedding(EmbeddingModel& model, const FaceDataset& dataset, const EmbeddingTrainConfig& cfg) {
  if (dataset.identity_count() < 2) throw DatasetError("embedding training needs at least 2 identities");
  if (cfg.pairs_per_step < 2 || cfg.steps < 0) throw std::invalid_argument("invalid embedding training configuration");
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_identity[dataset.identity_index(i)].push_back(i);

  nn::EmbeddingNet<float>& net = model.net();
  net.set_requires_grad(true);
  Adam<float> opt(named_parameters<float>({{"E", &net}}), AdamOptions{cfg.lr, 0.9, 0.999});
  std::vector<double> losses;
  for (int step = 0; step < cfg.steps; ++step) {
    std::mt19937_64 rng = seeded(cfg.seed, static_cast<std::uint64_t>(step), 0x51au);
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    std::vector<const Tensor<float>*> a;
    std::vector<const Tensor<float>*> b;
    std::vector<bool> same;
    for (int k = 0; k < cfg.pairs_per_step; ++k) {
      const std::size_t i = pick(rng);
      const auto& group = by_identity.at(dataset.identity_index(i));
      std::size_t j;
      bool is_same = k % 2 == 0 && group.size() > 1;
      if (is_same) {
        std::uniform_int_distribution<std::size_t> g(0, group.size() - 2);
        j = group[g(rng)];
        if (j == i) j = group.back();
      } else {
        j = sample_reference(rng, dataset, i);
      }
      a.push_back(&dataset[i].photo);
      b.push_back(&dataset[j].photo);
      same.push_back(is_same);
    }
    const Var<float> ea = net.forward(constant(stack(a)));
    const Var<float> eb = net.forward(constant(stack(b)));
    const Var<float> loss = contrastive_loss(ea, eb, same, static_cast<float>(cfg.margin));
    losses.push_back(loss.item());
    opt.zero_grad();
    backward(loss);
    opt.step();
    opt.zero_grad();
  }
  net.set_requires_grad(false);
  return losses;
}

std::string EvalReport::to_text() const {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4);
  o << "criterion_same: " << criterion_same << " (" << same_pairs << " pairs)\n";
  o << "criterion_diff: " << criterion_diff << " (" << diff_pairs << " pairs)\n";
  o << "criterion_gap: " << criterion_gap() << '\n';
  for (const auto& d : datasets) {
    o << "dataset " << d.name << ": n=" << d.n << " mean_distance=" << d.mean_distance
      << (d.mean_distance > criterion_same ? " (above criterion_same)" : " (not above criterion_same)") << '\n';
  }
  return o.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream o;
  o << std::setprecision(10);
  o << "dataset,n,mean_distance\n";
  for (const auto& d : datasets) o << d.name << ',' << d.n << ',' << d.mean_distance << '\n';
  return o.str();
}

EvalReport evaluate_anonymizer(const EmbeddingModel& model, const FaceAnonymizeFn& anonymize,
                               const FaceDataset& criterion_set, const std::vector<NamedDataset>& datasets) {
  if (!model.loaded()) throw EvaluationError("embedding model is not loaded");
  if (criterion_set.size() < 2) throw EvaluationError("criterion set needs at least 2 samples");
  if (datasets.empty()) throw EvaluationError("no datasets to evaluate");
  EvalReport r;

  const Eigen::MatrixXd e = [&] {
    std::vector<const Tensor<float>*> all;
    for (std::size_t i = 0; i < criterion_set.size(); ++i) all.push_back(&criterion_set[i].photo);
    return model.embed(stack(all));
  }();
  std::vector<double> same;
  std::vector<double> diff;
  for (Index i = 0; i < e.rows(); ++i) {
    for (Index j = i + 1; j < e.rows(); ++j) {
      const double d = (e.row(i) - e.row(j)).norm();
      const bool s = criterion_set.identity_index(static_cast<std::size_t>(i)) ==
                     criterion_set.identity_index(static_cast<std::size_t>(j));
      (s ? same : diff).push_back(d);
    }
  }
  if (same.empty() || diff.empty()) throw EvaluationError("criterion set needs same- and different-identity pairs");
  r.criterion_same = sorted_mean(same);
  r.criterion_diff = sorted_mean(diff);
  r.same_pairs = same.size();
  r.diff_pairs = diff.size();

  for (const auto& nd : datasets) {
    if (nd.data == nullptr || nd.data->empty()) throw EvaluationError("dataset '" + nd.name + "' is empty");
    std::vector<double> dist;
    for (std::size_t i = 0; i < nd.data->size(); ++i) {
      const Rgb8Image original = to_rgb8((*nd.data)[i].photo);
      const Rgb8Image anonymized = anonymize(original);
      if (anonymized.height != original.height || anonymized.width != original.width) {
        throw EvaluationError("anonymizer changed the face size");
      }
      dist.push_back(pair_distance(model, to_tensor<float>(original), to_tensor<float>(anonymized)));
    }
    r.datasets.push_back({nd.name, dist.size(), sorted_mean(dist)});
  }
  return r;
}

}  // namespace faceanon
