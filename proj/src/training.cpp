#include "faceanon/training.hpp"

#include "faceanon/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace faceanon {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr >= 0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  for (double b : {seg_beta1, syn_beta1, beta2}) {
    if (!(b >= 0 && b < 1)) throw std::invalid_argument("Adam betas must be in [0, 1)");
  }
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (calibration_pairs < 1) throw std::invalid_argument("calibration_pairs must be >= 1");
}

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), tag};
  return std::mt19937_64(seq);
}

Tensor<float> stack_photos(const FaceDataset& data, const std::vector<std::size_t>& idx) {
  const Shape one = data[idx.front()].photo.shape();
  Tensor<float> out(Shape{static_cast<Index>(idx.size()), one.c, one.h, one.w});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.array().segment(static_cast<Index>(k) * one.sample(), one.sample()) = data[idx[k]].photo.array();
  }
  return out;
}

void set_mode(nn::Module<float>& m, bool trainable) {
  m.set_requires_grad(trainable);
  m.set_training(trainable);
}

}  // namespace

std::vector<double> calibrate_margins(const nn::FeatureNet<float>& psi, const FaceDataset& dataset, int pairs,
                                      double percentile_rank, std::uint64_t seed) {
  if (dataset.size() < 2) throw DatasetError("margin calibration needs at least 2 samples");
  std::mt19937_64 rng = seeded(seed, 0, 0xca1u);
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;
  for (int i = 0; i < pairs; ++i) {
    const Triple t = sample_triple(rng, dataset);
    a.push_back(t.x);
    b.push_back(t.x_tilde);
  }
  std::vector<std::vector<double>> per_layer(psi.layer_count());
  constexpr std::size_t kChunk = 8;
  for (std::size_t first = 0; first < a.size(); first += kChunk) {
    const std::size_t last = std::min(a.size(), first + kChunk);
    const std::vector<std::size_t> ia(a.begin() + static_cast<std::ptrdiff_t>(first), a.begin() + static_cast<std::ptrdiff_t>(last));
    const std::vector<std::size_t> ib(b.begin() + static_cast<std::ptrdiff_t>(first), b.begin() + static_cast<std::ptrdiff_t>(last));
    const Eigen::MatrixXd d = perceptual_distances(psi, stack_photos(dataset, ia), stack_photos(dataset, ib));
    for (Index l = 0; l < d.rows(); ++l) {
      for (Index n = 0; n < d.cols(); ++n) per_layer[static_cast<std::size_t>(l)].push_back(d(l, n));
    }
  }
  std::vector<double> margins;
  for (auto& v : per_layer) margins.push_back(percentile(v, percentile_rank));
  return margins;
}

TripleBatch<float> make_triple_batch(const FaceDataset& dataset, const std::vector<std::size_t>& anchors,
                                     std::mt19937_64& rng) {
  if (anchors.empty()) throw std::invalid_argument("make_triple_batch: empty batch");
  std::vector<std::size_t> refs;
  std::vector<SemanticMask> masks;
  std::vector<SemanticMask> ref_masks;
  for (std::size_t i : anchors) {
    refs.push_back(sample_reference(rng, dataset, i));
    masks.push_back(dataset[i].mask);
    ref_masks.push_back(dataset[refs.back()].mask);
  }
  TripleBatch<float> b;
  b.x = constant(stack_photos(dataset, anchors));
  b.y = constant(one_hot_batch<float>(masks));
  b.y_masks = std::move(masks);
  b.x_tilde = constant(stack_photos(dataset, refs));
  b.x_tilde_masks = std::move(ref_masks);
  return b;
}

Trainer::Trainer(ModelBundle<float>& models, const FaceDataset& dataset, LossConfig loss, TrainConfig cfg)
    : models_(models), data_(dataset), loss_(std::move(loss)), cfg_(cfg) {
  cfg_.validate();
  if (data_.size() < 2) throw DatasetError("training needs at least 2 samples to draw reference photos");
  if (data_.image_size() != models_.config().image_size) {
    throw DatasetError("dataset images are " + std::to_string(data_.image_size()) + " px but the models expect " +
                       std::to_string(models_.config().image_size));
  }
  models_.psi().set_requires_grad(false);
  calibrated_ = loss_.margins.empty();
  if (calibrated_) {
    loss_.margins = calibrate_margins(models_.psi(), data_, cfg_.calibration_pairs, loss_.margin_percentile, cfg_.seed);
  }
  loss_.validate();

  const long n = static_cast<long>(data_.size());
  steps_per_epoch_ = (n + cfg_.batch_size - 1) / cfg_.batch_size;
  AdamOptions seg{cfg_.lr, cfg_.seg_beta1, cfg_.beta2};
  AdamOptions syn{cfg_.lr, cfg_.syn_beta1, cfg_.beta2};
  opt_gf_ = std::make_unique<Adam<float>>(named_parameters<float>({{"G", &models_.G()}, {"F", &models_.F()}}), seg);
  opt_d_ = std::make_unique<Adam<float>>(named_parameters<float>({{"DX", &models_.DX()}, {"DY", &models_.DY()}}), seg);
  opt_gs_ = std::make_unique<Adam<float>>(named_parameters<float>({{"Gs", &models_.Gs()}}), syn);
  opt_ds_ = std::make_unique<Adam<float>>(named_parameters<float>({{"Ds", &models_.Ds()}}), syn);
}

bool Trainer::finished() const {
  return epoch_ >= cfg_.epochs || (cfg_.max_steps > 0 && step_ >= cfg_.max_steps);
}

double Trainer::current_lr() const {
  const int constant_epochs = cfg_.lr_constant_epochs >= 0 ? cfg_.lr_constant_epochs : (cfg_.epochs + 1) / 2;
  const int decay_epochs = cfg_.lr_decay_epochs >= 0 ? cfg_.lr_decay_epochs : cfg_.epochs - constant_epochs;
  const long t_const = static_cast<long>(constant_epochs) * steps_per_epoch_;
  const long t_decay = static_cast<long>(decay_epochs) * steps_per_epoch_;
  if (step_ < t_const || t_decay <= 0) return cfg_.lr;
  const double f = 1.0 - static_cast<double>(step_ - t_const + 1) / static_cast<double>(t_decay + 1);
  return cfg_.lr * std::max(0.0, f);
}

std::vector<std::size_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order(data_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng = seeded(cfg_.seed, static_cast<std::uint64_t>(epoch), 0xe90u);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  return order;
}

void Trainer::record(const std::string& term, double value) {
  records_.push_back({step_, term, value});
  if (log_ != nullptr) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    *log_ << "{\"step\":" << step_ << ",\"term\":\"" << term << "\",\"value\":"
          << (std::isfinite(value) ? buf : "null") << "}\n";
  }
}

bool Trainer::apply(Adam<float>& opt, const Var<float>& loss, const char* what) {
  opt.zero_grad();
  if (!std::isfinite(loss.item())) {
    incidents_.push_back({step_, std::string("non-finite ") + what + " loss; step skipped"});
    return false;
  }
  backward(loss);
  if (!opt.grads_finite()) {
    opt.zero_grad();
    incidents_.push_back({step_, std::string("non-finite ") + what + " gradient; step skipped"});
    return false;
  }
  opt.step();
  opt.zero_grad();
  return true;
}

bool Trainer::segmentation_part(const TripleBatch<float>& batch, Tensor<float>& y_fake, Tensor<float>& x_fake) {
  auto& m = models_;
  set_mode(m.G(), true);
  set_mode(m.F(), true);
  set_mode(m.DX(), false);
  set_mode(m.DY(), false);
  set_mode(m.Gs(), false);
  set_mode(m.Ds(), false);

  const auto seg = seg_generator_loss(m.G(), m.F(), m.DY(), m.Gs(), m.syn_discriminators(), m.psi(), batch, loss_, &counters_);
  const auto inv = inverse_generator_loss(m.G(), m.F(), m.DX(), batch, loss_, &counters_);
  record("seg_adv", seg.adv.item());
  record("seg_cyc", seg.cyc.item());
  record("seg_syn_adv", seg.syn.adv.item());
  record("seg_syn_fm", seg.syn.fm.item());
  record("seg_syn_vgg", seg.syn.vgg.item());
  record("seg_syn_cyc", seg.syn.cyc.item());
  record("seg_syn", seg.syn.total.item());
  record("seg_dist", seg.dist.item());
  record("seg_total", seg.total.item());
  record("inv_adv", inv.adv.item());
  record("inv_cyc", inv.cyc.item());
  record("inv_total", inv.total.item());
  pending_gen_total_ = seg.total.item();
  y_fake = seg.y_hat.value();
  x_fake = inv.x_hat.value();
  const bool ok_g = apply(*opt_gf_, seg.total + inv.total, "segmentation generator");

  set_mode(m.G(), false);
  set_mode(m.F(), false);
  set_mode(m.DX(), true);
  set_mode(m.DY(), true);
  const float eps = static_cast<float>(loss_.log_eps);
  const Var<float> vy = adv_loss_discriminator(m.DY().forward(batch.y).probs, m.DY().forward(constant(y_fake)).probs, eps, &counters_);
  const Var<float> vx = adv_loss_discriminator(m.DX().forward(batch.x).probs, m.DX().forward(constant(x_fake)).probs, eps, &counters_);
  record("d_y", vy.item());
  record("d_x", vx.item());
  const bool ok_d = apply(*opt_d_, affine(vx + vy, -1.0f, 0.0f), "segmentation discriminator");
  set_mode(m.DX(), false);
  set_mode(m.DY(), false);
  return ok_g && ok_d;
}

bool Trainer::synthesis_part(const TripleBatch<float>& batch) {
  auto& m = models_;
  set_mode(m.G(), false);
  set_mode(m.F(), false);
  set_mode(m.Gs(), true);
  set_mode(m.Ds(), false);

  Tensor<float> y_hat;
  {
    NoGradGuard guard;
    y_hat = soft_semantics(m.G(), batch.x).value();
  }
  const auto syn = synthesis_objective(m.Gs(), m.syn_discriminators(), m.psi(), m.G(), batch, constant(y_hat), loss_, &counters_);
  record("syn_adv", syn.adv.item());
  record("syn_fm", syn.fm.item());
  record("syn_vgg", syn.vgg.item());
  record("syn_cyc", syn.cyc.item());
  record("syn_total", syn.total.item());
  record("gen_total", pending_gen_total_ + syn.total.item());
  const bool ok_g = apply(*opt_gs_, syn.total, "synthesis generator");

  set_mode(m.Gs(), false);
  set_mode(m.Ds(), true);
  const auto comp = component_adv_loss(m.syn_discriminators(), constant(syn.x_syn.value()), argmax_masks(y_hat), batch.x,
                                       batch.y_masks, loss_.components, static_cast<float>(loss_.log_eps), &counters_);
  record("ds_fake", comp.gen.item());
  record("ds_real", comp.real.item());
  record("ds_value", comp.value.item());
  const bool ok_d = apply(*opt_ds_, affine(comp.value, -1.0f, 0.0f), "synthesis discriminator");
  set_mode(m.Ds(), false);
  return ok_g && ok_d;
}

bool Trainer::step() {
  if (finished()) return false;
  const long pos = step_ - static_cast<long>(epoch_) * steps_per_epoch_;
  const std::vector<std::size_t> order = epoch_order(epoch_);
  const std::size_t first = static_cast<std::size_t>(pos) * static_cast<std::size_t>(cfg_.batch_size);
  const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(cfg_.batch_size));
  const std::vector<std::size_t> anchors(order.begin() + static_cast<std::ptrdiff_t>(first),
                                         order.begin() + static_cast<std::ptrdiff_t>(last));
  std::mt19937_64 rng = seeded(cfg_.seed, static_cast<std::uint64_t>(step_), 0x57e9u);
  const TripleBatch<float> batch = make_triple_batch(data_, anchors, rng);

  const double lr = current_lr();
  for (auto* opt : {opt_gf_.get(), opt_d_.get(), opt_gs_.get(), opt_ds_.get()}) opt->set_lr(lr);
  record("lr", lr);

  Tensor<float> y_fake;
  Tensor<float> x_fake;
  segmentation_part(batch, y_fake, x_fake);
  synthesis_part(batch);

  ++step_;
  if (pos + 1 == steps_per_epoch_) ++epoch_;
  if (callback_) callback_(*this);
  return true;
}

void Trainer::run_epoch() {
  const int e = epoch_;
  while (!finished() && epoch_ == e) step();
}

void Trainer::run(const fs::path& checkpoint_root, std::uint64_t config_hash) {
  long last_saved = -1;
  while (!finished()) {
    step();
    if (!checkpoint_root.empty() && cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) {
      save(checkpoint_root, config_hash);
      last_saved = step_;
    }
  }
  if (!checkpoint_root.empty() && last_saved != step_) save(checkpoint_root, config_hash);
}

fs::path Trainer::save(const fs::path& checkpoint_root, std::uint64_t config_hash) {
  char name[32];
  std::snprintf(name, sizeof(name), "step_%08ld", step_);
  const fs::path dir = checkpoint_root / name;
  TensorMap<float> state;
  opt_gf_->export_state("GF", state);
  opt_d_->export_state("D", state);
  opt_gs_->export_state("Gs", state);
  opt_ds_->export_state("Ds", state);
  NamedTensorRefs<float> refs;
  for (const auto& [k, t] : state) refs.emplace_back(k, &t);
  save_checkpoint(dir, models_, step_, epoch_, config_hash, &refs);
  return dir;
}

void Trainer::resume(const fs::path& checkpoint_dir, const LoadOptions& options) {
  TensorMap<float> state;
  const LoadResult r = load_checkpoint(checkpoint_dir, models_, options, &state);
  if (state.empty()) throw CheckpointError("checkpoint " + checkpoint_dir.string() + " has no optimizer state to resume from");
  try {
    opt_gf_->import_state("GF", state);
    opt_d_->import_state("D", state);
    opt_gs_->import_state("Gs", state);
    opt_ds_->import_state("Ds", state);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  step_ = r.manifest.step;
  epoch_ = r.manifest.epoch;
  // psi may have come from the checkpoint, so calibrate against it.
  if (calibrated_) {
    loss_.margins = calibrate_margins(models_.psi(), data_, cfg_.calibration_pairs, loss_.margin_percentile, cfg_.seed);
  }
}

std::vector<double> Trainer::generator_totals() const {
  std::vector<double> out;
  for (const auto& r : records_) {
    if (r.term == "gen_total") out.push_back(r.value);
  }
  return out;
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t w) {
  std::vector<double> out;
  if (w == 0 || values.size() < w) return out;
  for (std::size_t end = w; end <= values.size(); ++end) {
    double acc = 0;
    for (std::size_t i = end - w; i < end; ++i) acc += values[i];
    out.push_back(acc / static_cast<double>(w));
  }
  return out;
}

}  // namespace faceanon
