#include "checks.hpp"

#include "faceanon/anonymizer.hpp"
#include "faceanon/checkpoint.hpp"
#include "faceanon/losses.hpp"
#include "faceanon/mask_algebra.hpp"
#include "faceanon/toy_faces.hpp"
#include "faceanon/training.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace faceanon::checks {

using json = nlohmann::json;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Tensor<double> random_image(std::mt19937_64& rng, Index n, Index h, Index w, double lo = 0.05, double hi = 0.95) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(Shape{n, 3, h, w});
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

SemanticMask random_mask(std::mt19937_64& rng, Index h, Index w, const std::vector<int>& labels) {
  std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
  LabelGrid g(h, w);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = static_cast<std::uint8_t>(labels[pick(rng)]);
  return SemanticMask(std::move(g));
}

template <typename Scalar>
bool bitwise_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(Scalar)) == 0;
}

Check grad_check(const std::string& name, const GradResult& r, double tol) {
  Check c;
  c.name = name;
  c.pass = r.rel_error < tol && r.analytic_norm > 0;
  c.detail = "rel_error=" + num(r.rel_error) + " |grad|=" + num(r.analytic_norm);
  return c;
}

Check value_check(const std::string& name, double got, double expected, double tol) {
  Check c;
  c.name = name;
  c.pass = std::abs(got - expected) <= tol;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "got=%.17g expected=%.17g", got, expected);
  c.detail = buf;
  return c;
}

Check count_check(const std::string& name, std::size_t failures, std::size_t total) {
  return {name, failures == 0, std::to_string(failures) + " failures in " + std::to_string(total)};
}

// JSON fixture readers: images are [C][H][W], grids [H][W].
Tensor<double> read_image(const json& j) {
  const Index c = static_cast<Index>(j.size());
  const Index h = static_cast<Index>(j[0].size());
  const Index w = static_cast<Index>(j[0][0].size());
  Tensor<double> t(Shape{1, c, h, w});
  for (Index k = 0; k < c; ++k)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) t(0, k, y, x) = j[k][y][x].get<double>();
  return t;
}

Tensor<double> read_grid(const json& j) {
  json wrapped = json::array({j});
  return read_image(wrapped);
}

SemanticMask read_mask(const json& j) {
  LabelGrid g(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
  for (Index y = 0; y < g.rows(); ++y)
    for (Index x = 0; x < g.cols(); ++x) g(y, x) = static_cast<std::uint8_t>(j[y][x].get<int>());
  return SemanticMask(std::move(g));
}

Tensor<double> read_conv_weight(const json& j) {
  const Index o = static_cast<Index>(j.size());
  const Index c = static_cast<Index>(j[0].size());
  const Index k = static_cast<Index>(j[0][0].size());
  Tensor<double> t(Shape{o, c, k, k});
  for (Index a = 0; a < o; ++a)
    for (Index b = 0; b < c; ++b)
      for (Index y = 0; y < k; ++y)
        for (Index x = 0; x < k; ++x) t(a, b, y, x) = j[a][b][y][x].get<double>();
  return t;
}

FixtureDiscriminator<double> read_disc(const json& j) {
  return FixtureDiscriminator<double>(j["w"].get<std::vector<double>>(), j["b"].get<double>(), j["v"].get<double>(),
                                      j["c"].get<double>());
}


}  // namespace

std::vector<DetectionBox> MarkerDetector::detect(const Rgb8Image& image) const {
  Index x0 = image.width, y0 = image.height, x1 = 0, y1 = 0;
  for (Index y = 0; y < image.height; ++y) {
    for (Index x = 0; x < image.width; ++x) {
      if (image.at(y, x, 0) == 255 && image.at(y, x, 1) == 0 && image.at(y, x, 2) == 255) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x + 1);
        y1 = std::max(y1, y + 1);
      }
    }
  }
  if (x1 <= x0) return {};
  const Box b{x0, y0, x1, y1};
  return {{b, 1.0, static_cast<double>(b.area()) / static_cast<double>(image.width * image.height)}};
}

void paint_marker(Rgb8Image& image, const Box& box) {
  for (Index y = box.y0; y < box.y1; ++y) {
    for (Index x = box.x0; x < box.x1; ++x) {
      image.at(y, x, 0) = 255;
      image.at(y, x, 1) = 0;
      image.at(y, x, 2) = 255;
    }
  }
}

bool all_pass(const std::vector<Check>& checks) {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return !checks.empty();
}

std::string summarize(const std::vector<Check>& checks) {
  std::size_t ok = 0;
  std::string failed;
  for (const auto& c : checks) {
    if (c.pass) {
      ++ok;
    } else {
      failed += (failed.empty() ? "" : "; ") + c.name + " (" + c.detail + ")";
    }
  }
  std::string s = std::to_string(ok) + "/" + std::to_string(checks.size()) + " checks";
  if (!failed.empty()) s += "; failed: " + failed;
  return s;
}

template <typename Scalar>
FixtureDiscriminator<Scalar>::FixtureDiscriminator(const std::vector<double>& w, double b, double v, double c)
    : w_(Shape{1, static_cast<Index>(w.size()), 1, 1}), b_(Shape{1, 1, 1, 1}, static_cast<Scalar>(b)),
      v_(static_cast<Scalar>(v)), c_(static_cast<Scalar>(c)) {
  for (std::size_t i = 0; i < w.size(); ++i) w_.data()[i] = static_cast<Scalar>(w[i]);
}

template <typename Scalar>
nn::DiscOutput<Scalar> FixtureDiscriminator<Scalar>::forward(const Var<Scalar>& x) {
  nn::DiscOutput<Scalar> out;
  Var<Scalar> f = leaky_relu(conv2d(x, constant(w_), constant(b_), 1, 0), Scalar(0.2));
  out.features.push_back(f);
  out.probs = sigmoid(affine(f, v_, c_));
  return out;
}

template class FixtureDiscriminator<double>;

FaceDataset portrait_dataset(int identities, int photos, Index side, std::uint64_t seed) {
  std::vector<FaceSample> samples;
  std::mt19937_64 rng(seed);
  for (int id = 0; id < identities; ++id) {
    const toy::IdentityParams ident = toy::make_identity(seed, id);
    for (int k = 0; k < photos; ++k) {
      const toy::Scene scene = toy::render_portrait(ident, side, rng);
      FaceSample s;
      s.photo = to_tensor<float>(scene.photo);
      s.mask = reduce_classes(scene.labels);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "id%03d_%02d", id, k);
      s.stem = stem;
      s.identity = s.stem.substr(0, 5);
      s.source_resolution = static_cast<int>(side);
      samples.push_back(std::move(s));
    }
  }
  return FaceDataset(std::move(samples));
}

ModelConfig tiny_models() {
  ModelConfig c = ModelConfig::toy();
  c.image_size = 32;
  c.syn_upsamplings = 3;
  c.seg_blocks = 2;
  return c;
}

std::vector<Check> gradient_suite(std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  std::vector<Check> out;
  nn::PatchDiscriminatorConfig dc;
  dc.base_width = 4;
  dc.layers = 2;
  dc.padding = 2;
  dc.spectral = true;
  nn::PatchDiscriminator<double> d1(dc, rng);
  nn::PatchDiscriminator<double> d2(dc, rng);
  d1.set_training(false);
  d2.set_training(false);
  const DiscList<double> discs{&d1, &d2};
  const ComponentSet components;

  const Tensor<double> a = random_image(rng, 1, 8, 8);
  const Tensor<double> b = random_image(rng, 1, 8, 8);
  const std::vector<int> present{0, 1, 1, 2, 3, 6, 8};
  const std::vector<SemanticMask> ma{random_mask(rng, 8, 8, present)};
  const std::vector<SemanticMask> mb{random_mask(rng, 8, 8, present)};

  out.push_back(grad_check("adv_loss_generator wrt fake image",
                           check_gradient([&](const Var<double>& x) { return adv_loss_generator(d1.forward(x).probs); }, a),
                           tol));
  out.push_back(grad_check("adv_loss_discriminator wrt real image",
                           check_gradient(
                               [&](const Var<double>& x) {
                                 return adv_loss_discriminator(d1.forward(x).probs, d1.forward(constant(b)).probs);
                               },
                               a),
                           tol));
  out.push_back(grad_check("adv_loss_discriminator wrt fake image",
                           check_gradient(
                               [&](const Var<double>& x) {
                                 return adv_loss_discriminator(d1.forward(constant(a)).probs, d1.forward(x).probs);
                               },
                               b),
                           tol));
  out.push_back(grad_check("cycle_loss wrt reconstruction",
                           check_gradient([&](const Var<double>& x) { return cycle_loss(x, constant(b)); }, a), tol));
  out.push_back(grad_check("cycle_loss wrt original",
                           check_gradient([&](const Var<double>& x) { return cycle_loss(constant(a), x); }, b), tol));

  nn::FeatureNetConfig pc;
  pc.layers = {4, 4};
  pc.capture = {1, 2};
  nn::FeatureNet<double> psi(pc, rng);
  const Eigen::MatrixXd dist = perceptual_distances(psi, a, b);
  const std::vector<double> margins{0.5 * dist(0, 0), 0.5 * dist(1, 0)};
  out.push_back(grad_check(
      "vgg_margin_loss (2-layer psi) wrt synthesized image",
      check_gradient([&](const Var<double>& x) { return vgg_margin_loss(psi, constant(a), x, margins); }, b), tol));
  out.push_back(grad_check(
      "vgg_margin_loss (2-layer psi) wrt photo",
      check_gradient([&](const Var<double>& x) { return vgg_margin_loss(psi, x, constant(b), margins); }, a), tol));

  out.push_back(grad_check("component_adv_loss wrt generated image",
                           check_gradient(
                               [&](const Var<double>& x) {
                                 return component_adv_loss(discs, x, ma, constant(b), mb, components).value;
                               },
                               a),
                           tol));
  out.push_back(grad_check("component_adv_loss wrt real image",
                           check_gradient(
                               [&](const Var<double>& x) {
                                 return component_adv_loss(discs, constant(a), ma, x, mb, components).value;
                               },
                               b),
                           tol));
  out.push_back(grad_check(
      "fm_loss_cross_identity wrt generated image",
      check_gradient([&](const Var<double>& x) { return fm_loss_cross_identity(discs, x, ma, constant(b), mb, components); },
                     a),
      tol));
  out.push_back(grad_check(
      "fm_loss_cross_identity wrt reference image",
      check_gradient([&](const Var<double>& x) { return fm_loss_cross_identity(discs, constant(a), ma, x, mb, components); },
                     b),
      tol));
  return out;
}

std::vector<Check> loss_oracle_suite(const fs::path& fixture, double tol) {
  std::ifstream in(fixture);
  if (!in) return {{"fixture " + fixture.string(), false, "cannot open"}};
  const json root = json::parse(in);
  std::vector<Check> out;
  for (const auto& c : root.at("cases")) {
    const std::string name = c.at("name").get<std::string>();
    const double expected = c.at("expected").get<double>();
    NoGradGuard guard;
    if (name.rfind("adv_generator", 0) == 0) {
      out.push_back(value_check(name, adv_loss_generator(constant(read_grid(c["fake"]))).item(), expected, tol));
    } else if (name.rfind("adv_discriminator", 0) == 0) {
      const double v = adv_loss_discriminator(constant(read_grid(c["real"])), constant(read_grid(c["fake"]))).item();
      out.push_back(value_check(name, v, expected, tol));
    } else if (name.rfind("cycle", 0) == 0) {
      out.push_back(value_check(name, cycle_loss(constant(read_image(c["a"])), constant(read_image(c["b"]))).item(),
                                expected, tol));
    } else if (name.rfind("vgg_margin_features", 0) == 0) {
      std::vector<Var<double>> fx;
      std::vector<Var<double>> fs;
      for (const auto& f : c["fx"]) fx.push_back(constant(read_image(f)));
      for (const auto& f : c["fs"]) fs.push_back(constant(read_image(f)));
      const double v = vgg_margin_from_features(fx, fs, c["margins"].get<std::vector<double>>()).item();
      out.push_back(value_check(name, v, expected, tol));
    } else if (name.rfind("vgg_margin_toy_psi", 0) == 0) {
      nn::FeatureNetConfig pc;
      pc.layers = {2, 2};
      pc.capture = {1, 2};
      pc.imagenet_normalize = false;
      std::mt19937_64 rng(0);
      nn::FeatureNet<double> psi(pc, rng);
      for (auto& [pname, p] : psi.parameters()) {
        const json& w = c["psi"].at(pname);
        if (pname.find("bias") != std::string::npos) {
          Tensor<double> t(Shape{1, static_cast<Index>(w.size()), 1, 1});
          for (std::size_t i = 0; i < w.size(); ++i) t.data()[i] = w[i].get<double>();
          p->mutable_value() = t;
        } else {
          p->mutable_value() = read_conv_weight(w);
        }
      }
      const double v = vgg_margin_loss(psi, constant(read_image(c["x"])), constant(read_image(c["x_syn"])),
                                       c["margins"].get<std::vector<double>>())
                           .item();
      out.push_back(value_check(name, v, expected, tol));
    } else if (name.rfind("component_adv", 0) == 0) {
      auto d = read_disc(c["disc"]);
      const ComponentAdvTerms<double> t =
          component_adv_loss<double>({&d}, constant(read_image(c["fake"])), {read_mask(c["fake_mask"])},
                                     constant(read_image(c["real"])), {read_mask(c["real_mask"])},
                                     ComponentSet(c["labels"].get<std::vector<int>>()));
      out.push_back(value_check(name + " (generator term)", t.gen.item(), c["expected_gen"].get<double>(), tol));
      out.push_back(value_check(name + " (real term)", t.real.item(), c["expected_real"].get<double>(), tol));
      out.push_back(value_check(name, t.value.item(), expected, tol));
    } else if (name.rfind("fm_cross_identity", 0) == 0) {
      auto d = read_disc(c["disc"]);
      const double v = fm_loss_cross_identity<double>({&d}, constant(read_image(c["fake"])), {read_mask(c["fake_mask"])},
                                                      constant(read_image(c["tilde"])), {read_mask(c["tilde_mask"])},
                                                      ComponentSet(c["labels"].get<std::vector<int>>()))
                           .item();
      out.push_back(value_check(name, v, expected, tol));
    } else {
      out.push_back({name, false, "unknown fixture case"});
    }
  }
  return out;
}

std::vector<Check> mask_property_suite(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(1, 16);
  std::uniform_int_distribution<int> mode(0, 3);
  std::vector<int> all(kNumClasses);
  for (int i = 0; i < kNumClasses; ++i) all[static_cast<std::size_t>(i)] = i;
  std::vector<int> facial(all.begin() + 1, all.end());
  std::size_t complement = 0;
  std::size_t reconstruction = 0;
  std::size_t background = 0;
  std::size_t idempotent = 0;
  for (int k = 0; k < count; ++k) {
    const Index h = side(rng);
    const Index w = side(rng);
    SemanticMask m;
    switch (mode(rng)) {
      case 0: m = SemanticMask(h, w); break;
      case 1: m = random_mask(rng, h, w, facial); break;
      default: m = random_mask(rng, h, w, all); break;
    }
    const BinaryMask fg = foreground_mask(m);
    const BinaryMask bg = background_mask(m);
    if (!((fg + bg) == 1).all() || !((fg * bg) == 0).all()) ++complement;

    const Tensor<double> img = random_image(rng, 1, h, w, -1.0, 1.0);
    Tensor<double> sum = Tensor<double>::zeros(img.shape());
    for (int label = 0; label < kNumClasses; ++label) sum.array() += extract_component(label, img, m).array();
    if (!bitwise_equal(sum, img)) ++reconstruction;

    const Tensor<double> anon = random_image(rng, 1, h, w, -1.0, 1.0);
    const Tensor<double> out = composite(anon, img, m);
    bool ok = true;
    for (Index c = 0; c < 3; ++c) {
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
          const double expect = m(y, x) == 0 ? img(0, c, y, x) : anon(0, c, y, x);
          const double got = out(0, c, y, x);
          if (std::memcmp(&got, &expect, sizeof(double)) != 0) ok = false;
        }
      }
    }
    if (!ok) ++background;
    if (!bitwise_equal(composite(out, img, m), out)) ++idempotent;
  }
  const auto n = static_cast<std::size_t>(count);
  return {count_check("B + B^-1 == 1 and B * B^-1 == 0", complement, n),
          count_check("sum of xi_i over all labels reconstructs the image", reconstruction, n),
          count_check("composite keeps background bit-exact and takes foreground from the anonymized image",
                      background, n),
          count_check("composite is idempotent for a fixed mask", idempotent, n)};
}

std::vector<Check> anonymizer_contract_suite(std::uint64_t seed) {
  std::vector<Check> out;
  std::mt19937_64 rng(seed);
  ModelConfig mc = ModelConfig::toy();
  mc.init_seed = seed;
  ModelBundle<float> models(mc, LossConfig{});
  const SkinRegionDetector detector;
  const Anonymizer anonymizer(models, detector, AnonymizerConfig{});

  // Faceless frames: plain backgrounds, noise, and non-skin shapes.
  std::size_t faceless_fail = 0;
  const int faceless = 12;
  for (int k = 0; k < faceless; ++k) {
    std::uniform_int_distribution<int> side(24, 160);
    toy::Scene scene = toy::render_scene(side(rng), side(rng), {}, toy::random_background(rng), seed + k);
    if (k % 2 == 1) {
      // A block in another non-skin colour.
      const toy::Rgb other = toy::random_background(rng);
      for (Index y = scene.photo.height / 4; y < scene.photo.height / 2; ++y)
        for (Index x = scene.photo.width / 4; x < 3 * scene.photo.width / 4; ++x)
          for (int c = 0; c < 3; ++c) scene.photo.at(y, x, c) = other[static_cast<std::size_t>(c)];
    }
    if (!detector.detect(scene.photo).empty()) {
      ++faceless_fail;
      continue;
    }
    if (anonymizer.anonymize_frame(scene.photo).pixels != scene.photo.pixels) ++faceless_fail;
  }
  out.push_back(count_check("faceless frame passes through bit-exact", faceless_fail, faceless));

  // Pixels outside every pasted crop stay untouched.
  std::size_t outside_fail = 0;
  std::size_t anonymized_faces = 0;
  const int scenes = 6;
  for (int k = 0; k < scenes; ++k) {
    std::vector<toy::FacePlacement> faces;
    const int n = 1 + k % 3;
    for (int f = 0; f < n; ++f) {
      toy::FacePlacement p;
      p.identity = toy::make_identity(seed, k * 3 + f);
      p.size = 18 + 4 * f;
      p.cx = 40 + 80 * f;
      p.cy = 50 + 10 * (k % 2);
      faces.push_back(p);
    }
    const toy::Scene scene = toy::render_scene(120, 80 * n + 20, faces, toy::random_background(rng), seed + 100 + k);
    FrameReport report;
    const Rgb8Image result = anonymizer.anonymize_frame(scene.photo, &report);
    std::vector<bool> covered(static_cast<std::size_t>(result.height * result.width), false);
    for (const auto& f : report.faces) {
      if (!f.anonymized) continue;
      ++anonymized_faces;
      for (Index y = f.refine.crop.y0; y < f.refine.crop.y1; ++y)
        for (Index x = f.refine.crop.x0; x < f.refine.crop.x1; ++x)
          covered[static_cast<std::size_t>(y * result.width + x)] = true;
    }
    for (Index y = 0; y < result.height; ++y) {
      for (Index x = 0; x < result.width; ++x) {
        if (covered[static_cast<std::size_t>(y * result.width + x)]) continue;
        for (int c = 0; c < 3; ++c) {
          if (result.at(y, x, c) != scene.photo.at(y, x, c)) {
            ++outside_fail;
            goto next_scene;
          }
        }
      }
    }
  next_scene:;
  }
  Check outside = count_check("pixels outside detected crops are bit-exact", outside_fail, scenes);
  outside.detail += ", " + std::to_string(anonymized_faces) + " faces anonymized";
  outside.pass = outside.pass && anonymized_faces > 0;
  out.push_back(outside);

  // Refine ratios on constructed geometry: one face in a large frame, skin
  // detector and an exact geometric detector.
  std::size_t monotone_fail = 0;
  std::size_t runs = 0;
  std::size_t multi_step = 0;
  for (int size : {8, 12, 16, 24, 32, 48}) {
    for (int shift : {0, 1, 2}) {
      toy::FacePlacement p;
      p.identity = toy::make_identity(seed, size + shift);
      p.size = size;
      p.cx = 100 + 30 * shift;
      p.cy = 110 - 20 * shift;
      const toy::Scene scene = toy::render_scene(220, 240, {p}, toy::random_background(rng), seed + size);
      const Box frame{0, 0, scene.photo.width, scene.photo.height};
      const RefineOptions opt{0.6, 6, 0.5};
      const auto check_ratios = [&](const RefineResult& r) {
        ++runs;
        if (r.ratios.size() > 1) ++multi_step;
        for (std::size_t i = 1; i < r.ratios.size(); ++i) {
          if (r.ratios[i] < r.ratios[i - 1]) {
            ++monotone_fail;
            break;
          }
        }
      };
      const RefineResult skin = refine_detection(scene.photo, frame, detector, opt);
      check_ratios(skin);
      Rgb8Image marked = scene.photo;
      paint_marker(marked, Box{static_cast<Index>(p.cx) - size * 4 / 5, static_cast<Index>(p.cy) - size,
                               static_cast<Index>(p.cx) + size * 4 / 5, static_cast<Index>(p.cy) + size});
      const MarkerDetector marker;
      check_ratios(refine_detection(marked, frame, marker, opt));
    }
  }
  Check mono = count_check("refine_detection area ratios are non-decreasing", monotone_fail, runs);
  mono.detail += ", " + std::to_string(multi_step) + " runs with several re-detections";
  mono.pass = mono.pass && multi_step > 0;
  out.push_back(mono);
  return out;
}

std::vector<Check> margin_monotonicity_suite(std::uint64_t seed, int steps) {
  std::mt19937_64 rng(seed);
  nn::FeatureNet<double> psi(nn::FeatureNetConfig::vgg19(8), rng);
  const Tensor<double> x = random_image(rng, 2, 32, 32, 0.0, 1.0);
  const Tensor<double> xs = random_image(rng, 2, 32, 32, 0.0, 1.0);
  const Eigen::MatrixXd d = perceptual_distances(psi, x, xs);
  const Index layers = d.rows();
  NoGradGuard guard;
  const auto loss = [&](const std::vector<double>& m) { return vgg_margin_loss(psi, constant(x), constant(xs), m).item(); };
  std::vector<Check> out;
  for (Index i = 0; i < layers; ++i) {
    std::vector<double> m(static_cast<std::size_t>(layers));
    for (Index j = 0; j < layers; ++j) m[static_cast<std::size_t>(j)] = 0.5 * d.row(j).mean();
    const double top = 1.5 * d.row(i).maxCoeff();
    double prev = 0;
    std::size_t increases = 0;
    for (int s = 0; s < steps; ++s) {
      m[static_cast<std::size_t>(i)] = top * s / (steps - 1);
      const double v = loss(m);
      if (s > 0 && v > prev) ++increases;
      prev = v;
    }
    out.push_back(count_check("margin " + std::to_string(i + 1) + " sweep never increases the loss", increases,
                              static_cast<std::size_t>(steps - 1)));
  }
  // All margins together; at the top every hinge is closed.
  double prev = 0;
  std::size_t increases = 0;
  double last = 0;
  for (int s = 0; s < steps; ++s) {
    std::vector<double> m(static_cast<std::size_t>(layers));
    for (Index j = 0; j < layers; ++j) m[static_cast<std::size_t>(j)] = 1.5 * d.row(j).maxCoeff() * s / (steps - 1);
    const double v = loss(m);
    if (s > 0 && v > prev) ++increases;
    prev = v;
    last = v;
  }
  Check joint = count_check("joint margin sweep never increases the loss", increases, static_cast<std::size_t>(steps - 1));
  joint.pass = joint.pass && last == 0.0;
  joint.detail += ", final value " + num(last);
  out.push_back(joint);
  return out;
}

namespace {

template <typename Scalar>
bool same_state(nn::Module<Scalar>& a, nn::Module<Scalar>& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first || !bitwise_equal(pa[i].second->value(), pb[i].second->value())) return false;
  }
  auto ba = a.buffers();
  auto bb = b.buffers();
  if (ba.size() != bb.size()) return false;
  for (std::size_t i = 0; i < ba.size(); ++i) {
    if (!bitwise_equal(*ba[i].second, *bb[i].second)) return false;
  }
  return true;
}

bool same_records(const std::vector<LossRecord>& a, const std::vector<LossRecord>& b, std::size_t from_a = 0,
                  std::size_t from_b = 0) {
  if (a.size() - from_a != b.size() - from_b) return false;
  for (std::size_t i = 0; i < a.size() - from_a; ++i) {
    const LossRecord& x = a[from_a + i];
    const LossRecord& y = b[from_b + i];
    if (x.step != y.step || x.term != y.term || std::memcmp(&x.value, &y.value, sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

std::vector<Check> determinism_suite(const fs::path& scratch, std::uint64_t seed) {
  std::vector<Check> out;
  const FaceDataset data = portrait_dataset(3, 2, 32, seed);
  ModelConfig mc = tiny_models();
  mc.init_seed = seed;
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr_constant_epochs = 1;
  tc.lr_decay_epochs = 1;
  tc.seed = seed;
  tc.calibration_pairs = 8;
  const LossConfig lc;

  ModelBundle<float> m1(mc, lc);
  Trainer t1(m1, data, lc, tc);
  t1.run();
  ModelBundle<float> m2(mc, lc);
  Trainer t2(m2, data, lc, tc);
  t2.run();
  bool weights_equal = true;
  auto n1 = m1.networks();
  auto n2 = m2.networks();
  for (std::size_t i = 0; i < n1.size(); ++i) weights_equal = weights_equal && same_state(*n1[i].second, *n2[i].second);
  out.push_back({"fixed-seed runs give identical loss traces", same_records(t1.records(), t2.records()) && weights_equal,
                 std::to_string(t1.records().size()) + " records over " + std::to_string(t1.global_step()) + " steps"});

  // Save/load round trip into differently initialised networks.
  fs::remove_all(scratch);
  const fs::path ck = scratch / "roundtrip";
  save_checkpoint(ck, m1, t1.global_step(), t1.epoch(), 42);
  ModelConfig other = mc;
  other.init_seed = seed + 1;
  ModelBundle<float> m3(other, lc);
  LoadOptions lo;
  lo.expected_config_hash = 42;
  load_checkpoint(ck, m3, lo);
  m1.set_training(false);
  m3.set_training(false);
  const Tensor<float> photo = data[0].photo;
  bool forward_equal = true;
  {
    NoGradGuard guard;
    forward_equal = forward_equal && bitwise_equal(segment(m1.G(), photo, 32).scores, segment(m3.G(), photo, 32).scores);
    forward_equal = forward_equal && bitwise_equal(synthesize(m1.Gs(), {data[0].mask}), synthesize(m3.Gs(), {data[0].mask}));
    const Var<float> y = constant(data[0].mask.one_hot<float>());
    forward_equal = forward_equal && bitwise_equal(m1.F().forward(y).value(), m3.F().forward(y).value());
    forward_equal = forward_equal && bitwise_equal(m1.DX().forward(constant(photo)).probs.value(),
                                                   m3.DX().forward(constant(photo)).probs.value());
    forward_equal = forward_equal && bitwise_equal(m1.DY().forward(y).probs.value(), m3.DY().forward(y).probs.value());
    for (int k = 0; k < m1.Ds().size(); ++k) {
      forward_equal = forward_equal && bitwise_equal(m1.Ds()[k].forward(constant(photo)).probs.value(),
                                                     m3.Ds()[k].forward(constant(photo)).probs.value());
    }
    const auto f1 = m1.psi().forward(constant(photo));
    const auto f3 = m3.psi().forward(constant(photo));
    for (std::size_t i = 0; i < f1.size(); ++i) forward_equal = forward_equal && bitwise_equal(f1[i].value(), f3[i].value());
  }
  out.push_back({"checkpoint round trip gives bitwise-identical forward outputs", forward_equal, "all seven networks"});

  // One epoch, save, resume in a fresh process state, second epoch.
  TrainConfig first = tc;
  first.epochs = 1;
  ModelBundle<float> m4(mc, lc);
  Trainer t4(m4, data, lc, first);
  t4.run(scratch / "resume", 7);
  const auto latest = latest_checkpoint(scratch / "resume");
  ModelBundle<float> m5(other, lc);
  Trainer t5(m5, data, lc, tc);
  LoadOptions ro;
  ro.expected_config_hash = 7;
  t5.resume(*latest, ro);
  t5.run();
  bool resumed_equal = t5.global_step() == t1.global_step();
  auto n5 = m5.networks();
  m1.set_training(true);
  for (std::size_t i = 0; i < n1.size(); ++i) resumed_equal = resumed_equal && same_state(*n1[i].second, *n5[i].second);
  std::size_t from = 0;
  while (from < t1.records().size() && t1.records()[from].step < t4.global_step()) ++from;
  const bool tail_equal = same_records(t1.records(), t5.records(), from, 0);
  out.push_back({"train 2 epochs == train 1 epoch, resume, train 1 epoch (bitwise)", resumed_equal && tail_equal,
                 "resumed at step " + std::to_string(t4.global_step()) + " of " + std::to_string(t1.global_step())});
  return out;
}

}  // namespace faceanon::checks
