#include "faceanon/toy_faces.hpp"

#include "faceanon/detector.hpp"
#include "faceanon/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace faceanon::toy {

namespace {

enum Src : std::uint8_t {
  kSkin = 1, kLBrow = 2, kRBrow = 3, kLEye = 4, kREye = 5, kGlass = 6, kLEar = 7, kREar = 8,
  kEarring = 9, kNose = 10, kMouth = 11, kULip = 12, kLLip = 13, kNeck = 14, kNecklace = 15, kCloth = 16,
  kHair = 17, kHat = 18,
};

constexpr Rgb kSkinTones[] = {{225, 180, 150}, {210, 160, 128}, {200, 150, 120}, {185, 130, 100},
                              {160, 110, 80},  {140, 96, 70},   {130, 88, 64}};
constexpr Rgb kHairColours[] = {{30, 25, 22}, {60, 40, 30}, {75, 50, 32}, {20, 20, 24}, {110, 110, 112}, {70, 70, 76}};
constexpr Rgb kIrisColours[] = {{60, 90, 150}, {50, 110, 70}, {70, 45, 30}, {40, 40, 40}};
constexpr Rgb kClothColours[] = {{40, 60, 140}, {30, 110, 60}, {90, 60, 130}, {50, 50, 60}, {20, 90, 120}};

Rgb scaled(const Rgb& c, double f) {
  Rgb out;
  for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::clamp(std::lround(c[static_cast<std::size_t>(i)] * f), 0L, 255L));
  return out;
}

bool rgb_is_skin(const Rgb& c) { return SkinRegionDetector::is_skin(c[0], c[1], c[2]); }

class Canvas {
 public:
  Canvas(Scene& s) : s_(s) {}

  template <typename Inside>
  void fill(const Inside& inside, double x0, double y0, double x1, double y1, const Rgb& colour, std::uint8_t label) {
    const Index ix0 = std::max<Index>(0, static_cast<Index>(std::floor(x0)));
    const Index iy0 = std::max<Index>(0, static_cast<Index>(std::floor(y0)));
    const Index ix1 = std::min<Index>(s_.photo.width - 1, static_cast<Index>(std::ceil(x1)));
    const Index iy1 = std::min<Index>(s_.photo.height - 1, static_cast<Index>(std::ceil(y1)));
    for (Index y = iy0; y <= iy1; ++y) {
      for (Index x = ix0; x <= ix1; ++x) {
        if (!inside(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
        for (int c = 0; c < 3; ++c) s_.photo.at(y, x, c) = colour[static_cast<std::size_t>(c)];
        s_.labels(y, x) = label;
      }
    }
  }

  void ellipse(double cx, double cy, double ax, double ay, const Rgb& colour, std::uint8_t label) {
    fill([&](double x, double y) { return sq((x - cx) / ax) + sq((y - cy) / ay) <= 1.0; }, cx - ax, cy - ay, cx + ax,
         cy + ay, colour, label);
  }

  void rect(double x0, double y0, double x1, double y1, const Rgb& colour, std::uint8_t label) {
    fill([&](double x, double y) { return x >= x0 && x < x1 && y >= y0 && y < y1; }, x0, y0, x1, y1, colour, label);
  }

  void ring(double cx, double cy, double ax, double ay, double t, const Rgb& colour, std::uint8_t label) {
    fill(
        [&](double x, double y) {
          const double o = sq((x - cx) / ax) + sq((y - cy) / ay);
          const double i = sq((x - cx) / (ax - t)) + sq((y - cy) / (ay - t));
          return o <= 1.0 && i > 1.0;
        },
        cx - ax, cy - ay, cx + ax, cy + ay, colour, label);
  }

  static double sq(double v) { return v * v; }

 private:
  Scene& s_;
};

void draw_face(Canvas& cv, const FacePlacement& f, const Rgb& cloth) {
  const IdentityParams& id = f.identity;
  const double b = f.size;
  const double a = b * id.face_width;
  const double cx = f.cx;
  const double cy = f.cy;
  const Rgb skin = scaled(id.skin, f.lighting);
  const Rgb hair = scaled(id.hair, f.lighting);

  cv.rect(cx - 1.7 * a, cy + 1.35 * b, cx + 1.7 * a, cy + 3.0 * b, cloth, kCloth);
  if (id.hair_style == 1) cv.ellipse(cx, cy + 0.1 * b, 1.25 * a, 1.1 * b, hair, kHair);
  cv.rect(cx - 0.45 * a, cy + 0.5 * b, cx + 0.45 * a, cy + 1.45 * b, skin, kNeck);
  if (id.earrings) {
    cv.rect(cx - 0.2 * a, cy + 1.25 * b, cx + 0.2 * a, cy + 1.32 * b, {200, 200, 60}, kNecklace);
  }
  cv.ellipse(cx - a, cy, 0.18 * a, 0.28 * b, skin, kLEar);
  cv.ellipse(cx + a, cy, 0.18 * a, 0.28 * b, skin, kREar);
  if (id.earrings) {
    cv.ellipse(cx - a, cy + 0.33 * b, 0.06 * b, 0.06 * b, {230, 210, 70}, kEarring);
    cv.ellipse(cx + a, cy + 0.33 * b, 0.06 * b, 0.06 * b, {230, 210, 70}, kEarring);
  }
  cv.ellipse(cx, cy, a, b, skin, kSkin);

  // Hair cap above the hairline.
  const double hairline = cy - 0.55 * b;
  cv.fill(
      [&](double x, double y) {
        return y < hairline + 0.12 * b * std::cos((x - cx) / a * 1.5) &&
               Canvas::sq((x - cx) / (1.08 * a)) + Canvas::sq((y - cy + 0.04 * b) / (1.08 * b)) <= 1.0;
      },
      cx - 1.1 * a, cy - 1.2 * b, cx + 1.1 * a, hairline + 0.2 * b, hair, kHair);
  if (f.hat) cv.rect(cx - 1.05 * a, cy - 1.35 * b, cx + 1.05 * a, cy - 0.8 * b, {40, 40, 110}, kHat);

  const double ex = id.eye_spacing * a;
  const double ey = cy - 0.18 * b;
  const Rgb brow = scaled(hair, 0.8);
  cv.rect(cx - ex - 0.17 * a, ey - 0.17 * b - id.brow_thickness * b, cx - ex + 0.17 * a, ey - 0.17 * b, brow, kLBrow);
  cv.rect(cx + ex - 0.17 * a, ey - 0.17 * b - id.brow_thickness * b, cx + ex + 0.17 * a, ey - 0.17 * b, brow, kRBrow);
  const double eax = 0.14 * a * id.eye_size;
  const double eay = 0.075 * b * id.eye_size;
  for (int side = 0; side < 2; ++side) {
    const double x = side == 0 ? cx - ex : cx + ex;
    const std::uint8_t label = side == 0 ? kLEye : kREye;
    cv.ellipse(x, ey, eax, eay, {240, 240, 240}, label);
    cv.ellipse(x, ey, 0.45 * eax, 0.9 * eay, id.iris, label);
  }

  cv.ellipse(cx, cy + 0.08 * b, 0.1 * a, id.nose_length * b, scaled(skin, 0.86), kNose);

  const double my = cy + 0.5 * b;
  const double mw = id.mouth_width * a;
  cv.fill([&](double x, double y) { return y < my && Canvas::sq((x - cx) / mw) + Canvas::sq((y - my) / (0.09 * b)) <= 1.0; },
          cx - mw, my - 0.09 * b, cx + mw, my, id.lips, kULip);
  cv.fill([&](double x, double y) { return y >= my && Canvas::sq((x - cx) / mw) + Canvas::sq((y - my) / (0.11 * b)) <= 1.0; },
          cx - mw, my, cx + mw, my + 0.11 * b, scaled(id.lips, 0.9), kLLip);
  cv.ellipse(cx, my, 0.8 * mw, 0.028 * b, {60, 20, 25}, kMouth);

  if (id.glasses) {
    const double t = std::max(1.0, 0.035 * b);
    const Rgb frame{25, 25, 30};
    cv.ring(cx - ex, ey, 0.24 * a, 0.15 * b, t, frame, kGlass);
    cv.ring(cx + ex, ey, 0.24 * a, 0.15 * b, t, frame, kGlass);
    cv.rect(cx - ex + 0.22 * a, ey - 0.5 * t, cx + ex - 0.22 * a, ey + 0.5 * t, frame, kGlass);
  }
}

}  // namespace

IdentityParams make_identity(std::uint64_t seed, int id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), 0x1d3u};
  std::mt19937_64 rng(seq);
  auto pick = [&](auto& table) {
    std::uniform_int_distribution<std::size_t> d(0, std::size(table) - 1);
    return table[d(rng)];
  };
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  IdentityParams p;
  p.id = id;
  p.skin = pick(kSkinTones);
  p.hair = pick(kHairColours);
  p.iris = pick(kIrisColours);
  p.lips = {static_cast<std::uint8_t>(uni(150, 200)), static_cast<std::uint8_t>(uni(50, 80)),
            static_cast<std::uint8_t>(uni(60, 90))};
  p.face_width = uni(0.72, 0.9);
  p.eye_spacing = uni(0.34, 0.46);
  p.eye_size = uni(0.85, 1.25);
  p.brow_thickness = uni(0.04, 0.09);
  p.nose_length = uni(0.14, 0.26);
  p.mouth_width = uni(0.25, 0.45);
  p.hair_style = static_cast<int>(uni(0, 2));
  p.glasses = uni(0, 1) < 0.25;
  p.earrings = uni(0, 1) < 0.2;
  return p;
}

Rgb random_background(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_int_distribution<int> v(40, 220);
  for (;;) {
    Rgb c;
    switch (kind(rng)) {
      case 0: {
        const int g = v(rng);
        c = {static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g)};
        break;
      }
      case 1: {
        const int r = v(rng) / 2;
        c = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(r + 30), static_cast<std::uint8_t>(std::min(255, r + 90))};
        break;
      }
      default: {
        const int r = v(rng) / 2;
        c = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(std::min(255, r + 70)), static_cast<std::uint8_t>(r + 20)};
        break;
      }
    }
    if (!rgb_is_skin(c)) return c;
  }
}

Scene render_scene(Index height, Index width, const std::vector<FacePlacement>& faces, const Rgb& background,
                   std::uint64_t noise_seed) {
  Scene s;
  s.photo = Rgb8Image(height, width);
  s.labels = LabelGrid::Zero(height, width);
  for (Index i = 0; i < height * width; ++i) {
    for (int c = 0; c < 3; ++c) s.photo.pixels[static_cast<std::size_t>(i * 3 + c)] = background[static_cast<std::size_t>(c)];
  }
  Canvas cv(s);
  for (std::size_t k = 0; k < faces.size(); ++k) {
    draw_face(cv, faces[k], kClothColours[static_cast<std::size_t>(faces[k].identity.id) % std::size(kClothColours)]);
  }
  // Mild sensor noise that keeps every region on its side of the skin rule.
  std::mt19937_64 rng(noise_seed);
  std::uniform_int_distribution<int> noise(-3, 3);
  for (auto& px : s.photo.pixels) px = static_cast<std::uint8_t>(std::clamp(int(px) + noise(rng), 0, 255));
  return s;
}

Scene render_portrait(const IdentityParams& identity, Index side, std::mt19937_64& rng) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  FacePlacement f;
  f.identity = identity;
  const double s = static_cast<double>(side);
  f.size = s * uni(0.26, 0.31);
  f.cx = s * 0.5 + uni(-0.05, 0.05) * s;
  f.cy = s * 0.45 + uni(-0.04, 0.04) * s;
  // Lighting stays inside the range where every skin tone passes the skin rule.
  for (;;) {
    f.lighting = uni(0.9, 1.1);
    if (rgb_is_skin(scaled(identity.skin, f.lighting))) break;
  }
  f.hat = uni(0, 1) < 0.1;
  const Rgb bg = random_background(rng);
  return render_scene(side, side, {f}, bg, rng());
}

int write_dataset(const fs::path& root, const DatasetSpec& spec) {
  if (spec.identities < 1 || spec.photos_per_identity < 1) throw std::invalid_argument("toy dataset needs identities and photos");
  fs::create_directories(root / "photos");
  fs::create_directories(root / "masks");
  std::mt19937_64 rng(spec.seed);
  int written = 0;
  for (int id = 0; id < spec.identities; ++id) {
    const IdentityParams p = make_identity(spec.seed, id);
    for (int k = 0; k < spec.photos_per_identity; ++k) {
      const Scene s = render_portrait(p, spec.side, rng);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "id%03d_%02d", id, k);
      write_image(root / "photos" / (std::string(stem) + ".png"), s.photo);
      write_label_image(root / "masks" / (std::string(stem) + ".png"), s.labels);
      ++written;
    }
  }
  return written;
}

}  // namespace faceanon::toy
