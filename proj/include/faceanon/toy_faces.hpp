#pragma once

#include "faceanon/image.hpp"
#include "faceanon/semantic.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

/// Procedural cartoon faces with exact 19-class source annotations. They
/// stand in for a face-parsing corpus in tests, the desk-scale training
/// run and the demo commands.
namespace faceanon::toy {

namespace fs = std::filesystem;

using Rgb = std::array<std::uint8_t, 3>;

/// Everything that stays fixed across photos of one identity.
struct IdentityParams {
  int id = 0;
  Rgb skin{};
  Rgb hair{};
  Rgb iris{};
  Rgb lips{};
  double face_width = 0.8;  // horizontal half-axis / vertical half-axis
  double eye_spacing = 0.4;
  double eye_size = 1.0;
  double brow_thickness = 0.06;
  double nose_length = 0.2;
  double mouth_width = 0.35;
  int hair_style = 0;  // 0 short, 1 long
  bool glasses = false;
  bool earrings = false;
};

/// Deterministic identity for (seed, id).
IdentityParams make_identity(std::uint64_t seed, int id);

struct FacePlacement {
  IdentityParams identity;
  double cx = 0;
  double cy = 0;
  double size = 0;      // vertical half-axis of the face ellipse in pixels
  double lighting = 1;  // multiplies skin and hair colours
  bool hat = false;
};

struct Scene {
  Rgb8Image photo;
  LabelGrid labels;  // source annotation ids
};

/// Background colour that the skin rule rejects.
Rgb random_background(std::mt19937_64& rng);

/// Paints faces in order onto a uniform background with mild pixel noise.
Scene render_scene(Index height, Index width, const std::vector<FacePlacement>& faces, const Rgb& background,
                   std::uint64_t noise_seed);

/// One portrait of `identity` with jittered pose, scale, lighting and
/// background, face centred in a square image of `side` pixels.
Scene render_portrait(const IdentityParams& identity, Index side, std::mt19937_64& rng);

struct DatasetSpec {
  int identities = 16;
  int photos_per_identity = 4;
  Index side = 96;
  std::uint64_t seed = 7;
};

/// Writes photos/<id>_<k>.png and masks/<id>_<k>.png under `root`. Returns
/// the number of pairs written.
int write_dataset(const fs::path& root, const DatasetSpec& spec);

}  // namespace faceanon::toy
