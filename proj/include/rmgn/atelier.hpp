#pragma once

// Procedural persons, clothes and the exact-geometry teacher.
//
// Every render is a pure function of its spec. Garments are drawn in a fixed
// canonical frame; a person wears a garment through a piecewise affine map
// (torso plus one map per sleeve) recorded in BodyGeometry. Because the same
// bilinear resampling paints the worn cloth and the teacher composites, the
// teacher reproduces a person exactly when handed that person's own cloth.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rmgn/domain.hpp"

namespace rmgn {

struct Color {
  double r = 0, g = 0, b = 0;
  bool operator==(const Color&) const = default;
};

enum class Pattern { kSolid, kStripes, kLogoPatch };
enum class SleeveLength { kShort, kLong };
enum class PostureClass { kCanonical, kHandOnHip, kRaisedArm };

std::string to_string(Pattern p);
std::string to_string(SleeveLength s);
std::string to_string(PostureClass c);

struct ClothSpec {
  std::uint64_t seed = 0;
  Color base_color;
  Pattern pattern = Pattern::kSolid;
  SleeveLength sleeve = SleeveLength::kShort;
  double noise = 0.0;  // amplitude of the seed-keyed texture, >= 0

  bool operator==(const ClothSpec&) const = default;
};

struct Posture {
  double arm_left_deg = 0;   // [-90, 90]; positive swings the arm outward
  double arm_right_deg = 0;  // [-90, 90]
  double torso_lean_deg = 0; // [-20, 20]
  bool operator==(const Posture&) const = default;
};

struct PersonSpec {
  std::uint64_t seed = 0;
  Posture posture;
  PostureClass posture_class = PostureClass::kCanonical;
  Color skin;
  Color background;
  double body_scale = 1.0;  // [0.8, 1.2]
  ClothSpec worn;

  void validate() const;
  bool operator==(const PersonSpec&) const = default;
};

struct Point {
  double x = 0, y = 0;
};

/// image = linear * canonical + offset.
struct Affine {
  double a = 1, b = 0, c = 0, d = 1;
  double tx = 0, ty = 0;

  Point apply(Point p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
  Affine inverse() const;
  static Affine rotation_about(Point pivot_from, Point pivot_to, double deg, double scale);
};

enum class Piece { kTorso = 0, kLeftSleeve = 1, kRightSleeve = 2 };

/// Canonical-to-image maps of one rendered person.
struct BodyGeometry {
  std::size_t height = 0, width = 0;
  Affine torso;
  Affine left_arm;
  Affine right_arm;

  const Affine& map(Piece p) const;
  /// Which map governs image point p: arms are drawn over the torso and the
  /// right arm over the left, so the topmost limb whose canonical extent
  /// covers p wins; otherwise the torso map (also used as the smooth
  /// extension away from the body).
  Piece piece_at(Point p) const;
  /// Canonical cloth coordinate sampled for image point p.
  Point canonical_of(Point p) const;
};

struct PersonRender {
  ImageTensor image;
  Tensor cloth_region;  // [1,H,W] binary: pixels showing the worn cloth
  BodyGeometry geometry;
};

/// Resolution of the procedural renders. Dimensions scale the 64x48 design.
struct Canvas {
  std::size_t height = 64;
  std::size_t width = 48;
};

ImageTensor render_cloth(const ClothSpec& spec, Canvas canvas = {});
PersonRender render_person(const PersonSpec& spec, Canvas canvas = {});

/// `person` with every pixel inside `cloth_region` replaced by `cloth`
/// resampled through `geometry`; pixels outside the region are copied.
ImageTensor oracle_teacher(const ImageTensor& person, const Tensor& cloth_region,
                           const BodyGeometry& geometry, const ImageTensor& cloth);

/// Ground-truth deformed cloth: person pixels inside the region, zero
/// elsewhere, validity = region.
WarpedCloth gt_warped_cloth(const ImageTensor& person, const Tensor& cloth_region);

/// Exact flows of the piecewise affine geometry at `levels` scales, coarse to
/// fine, each in pixels of its own scale. At the finest scale the flow at p
/// is canonical_of(p) - p.
std::vector<FlowField> teacher_flow_pyramid(const BodyGeometry& geometry, int levels);

/// Bilinear sample of `image` at continuous index coordinates; taps outside
/// the image read as zero.
double sample_bilinear(const Tensor& image, std::size_t channel, Point p);

struct DatasetItem {
  PersonSpec person;            // includes the worn cloth
  std::vector<ClothSpec> pool;  // alternative clothes for fake composites
  ClothSpec target;             // held-out try-on cloth contrasting the worn one
};

struct Dataset {
  std::uint64_t seed = 0;
  Canvas canvas;
  std::vector<DatasetItem> items;
};

inline constexpr std::size_t kClothPoolSize = 6;

/// Seed-keyed manifest of `n` persons; item i draws from mix_seed(seed, i).
/// Each item draws its posture class uniformly from canonical, hand-on-hip
/// and raised-arm.
Dataset generate_dataset(std::size_t n, std::uint64_t seed, Canvas canvas = {});

std::string manifest_text(const Dataset& dataset);
Dataset parse_manifest(const std::string& text);
void write_manifest(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_manifest(const std::filesystem::path& path);

/// Stable 64-bit content hash (FNV-1a) used for cache file names.
std::uint64_t content_hash(const std::string& text);
std::string spec_key(const ClothSpec& spec);
std::string spec_key(const PersonSpec& spec);

/// True when two garments differ in pattern and sleeve length.
bool contrasting(const ClothSpec& a, const ClothSpec& b);

}  // namespace rmgn
