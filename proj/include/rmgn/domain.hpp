#pragma once

// Value types shared by every stage of the try-on pipeline. All types are
// immutable after construction and validate their invariants up front.
//
// Layout is channel-major [C, H, W] everywhere. Image intensities live in
// [-1, 1]; PNG bytes map linearly onto that range.

#include <filesystem>
#include <vector>

#include "rmgn/tensor.hpp"

namespace rmgn {

/// Person, cloth, try-on or fake image. C is 1 or 3, entries are finite.
/// Range is enforced where images leave the process (save_image); generator
/// outputs are bounded by their tanh head.
class ImageTensor {
 public:
  explicit ImageTensor(Tensor data);

  const Tensor& tensor() const { return data_; }
  std::size_t channels() const { return data_.channels(); }
  std::size_t height() const { return data_.height(); }
  std::size_t width() const { return data_.width(); }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data_.at(c, y, x); }
  bool in_unit_range() const;

  bool operator==(const ImageTensor&) const = default;

 private:
  Tensor data_;
};

/// Cloth image resampled onto the person frame, with the fraction of each
/// bilinear sample that came from inside the source image.
class WarpedCloth {
 public:
  WarpedCloth(ImageTensor image, Tensor validity);

  const ImageTensor& image() const { return image_; }
  const Tensor& validity() const { return validity_; }

 private:
  ImageTensor image_;
  Tensor validity_;
};

/// Per-scale offset field [2, h, w] in pixels of that scale. Channel 0 is the
/// horizontal offset, channel 1 the vertical one. `scale_index` runs 1..L from
/// coarse to fine.
class FlowField {
 public:
  FlowField(Tensor offsets, int scale_index);

  const Tensor& offsets() const { return offsets_; }
  int scale_index() const { return scale_index_; }
  std::size_t height() const { return offsets_.height(); }
  std::size_t width() const { return offsets_.width(); }

 private:
  Tensor offsets_;
  int scale_index_;
};

/// Learned fusion selector [1, h, w]; every entry strictly inside (0, 1).
class RegionalMask {
 public:
  explicit RegionalMask(Tensor values);

  const Tensor& values() const { return values_; }
  std::size_t height() const { return values_.height(); }
  std::size_t width() const { return values_.width(); }

 private:
  Tensor values_;
};

/// Supervision unit of parser-free training: a teacher-composited person
/// wearing some other cloth, the target cloth, and the real person.
class FakeTriplet {
 public:
  FakeTriplet(ImageTensor fake_person, ImageTensor target_cloth, ImageTensor real_person,
              Tensor gt_cloth_mask);

  const ImageTensor& fake_person() const { return fake_; }
  const ImageTensor& target_cloth() const { return target_; }
  const ImageTensor& real_person() const { return real_; }
  const Tensor& gt_cloth_mask() const { return mask_; }

 private:
  ImageTensor fake_;
  ImageTensor target_;
  ImageTensor real_;
  Tensor mask_;
};

/// Weights of the warp objective (first-order, curvature, distillation) and
/// of the perceptual generator term. All finite and nonnegative.
struct LossWeights {
  double lambda_f = 1.0;
  double lambda_sec = 1e-4;
  double lambda_d = 0.25;
  double lambda_p = 0.2;

  void validate() const;
};

/// Throws InvariantError unless `mask` is [1,h,w] with entries in {0, 1}.
void require_binary_mask(const Tensor& mask, std::string_view what);

/// Reads an 8-bit grayscale or RGB PNG; bytes map to 2*b/255 - 1.
ImageTensor load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG (grayscale for C=1, RGB for C=3). Entries must lie in
/// [-1, 1]; each maps to round(127.5 * (v + 1)).
void save_image(const ImageTensor& image, const std::filesystem::path& path);

/// Masks in [0, 1] exported as grayscale: 0 -> 0, 1 -> 255.
void save_mask(const Tensor& mask, const std::filesystem::path& path);
Tensor load_mask(const std::filesystem::path& path);

}  // namespace rmgn
