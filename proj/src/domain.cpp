#include "rmgn/domain.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <string>

#include "rmgn/errors.hpp"

namespace rmgn {

namespace {

void require_finite(const Tensor& t, std::string_view what) {
  if (!t.all_finite()) throw InvariantError(std::string(what) + " contains NaN or Inf");
}

struct Raster {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<std::uint8_t> bytes;  // interleaved rows
};

Raster read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ImageIOError("no such file: " + path.string());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageIOError("cannot decode " + path.string() + ": " + img.message);
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw ImageIOError("unsupported bit depth in " + path.string() + ": only 8-bit PNG is read");
  }
  if (img.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&img);
    throw ImageIOError("unsupported alpha channel in " + path.string());
  }
  Raster r;
  r.channels = (img.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  img.format = r.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  r.height = img.height;
  r.width = img.width;
  r.bytes.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, r.bytes.data(), 0, nullptr)) {
    throw ImageIOError("cannot decode " + path.string() + ": " + img.message);
  }
  return r;
}

void write_png(const Raster& r, const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, r.bytes.data(), 0, nullptr)) {
    throw ImageIOError("cannot write " + path.string() + ": " + img.message);
  }
}

}  // namespace

ImageTensor::ImageTensor(Tensor data) : data_(std::move(data)) {
  require_chw(data_, "ImageTensor");
  if (data_.channels() != 1 && data_.channels() != 3) {
    throw InvariantError("ImageTensor needs 1 or 3 channels, got " +
                         std::to_string(data_.channels()));
  }
  if (data_.height() == 0 || data_.width() == 0) throw InvariantError("ImageTensor is empty");
  require_finite(data_, "ImageTensor");
}

bool ImageTensor::in_unit_range() const {
  for (double v : data_.values()) {
    if (v < -1.0 || v > 1.0) return false;
  }
  return true;
}

WarpedCloth::WarpedCloth(ImageTensor image, Tensor validity)
    : image_(std::move(image)), validity_(std::move(validity)) {
  require_chw(validity_, "WarpedCloth validity");
  if (validity_.channels() != 1 || validity_.height() != image_.height() ||
      validity_.width() != image_.width()) {
    throw ShapeError("WarpedCloth validity " + shape_string(validity_.shape()) +
                     " does not match image " + shape_string(image_.tensor().shape()));
  }
  for (double v : validity_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvariantError("WarpedCloth validity outside [0, 1]");
  }
}

FlowField::FlowField(Tensor offsets, int scale_index)
    : offsets_(std::move(offsets)), scale_index_(scale_index) {
  require_chw(offsets_, "FlowField");
  if (offsets_.channels() != 2) throw ShapeError("FlowField needs 2 channels");
  if (scale_index_ < 1) throw InvariantError("FlowField scale index must be >= 1");
  require_finite(offsets_, "FlowField");
}

RegionalMask::RegionalMask(Tensor values) : values_(std::move(values)) {
  require_chw(values_, "RegionalMask");
  if (values_.channels() != 1) throw ShapeError("RegionalMask needs 1 channel");
  for (double v : values_.values()) {
    if (!(v > 0.0 && v < 1.0)) throw InvariantError("RegionalMask entry outside (0, 1)");
  }
}

FakeTriplet::FakeTriplet(ImageTensor fake_person, ImageTensor target_cloth,
                         ImageTensor real_person, Tensor gt_cloth_mask)
    : fake_(std::move(fake_person)),
      target_(std::move(target_cloth)),
      real_(std::move(real_person)),
      mask_(std::move(gt_cloth_mask)) {
  auto same_hw = [](const ImageTensor& a, const ImageTensor& b) {
    return a.height() == b.height() && a.width() == b.width();
  };
  if (!same_hw(fake_, target_) || !same_hw(fake_, real_)) {
    throw ShapeError("FakeTriplet images must share height and width");
  }
  require_binary_mask(mask_, "FakeTriplet gt_cloth_mask");
  if (mask_.height() != real_.height() || mask_.width() != real_.width()) {
    throw ShapeError("FakeTriplet mask does not match image size");
  }
}

void LossWeights::validate() const {
  for (double v : {lambda_f, lambda_sec, lambda_d, lambda_p}) {
    if (!std::isfinite(v) || v < 0.0) throw InvariantError("loss weights must be finite and >= 0");
  }
}

void require_binary_mask(const Tensor& mask, std::string_view what) {
  require_chw(mask, what);
  if (mask.channels() != 1) throw ShapeError(std::string(what) + " must have one channel");
  for (double v : mask.values()) {
    if (v != 0.0 && v != 1.0) throw InvariantError(std::string(what) + " must be binary");
  }
}

ImageTensor load_image(const std::filesystem::path& path) {
  Raster r = read_png(path);
  Tensor t = Tensor::chw(r.channels, r.height, r.width);
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < r.channels; ++c) {
        const double b = r.bytes[(y * r.width + x) * r.channels + c];
        t.at(c, y, x) = 2.0 * b / 255.0 - 1.0;
      }
    }
  }
  return ImageTensor(std::move(t));
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
  if (!image.in_unit_range()) {
    throw InvariantError("cannot save " + path.string() + ": entries outside [-1, 1]");
  }
  Raster r{image.channels(), image.height(), image.width(), {}};
  r.bytes.resize(r.channels * r.height * r.width);
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < r.channels; ++c) {
        r.bytes[(y * r.width + x) * r.channels + c] =
            static_cast<std::uint8_t>(std::lround(127.5 * (image.at(c, y, x) + 1.0)));
      }
    }
  }
  write_png(r, path);
}

void save_mask(const Tensor& mask, const std::filesystem::path& path) {
  require_chw(mask, "save_mask");
  if (mask.channels() != 1) throw ShapeError("save_mask needs a single-channel mask");
  Raster r{1, mask.height(), mask.width(), {}};
  r.bytes.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double v = mask[i];
    if (!(v >= 0.0 && v <= 1.0)) throw InvariantError("save_mask: entries must lie in [0, 1]");
    r.bytes[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  write_png(r, path);
}

Tensor load_mask(const std::filesystem::path& path) {
  Raster r = read_png(path);
  if (r.channels != 1) throw ImageIOError("mask " + path.string() + " is not grayscale");
  Tensor t = Tensor::chw(1, r.height, r.width);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.bytes[i] / 255.0;
  return t;
}

}  // namespace rmgn
