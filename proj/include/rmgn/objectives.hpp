#pragma once

// Generator-side reconstruction losses and the joint objective.

#include <cstdint>
#include <vector>

#include "rmgn/domain.hpp"
#include "rmgn/params.hpp"

namespace rmgn {

/// Frozen random conv stack used as a perceptual feature extractor. Stage 1
/// is a linear conv followed by 2x2 average pooling; later stages add a SiLU
/// before pooling. Pooling is skipped once a dimension turns odd. Features
/// are tapped after every stage.
class PerceptualEmbedder {
 public:
  explicit PerceptualEmbedder(std::uint64_t seed, std::vector<std::size_t> widths = {8, 16, 32, 64});

  std::vector<ag::Var> taps(const ag::Var& image) const;
  std::vector<Tensor> taps(const ImageTensor& image) const;
  /// Spatial mean of the final tap.
  std::vector<double> embed(const ImageTensor& image) const;
  std::size_t output_width() const { return widths_.back(); }
  std::size_t stages() const { return widths_.size(); }

 private:
  std::vector<std::size_t> widths_;
  ParamStore store_;
  std::vector<Conv> convs_;
};

double loss_pixel(const ImageTensor& pred, const ImageTensor& gt);
ag::Var loss_pixel(const ag::Var& pred, const ag::Var& gt);

double loss_perceptual(const ImageTensor& pred, const ImageTensor& gt, const PerceptualEmbedder& emb);
ag::Var loss_perceptual(const ag::Var& pred, const ag::Var& gt, const PerceptualEmbedder& emb);

/// sum_j lambda_f * L_pix(pred_j, gt) + lambda_p * L_perc(pred_j, gt).
double generator_loss(const std::vector<ImageTensor>& preds, const ImageTensor& gt,
                      const LossWeights& w, const PerceptualEmbedder& emb);
ag::Var generator_loss(const std::vector<ag::Var>& preds, const ag::Var& gt, const LossWeights& w,
                       const PerceptualEmbedder& emb);

/// l_w + l_g; throws NonFiniteLoss naming the offending term.
double total_objective(double l_w, double l_g);
ag::Var total_objective(const ag::Var& l_w, const ag::Var& l_g);

}  // namespace rmgn
