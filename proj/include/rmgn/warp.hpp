#pragma once

// Multi-scale appearance-flow estimator and the warp objective.
//
// Two convolutional encoders (one for the person-like image, one for the
// cloth) produce feature maps at L scales. Starting from the coarsest scale,
// a small head looks at the person features next to the cloth features
// warped by the current flow and predicts a residual flow; the result is
// upsampled (values doubled) and refined at the next scale.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "rmgn/domain.hpp"
#include "rmgn/params.hpp"

namespace rmgn {

inline constexpr double kCharbonnierEps = 1e-3;
inline constexpr double kCharbonnierAlpha = 0.45;

/// (x^2 + eps^2)^alpha.
double charbonnier(double x);
/// Elementwise charbonnier, summed.
double charbonnier(const Tensor& x);

/// Flows at scales 1..L, coarse to fine; each level doubles both dims.
class FlowPyramid {
 public:
  explicit FlowPyramid(std::vector<FlowField> flows);

  const std::vector<FlowField>& flows() const { return flows_; }
  std::size_t levels() const { return flows_.size(); }
  const FlowField& finest() const { return flows_.back(); }
  const FlowField& operator[](std::size_t i) const { return flows_[i]; }

 private:
  std::vector<FlowField> flows_;
};

struct WarpConfig {
  int levels = 4;
  /// Encoder width per scale, finest first; size must equal `levels`.
  std::vector<std::size_t> widths{8, 16, 24, 32};

  void validate() const;
};

struct WarpParams {
  WarpConfig config;
  ParamStore store;

  struct Head {
    Conv a, b, out;
  };
  std::vector<Conv> person_encoder;  // finest first
  std::vector<Conv> cloth_encoder;
  std::vector<Head> heads;  // coarse to fine, one per scale

  /// Random encoders and hidden layers; flow output layers start at zero, so
  /// a fresh model predicts the identity warp.
  static WarpParams init(const WarpConfig& config, std::uint64_t seed);
};

/// Graph form: flows coarse to fine as Vars in pixels of their own scale.
std::vector<ag::Var> predict_flow(Session& session, const WarpParams& params,
                                  const ag::Var& person_like, const ag::Var& cloth);

FlowPyramid predict_flow(const ImageTensor& person_like, const ImageTensor& cloth,
                         const WarpParams& params);

/// Bilinear sampling at (x + u, y + v); taps outside the cloth read zero and
/// lower the validity of that pixel.
WarpedCloth warp(const ImageTensor& cloth, const FlowField& flow);

/// Fraction of bilinear weight landing inside an h x w image for `flow`.
Tensor warp_validity(const Tensor& flow);

double loss_first_order(const WarpedCloth& warped, const WarpedCloth& gt);
double loss_second_order(const FlowPyramid& pyramid);
double loss_distill(const FlowPyramid& student, const FlowPyramid& teacher);

ag::Var loss_first_order(const ag::Var& warped, const ag::Var& gt);
ag::Var loss_second_order(const std::vector<ag::Var>& pyramid);
ag::Var loss_distill(const std::vector<ag::Var>& student, const std::vector<ag::Var>& teacher);

/// Weighted warp loss of one fake: lambda_f * L_f + lambda_sec * L_sec +
/// lambda_d * L_d.
ag::Var warp_terms(const std::vector<ag::Var>& flows, const ag::Var& warped,
                   const ag::Var& gt_image, const std::vector<ag::Var>& teacher,
                   const LossWeights& w);

struct PostureAwareGraph {
  ag::Var loss;
  std::vector<ag::Var> warped;  // one warped target cloth per fake
  std::vector<ag::Var> finest_flows;
};

/// Mean of warp_terms over the fake set; every fake warps the same target.
PostureAwareGraph posture_awareness_graph(Session& session, const WarpParams& params,
                                          const std::vector<ImageTensor>& fake_set,
                                          const ImageTensor& target, const WarpedCloth& gt,
                                          const FlowPyramid& teacher, const LossWeights& w);

std::pair<double, std::vector<WarpedCloth>> posture_awareness_loss(
    const std::vector<ImageTensor>& fake_set, const ImageTensor& target, const WarpedCloth& gt,
    const FlowPyramid& teacher, const WarpParams& params, const LossWeights& w);

std::vector<ag::Var> constant_flows(const FlowPyramid& pyramid);
FlowPyramid to_pyramid(const std::vector<ag::Var>& flows);

/// Flow export: "RMFL" magic, u32 version, u32 height, u32 width, then
/// float32 u-plane followed by v-plane.
void save_flow(const FlowField& flow, const std::filesystem::path& path);
FlowField load_flow(const std::filesystem::path& path, int scale_index = 1);

}  // namespace rmgn
