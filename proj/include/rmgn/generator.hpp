#pragma once

// Regional-mask guided generator.
//
// Two independent extractors (person-like image, warped cloth) each run a
// strided encoder e^0..e^K followed by a decoder f^0..f^K that upsamples and
// adds the mirrored encoder level. Synthesis starts from the mask-blended coarsest
// encoder features and climbs the decoder levels with one residual block per
// level. Inside a block, each unit normalises its input, modulates it twice
// (once from each branch's features), and blends the two modulated maps with
// a learned single-channel mask.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rmgn/domain.hpp"
#include "rmgn/params.hpp"

namespace rmgn {

inline constexpr double kInstanceNormEps = 1e-5;

struct GeneratorConfig {
  int levels = 4;  // K
  /// Encoder widths e^0..e^K; e^0 runs at full resolution.
  std::vector<std::size_t> widths{8, 16, 32, 64, 128};
  int units_per_block = 2;
  bool multilevel = true;    // decoder skip sums
  bool mask_fusion = true;   // false: concatenate both branches and mix with a 1x1 conv

  void validate() const;
  /// Width of decoder level f^i.
  std::size_t decoder_width(int i) const;
};

enum class Branch { kPerson, kCloth };

struct GeneratorParams {
  GeneratorConfig config;
  ParamStore store;

  struct Extractor {
    std::vector<Conv> encoder;  // e^0..e^K
    std::vector<Conv> decoder;  // produces f^1..f^K
  };
  struct Unit {
    Conv gamma_p, beta_p, gamma_i, beta_i;
    Conv mask;    // 3x3 over h_P || h_I, one output channel
    Conv concat;  // used instead of mask when mask fusion is off
    Conv conv;    // 3x3 after fusion
  };
  struct Block {
    std::vector<Unit> units;
    Conv shortcut;
    bool has_shortcut = false;
    bool mask_fusion = true;
  };

  Extractor person, cloth;
  /// Coarsest fusion of e_P^K and e_I^K: a 3x3 mask conv, or a 1x1 mix conv
  /// when mask fusion is off.
  Conv stem;
  std::vector<Block> blocks; // one per decoder level f^1..f^K
  Conv head;

  static GeneratorParams init(const GeneratorConfig& config, std::uint64_t seed);
};

struct FeaturePyramid {
  std::vector<ag::Var> encoder;  // e^0..e^K
  std::vector<ag::Var> decoder;  // f^0..f^K, f^0 = e^K
};

FeaturePyramid extract_features(Session& session, const GeneratorParams& params,
                                const ag::Var& image, Branch branch);
FeaturePyramid extract_features(const ImageTensor& image, Branch branch,
                                const GeneratorParams& params);

/// Per-channel instance normalisation with eps 1e-5 and no affine.
ag::Var normalize(const ag::Var& f);
Tensor normalize(const Tensor& f);

/// h * gamma(feat) + beta(feat) with 1x1 convs.
ag::Var modulate(Session& session, const ag::Var& h, const ag::Var& feat, const Conv& gamma,
                 const Conv& beta);

ag::Var compute_mask(Session& session, const ag::Var& h_p, const ag::Var& h_i, const Conv& mask);

/// (1 - m) * h_p + m * h_i.
ag::Var fuse(const ag::Var& h_p, const ag::Var& h_i, const ag::Var& m);
Tensor fuse(const Tensor& h_p, const Tensor& h_i, const RegionalMask& m);

/// Observes every (h_P, h_I, M, output) of a fusion call; for tests.
using FusionProbe = std::function<void(const Tensor&, const Tensor&, const Tensor&, const Tensor&)>;

struct BlockOutput {
  ag::Var out;
  ag::Var mask;  // last unit's mask; undefined when mask fusion is off
};

BlockOutput rm_resblk(Session& session, const GeneratorParams::Block& block,
                      const ag::Var& f_hat, const ag::Var& feat_p, const ag::Var& feat_i,
                      const FusionProbe& probe = {});

struct GeneratorGraph {
  ag::Var image;
  std::vector<ag::Var> masks;  // coarse to fine
};

GeneratorGraph generate(Session& session, const GeneratorParams& params, const ag::Var& warped,
                        const ag::Var& person_like, const FusionProbe& probe = {});

std::pair<ImageTensor, std::vector<RegionalMask>> generate(const WarpedCloth& warped,
                                                           const ImageTensor& person_like,
                                                           const GeneratorParams& params);

}  // namespace rmgn
