#include "rmgn/generator.hpp"

#include "rmgn/errors.hpp"

namespace rmgn {

using ag::Var;

void GeneratorConfig::validate() const {
  if (levels < 1) throw InvariantError("generator levels must be >= 1");
  if (widths.size() != static_cast<std::size_t>(levels + 1)) {
    throw InvariantError("generator widths must list e^0..e^K");
  }
  for (auto w : widths) {
    if (w == 0) throw InvariantError("generator widths must be positive");
  }
  if (units_per_block < 1) throw InvariantError("units_per_block must be >= 1");
}

std::size_t GeneratorConfig::decoder_width(int i) const {
  return widths.at(static_cast<std::size_t>(levels - i));
}

GeneratorParams GeneratorParams::init(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  GeneratorParams p;
  p.config = config;
  Rng rng(mix_seed(seed, 0x4745));
  const int k = config.levels;
  const auto& w = config.widths;
  for (auto* ext : {&p.person, &p.cloth}) {
    const std::string pre = ext == &p.person ? "gen.person" : "gen.cloth";
    for (int i = 0; i <= k; ++i) {
      const std::size_t cin = i == 0 ? 3 : w[static_cast<std::size_t>(i - 1)];
      ext->encoder.push_back(add_conv(p.store, pre + ".enc" + std::to_string(i), cin,
                                      w[static_cast<std::size_t>(i)], 3, i == 0 ? 1 : 2, rng));
    }
    for (int i = 0; i < k; ++i) {
      ext->decoder.push_back(add_conv(p.store, pre + ".dec" + std::to_string(i + 1),
                                      config.decoder_width(i), config.decoder_width(i + 1), 3, 1,
                                      rng));
    }
  }
  const std::size_t wk = w[static_cast<std::size_t>(k)];
  if (config.mask_fusion) {
    p.stem = add_conv(p.store, "gen.stem", 2 * wk, 1, 3, 1, rng, Init::kSmall);
  } else {
    p.stem = add_conv(p.store, "gen.stem", 2 * wk, wk, 1, 1, rng);
  }
  for (int l = 1; l <= k; ++l) {
    const std::string pre = "gen.block" + std::to_string(l);
    const std::size_t win = config.decoder_width(l - 1), wout = config.decoder_width(l);
    Block b;
    b.mask_fusion = config.mask_fusion;
    for (int u = 0; u < config.units_per_block; ++u) {
      const std::string up = pre + ".unit" + std::to_string(u);
      const std::size_t hw = u == 0 ? win : wout;
      Unit unit;
      unit.gamma_p = add_conv(p.store, up + ".gamma_p", wout, hw, 1, 1, rng, Init::kSmall, 1.0);
      unit.beta_p = add_conv(p.store, up + ".beta_p", wout, hw, 1, 1, rng, Init::kSmall);
      unit.gamma_i = add_conv(p.store, up + ".gamma_i", wout, hw, 1, 1, rng, Init::kSmall, 1.0);
      unit.beta_i = add_conv(p.store, up + ".beta_i", wout, hw, 1, 1, rng, Init::kSmall);
      if (config.mask_fusion) {
        unit.mask = add_conv(p.store, up + ".mask", 2 * hw, 1, 3, 1, rng, Init::kSmall);
      } else {
        unit.concat = add_conv(p.store, up + ".concat", 2 * hw, hw, 1, 1, rng);
      }
      unit.conv = add_conv(p.store, up + ".conv", hw, wout, 3, 1, rng);
      b.units.push_back(unit);
    }
    if (win != wout) {
      b.shortcut = add_conv(p.store, pre + ".shortcut", win, wout, 1, 1, rng);
      b.has_shortcut = true;
    }
    p.blocks.push_back(std::move(b));
  }
  p.head = add_conv(p.store, "gen.head", w[0], 3, 3, 1, rng);
  return p;
}

FeaturePyramid extract_features(Session& session, const GeneratorParams& params, const Var& image,
                                Branch branch) {
  const auto& cfg = params.config;
  require_chw(image.value(), "generator input");
  if (image.value().channels() != 3) throw ShapeError("generator input must be RGB");
  const auto& ext = branch == Branch::kPerson ? params.person : params.cloth;
  FeaturePyramid fp;
  Var cur = image;
  for (const Conv& c : ext.encoder) {
    cur = ag::silu(apply(session, c, cur));
    fp.encoder.push_back(cur);
  }
  const int k = cfg.levels;
  fp.decoder.push_back(fp.encoder.back());
  for (int i = 0; i < k; ++i) {
    const Var& skip = fp.encoder[static_cast<std::size_t>(k - i - 1)];
    Var up = ag::resize_nearest(fp.decoder.back(), skip.value().height(), skip.value().width());
    Var x = ag::silu(apply(session, ext.decoder[static_cast<std::size_t>(i)], up));
    fp.decoder.push_back(cfg.multilevel ? ag::add(x, skip) : x);
  }
  return fp;
}

FeaturePyramid extract_features(const ImageTensor& image, Branch branch,
                                const GeneratorParams& params) {
  Session s(std::as_const(params.store));
  return extract_features(s, params, Var::constant(image.tensor()), branch);
}

Var normalize(const Var& f) { return ag::instance_norm(f, kInstanceNormEps); }

Tensor normalize(const Tensor& f) { return normalize(Var::constant(f)).value(); }

Var modulate(Session& session, const Var& h, const Var& feat, const Conv& gamma, const Conv& beta) {
  const Var g = apply(session, gamma, feat);
  const Var b = apply(session, beta, feat);
  if (!g.value().same_shape(h.value())) {
    throw ShapeError("modulation maps " + shape_string(g.value().shape()) + " do not match " +
                     shape_string(h.value().shape()));
  }
  return ag::add(ag::mul(h, g), b);
}

Var compute_mask(Session& session, const Var& h_p, const Var& h_i, const Conv& mask) {
  require_same_shape(h_p.value(), h_i.value(), "compute_mask");
  return ag::sigmoid(apply(session, mask, ag::concat_channels(h_p, h_i)));
}

Var fuse(const Var& h_p, const Var& h_i, const Var& m) { return ag::convex_blend(h_p, h_i, m); }

Tensor fuse(const Tensor& h_p, const Tensor& h_i, const RegionalMask& m) {
  return fuse(Var::constant(h_p), Var::constant(h_i), Var::constant(m.values())).value();
}

BlockOutput rm_resblk(Session& session, const GeneratorParams::Block& block, const Var& f_hat,
                      const Var& feat_p, const Var& feat_i, const FusionProbe& probe) {
  require_same_shape(feat_p.value(), feat_i.value(), "rm_resblk features");
  if (f_hat.value().height() != feat_p.value().height() ||
      f_hat.value().width() != feat_p.value().width()) {
    throw ShapeError("rm_resblk: input " + shape_string(f_hat.value().shape()) +
                     " not aligned with features " + shape_string(feat_p.value().shape()));
  }
  BlockOutput out;
  Var x = f_hat;
  for (const auto& unit : block.units) {
    const Var h = normalize(x);
    const Var hp = modulate(session, h, feat_p, unit.gamma_p, unit.beta_p);
    const Var hi = modulate(session, h, feat_i, unit.gamma_i, unit.beta_i);
    Var fused;
    if (block.mask_fusion) {
      out.mask = compute_mask(session, hp, hi, unit.mask);
      fused = fuse(hp, hi, out.mask);
      if (probe) probe(hp.value(), hi.value(), out.mask.value(), fused.value());
    } else {
      fused = apply(session, unit.concat, ag::concat_channels(hp, hi));
    }
    x = ag::silu(apply(session, unit.conv, fused));
  }
  out.out = ag::add(x, block.has_shortcut ? apply(session, block.shortcut, f_hat) : f_hat);
  return out;
}

GeneratorGraph generate(Session& session, const GeneratorParams& params, const Var& warped,
                        const Var& person_like, const FusionProbe& probe) {
  require_same_shape(warped.value(), person_like.value(), "generate inputs");
  const auto fp = extract_features(session, params, person_like, Branch::kPerson);
  const auto fi = extract_features(session, params, warped, Branch::kCloth);
  const Var& ep = fp.encoder.back();
  const Var& ei = fi.encoder.back();
  Var f_hat;
  if (params.config.mask_fusion) {
    const Var m = compute_mask(session, ep, ei, params.stem);
    f_hat = fuse(ep, ei, m);
    if (probe) probe(ep.value(), ei.value(), m.value(), f_hat.value());
  } else {
    f_hat = apply(session, params.stem, ag::concat_channels(ep, ei));
  }
  GeneratorGraph g;
  for (int l = 1; l <= params.config.levels; ++l) {
    const auto idx = static_cast<std::size_t>(l);
    const Tensor& ref = fp.decoder[idx].value();
    const Var x = ag::resize_nearest(f_hat, ref.height(), ref.width());
    auto b = rm_resblk(session, params.blocks[idx - 1], x, fp.decoder[idx], fi.decoder[idx], probe);
    f_hat = b.out;
    if (b.mask.defined()) g.masks.push_back(b.mask);
  }
  g.image = ag::tanh(apply(session, params.head, f_hat));
  return g;
}

std::pair<ImageTensor, std::vector<RegionalMask>> generate(const WarpedCloth& warped,
                                                           const ImageTensor& person_like,
                                                           const GeneratorParams& params) {
  Session s(std::as_const(params.store));
  auto g = generate(s, params, Var::constant(warped.image().tensor()),
                    Var::constant(person_like.tensor()));
  std::vector<RegionalMask> masks;
  for (const auto& m : g.masks) masks.emplace_back(m.value());
  return {ImageTensor(g.image.value()), std::move(masks)};
}

}  // namespace rmgn
