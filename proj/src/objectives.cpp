#include "rmgn/objectives.hpp"

#include <cmath>

#include "rmgn/errors.hpp"

namespace rmgn {

using ag::Var;

PerceptualEmbedder::PerceptualEmbedder(std::uint64_t seed, std::vector<std::size_t> widths)
    : widths_(std::move(widths)) {
  if (widths_.empty()) throw InvariantError("embedder needs at least one stage");
  Rng rng(mix_seed(seed, 0x454d));
  std::size_t cin = 3;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    convs_.push_back(add_conv(store_, "emb" + std::to_string(i), cin, widths_[i], 3, 1, rng));
    cin = widths_[i];
  }
}

std::vector<Var> PerceptualEmbedder::taps(const Var& image) const {
  Session s(store_);
  std::vector<Var> out;
  Var x = image;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = apply(s, convs_[i], x);
    if (i > 0) x = ag::silu(x);
    if (x.value().height() % 2 == 0 && x.value().width() % 2 == 0) x = ag::avgpool2(x);
    out.push_back(x);
  }
  return out;
}

std::vector<Tensor> PerceptualEmbedder::taps(const ImageTensor& image) const {
  std::vector<Tensor> out;
  for (const auto& v : taps(Var::constant(image.tensor()))) out.push_back(v.value());
  return out;
}

std::vector<double> PerceptualEmbedder::embed(const ImageTensor& image) const {
  const Tensor m = ag::spatial_mean(taps(Var::constant(image.tensor())).back()).value();
  return {m.storage().begin(), m.storage().end()};
}

Var loss_pixel(const Var& pred, const Var& gt) { return ag::mean_abs_diff(pred, gt); }

double loss_pixel(const ImageTensor& pred, const ImageTensor& gt) {
  return loss_pixel(Var::constant(pred.tensor()), Var::constant(gt.tensor())).value().item();
}

Var loss_perceptual(const Var& pred, const Var& gt, const PerceptualEmbedder& emb) {
  require_same_shape(pred.value(), gt.value(), "perceptual loss");
  const auto a = emb.taps(pred);
  const auto b = emb.taps(gt);
  Var total = ag::mean_abs_diff(a[0], b[0]);
  for (std::size_t m = 1; m < a.size(); ++m) total = ag::add(total, ag::mean_abs_diff(a[m], b[m]));
  return total;
}

double loss_perceptual(const ImageTensor& pred, const ImageTensor& gt, const PerceptualEmbedder& emb) {
  return loss_perceptual(Var::constant(pred.tensor()), Var::constant(gt.tensor()), emb)
      .value()
      .item();
}

Var generator_loss(const std::vector<Var>& preds, const Var& gt, const LossWeights& w,
                   const PerceptualEmbedder& emb) {
  if (preds.empty()) throw InvariantError("generator loss needs at least one prediction");
  w.validate();
  Var total;
  for (const auto& p : preds) {
    Var term = ag::scale(loss_pixel(p, gt), w.lambda_f);
    if (w.lambda_p != 0.0) term = ag::add(term, ag::scale(loss_perceptual(p, gt, emb), w.lambda_p));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

double generator_loss(const std::vector<ImageTensor>& preds, const ImageTensor& gt,
                      const LossWeights& w, const PerceptualEmbedder& emb) {
  std::vector<Var> vs;
  for (const auto& p : preds) vs.push_back(Var::constant(p.tensor()));
  return generator_loss(vs, Var::constant(gt.tensor()), w, emb).value().item();
}

namespace {

void require_finite(double l_w, double l_g) {
  if (!std::isfinite(l_w) || !std::isfinite(l_g)) {
    throw NonFiniteLoss("non-finite objective: L_W = " + std::to_string(l_w) +
                        ", L_G = " + std::to_string(l_g));
  }
}

}  // namespace

double total_objective(double l_w, double l_g) {
  require_finite(l_w, l_g);
  return l_w + l_g;
}

Var total_objective(const Var& l_w, const Var& l_g) {
  require_finite(l_w.value().item(), l_g.value().item());
  return ag::add(l_w, l_g);
}

}  // namespace rmgn
