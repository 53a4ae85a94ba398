#include "rmgn/warp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rmgn/binary_io.hpp"
#include "rmgn/errors.hpp"

namespace rmgn {

using ag::Var;

double charbonnier(double x) {
  return std::pow(x * x + kCharbonnierEps * kCharbonnierEps, kCharbonnierAlpha);
}

double charbonnier(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += charbonnier(v);
  return s;
}

FlowPyramid::FlowPyramid(std::vector<FlowField> flows) : flows_(std::move(flows)) {
  if (flows_.empty()) throw InvariantError("flow pyramid needs at least one level");
  for (std::size_t i = 0; i < flows_.size(); ++i) {
    if (flows_[i].scale_index() != static_cast<int>(i + 1)) {
      throw InvariantError("flow pyramid scales must run 1..L");
    }
    if (i > 0 && (flows_[i].height() != 2 * flows_[i - 1].height() ||
                  flows_[i].width() != 2 * flows_[i - 1].width())) {
      throw ShapeError("flow pyramid levels must double in size");
    }
  }
}

void WarpConfig::validate() const {
  if (levels < 1) throw InvariantError("warp levels must be >= 1");
  if (widths.size() != static_cast<std::size_t>(levels)) {
    throw InvariantError("warp widths must list one entry per level");
  }
  for (auto w : widths) {
    if (w == 0) throw InvariantError("warp widths must be positive");
  }
}

WarpParams WarpParams::init(const WarpConfig& config, std::uint64_t seed) {
  config.validate();
  WarpParams p;
  p.config = config;
  Rng rng(mix_seed(seed, 0x5741));
  const auto& w = config.widths;
  for (const char* branch : {"person", "cloth"}) {
    auto& enc = std::string(branch) == "person" ? p.person_encoder : p.cloth_encoder;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::size_t cin = i == 0 ? 3 : w[i - 1];
      enc.push_back(add_conv(p.store, "warp." + std::string(branch) + ".enc" + std::to_string(i),
                             cin, w[i], 3, i == 0 ? 1 : 2, rng));
    }
  }
  for (int s = 1; s <= config.levels; ++s) {
    const std::size_t c = w[static_cast<std::size_t>(config.levels - s)];
    const std::string pre = "warp.head" + std::to_string(s);
    Head h;
    h.a = add_conv(p.store, pre + ".a", 2 * c, c, 3, 1, rng);
    h.b = add_conv(p.store, pre + ".b", c, c, 3, 1, rng);
    h.out = add_conv(p.store, pre + ".out", c, 2, 3, 1, rng, Init::kZero);
    p.heads.push_back(h);
  }
  return p;
}

namespace {

std::vector<Var> encode(Session& s, const std::vector<Conv>& enc, const Var& x) {
  std::vector<Var> feats;
  Var cur = x;
  for (const Conv& c : enc) {
    cur = ag::silu(apply(s, c, cur));
    feats.push_back(cur);
  }
  return feats;
}

void require_pair(const Tensor& a, const Tensor& b, int levels) {
  require_chw(a, "person image");
  require_chw(b, "cloth image");
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("person " + shape_string(a.shape()) + " and cloth " + shape_string(b.shape()) +
                     " differ in size");
  }
  const std::size_t div = std::size_t{1} << (levels - 1);
  if (a.height() % div || a.width() % div) {
    throw ShapeError("image size " + shape_string(a.shape()) + " not divisible by " +
                     std::to_string(div));
  }
}

}  // namespace

std::vector<Var> predict_flow(Session& session, const WarpParams& params, const Var& person_like,
                              const Var& cloth) {
  const int levels = params.config.levels;
  require_pair(person_like.value(), cloth.value(), levels);
  const auto fp = encode(session, params.person_encoder, person_like);
  const auto fc = encode(session, params.cloth_encoder, cloth);
  std::vector<Var> flows;
  Var flow;
  for (int s = 1; s <= levels; ++s) {
    const auto idx = static_cast<std::size_t>(levels - s);
    const Var& p = fp[idx];
    const Var& c = fc[idx];
    if (s == 1) {
      flow = Var::constant(Tensor::chw(2, p.value().height(), p.value().width(), 0.0));
    } else {
      flow = ag::scale(ag::upsample_bilinear2(flow), 2.0);
    }
    const auto& head = params.heads[static_cast<std::size_t>(s - 1)];
    Var x = ag::concat_channels(p, ag::warp_bilinear(c, flow));
    x = ag::silu(apply(session, head.a, x));
    x = ag::silu(apply(session, head.b, x));
    flow = ag::add(flow, apply(session, head.out, x));
    flows.push_back(flow);
  }
  return flows;
}

FlowPyramid predict_flow(const ImageTensor& person_like, const ImageTensor& cloth,
                         const WarpParams& params) {
  Session s(std::as_const(params.store));
  return to_pyramid(predict_flow(s, params, Var::constant(person_like.tensor()),
                                 Var::constant(cloth.tensor())));
}

Tensor warp_validity(const Tensor& flow) {
  require_chw(flow, "flow");
  const Var ones = Var::constant(Tensor::chw(1, flow.height(), flow.width(), 1.0));
  Tensor v = ag::warp_bilinear(ones, Var::constant(flow)).value();
  for (double& x : v.values()) x = std::clamp(x, 0.0, 1.0);
  return v;
}

WarpedCloth warp(const ImageTensor& cloth, const FlowField& flow) {
  if (flow.height() != cloth.height() || flow.width() != cloth.width()) {
    throw ShapeError("warp: flow is " + std::to_string(flow.height()) + "x" +
                     std::to_string(flow.width()) + ", cloth is " + std::to_string(cloth.height()) +
                     "x" + std::to_string(cloth.width()));
  }
  Tensor out =
      ag::warp_bilinear(Var::constant(cloth.tensor()), Var::constant(flow.offsets())).value();
  return WarpedCloth(ImageTensor(std::move(out)), warp_validity(flow.offsets()));
}

Var loss_first_order(const Var& warped, const Var& gt) { return ag::mean_abs_diff(warped, gt); }

Var loss_second_order(const std::vector<Var>& pyramid) {
  if (pyramid.empty()) throw InvariantError("empty flow pyramid");
  Var total = ag::charbonnier_curvature(pyramid[0], kCharbonnierEps, kCharbonnierAlpha);
  for (std::size_t i = 1; i < pyramid.size(); ++i) {
    total = ag::add(total, ag::charbonnier_curvature(pyramid[i], kCharbonnierEps, kCharbonnierAlpha));
  }
  return total;
}

Var loss_distill(const std::vector<Var>& student, const std::vector<Var>& teacher) {
  if (student.size() != teacher.size() || student.empty()) {
    throw ShapeError("distillation needs pyramids with the same number of levels");
  }
  Var total = ag::mean_abs_diff(student[0], teacher[0]);
  for (std::size_t i = 1; i < student.size(); ++i) {
    total = ag::add(total, ag::mean_abs_diff(student[i], teacher[i]));
  }
  return total;
}

std::vector<Var> constant_flows(const FlowPyramid& pyramid) {
  std::vector<Var> out;
  for (const auto& f : pyramid.flows()) out.push_back(Var::constant(f.offsets()));
  return out;
}

FlowPyramid to_pyramid(const std::vector<Var>& flows) {
  std::vector<FlowField> out;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    out.emplace_back(flows[i].value(), static_cast<int>(i + 1));
  }
  return FlowPyramid(std::move(out));
}

double loss_first_order(const WarpedCloth& warped, const WarpedCloth& gt) {
  return loss_first_order(Var::constant(warped.image().tensor()), Var::constant(gt.image().tensor()))
      .value()
      .item();
}

double loss_second_order(const FlowPyramid& pyramid) {
  return loss_second_order(constant_flows(pyramid)).value().item();
}

double loss_distill(const FlowPyramid& student, const FlowPyramid& teacher) {
  return loss_distill(constant_flows(student), constant_flows(teacher)).value().item();
}

Var warp_terms(const std::vector<Var>& flows, const Var& warped, const Var& gt_image,
               const std::vector<Var>& teacher, const LossWeights& w) {
  Var l = ag::scale(loss_first_order(warped, gt_image), w.lambda_f);
  l = ag::add(l, ag::scale(loss_second_order(flows), w.lambda_sec));
  return ag::add(l, ag::scale(loss_distill(flows, teacher), w.lambda_d));
}

PostureAwareGraph posture_awareness_graph(Session& session, const WarpParams& params,
                                          const std::vector<ImageTensor>& fake_set,
                                          const ImageTensor& target, const WarpedCloth& gt,
                                          const FlowPyramid& teacher, const LossWeights& w) {
  if (fake_set.empty()) throw InvariantError("posture awareness loss needs at least one fake");
  w.validate();
  if (teacher.levels() != static_cast<std::size_t>(params.config.levels)) {
    throw ShapeError("teacher pyramid depth does not match the warp model");
  }
  const Var cloth = Var::constant(target.tensor());
  const Var gt_image = Var::constant(gt.image().tensor());
  const auto teacher_flows = constant_flows(teacher);
  PostureAwareGraph g;
  Var total;
  for (const auto& fake : fake_set) {
    const auto flows = predict_flow(session, params, Var::constant(fake.tensor()), cloth);
    Var warped = ag::warp_bilinear(cloth, flows.back());
    Var term = warp_terms(flows, warped, gt_image, teacher_flows, w);
    total = total.defined() ? ag::add(total, term) : term;
    g.warped.push_back(warped);
    g.finest_flows.push_back(flows.back());
  }
  g.loss = ag::scale(total, 1.0 / static_cast<double>(fake_set.size()));
  return g;
}

std::pair<double, std::vector<WarpedCloth>> posture_awareness_loss(
    const std::vector<ImageTensor>& fake_set, const ImageTensor& target, const WarpedCloth& gt,
    const FlowPyramid& teacher, const WarpParams& params, const LossWeights& w) {
  Session s(std::as_const(params.store));
  auto g = posture_awareness_graph(s, params, fake_set, target, gt, teacher, w);
  std::vector<WarpedCloth> warped;
  for (std::size_t j = 0; j < fake_set.size(); ++j) {
    warped.emplace_back(ImageTensor(g.warped[j].value()),
                        warp_validity(g.finest_flows[j].value()));
  }
  return {g.loss.value().item(), std::move(warped)};
}

namespace {
constexpr char kFlowMagic[4] = {'R', 'M', 'F', 'L'};
}

void save_flow(const FlowField& flow, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIOError("cannot write " + path.string());
  out.write(kFlowMagic, 4);
  io::write_u32(out, 1);
  io::write_u32(out, static_cast<std::uint32_t>(flow.height()));
  io::write_u32(out, static_cast<std::uint32_t>(flow.width()));
  for (double v : flow.offsets().values()) io::write_f32(out, static_cast<float>(v));
  if (!out) throw ImageIOError("failed writing " + path.string());
}

FlowField load_flow(const std::filesystem::path& path, int scale_index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIOError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFlowMagic, 4) != 0) {
    throw ImageIOError(path.string() + " is not a flow file");
  }
  if (io::read_u32(in) != 1) throw ImageIOError(path.string() + ": unsupported flow version");
  const std::size_t h = io::read_u32(in), w = io::read_u32(in);
  if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) {
    throw ImageIOError(path.string() + ": bad flow size");
  }
  Tensor t = Tensor::chw(2, h, w);
  for (double& v : t.values()) v = io::read_f32(in);
  return FlowField(std::move(t), scale_index);
}

}  // namespace rmgn
