#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rmgn/atelier.hpp"
#include "rmgn/errors.hpp"
#include "rmgn/warp.hpp"
#include "support.hpp"

using namespace rmgn;
using rmgn::ag::Var;
using rmgn::testing::random_tensor;

namespace {

Tensor constant_flow(std::size_t h, std::size_t w, double u, double v) {
  Tensor f = Tensor::chw(2, h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    f[i] = u;
    f[h * w + i] = v;
  }
  return f;
}

Tensor affine_flow(std::size_t h, std::size_t w, const double (&cu)[3], const double (&cv)[3]) {
  Tensor f = Tensor::chw(2, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      f.at(0, y, x) = cu[0] * double(x) + cu[1] * double(y) + cu[2];
      f.at(1, y, x) = cv[0] * double(x) + cv[1] * double(y) + cv[2];
    }
  }
  return f;
}

FlowPyramid pyramid_of(const std::vector<Tensor>& flows) {
  std::vector<FlowField> out;
  for (std::size_t i = 0; i < flows.size(); ++i) out.emplace_back(flows[i], int(i) + 1);
  return FlowPyramid(out);
}

// A warp model whose flow heads are no longer zero, so flows depend on input.
WarpParams perturbed_warp(std::uint64_t seed, WarpConfig config = {}) {
  WarpParams p = WarpParams::init(config, seed);
  std::mt19937_64 rng(seed + 100);
  for (const auto& head : p.heads) {
    Tensor& w = p.store[head.out.weight].value;
    w = random_tensor(w.shape(), rng, -0.05, 0.05);
  }
  return p;
}

// Smallest |second difference| over all channels and directions.
double min_curvature(const Tensor& f) {
  const long h = long(f.height()), w = long(f.width());
  const int dirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  double m = 1e300;
  for (std::size_t c = 0; c < 2; ++c)
    for (const auto& d : dirs)
      for (long y = d[0]; y + d[0] < h; ++y)
        for (long x = 0; x < w; ++x) {
          const long xa = x - d[1], xb = x + d[1];
          if (xa < 0 || xa >= w || xb < 0 || xb >= w) continue;
          m = std::min(m, std::abs(f.at(c, y - d[0], xa) + f.at(c, y + d[0], xb) - 2 * f.at(c, y, x)));
        }
  return m;
}

}  // namespace

TEST_CASE("charbonnier values") {
  CHECK(charbonnier(0.0) == doctest::Approx(1.995e-3).epsilon(1e-3));
  CHECK(charbonnier(0.0) == doctest::Approx(std::pow(10.0, -2.7)).epsilon(1e-12));
  CHECK(charbonnier(1.0) == doctest::Approx(1.0000004).epsilon(1e-7));
  for (double x : {0.3, 1.7, 42.0}) CHECK(charbonnier(x) == charbonnier(-x));
  const Tensor t({3}, std::vector<double>{0.0, 1.0, -2.0});
  CHECK(charbonnier(t) == doctest::Approx(charbonnier(0.0) + charbonnier(1.0) + charbonnier(2.0)));
}

TEST_CASE("predict_flow: identity at init, pyramid shapes, determinism") {
  const WarpParams params = WarpParams::init(WarpConfig{}, 3);
  std::mt19937_64 rng(1);
  const ImageTensor a(random_tensor({3, 64, 48}, rng));
  const ImageTensor b(random_tensor({3, 64, 48}, rng));
  const FlowPyramid p = predict_flow(a, b, params);
  REQUIRE(p.levels() == 4);
  const std::size_t dims[4][2] = {{8, 6}, {16, 12}, {32, 24}, {64, 48}};
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(p[s].height() == dims[s][0]);
    CHECK(p[s].width() == dims[s][1]);
    CHECK(p[s].offsets().max_abs() == 0.0);
  }
  const WarpParams moved = perturbed_warp(3);
  const FlowPyramid q1 = predict_flow(a, b, moved);
  const FlowPyramid q2 = predict_flow(a, b, moved);
  CHECK(q1.finest().offsets().max_abs() > 0.0);
  for (std::size_t s = 0; s < 4; ++s) CHECK(q1[s].offsets() == q2[s].offsets());

  CHECK_THROWS_AS(predict_flow(a, ImageTensor(random_tensor({3, 32, 24}, rng)), params), ShapeError);
  CHECK_THROWS_AS(predict_flow(ImageTensor(random_tensor({3, 60, 48}, rng)),
                               ImageTensor(random_tensor({3, 60, 48}, rng)), params),
                  ShapeError);
}

TEST_CASE("warp: identity, integer shifts and half-integer ramp") {
  std::mt19937_64 rng(2);
  const ImageTensor img(random_tensor({3, 9, 7}, rng));
  const WarpedCloth id = warp(img, FlowField(Tensor::chw(2, 9, 7), 1));
  CHECK(max_abs_diff(id.image().tensor(), img.tensor()) <= 1e-6);
  for (double v : id.validity().values()) CHECK(v == 1.0);

  const WarpedCloth right = warp(img, FlowField(constant_flow(9, 7, 1.0, 0.0), 1));
  CHECK(right.image().tensor() == testing::shift_ref(img.tensor(), 1, 0));
  for (std::size_t y = 0; y < 9; ++y) {
    CHECK(right.validity().at(0, y, 6) < 1.0);
    CHECK(right.validity().at(0, y, 0) == 1.0);
  }

  for (int trial = 0; trial < 100; ++trial) {
    const ImageTensor im(random_tensor({3, 6, 5}, rng));
    const long dx = long(rng() % 7) - 3, dy = long(rng() % 7) - 3;
    const WarpedCloth w = warp(im, FlowField(constant_flow(6, 5, double(dx), double(dy)), 1));
    CHECK(w.image().tensor() == testing::shift_ref(im.tensor(), dx, dy));
  }

  Tensor ramp = Tensor::chw(1, 4, 8);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 8; ++x) ramp.at(0, y, x) = -1.0 + 0.25 * double(x);
  const WarpedCloth half = warp(ImageTensor(ramp), FlowField(constant_flow(4, 8, 0.5, 0.0), 1));
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x + 1 < 8; ++x) {
      CHECK(std::abs(half.image().at(0, y, x) - (ramp.at(0, y, x) + ramp.at(0, y, x + 1)) / 2) <= 1e-6);
    }
    CHECK(half.validity().at(0, y, 7) == doctest::Approx(0.5));
  }
}

TEST_CASE("validity is one wherever every tap is in bounds") {
  std::mt19937_64 rng(3);
  const Tensor flow = random_tensor({2, 8, 8}, rng, -2.5, 2.5);
  const Tensor v = warp_validity(flow);
  for (long y = 0; y < 8; ++y) {
    for (long x = 0; x < 8; ++x) {
      const double sx = double(x) + flow.at(0, y, x), sy = double(y) + flow.at(1, y, x);
      const bool inside = std::floor(sx) >= 0 && std::floor(sx) + 1 <= 7 && std::floor(sy) >= 0 &&
                          std::floor(sy) + 1 <= 7;
      if (inside) CHECK(v.at(0, y, x) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(v.at(0, y, x) >= 0.0);
      CHECK(v.at(0, y, x) <= 1.0);
    }
  }
}

TEST_CASE("first-order loss") {
  std::mt19937_64 rng(4);
  const ImageTensor a(random_tensor({3, 4, 4}, rng));
  const ImageTensor b(random_tensor({3, 4, 4}, rng));
  const Tensor ones = Tensor::chw(1, 4, 4, 1.0);
  const WarpedCloth wa(a, ones), wb(b, ones);
  CHECK(loss_first_order(wa, wa) == 0.0);
  CHECK(loss_first_order(wa, wb) == loss_first_order(wb, wa));
  CHECK(loss_first_order(WarpedCloth(ImageTensor(Tensor::chw(3, 4, 4, 0.25)), ones),
                         WarpedCloth(ImageTensor(Tensor::chw(3, 4, 4, -0.25)), ones)) ==
        doctest::Approx(0.5));
  CHECK_THROWS_AS(loss_first_order(wa, WarpedCloth(ImageTensor(Tensor::chw(3, 4, 2)),
                                                   Tensor::chw(1, 4, 2, 1.0))),
                  ShapeError);
}

TEST_CASE("second-order loss equals the brute-force loop on all fields up to 5x5") {
  std::mt19937_64 rng(5);
  for (std::size_t h = 1; h <= 5; ++h) {
    for (std::size_t w = 1; w <= 5; ++w) {
      for (int rep = 0; rep < 4; ++rep) {
        const Tensor f = random_tensor({2, h, w}, rng, -4, 4);
        CHECK(std::abs(loss_second_order(pyramid_of({f})) - testing::second_order_ref(f)) <= 1e-10);
      }
    }
  }
  Tensor spike = Tensor::chw(2, 3, 3);
  spike.at(0, 1, 1) = 3.0;
  spike.at(1, 1, 1) = -1.0;
  CHECK(std::abs(loss_second_order(pyramid_of({spike})) - testing::second_order_ref(spike)) <= 1e-10);
}

TEST_CASE("second-order loss on affine fields is the Charbonnier floor") {
  const double cu[3] = {0.25, -0.5, 1.0}, cv[3] = {-0.125, 0.75, -2.0};
  double total = 0;
  std::size_t terms = 0;
  std::vector<Tensor> flows;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t h = 8u << s, w = 6u << s;
    flows.push_back(affine_flow(h, w, cu, cv));
    terms += testing::second_order_terms(2, long(h), long(w));
  }
  total = loss_second_order(pyramid_of(flows));
  const double floor = double(terms) * charbonnier(0.0);
  CHECK(std::abs(total - floor) <= 1e-8 * floor);
  // Term count at a single 3x3 scale: 3 + 3 + 1 + 1 per channel.
  CHECK(testing::second_order_terms(2, 3, 3) == 16);
}

TEST_CASE("doubling a flow never lowers the second-order loss") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor f = random_tensor({2, 5, 4}, rng, -2, 2);
    const double base = loss_second_order(pyramid_of({f}));
    f *= 2.0;
    CHECK(loss_second_order(pyramid_of({f})) >= base);
  }
}

TEST_CASE("distillation loss") {
  std::mt19937_64 rng(7);
  std::vector<Tensor> zeros, ones, a, b, c;
  for (std::size_t s = 0; s < 3; ++s) {
    zeros.push_back(Tensor::chw(2, 4u << s, 3u << s, 0.0));
    ones.push_back(Tensor::chw(2, 4u << s, 3u << s, 1.0));
    a.push_back(random_tensor({2, 4u << s, 3u << s}, rng));
    b.push_back(random_tensor({2, 4u << s, 3u << s}, rng));
    c.push_back(random_tensor({2, 4u << s, 3u << s}, rng));
  }
  CHECK(loss_distill(pyramid_of(a), pyramid_of(a)) == 0.0);
  CHECK(loss_distill(pyramid_of(ones), pyramid_of(zeros)) == doctest::Approx(3.0));
  const double ab = loss_distill(pyramid_of(a), pyramid_of(b));
  const double bc = loss_distill(pyramid_of(b), pyramid_of(c));
  const double ac = loss_distill(pyramid_of(a), pyramid_of(c));
  CHECK(ac <= ab + bc + 1e-12);
  CHECK_THROWS_AS(loss_distill(pyramid_of(a), pyramid_of({a[0]})), ShapeError);
}

TEST_CASE("warp loss examples") {
  const Dataset ds = generate_dataset(2, 9);
  const PersonRender r = render_person(ds.items[0].person);
  const WarpedCloth gt = gt_warped_cloth(r.image, r.cloth_region);
  const FlowPyramid teacher(teacher_flow_pyramid(r.geometry, 4));
  std::size_t terms = 0;
  for (const auto& f : teacher.flows()) terms += testing::second_order_terms(2, long(f.height()), long(f.width()));
  LossWeights w;
  w.lambda_f = 1.0;
  w.lambda_sec = 0.01;
  w.lambda_d = 0.25;

  // Student flows equal to an affine teacher and a perfect warp leave only
  // the curvature floor.
  const double cu[3] = {0.1, 0.0, -1.0}, cv[3] = {0.0, -0.1, 2.0};
  std::vector<Var> affine;
  for (const auto& f : teacher.flows()) affine.push_back(Var::constant(affine_flow(f.height(), f.width(), cu, cv)));
  const Var gt_image = Var::constant(gt.image().tensor());
  const double only = warp_terms(affine, gt_image, gt_image, affine, w).value().item();
  CHECK(only == doctest::Approx(0.01 * double(terms) * charbonnier(0.0)).epsilon(1e-10));

  const WarpParams params = perturbed_warp(1);
  const ImageTensor target = render_cloth(ds.items[0].target);
  std::vector<ImageTensor> fakes;
  for (std::size_t k = 0; k < 3; ++k) {
    fakes.push_back(oracle_teacher(r.image, r.cloth_region, r.geometry, render_cloth(ds.items[0].pool[k])));
  }
  const LossWeights zero{0, 0, 0, 0};
  CHECK(posture_awareness_loss(fakes, target, gt, teacher, params, zero).first == 0.0);

  const auto [base, warped] = posture_awareness_loss(fakes, target, gt, teacher, params, w);
  CHECK(warped.size() == 3);
  CHECK(base > 0.0);
  std::vector<ImageTensor> twice;
  for (const auto& f : fakes) {
    twice.push_back(f);
    twice.push_back(f);
  }
  CHECK(posture_awareness_loss(twice, target, gt, teacher, params, w).first ==
        doctest::Approx(base).epsilon(1e-12));
  std::vector<ImageTensor> perm = {fakes[2], fakes[0], fakes[1]};
  CHECK(posture_awareness_loss(perm, target, gt, teacher, params, w).first ==
        doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS(posture_awareness_loss({}, target, gt, teacher, params, w));
}

TEST_CASE("warp loss gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 40);
    Tensor flow = random_tensor({2, 4, 5}, rng, -1.3, 1.3);
    // Charbonnier curvature is sharp within ~eps of zero, where a 1e-3
    // stencil cannot resolve it; redraw until every difference is clear of it.
    while (min_curvature(flow) < 0.05) flow = random_tensor({2, 4, 5}, rng, -1.3, 1.3);
    for (double& v : flow.values())
      if (std::abs(v - std::round(v)) < 0.05) v += 0.1;
    const Tensor teacher = random_tensor({2, 4, 5}, rng, -1, 1);
    Tensor img = random_tensor({3, 4, 5}, rng);
    // Kept away from the images so no |a - b| kink sits inside the stencil.
    const Tensor gt = random_tensor({3, 4, 5}, rng, 2.0, 3.0);

    auto check_flow_grad = [&](const std::function<Var(const Var&)>& loss) {
      const Var leaf = Var::leaf(flow);
      loss(leaf).backward();
      const Tensor g = leaf.grad();
      for (std::size_t i = 0; i < flow.size(); ++i) {
        const double numeric = testing::central_difference(
            [&] { return loss(Var::constant(flow)).value().item(); }, flow[i], 1e-3);
        INFO("entry " << i << " analytic " << g[i] << " numeric " << numeric);
        CHECK(testing::relative_error(g[i], numeric, 1e-7) < 1e-3);
      }
    };
    check_flow_grad([&](const Var& f) { return loss_second_order(std::vector<Var>{f}); });
    check_flow_grad([&](const Var& f) {
      return loss_distill(std::vector<Var>{f}, std::vector<Var>{Var::constant(teacher)});
    });
    check_flow_grad([&](const Var& f) {
      return loss_first_order(ag::warp_bilinear(Var::constant(img), f), Var::constant(gt));
    });
    // Through the cloth values as well.
    const Var leaf = Var::leaf(img);
    loss_first_order(leaf, Var::constant(gt)).backward();
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double numeric = testing::central_difference(
          [&] { return loss_first_order(Var::constant(img), Var::constant(gt)).value().item(); },
          img[i], 1e-3);
      CHECK(testing::relative_error(leaf.grad()[i], numeric, 1e-7) < 1e-3);
    }
  }
  // A 1x3 field has one second difference per channel: f0 + f2 - 2 f1.
  for (double x : {-2.0, -0.01, 0.0005, 0.7}) {
    const double h = 1e-3 * std::max(1e-3, std::abs(x));
    double xx = x;
    const double numeric = testing::central_difference([&] { return charbonnier(xx); }, xx, h);
    Tensor t = Tensor::chw(2, 1, 3);
    t.at(0, 0, 1) = -x / 2.0;
    const Var tv = Var::leaf(t);
    ag::charbonnier_curvature(tv, kCharbonnierEps, kCharbonnierAlpha).backward();
    CHECK(testing::relative_error(tv.grad().at(0, 0, 1), -2.0 * numeric, 1e-9) < 1e-3);
  }
}

TEST_CASE("flow files round-trip through float32") {
  const auto dir = std::filesystem::temp_directory_path() / "rmgn_test_flow";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(8);
  Tensor f = random_tensor({2, 5, 3}, rng, -4, 4);
  for (double& v : f.values()) v = double(float(v));
  save_flow(FlowField(f, 2), dir / "f.bin");
  CHECK(std::filesystem::file_size(dir / "f.bin") == 16 + 2 * 5 * 3 * 4);
  const FlowField back = load_flow(dir / "f.bin", 2);
  CHECK(back.offsets() == f);
  CHECK(back.scale_index() == 2);
  std::ifstream in(dir / "f.bin", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "RMFL");
  {
    std::ofstream(dir / "bad.bin") << "XXXXjunk";
  }
  CHECK_THROWS(load_flow(dir / "bad.bin"));
}
