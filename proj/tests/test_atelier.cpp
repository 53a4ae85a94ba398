#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "rmgn/atelier.hpp"
#include "rmgn/errors.hpp"
#include "rmgn/params.hpp"
#include "rmgn/warp.hpp"

using namespace rmgn;

namespace {

PersonSpec canonical_person(SleeveLength sleeve = SleeveLength::kShort, double scale = 1.0) {
  PersonSpec p;
  p.seed = 11;
  p.skin = {0.6, 0.3, 0.1};
  p.background = {0.2, 0.25, 0.3};
  p.body_scale = scale;
  p.worn.seed = 5;
  p.worn.base_color = {0.8, -0.6, -0.6};
  p.worn.pattern = Pattern::kStripes;
  p.worn.sleeve = sleeve;
  p.worn.noise = 0.04;
  return p;
}

double area(const Tensor& mask) { return mask.sum(); }

// Own bilinear tap with zero outside, for oracles that must not reuse
// sample_bilinear.
double bilinear_ref(const Tensor& img, std::size_t c, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  double s = 0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const long xi = static_cast<long>(fx) + dx, yi = static_cast<long>(fy) + dy;
      const double w = (dx ? x - fx : 1 - (x - fx)) * (dy ? y - fy : 1 - (y - fy));
      if (xi < 0 || yi < 0 || xi >= static_cast<long>(img.width()) ||
          yi >= static_cast<long>(img.height()))
        continue;
      s += w * img.at(c, static_cast<std::size_t>(yi), static_cast<std::size_t>(xi));
    }
  }
  return s;
}

}  // namespace

TEST_CASE("render_person is deterministic") {
  const PersonSpec spec = generate_dataset(1, 3).items[0].person;
  const PersonRender a = render_person(spec);
  const PersonRender b = render_person(spec);
  CHECK(a.image == b.image);
  CHECK(a.cloth_region == b.cloth_region);
}

TEST_CASE("canonical posture gives an axis-aligned torso with straight sleeves") {
  // Pixel rectangles of the 48x64 layout, inclusive: torso columns 15..32 and
  // rows 19..41, sleeves columns 10..14 and 33..37 from row 19 down to row 25
  // (short) or 35 (long).
  for (auto sleeve : {SleeveLength::kShort, SleeveLength::kLong}) {
    const std::size_t last_sleeve_row = sleeve == SleeveLength::kShort ? 25 : 35;
    const PersonRender r = render_person(canonical_person(sleeve));
    for (std::size_t y = 0; y < 64; ++y) {
      for (std::size_t x = 0; x < 48; ++x) {
        const bool torso = x >= 15 && x <= 32 && y >= 19 && y <= 41;
        const bool arm = ((x >= 10 && x <= 14) || (x >= 33 && x <= 37)) && y >= 19 &&
                         y <= last_sleeve_row;
        INFO("pixel " << x << "," << y);
        CHECK(r.cloth_region.at(0, y, x) == ((torso || arm) ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("body_scale 1.2 grows the cloth area by about 1.44") {
  const double a10 = area(render_person(canonical_person(SleeveLength::kLong, 1.0)).cloth_region);
  const double a12 = area(render_person(canonical_person(SleeveLength::kLong, 1.2)).cloth_region);
  CHECK(a12 / a10 == doctest::Approx(1.44).epsilon(0.05));
}

TEST_CASE("render_cloth: solid colour, logo position, seed-keyed texture") {
  ClothSpec solid;
  solid.base_color = {0.9, -0.8, -0.8};
  solid.noise = 0.0;
  const ImageTensor s = render_cloth(solid);
  std::size_t cloth_pixels = 0;
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 48; ++x) {
      const bool any = s.at(0, y, x) != 0.0 || s.at(1, y, x) != 0.0 || s.at(2, y, x) != 0.0;
      if (!any) continue;
      ++cloth_pixels;
      CHECK(s.at(0, y, x) == 0.9);
      CHECK(s.at(1, y, x) == -0.8);
      CHECK(s.at(2, y, x) == -0.8);
    }
  }
  CHECK(cloth_pixels == 18 * 23 + 2 * 5 * 7);

  ClothSpec logo = solid;
  logo.pattern = Pattern::kLogoPatch;
  const ImageTensor l = render_cloth(logo);
  CHECK(l.at(0, 28, 24) != 0.9);  // inside the patch
  CHECK(l.at(0, 35, 18) == 0.9);  // plain torso
  CHECK(l.at(0, 10, 24) == 0.0);  // background

  ClothSpec a = solid;
  a.noise = 0.05;
  a.seed = 1;
  ClothSpec b = a;
  b.seed = 2;
  const ImageTensor ta = render_cloth(a), tb = render_cloth(b);
  bool differs = false;
  for (std::size_t i = 0; i < ta.tensor().size(); ++i) {
    const bool bg_a = s.tensor()[i] == 0.0;
    if (bg_a) {
      CHECK(ta.tensor()[i] == 0.0);
      CHECK(tb.tensor()[i] == 0.0);
    } else {
      CHECK(std::abs(ta.tensor()[i] - tb.tensor()[i]) <= 2 * 0.05 + 1e-12);
      differs = differs || ta.tensor()[i] != tb.tensor()[i];
    }
  }
  CHECK(differs);
}

TEST_CASE("oracle_teacher reproduces the person from its own cloth") {
  const Dataset ds = generate_dataset(6, 21);
  for (const auto& item : ds.items) {
    const PersonRender r = render_person(item.person);
    const ImageTensor own = render_cloth(item.person.worn);
    CHECK(oracle_teacher(r.image, r.cloth_region, r.geometry, own) == r.image);
  }
}

TEST_CASE("oracle_teacher: masked composite, idempotence and partition") {
  const Dataset ds = generate_dataset(4, 22);
  for (const auto& item : ds.items) {
    const PersonRender r = render_person(item.person);
    const ImageTensor cloth = render_cloth(item.target);
    const ImageTensor fake = oracle_teacher(r.image, r.cloth_region, r.geometry, cloth);
    const std::size_t hw = r.cloth_region.size();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < hw; ++p) {
        if (r.cloth_region[p] == 0.0) CHECK(fake.tensor()[c * hw + p] == r.image.tensor()[c * hw + p]);
      }
    }
    CHECK(oracle_teacher(fake, r.cloth_region, r.geometry, cloth) == fake);
  }
}

TEST_CASE("oracle_teacher matches an independent affine warp on the cloth region") {
  // With both arm angles at zero every piece shares the torso map, a rotation
  // by `lean` and scaling about the hip.
  PersonSpec p = canonical_person(SleeveLength::kLong, 1.1);
  p.posture.torso_lean_deg = 7.0;
  const PersonRender r = render_person(p);
  ClothSpec target;
  target.seed = 9;
  target.base_color = {-0.3, 0.5, 0.1};
  target.pattern = Pattern::kLogoPatch;
  target.sleeve = SleeveLength::kLong;
  target.noise = 0.1;
  const ImageTensor cloth = render_cloth(target);
  const ImageTensor fake = oracle_teacher(r.image, r.cloth_region, r.geometry, cloth);
  const double hx = 23.5, hy = 41.5, th = 7.0 * std::numbers::pi / 180.0, s = 1.1;
  std::size_t checked = 0;
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 48; ++x) {
      if (r.cloth_region.at(0, y, x) == 0.0) continue;
      const double dx = static_cast<double>(x) - hx, dy = static_cast<double>(y) - hy;
      const double qx = hx + (std::cos(th) * dx + std::sin(th) * dy) / s;
      const double qy = hy + (-std::sin(th) * dx + std::cos(th) * dy) / s;
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(fake.at(c, y, x) == doctest::Approx(bilinear_ref(cloth.tensor(), c, qx, qy)).epsilon(1e-9));
      }
      ++checked;
    }
  }
  CHECK(checked > 300);
}

TEST_CASE("gt_warped_cloth") {
  const PersonRender r = render_person(canonical_person());
  const WarpedCloth none = gt_warped_cloth(r.image, Tensor::chw(1, 64, 48, 0.0));
  CHECK(none.image().tensor().max_abs() == 0.0);
  const WarpedCloth all = gt_warped_cloth(r.image, Tensor::chw(1, 64, 48, 1.0));
  CHECK(all.image() == r.image);
  const WarpedCloth gt = gt_warped_cloth(r.image, r.cloth_region);
  CHECK(gt.validity().sum() == area(r.cloth_region));
  CHECK_THROWS_AS(gt_warped_cloth(r.image, Tensor::chw(1, 64, 48, 0.5)), InvariantError);
}

TEST_CASE("generate_dataset: determinism, posture coverage, contrasting targets") {
  const Dataset a = generate_dataset(8, 7);
  const Dataset b = generate_dataset(8, 7);
  CHECK(manifest_text(a) == manifest_text(b));
  std::set<PostureClass> classes;
  for (const auto& item : a.items) {
    classes.insert(item.person.posture_class);
    CHECK(item.pool.size() == kClothPoolSize);
    CHECK(contrasting(item.target, item.person.worn));
    CHECK_NOTHROW(item.person.validate());
  }
  CHECK(classes.size() >= 2);
  CHECK_THROWS_AS(generate_dataset(0, 7), InvariantError);
  CHECK(manifest_text(generate_dataset(8, 8)) != manifest_text(a));
  // Item i does not depend on how many items follow it.
  CHECK(generate_dataset(3, 7).items[2].person == a.items[2].person);
}

TEST_CASE("every posture class shows up over a larger sample") {
  std::set<PostureClass> classes;
  for (const auto& item : generate_dataset(30, 1).items) classes.insert(item.person.posture_class);
  CHECK(classes.size() == 3);
}

TEST_CASE("manifest round-trip and schema errors") {
  const Dataset a = generate_dataset(3, 4, Canvas{32, 24});
  const std::string text = manifest_text(a);
  const Dataset back = parse_manifest(text);
  CHECK(manifest_text(back) == text);
  CHECK(back.canvas.height == 32);
  CHECK(back.items[1].target == a.items[1].target);
  CHECK(back.items[2].pool == a.items[2].pool);
  try {
    parse_manifest(text + "bogus = 1\n");
    FAIL("expected unknown key");
  } catch (const ConfigError& e) {
    CHECK(e.line() > 0);
  }
  const std::string bad_pattern = [&] {
    std::string t = text;
    const auto pos = t.find(".pattern = ");
    const auto end = t.find('\n', pos);
    t.replace(pos, end - pos, ".pattern = plaid");
    return t;
  }();
  CHECK_THROWS_AS(parse_manifest(bad_pattern), ConfigError);
}

TEST_CASE("PersonSpec validation") {
  PersonSpec p = canonical_person();
  p.posture.arm_left_deg = 91;
  CHECK_THROWS_AS(p.validate(), InvariantError);
  p = canonical_person();
  p.posture.torso_lean_deg = -21;
  CHECK_THROWS_AS(p.validate(), InvariantError);
  p = canonical_person();
  p.body_scale = 1.3;
  CHECK_THROWS_AS(p.validate(), InvariantError);
}

TEST_CASE("teacher flows: shapes, identity posture, and exact reconstruction") {
  const PersonRender canon = render_person(canonical_person());
  const auto id = teacher_flow_pyramid(canon.geometry, 4);
  REQUIRE(id.size() == 4);
  const std::size_t dims[4][2] = {{8, 6}, {16, 12}, {32, 24}, {64, 48}};
  for (int s = 0; s < 4; ++s) {
    CHECK(id[s].height() == dims[s][0]);
    CHECK(id[s].width() == dims[s][1]);
    CHECK(id[s].scale_index() == s + 1);
    CHECK(id[s].offsets().max_abs() < 1e-12);
  }

  for (const auto& item : generate_dataset(4, 5).items) {
    const PersonRender r = render_person(item.person);
    const auto flows = teacher_flow_pyramid(r.geometry, 4);
    const Tensor& fine = flows.back().offsets();
    for (std::size_t y = 0; y < 64; y += 7) {
      for (std::size_t x = 0; x < 48; x += 5) {
        const Point q = r.geometry.canonical_of({double(x), double(y)});
        CHECK(fine.at(0, y, x) == doctest::Approx(q.x - double(x)));
        CHECK(fine.at(1, y, x) == doctest::Approx(q.y - double(y)));
      }
    }
    const WarpedCloth w = warp(render_cloth(item.person.worn), flows.back());
    const std::size_t hw = 64 * 48;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < hw; ++p) {
        if (r.cloth_region[p] == 0.0) continue;
        CHECK(w.image().tensor()[c * hw + p] ==
              doctest::Approx(r.image.tensor()[c * hw + p]).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(teacher_flow_pyramid(BodyGeometry{30, 24, {}, {}, {}}, 4), ShapeError);
}

TEST_CASE("content hash and manifest keys") {
  CHECK(content_hash("") == 0xcbf29ce484222325ULL);
  CHECK(content_hash("a") == 0xaf63dc4c8601ec8cULL);
  const auto item = generate_dataset(1, 2).items[0];
  CHECK(spec_key(item.person) != spec_key(item.person.worn));
  CHECK(spec_key(item.target) == spec_key(ClothSpec(item.target)));
}
