#include "rmgn/atelier.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "rmgn/errors.hpp"
#include "rmgn/keyvalue.hpp"
#include "rmgn/params.hpp"

namespace rmgn {

namespace {

// Design layout in pixel-edge units of a 48x64 canvas; a pixel with index
// (x, y) covers [x, x+1) x [y, y+1).
struct Rect {
  double x0, y0, x1, y1;
};

constexpr double kDesignW = 48.0;
constexpr double kDesignH = 64.0;
constexpr Rect kTorso{15, 19, 33, 42};
constexpr Rect kNeck{22, 16, 26, 19};
constexpr Rect kLeftArm{10, 19, 15, 36};
constexpr Rect kRightArm{33, 19, 38, 36};
constexpr Rect kLeftLeg{17, 42, 23, 64};
constexpr Rect kRightLeg{25, 42, 31, 64};
constexpr Rect kLogo{21, 25, 27, 31};
constexpr double kHeadX = 24, kHeadY = 11.5, kHeadR = 5.5;
constexpr double kHipX = 24, kHipY = 42;
constexpr double kLeftShoulderX = 12.5, kRightShoulderX = 35.5, kShoulderY = 19;
constexpr double kShortSleeveEnd = 26;
constexpr double kStripeStart = 19, kStripeHalfPeriod = 2;
constexpr Color kTrousers{-0.55, -0.55, -0.35};

// Converts the design into index coordinates for a given canvas.
struct Layout {
  double sx, sy;

  explicit Layout(Canvas c)
      : sx(static_cast<double>(c.width) / kDesignW), sy(static_cast<double>(c.height) / kDesignH) {}

  Point point(double ex, double ey) const { return {ex * sx - 0.5, ey * sy - 0.5}; }
  Rect rect(const Rect& r) const {
    Point a = point(r.x0, r.y0), b = point(r.x1, r.y1);
    return {a.x, a.y, b.x, b.y};
  }
  double y(double ey) const { return ey * sy - 0.5; }
};

bool inside(const Rect& r, Point p) { return p.x >= r.x0 && p.x < r.x1 && p.y >= r.y0 && p.y < r.y1; }

Rect sleeve_rect(const Layout& lay, const Rect& arm, SleeveLength s) {
  Rect r = lay.rect(arm);
  if (s == SleeveLength::kShort) r.y1 = lay.y(kShortSleeveEnd);
  return r;
}

Color accent_of(Color c) {
  auto shift = [](double v) { return v < 0 ? std::min(1.0, v + 0.9) : std::max(-1.0, v - 0.9); };
  return {shift(c.r), shift(c.g), shift(c.b)};
}

void paint(Tensor& t, std::size_t y, std::size_t x, Color c) {
  t.at(0, y, x) = c.r;
  t.at(1, y, x) = c.g;
  t.at(2, y, x) = c.b;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double quantize(double v) { return std::round(v * 1e4) / 1e4; }

Color sample_color(Rng& rng, double lo, double hi) {
  return {quantize(uniform(rng, lo, hi)), quantize(uniform(rng, lo, hi)),
          quantize(uniform(rng, lo, hi))};
}

ClothSpec sample_cloth(Rng& rng) {
  ClothSpec c;
  c.seed = rng() >> 11;
  c.base_color = sample_color(rng, -0.9, 0.9);
  c.pattern = static_cast<Pattern>(std::uniform_int_distribution<int>(0, 2)(rng));
  c.sleeve = static_cast<SleeveLength>(std::uniform_int_distribution<int>(0, 1)(rng));
  c.noise = 0.04;
  return c;
}

std::string color_text(Color c) {
  return format_double(c.r) + " " + format_double(c.g) + " " + format_double(c.b);
}

Color parse_color(const KeyValueFile& kv, const std::string& key) {
  std::istringstream in(kv.get(key));
  Color c;
  if (!(in >> c.r >> c.g >> c.b)) {
    throw ConfigError("key '" + key + "' expects three numbers", kv.line_of(key));
  }
  return c;
}

template <typename E>
E parse_enum(const KeyValueFile& kv, const std::string& key, std::initializer_list<E> options) {
  const std::string& v = kv.get(key);
  for (E e : options) {
    if (to_string(e) == v) return e;
  }
  throw ConfigError("key '" + key + "' has unknown value '" + v + "'", kv.line_of(key));
}

void put_cloth(KeyValueFile& kv, const std::string& prefix, const ClothSpec& c) {
  kv.set(prefix + ".seed", std::to_string(c.seed));
  kv.set(prefix + ".color", color_text(c.base_color));
  kv.set(prefix + ".pattern", to_string(c.pattern));
  kv.set(prefix + ".sleeve", to_string(c.sleeve));
  kv.set(prefix + ".noise", format_double(c.noise));
}

ClothSpec get_cloth(const KeyValueFile& kv, const std::string& prefix, std::set<std::string>& keys) {
  for (const char* f : {".seed", ".color", ".pattern", ".sleeve", ".noise"}) keys.insert(prefix + f);
  ClothSpec c;
  c.seed = kv.get_u64(prefix + ".seed");
  c.base_color = parse_color(kv, prefix + ".color");
  c.pattern = parse_enum(kv, prefix + ".pattern",
                         {Pattern::kSolid, Pattern::kStripes, Pattern::kLogoPatch});
  c.sleeve = parse_enum(kv, prefix + ".sleeve", {SleeveLength::kShort, SleeveLength::kLong});
  c.noise = kv.get_double(prefix + ".noise");
  if (!(c.noise >= 0.0)) throw ConfigError("noise must be >= 0", kv.line_of(prefix + ".noise"));
  return c;
}

}  // namespace

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::kSolid: return "solid";
    case Pattern::kStripes: return "stripes";
    case Pattern::kLogoPatch: return "logo_patch";
  }
  return "?";
}

std::string to_string(SleeveLength s) { return s == SleeveLength::kShort ? "short" : "long"; }

std::string to_string(PostureClass c) {
  switch (c) {
    case PostureClass::kCanonical: return "canonical";
    case PostureClass::kHandOnHip: return "hand_on_hip";
    case PostureClass::kRaisedArm: return "raised_arm";
  }
  return "?";
}

void PersonSpec::validate() const {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in(posture.arm_left_deg, -90, 90) || !in(posture.arm_right_deg, -90, 90)) {
    throw InvariantError("arm angles must lie in [-90, 90] degrees");
  }
  if (!in(posture.torso_lean_deg, -20, 20)) throw InvariantError("torso lean must lie in [-20, 20]");
  if (!in(body_scale, 0.8, 1.2)) throw InvariantError("body scale must lie in [0.8, 1.2]");
  if (!(worn.noise >= 0.0)) throw InvariantError("cloth noise must be >= 0");
}

Affine Affine::inverse() const {
  const double det = a * d - b * c;
  if (det == 0.0) throw InvariantError("singular affine map");
  Affine inv;
  inv.a = d / det;
  inv.b = -b / det;
  inv.c = -c / det;
  inv.d = a / det;
  inv.tx = -(inv.a * tx + inv.b * ty);
  inv.ty = -(inv.c * tx + inv.d * ty);
  return inv;
}

Affine Affine::rotation_about(Point from, Point to, double deg, double scale) {
  const double r = deg * std::numbers::pi / 180.0;
  const double cs = std::cos(r) * scale, sn = std::sin(r) * scale;
  Affine m;
  m.a = cs;
  m.b = -sn;
  m.c = sn;
  m.d = cs;
  m.tx = to.x - (m.a * from.x + m.b * from.y);
  m.ty = to.y - (m.c * from.x + m.d * from.y);
  return m;
}

const Affine& BodyGeometry::map(Piece p) const {
  switch (p) {
    case Piece::kLeftSleeve: return left_arm;
    case Piece::kRightSleeve: return right_arm;
    default: return torso;
  }
}

Piece BodyGeometry::piece_at(Point p) const {
  const Layout lay(Canvas{height, width});
  if (inside(lay.rect(kRightArm), right_arm.inverse().apply(p))) return Piece::kRightSleeve;
  if (inside(lay.rect(kLeftArm), left_arm.inverse().apply(p))) return Piece::kLeftSleeve;
  return Piece::kTorso;
}

Point BodyGeometry::canonical_of(Point p) const { return map(piece_at(p)).inverse().apply(p); }

double sample_bilinear(const Tensor& image, std::size_t channel, Point p) {
  const auto h = static_cast<long>(image.height());
  const auto w = static_cast<long>(image.width());
  const double fx = std::floor(p.x), fy = std::floor(p.y);
  const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  const double ax = p.x - fx, ay = p.y - fy;
  auto tap = [&](long y, long x) {
    return (y >= 0 && y < h && x >= 0 && x < w) ? image.at(channel, y, x) : 0.0;
  };
  return (1 - ay) * ((1 - ax) * tap(y0, x0) + ax * tap(y0, x0 + 1)) +
         ay * ((1 - ax) * tap(y0 + 1, x0) + ax * tap(y0 + 1, x0 + 1));
}

ImageTensor render_cloth(const ClothSpec& spec, Canvas canvas) {
  const Layout lay(canvas);
  Tensor t = Tensor::chw(3, canvas.height, canvas.width, 0.0);
  const Rect torso = lay.rect(kTorso);
  const Rect left = sleeve_rect(lay, kLeftArm, spec.sleeve);
  const Rect right = sleeve_rect(lay, kRightArm, spec.sleeve);
  const Rect logo = lay.rect(kLogo);
  const Color accent = accent_of(spec.base_color);
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t y = 0; y < canvas.height; ++y) {
    for (std::size_t x = 0; x < canvas.width; ++x) {
      // One draw per pixel per channel keeps the texture independent of the
      // garment outline.
      const double n[3] = {unit(rng), unit(rng), unit(rng)};
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      if (!inside(torso, p) && !inside(left, p) && !inside(right, p)) continue;
      Color c = spec.base_color;
      if (spec.pattern == Pattern::kStripes) {
        const double band = std::floor((p.y + 0.5 - kStripeStart * lay.sy) / (kStripeHalfPeriod * lay.sy));
        if (static_cast<long>(band) % 2 != 0) c = accent;
      } else if (spec.pattern == Pattern::kLogoPatch && inside(logo, p)) {
        c = accent;
      }
      auto tex = [&](double v, double k) { return std::clamp(v + spec.noise * k, -1.0, 1.0); };
      paint(t, y, x, {tex(c.r, n[0]), tex(c.g, n[1]), tex(c.b, n[2])});
    }
  }
  return ImageTensor(std::move(t));
}

PersonRender render_person(const PersonSpec& spec, Canvas canvas) {
  spec.validate();
  const Layout lay(canvas);
  BodyGeometry geo;
  geo.height = canvas.height;
  geo.width = canvas.width;
  const Point hip = lay.point(kHipX, kHipY);
  const double lean = spec.posture.torso_lean_deg;
  geo.torso = Affine::rotation_about(hip, hip, lean, spec.body_scale);
  const Point ls = lay.point(kLeftShoulderX, kShoulderY);
  const Point rs = lay.point(kRightShoulderX, kShoulderY);
  geo.left_arm = Affine::rotation_about(ls, geo.torso.apply(ls), lean + spec.posture.arm_left_deg,
                                        spec.body_scale);
  geo.right_arm = Affine::rotation_about(rs, geo.torso.apply(rs),
                                         lean - spec.posture.arm_right_deg, spec.body_scale);

  const ImageTensor cloth = render_cloth(spec.worn, canvas);
  const Affine torso_inv = geo.torso.inverse();
  const Affine left_inv = geo.left_arm.inverse();
  const Affine right_inv = geo.right_arm.inverse();
  const Rect torso = lay.rect(kTorso), neck = lay.rect(kNeck);
  const Rect larm = lay.rect(kLeftArm), rarm = lay.rect(kRightArm);
  const Rect lleg = lay.rect(kLeftLeg), rleg = lay.rect(kRightLeg);
  const double sleeve_end =
      spec.worn.sleeve == SleeveLength::kShort ? lay.y(kShortSleeveEnd) : larm.y1;
  const Point head = lay.point(kHeadX, kHeadY);
  const double head_r = kHeadR * lay.sx;

  Tensor img = Tensor::chw(3, canvas.height, canvas.width);
  Tensor region = Tensor::chw(1, canvas.height, canvas.width, 0.0);
  for (std::size_t y = 0; y < canvas.height; ++y) {
    for (std::size_t x = 0; x < canvas.width; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      enum class Label { kBackground, kSkin, kLegs, kCloth } label = Label::kBackground;
      if (inside(lleg, p) || inside(rleg, p)) label = Label::kLegs;
      const Point qt = torso_inv.apply(p);
      if (inside(torso, qt)) label = Label::kCloth;
      const double hx = qt.x - head.x, hy = qt.y - head.y;
      if (inside(neck, qt) || hx * hx + hy * hy < head_r * head_r) label = Label::kSkin;
      for (const auto* arm : {&left_inv, &right_inv}) {
        const Point qa = arm->apply(p);
        const Rect& r = arm == &left_inv ? larm : rarm;
        if (inside(r, qa)) label = qa.y < sleeve_end ? Label::kCloth : Label::kSkin;
      }
      switch (label) {
        case Label::kBackground: paint(img, y, x, spec.background); break;
        case Label::kSkin: paint(img, y, x, spec.skin); break;
        case Label::kLegs: paint(img, y, x, kTrousers); break;
        case Label::kCloth: {
          const Point q = geo.canonical_of(p);
          for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = sample_bilinear(cloth.tensor(), c, q);
          region.at(0, y, x) = 1.0;
          break;
        }
      }
    }
  }
  return {ImageTensor(std::move(img)), std::move(region), geo};
}

ImageTensor oracle_teacher(const ImageTensor& person, const Tensor& cloth_region,
                           const BodyGeometry& geometry, const ImageTensor& cloth) {
  require_binary_mask(cloth_region, "oracle_teacher cloth_region");
  if (person.channels() != 3 || cloth.channels() != 3) {
    throw ShapeError("oracle_teacher needs RGB person and cloth");
  }
  if (person.height() != cloth.height() || person.width() != cloth.width() ||
      cloth_region.height() != person.height() || cloth_region.width() != person.width() ||
      geometry.height != person.height() || geometry.width != person.width()) {
    throw ShapeError("oracle_teacher: person, cloth, region and geometry sizes differ");
  }
  Tensor out = person.tensor();
  for (std::size_t y = 0; y < person.height(); ++y) {
    for (std::size_t x = 0; x < person.width(); ++x) {
      if (cloth_region.at(0, y, x) == 0.0) continue;
      const Point q = geometry.canonical_of({static_cast<double>(x), static_cast<double>(y)});
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = sample_bilinear(cloth.tensor(), c, q);
    }
  }
  return ImageTensor(std::move(out));
}

WarpedCloth gt_warped_cloth(const ImageTensor& person, const Tensor& cloth_region) {
  require_binary_mask(cloth_region, "gt_warped_cloth cloth_region");
  if (cloth_region.height() != person.height() || cloth_region.width() != person.width()) {
    throw ShapeError("gt_warped_cloth: region does not match person");
  }
  Tensor img = person.tensor();
  const std::size_t hw = person.height() * person.width();
  for (std::size_t c = 0; c < person.channels(); ++c) {
    for (std::size_t p = 0; p < hw; ++p) img[c * hw + p] *= cloth_region[p];
  }
  return WarpedCloth(ImageTensor(std::move(img)), cloth_region);
}

std::vector<FlowField> teacher_flow_pyramid(const BodyGeometry& geometry, int levels) {
  if (levels < 1) throw InvariantError("pyramid needs at least one level");
  const std::size_t div = std::size_t{1} << (levels - 1);
  if (geometry.height % div || geometry.width % div) {
    throw ShapeError("geometry size not divisible by 2^(levels-1)");
  }
  std::vector<FlowField> out;
  for (int s = 1; s <= levels; ++s) {
    const double f = static_cast<double>(std::size_t{1} << (levels - s));
    const std::size_t h = geometry.height >> (levels - s);
    const std::size_t w = geometry.width >> (levels - s);
    Tensor flow = Tensor::chw(2, h, w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Point p{(static_cast<double>(x) + 0.5) * f - 0.5, (static_cast<double>(y) + 0.5) * f - 0.5};
        const Point q = geometry.canonical_of(p);
        flow.at(0, y, x) = (q.x + 0.5) / f - 0.5 - static_cast<double>(x);
        flow.at(1, y, x) = (q.y + 0.5) / f - 0.5 - static_cast<double>(y);
      }
    }
    out.emplace_back(std::move(flow), s);
  }
  return out;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, Canvas canvas) {
  if (n == 0) throw InvariantError("dataset size must be >= 1");
  Dataset ds;
  ds.seed = seed;
  ds.canvas = canvas;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    DatasetItem item;
    PersonSpec& p = item.person;
    p.seed = rng() >> 11;
    p.posture_class = static_cast<PostureClass>(std::uniform_int_distribution<int>(0, 2)(rng));
    const bool left_side = uniform(rng, 0, 1) < 0.5;
    double active = 0, other = 0, lean = 0;
    switch (p.posture_class) {
      case PostureClass::kCanonical:
        active = uniform(rng, -5, 5);
        other = uniform(rng, -5, 5);
        lean = uniform(rng, -4, 4);
        break;
      case PostureClass::kHandOnHip:
        active = uniform(rng, 28, 42);
        other = uniform(rng, -4, 8);
        lean = uniform(rng, -8, 8);
        break;
      case PostureClass::kRaisedArm:
        active = uniform(rng, 60, 90);
        other = uniform(rng, -5, 35);
        lean = uniform(rng, -12, 12);
        break;
    }
    p.posture.arm_left_deg = quantize(left_side ? active : other);
    p.posture.arm_right_deg = quantize(left_side ? other : active);
    p.posture.torso_lean_deg = quantize(lean);
    p.body_scale = quantize(uniform(rng, 0.85, 1.15));
    const double t = uniform(rng, 0, 1);
    p.skin = {quantize(0.75 - 0.7 * t), quantize(0.45 - 0.7 * t), quantize(0.25 - 0.7 * t)};
    const double g = uniform(rng, -0.2, 0.6);
    p.background = {quantize(g + uniform(rng, -0.1, 0.1)), quantize(g + uniform(rng, -0.1, 0.1)),
                    quantize(g + uniform(rng, -0.1, 0.1))};
    p.worn = sample_cloth(rng);
    for (std::size_t k = 0; k < kClothPoolSize; ++k) item.pool.push_back(sample_cloth(rng));
    do {
      item.target = sample_cloth(rng);
    } while (!contrasting(item.target, p.worn));
    ds.items.push_back(std::move(item));
  }
  return ds;
}

std::string manifest_text(const Dataset& ds) {
  KeyValueFile kv;
  kv.set("format", "rmgn-manifest-1");
  kv.set("seed", std::to_string(ds.seed));
  kv.set("count", std::to_string(ds.items.size()));
  kv.set("height", std::to_string(ds.canvas.height));
  kv.set("width", std::to_string(ds.canvas.width));
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& it = ds.items[i];
    const std::string pre = "item." + std::to_string(i);
    const PersonSpec& p = it.person;
    kv.set(pre + ".person.seed", std::to_string(p.seed));
    kv.set(pre + ".person.posture_class", to_string(p.posture_class));
    kv.set(pre + ".person.arm_left", format_double(p.posture.arm_left_deg));
    kv.set(pre + ".person.arm_right", format_double(p.posture.arm_right_deg));
    kv.set(pre + ".person.lean", format_double(p.posture.torso_lean_deg));
    kv.set(pre + ".person.body_scale", format_double(p.body_scale));
    kv.set(pre + ".person.skin", color_text(p.skin));
    kv.set(pre + ".person.background", color_text(p.background));
    put_cloth(kv, pre + ".worn", p.worn);
    for (std::size_t k = 0; k < it.pool.size(); ++k) {
      put_cloth(kv, pre + ".pool." + std::to_string(k), it.pool[k]);
    }
    put_cloth(kv, pre + ".target", it.target);
  }
  return kv.to_string("rmgn dataset manifest");
}

Dataset parse_manifest(const std::string& text) {
  const KeyValueFile kv = KeyValueFile::parse(text);
  std::set<std::string> keys{"format", "seed", "count", "height", "width"};
  if (kv.get("format") != "rmgn-manifest-1") {
    throw ConfigError("unsupported manifest format '" + kv.get("format") + "'", kv.line_of("format"));
  }
  Dataset ds;
  ds.seed = kv.get_u64("seed");
  const auto count = kv.get_int("count");
  if (count < 1) throw ConfigError("count must be >= 1", kv.line_of("count"));
  ds.canvas.height = static_cast<std::size_t>(kv.get_int("height"));
  ds.canvas.width = static_cast<std::size_t>(kv.get_int("width"));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::string pre = "item." + std::to_string(i);
    DatasetItem it;
    PersonSpec& p = it.person;
    for (const char* f : {".seed", ".posture_class", ".arm_left", ".arm_right", ".lean",
                          ".body_scale", ".skin", ".background"}) {
      keys.insert(pre + ".person" + f);
    }
    p.seed = kv.get_u64(pre + ".person.seed");
    p.posture_class = parse_enum(
        kv, pre + ".person.posture_class",
        {PostureClass::kCanonical, PostureClass::kHandOnHip, PostureClass::kRaisedArm});
    p.posture.arm_left_deg = kv.get_double(pre + ".person.arm_left");
    p.posture.arm_right_deg = kv.get_double(pre + ".person.arm_right");
    p.posture.torso_lean_deg = kv.get_double(pre + ".person.lean");
    p.body_scale = kv.get_double(pre + ".person.body_scale");
    p.skin = parse_color(kv, pre + ".person.skin");
    p.background = parse_color(kv, pre + ".person.background");
    p.worn = get_cloth(kv, pre + ".worn", keys);
    for (std::size_t k = 0; kv.has(pre + ".pool." + std::to_string(k) + ".seed"); ++k) {
      it.pool.push_back(get_cloth(kv, pre + ".pool." + std::to_string(k), keys));
    }
    it.target = get_cloth(kv, pre + ".target", keys);
    try {
      p.validate();
    } catch (const InvariantError& e) {
      throw ConfigError(pre + ": " + e.what(), kv.line_of(pre + ".person.seed"));
    }
    ds.items.push_back(std::move(it));
  }
  kv.require_known(keys);
  return ds;
}

void write_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << manifest_text(dataset);
  if (!out) throw ConfigError("failed writing " + path.string());
}

Dataset read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::uint64_t content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string spec_key(const ClothSpec& c) {
  return "cloth;" + std::to_string(c.seed) + ";" + color_text(c.base_color) + ";" +
         to_string(c.pattern) + ";" + to_string(c.sleeve) + ";" + format_double(c.noise);
}

std::string spec_key(const PersonSpec& p) {
  return "person;" + std::to_string(p.seed) + ";" + format_double(p.posture.arm_left_deg) + ";" +
         format_double(p.posture.arm_right_deg) + ";" + format_double(p.posture.torso_lean_deg) +
         ";" + format_double(p.body_scale) + ";" + color_text(p.skin) + ";" +
         color_text(p.background) + ";" + spec_key(p.worn);
}

bool contrasting(const ClothSpec& a, const ClothSpec& b) {
  return a.pattern != b.pattern && a.sleeve != b.sleeve;
}

}  // namespace rmgn
