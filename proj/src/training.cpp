#include "rmgn/training.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rmgn/binary_io.hpp"
#include "rmgn/errors.hpp"
#include "rmgn/keyvalue.hpp"

namespace rmgn {

using ag::Var;

namespace {

std::string widths_text(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + std::to_string(w[i]);
  return s;
}

std::vector<std::size_t> parse_widths(const KeyValueFile& kv, const std::string& key) {
  std::istringstream in(kv.get(key));
  std::vector<std::size_t> out;
  long long v = 0;
  while (in >> v) {
    if (v <= 0) throw ConfigError("key '" + key + "' needs positive widths", kv.line_of(key));
    out.push_back(static_cast<std::size_t>(v));
  }
  if (!in.eof() || out.empty()) {
    throw ConfigError("key '" + key + "' expects a list of integers", kv.line_of(key));
  }
  return out;
}

std::uint64_t get_count(const KeyValueFile& kv, const std::string& key, std::uint64_t min) {
  const auto v = kv.get_int(key);
  if (v < static_cast<std::int64_t>(min)) {
    throw ConfigError("key '" + key + "' must be >= " + std::to_string(min), kv.line_of(key));
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1 || fake_set_size < 1 || checkpoint_interval < 1) {
    throw InvariantError("batch_size, fake_set_size and checkpoint_interval must be >= 1");
  }
  if (fake_set_size > kClothPoolSize) {
    throw InvariantError("fake_set_size exceeds the cloth pool size " + std::to_string(kClothPoolSize));
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvariantError("learning_rate must be finite and >= 0");
  }
  if (canvas.height == 0 || canvas.width == 0) throw InvariantError("resolution must be positive");
  weights.validate();
  warp.validate();
  gen.validate();
  const std::size_t div = std::size_t{1} << (warp.levels - 1);
  if (canvas.height % div || canvas.width % div) {
    throw InvariantError("resolution must be divisible by 2^(warp_levels-1)");
  }
}

std::string TrainConfig::to_text() const {
  KeyValueFile kv;
  kv.set("steps", std::to_string(steps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("fake_set_size", std::to_string(fake_set_size));
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("seed", std::to_string(seed));
  kv.set("height", std::to_string(canvas.height));
  kv.set("width", std::to_string(canvas.width));
  kv.set("gen_levels", std::to_string(gen.levels));
  kv.set("warp_levels", std::to_string(warp.levels));
  kv.set("lambda_f", format_double(weights.lambda_f));
  kv.set("lambda_sec", format_double(weights.lambda_sec));
  kv.set("lambda_d", format_double(weights.lambda_d));
  kv.set("lambda_p", format_double(weights.lambda_p));
  kv.set("checkpoint_interval", std::to_string(checkpoint_interval));
  kv.set("gen_widths", widths_text(gen.widths));
  kv.set("warp_widths", widths_text(warp.widths));
  kv.set("units_per_block", std::to_string(gen.units_per_block));
  kv.set("multilevel", gen.multilevel ? "true" : "false");
  kv.set("mask_fusion", gen.mask_fusion ? "true" : "false");
  return kv.to_string("rmgn training config");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  const KeyValueFile kv = KeyValueFile::parse(text);
  kv.require_known({"steps", "batch_size", "fake_set_size", "learning_rate", "seed", "height",
                    "width", "gen_levels", "warp_levels", "lambda_f", "lambda_sec", "lambda_d",
                    "lambda_p", "checkpoint_interval", "gen_widths", "warp_widths",
                    "units_per_block", "multilevel", "mask_fusion"});
  TrainConfig c;
  c.steps = get_count(kv, "steps", 0);
  c.batch_size = get_count(kv, "batch_size", 1);
  c.fake_set_size = get_count(kv, "fake_set_size", 1);
  c.learning_rate = kv.get_double("learning_rate");
  c.seed = kv.get_u64("seed");
  c.canvas.height = get_count(kv, "height", 1);
  c.canvas.width = get_count(kv, "width", 1);
  c.gen.levels = static_cast<int>(get_count(kv, "gen_levels", 1));
  c.warp.levels = static_cast<int>(get_count(kv, "warp_levels", 1));
  c.weights.lambda_f = kv.get_double("lambda_f");
  c.weights.lambda_sec = kv.get_double("lambda_sec");
  c.weights.lambda_d = kv.get_double("lambda_d");
  c.weights.lambda_p = kv.get_double("lambda_p");
  c.checkpoint_interval = get_count(kv, "checkpoint_interval", 1);

  if (kv.has("gen_widths")) {
    c.gen.widths = parse_widths(kv, "gen_widths");
  } else {
    // Default schedule 8, 16, 32, ... doubling per level.
    c.gen.widths.clear();
    for (int i = 0; i <= c.gen.levels; ++i) c.gen.widths.push_back(std::size_t{8} << i);
  }
  if (kv.has("warp_widths")) {
    c.warp.widths = parse_widths(kv, "warp_widths");
  } else {
    c.warp.widths.clear();
    for (int i = 0; i < c.warp.levels; ++i) c.warp.widths.push_back(8 + 8 * static_cast<std::size_t>(i));
  }
  if (kv.has("units_per_block")) c.gen.units_per_block = static_cast<int>(get_count(kv, "units_per_block", 1));
  if (kv.has("multilevel")) c.gen.multilevel = kv.get_bool("multilevel");
  if (kv.has("mask_fusion")) c.gen.mask_fusion = kv.get_bool("mask_fusion");

  auto check = [&](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const InvariantError& e) {
      throw ConfigError(e.what(), kv.line_of(key));
    }
  };
  check("lambda_f", [&] { c.weights.validate(); });
  check("gen_widths", [&] { c.gen.validate(); });
  check("warp_widths", [&] { c.warp.validate(); });
  check("fake_set_size", [&] { c.validate(); });
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ModelState ModelState::init(const TrainConfig& config) {
  config.validate();
  ModelState s{config, WarpParams::init(config.warp, mix_seed(config.seed, 1)),
               GeneratorParams::init(config.gen, mix_seed(config.seed, 2)),
               Adam(Adam::Settings{config.learning_rate}), 0};
  return s;
}

namespace {

constexpr char kCkptMagic[8] = {'R', 'M', 'G', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("config", state.config.to_text());
  {
    std::ostringstream o;
    state.warp.store.write(o);
    sections.emplace_back("warp", o.str());
  }
  {
    std::ostringstream o;
    state.gen.store.write(o);
    sections.emplace_back("gen", o.str());
  }
  {
    std::ostringstream o;
    state.optimizer.write(o);
    sections.emplace_back("optimizer", o.str());
  }
  {
    // Per-step randomness is derived from (seed, step), so these two values
    // are the whole generator state.
    std::ostringstream o;
    io::write_u64(o, state.config.seed);
    io::write_u64(o, state.step);
    sections.emplace_back("rng", o.str());
  }
  std::ostringstream table;
  std::uint64_t header = 8 + 4 + 4;
  for (const auto& [name, _] : sections) header += 4 + name.size() + 8 + 8;
  std::uint64_t offset = header;
  for (const auto& [name, body] : sections) {
    io::write_string(table, name);
    io::write_u64(table, offset);
    io::write_u64(table, body.size());
    offset += body.size();
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(kCkptMagic, 8);
    io::write_u32(out, kCkptVersion);
    io::write_u32(out, static_cast<std::uint32_t>(sections.size()));
    out << table.str();
    for (const auto& [_, body] : sections) out << body;
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::istringstream head(data);
  char magic[8];
  head.read(magic, 8);
  if (!head || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw std::runtime_error(path.string() + " is not an rmgn checkpoint");
  }
  if (const auto v = io::read_u32(head); v != kCkptVersion) {
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  const auto count = io::read_u32(head);
  std::map<std::string, std::string> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = io::read_string(head);
    const auto off = io::read_u64(head), size = io::read_u64(head);
    if (off > data.size() || size > data.size() - off) {
      throw std::runtime_error(path.string() + ": section '" + name + "' out of range");
    }
    sections[name] = data.substr(off, size);
  }
  for (const char* need : {"config", "warp", "gen", "optimizer", "rng"}) {
    if (!sections.count(need)) {
      throw std::runtime_error(path.string() + ": missing section '" + need + "'");
    }
  }
  ModelState s = ModelState::init(TrainConfig::parse(sections["config"]));
  std::istringstream w(sections["warp"]), g(sections["gen"]), o(sections["optimizer"]),
      r(sections["rng"]);
  s.warp.store.read(w);
  s.gen.store.read(g);
  s.optimizer.read(o);
  if (io::read_u64(r) != s.config.seed) throw std::runtime_error("checkpoint rng seed mismatch");
  s.step = io::read_u64(r);
  return s;
}

std::vector<PreparedItem> prepare_dataset(const Dataset& dataset, int warp_levels) {
  std::vector<PreparedItem> out;
  for (const auto& item : dataset.items) {
    PersonRender r = render_person(item.person, dataset.canvas);
    ImageTensor worn = render_cloth(item.person.worn, dataset.canvas);
    WarpedCloth gt = gt_warped_cloth(r.image, r.cloth_region);
    FlowPyramid teacher(teacher_flow_pyramid(r.geometry, warp_levels));
    std::vector<ImageTensor> fakes;
    for (const auto& c : item.pool) {
      fakes.push_back(oracle_teacher(r.image, r.cloth_region, r.geometry, render_cloth(c, dataset.canvas)));
    }
    out.push_back(PreparedItem{std::move(r), std::move(worn), std::move(gt), std::move(teacher),
                               item.pool, std::move(fakes), item.target});
  }
  return out;
}

namespace {

std::vector<std::size_t> draw_without_replacement(std::size_t pool, std::size_t n, Rng& rng) {
  if (pool < n) {
    throw InvariantError("cloth pool of " + std::to_string(pool) + " cannot supply " +
                         std::to_string(n) + " fakes");
  }
  if (n == 0) throw InvariantError("fake set size must be >= 1");
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates with an explicit draw so the sequence does not
  // depend on the standard library's shuffle.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (pool - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace

std::vector<ImageTensor> sample_fake_set(const PersonRender& person,
                                         const std::vector<ClothSpec>& clothes, std::size_t n,
                                         Rng& rng) {
  const auto idx = draw_without_replacement(clothes.size(), n, rng);
  const Canvas canvas{person.image.height(), person.image.width()};
  std::vector<ImageTensor> out;
  for (auto i : idx) {
    out.push_back(oracle_teacher(person.image, person.cloth_region, person.geometry,
                                 render_cloth(clothes[i], canvas)));
  }
  return out;
}

ObjectiveGraph objective_graph(ModelState& state, const std::vector<const PreparedItem*>& batch,
                               const std::vector<std::vector<std::size_t>>& fakes,
                               const PerceptualEmbedder& emb) {
  if (batch.empty() || fakes.size() != batch.size()) {
    throw InvariantError("objective needs one fake index set per batch item");
  }
  const auto& cfg = state.config;
  Session sw(state.warp.store);
  Session sg(state.gen.store);
  Var total_w, total_g;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const PreparedItem* item = batch[b];
    std::vector<ImageTensor> fake_set;
    for (auto i : fakes[b]) fake_set.push_back(item->pool_fakes.at(i));
    auto pal = posture_awareness_graph(sw, state.warp, fake_set, item->worn_cloth, item->gt,
                                       item->teacher, cfg.weights);
    std::vector<Var> preds;
    for (std::size_t j = 0; j < fake_set.size(); ++j) {
      preds.push_back(
          generate(sg, state.gen, pal.warped[j], Var::constant(fake_set[j].tensor())).image);
    }
    Var lg = generator_loss(preds, Var::constant(item->render.image.tensor()), cfg.weights, emb);
    total_w = total_w.defined() ? ag::add(total_w, pal.loss) : pal.loss;
    total_g = total_g.defined() ? ag::add(total_g, lg) : lg;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  ObjectiveGraph g;
  g.l_w = ag::scale(total_w, inv);
  g.l_g = ag::scale(total_g, inv);
  g.o = total_objective(g.l_w, g.l_g);
  return g;
}

StepMetrics train_step(ModelState& state, const std::vector<const PreparedItem*>& batch,
                       const PerceptualEmbedder& emb, Rng& rng) {
  if (batch.empty()) throw InvariantError("empty batch");
  std::vector<std::vector<std::size_t>> fakes;
  for (const PreparedItem* item : batch) {
    fakes.push_back(
        draw_without_replacement(item->pool_fakes.size(), state.config.fake_set_size, rng));
  }
  state.warp.store.zero_grad();
  state.gen.store.zero_grad();
  const ObjectiveGraph g = objective_graph(state, batch, fakes, emb);
  g.o.backward();
  for (const auto* store : {&state.warp.store, &state.gen.store}) {
    for (const auto& p : *store) {
      if (!p.grad.all_finite()) throw NonFiniteLoss("non-finite gradient in " + p.name);
    }
  }
  state.optimizer.step({&state.warp.store, &state.gen.store});
  ++state.step;
  return {state.step, g.l_w.value().item(), g.l_g.value().item(), g.o.value().item()};
}

std::string metrics_header() { return "step,L_W,L_G,O"; }

std::string metrics_row(const StepMetrics& m) {
  return std::to_string(m.step) + "," + format_double(m.l_w) + "," + format_double(m.l_g) + "," +
         format_double(m.o);
}

std::string checkpoint_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06llu.bin", static_cast<unsigned long long>(step));
  return buf;
}

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  std::optional<std::filesystem::path> best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0 && e.path().extension() == ".bin") {
      if (!best || name > best->filename().string()) best = e.path();
    }
  }
  return best;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

// Persons for the given step, walking a fresh permutation every epoch.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t step, std::uint64_t batch,
                                       std::size_t n) {
  std::vector<std::size_t> out;
  for (std::uint64_t b = 0; b < batch; ++b) {
    const std::uint64_t k = step * batch + b;
    const std::uint64_t epoch = k / n;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(seed ^ 0x5348554646ULL, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
    out.push_back(perm[k % n]);
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.items.empty()) throw InvariantError("dataset is empty");
  if (dataset.canvas.height != config.canvas.height || dataset.canvas.width != config.canvas.width) {
    throw ShapeError("dataset resolution " + std::to_string(dataset.canvas.height) + "x" +
                     std::to_string(dataset.canvas.width) + " differs from config " +
                     std::to_string(config.canvas.height) + "x" + std::to_string(config.canvas.width));
  }
  TrainResult res{ModelState::init(config), {}};
  ModelState& state = res.state;
  std::filesystem::path ckpt_dir, csv_path;
  std::optional<std::filesystem::path> last_ckpt;
  if (options.run_dir) {
    ckpt_dir = *options.run_dir / "checkpoints";
    csv_path = *options.run_dir / "metrics.csv";
    std::filesystem::create_directories(ckpt_dir);
    std::vector<std::string> kept{metrics_header()};
    if (!options.resume && latest_checkpoint(ckpt_dir)) {
      throw std::runtime_error(ckpt_dir.string() + " already holds checkpoints; resume instead");
    }
    if (options.resume) {
      if (auto latest = latest_checkpoint(ckpt_dir)) {
        ModelState loaded = load_checkpoint(*latest);
        TrainConfig same = loaded.config;
        same.steps = config.steps;  // resuming may extend the run
        if (same.to_text() != config.to_text()) {
          throw ConfigError("checkpoint " + latest->string() + " was trained with a different config");
        }
        state = std::move(loaded);
        state.config.steps = config.steps;
        last_ckpt = latest;
        const auto lines = read_lines(csv_path);
        for (std::size_t i = 1; i < lines.size() && i <= state.step; ++i) kept.push_back(lines[i]);
        if (kept.size() != state.step + 1) {
          throw std::runtime_error("metrics.csv holds fewer rows than checkpoint step " +
                                   std::to_string(state.step));
        }
      }
    }
    std::ofstream csv(csv_path, std::ios::trunc);
    for (const auto& l : kept) csv << l << "\n";
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  }

  const auto items = prepare_dataset(dataset, config.warp.levels);
  const PerceptualEmbedder emb(kEmbedderSeed);
  std::ofstream csv;
  if (options.run_dir) csv.open(csv_path, std::ios::app);
  while (state.step < config.steps) {
    const auto idx = batch_indices(config.seed, state.step, config.batch_size, items.size());
    std::vector<const PreparedItem*> batch;
    for (auto i : idx) batch.push_back(&items[i]);
    Rng rng(mix_seed(config.seed, state.step));
    StepMetrics m;
    try {
      m = train_step(state, batch, emb, rng);
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(std::string(e.what()) + " at step " + std::to_string(state.step + 1) +
                          "; last good checkpoint: " +
                          (last_ckpt ? last_ckpt->string() : std::string("none")));
    }
    res.metrics.push_back(m);
    if (options.on_step) options.on_step(m);
    if (options.run_dir) {
      csv << metrics_row(m) << "\n" << std::flush;
      if (!csv) throw std::runtime_error("step " + std::to_string(m.step) + ": cannot append metrics");
      if (m.step % config.checkpoint_interval == 0 || m.step == config.steps) {
        const auto p = ckpt_dir / checkpoint_name(m.step);
        if (!std::filesystem::exists(p)) save_checkpoint(state, p);
        last_ckpt = p;
      }
    }
  }
  if (options.run_dir && config.steps == 0) {
    const auto p = ckpt_dir / checkpoint_name(0);
    if (!std::filesystem::exists(p)) save_checkpoint(state, p);
  }
  return res;
}

InferenceResult infer(const ImageTensor& person, const ImageTensor& cloth, const ModelState& state) {
  const auto& c = state.config.canvas;
  for (const ImageTensor* im : {&person, &cloth}) {
    if (im->height() != c.height || im->width() != c.width) {
      throw ShapeError("input is " + std::to_string(im->height()) + "x" + std::to_string(im->width()) +
                       " but the model expects " + std::to_string(c.height) + "x" +
                       std::to_string(c.width));
    }
  }
  const FlowPyramid flows = predict_flow(person, cloth, state.warp);
  WarpedCloth warped = warp(cloth, flows.finest());
  auto [image, masks] = generate(warped, person, state.gen);
  return {std::move(image), std::move(masks), std::move(warped)};
}

}  // namespace rmgn
