// rmgn: data generation, training, inference and evaluation.
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure. Every successful
// command prints one `key=value` summary line on stdout.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "rmgn/errors.hpp"
#include "rmgn/evaluation.hpp"
#include "rmgn/keyvalue.hpp"

namespace fs = std::filesystem;
using namespace rmgn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("RMGN_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("RMGN_SEED must be an unsigned integer, got '") + s + "'");
  }
}

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / "manifest.txt" : data;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Content-addressed render cache: cache/<hash of render key>.png.
void cache_render(const fs::path& dir, const std::string& key, const ImageTensor& image) {
  const fs::path p = dir / (hex(content_hash(key)) + ".png");
  if (!fs::exists(p)) save_image(image, p);
}

int cmd_gen_data(std::int64_t n, std::uint64_t seed, const fs::path& out, std::size_t height,
                 std::size_t width) {
  if (n < 1) throw UsageError("--n must be >= 1");
  if (auto s = env_seed()) seed = *s;
  const Dataset ds = generate_dataset(static_cast<std::size_t>(n), seed, Canvas{height, width});
  fs::create_directories(out / "cache");
  write_manifest(ds, out / "manifest.txt");
  for (const auto& item : ds.items) {
    cache_render(out / "cache", spec_key(item.person), render_person(item.person, ds.canvas).image);
    cache_render(out / "cache", spec_key(item.person.worn), render_cloth(item.person.worn, ds.canvas));
    cache_render(out / "cache", spec_key(item.target), render_cloth(item.target, ds.canvas));
    for (const auto& c : item.pool) cache_render(out / "cache", spec_key(c), render_cloth(c, ds.canvas));
  }
  std::cout << "gen-data ok n=" << n << " seed=" << seed
            << " manifest=" << (out / "manifest.txt").string()
            << " hash=" << hex(content_hash(manifest_text(ds))) << "\n";
  return 0;
}

void write_outputs(const ModelState& state, const Dataset& ds, const fs::path& run) {
  fs::create_directories(run / "outputs");
  fs::create_directories(run / "masks");
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& item = ds.items[i];
    const PersonRender r = render_person(item.person, ds.canvas);
    const ImageTensor cloth = render_cloth(item.target, ds.canvas);
    const InferenceResult res = infer(r.image, cloth, state);
    const std::string stem = "item_" + std::to_string(i);
    save_image(res.image, run / "outputs" / (stem + ".png"));
    for (std::size_t l = 0; l < res.masks.size(); ++l) {
      save_mask(res.masks[l].values(), run / "masks" / (stem + "_mask_L" + std::to_string(l + 1) + ".png"));
    }
  }
}

int cmd_train(const fs::path& config_path, const fs::path& data, const fs::path& out, bool resume) {
  TrainConfig config = TrainConfig::load(config_path);
  if (auto s = env_seed()) config.seed = *s;
  const fs::path mpath = manifest_path(data);
  const Dataset ds = read_manifest(mpath);
  fs::create_directories(out);
  write_file(out / "config.txt", config.to_text());
  write_file(out / "manifest.txt", read_file(mpath));
  TrainOptions opts;
  opts.run_dir = out;
  opts.resume = resume;
  const TrainResult res = train(config, ds, opts);
  write_outputs(res.state, ds, out);
  const auto last = latest_checkpoint(out / "checkpoints");
  std::cout << "train ok steps=" << res.state.step;
  if (!res.metrics.empty()) {
    const auto& m = res.metrics.back();
    std::cout << " L_W=" << format_double(m.l_w) << " L_G=" << format_double(m.l_g)
              << " O=" << format_double(m.o);
  }
  std::cout << " run=" << out.string() << " ckpt=" << (last ? last->string() : "none") << "\n";
  return 0;
}

int cmd_infer(const fs::path& person_path, const fs::path& cloth_path, const fs::path& ckpt,
              const fs::path& out, bool dump_masks) {
  const ModelState state = load_checkpoint(ckpt);
  const ImageTensor person = load_image(person_path);
  const ImageTensor cloth = load_image(cloth_path);
  const InferenceResult res = infer(person, cloth, state);
  fs::create_directories(out);
  save_image(res.image, out / "tryon.png");
  if (dump_masks) {
    for (std::size_t l = 0; l < res.masks.size(); ++l) {
      save_mask(res.masks[l].values(), out / ("mask_L" + std::to_string(l + 1) + ".png"));
    }
  }
  std::cout << "infer ok out=" << (out / "tryon.png").string()
            << " masks=" << (dump_masks ? res.masks.size() : 0) << "\n";
  return 0;
}

std::vector<ImageTensor> load_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> out;
  for (const auto& f : files) out.push_back(load_image(f));
  return out;
}

void emit_csv(const std::string& csv, const std::optional<fs::path>& out) {
  if (out) {
    if (out->has_parent_path()) fs::create_directories(out->parent_path());
    write_file(*out, csv);
  } else {
    std::cout << csv;
  }
}

struct EvalArgs {
  std::string mode;
  std::optional<fs::path> ckpt, data, eval_data, out, images, reference, cache;
  std::uint64_t seeds = 3;
};

int cmd_eval(const EvalArgs& a) {
  static const std::set<std::string> modes{"fid", "ablation", "sweep", "mask-score"};
  if (!modes.count(a.mode)) throw UsageError("unknown --mode '" + a.mode + "'");
  const PerceptualEmbedder emb(kEmbedderSeed);

  if (a.mode == "fid" && a.images && a.reference) {
    const double fid = frechet_distance(fit_stats(load_dir(*a.images), emb),
                                        fit_stats(load_dir(*a.reference), emb));
    emit_csv("metric,value\nfid," + format_double(fid) + "\n", a.out);
    std::cout << "eval ok mode=fid fid=" << format_double(fid) << "\n";
    return 0;
  }
  if (!a.ckpt) throw UsageError("--ckpt is required for mode " + a.mode);
  if (!fs::exists(*a.ckpt)) throw std::runtime_error("checkpoint not found: " + a.ckpt->string());
  if (!a.data) throw UsageError("--data is required for mode " + a.mode);
  const ModelState state = load_checkpoint(*a.ckpt);
  const Dataset train_set = read_manifest(manifest_path(*a.data));
  const Dataset eval_set = a.eval_data ? read_manifest(manifest_path(*a.eval_data)) : train_set;

  if (a.mode == "fid" || a.mode == "mask-score") {
    const EvalMetrics m = evaluate_tryon(state, eval_set, emb);
    const std::string csv = "metric,value\nl1_oracle," + format_double(m.l1_oracle) +
                            "\nl1_region," + format_double(m.l1_region) + "\nfid," +
                            format_double(m.fid) + "\nmask_score," + format_double(m.mask_score) + "\n";
    emit_csv(csv, a.out);
    std::cout << "eval ok mode=" << a.mode << " fid=" << format_double(m.fid)
              << " mask_score=" << format_double(m.mask_score)
              << " l1_oracle=" << format_double(m.l1_oracle) << "\n";
    return 0;
  }

  std::uint64_t base_seed = state.config.seed;
  if (auto s = env_seed()) base_seed = *s;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < a.seeds; ++i) seeds.push_back(base_seed + i);
  RunCache cache(a.cache);
  auto log = [](const std::string& s) { std::cerr << s << "\n"; };
  const auto runs = a.mode == "ablation"
                        ? run_ablation(state.config, train_set, eval_set, seeds, cache, log)
                        : run_fakeset_sweep(state.config, train_set, eval_set, {1, 2, 3}, seeds,
                                            cache, log);
  emit_csv(records_csv(runs), a.out);
  std::cout << "eval ok mode=" << a.mode << " runs=" << runs.size();
  for (const auto& [k, v] : median_l1_by(runs, [](const RunRecord& r) { return r.variant; })) {
    std::cout << " median_l1_" << k << "=" << format_double(v);
  }
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regional-mask guided virtual try-on on synthetic data"};
  app.require_subcommand(1);

  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::size_t height = 64, width = 48;
  std::string out;
  auto* gen = app.add_subcommand("gen-data", "Write a dataset manifest and cached renders");
  gen->add_option("--n", n, "Number of persons")->required();
  gen->add_option("--seed", seed, "Dataset seed")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--height", height, "Image height")->check(CLI::PositiveNumber);
  gen->add_option("--width", width, "Image width")->check(CLI::PositiveNumber);

  std::string config, data;
  bool resume = false;
  auto* tr = app.add_subcommand("train", "Train on a dataset manifest");
  tr->add_option("--config", config, "Training config file")->required();
  tr->add_option("--data", data, "Manifest file or gen-data directory")->required();
  tr->add_option("--out", out, "Run directory")->required();
  tr->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");

  std::string person, cloth, ckpt;
  bool dump_masks = false;
  auto* inf = app.add_subcommand("infer", "Try a cloth on a person");
  inf->add_option("--person", person, "Person PNG")->required();
  inf->add_option("--cloth", cloth, "Cloth PNG")->required();
  inf->add_option("--ckpt", ckpt, "Checkpoint")->required();
  inf->add_option("--out", out, "Output directory")->required();
  inf->add_flag("--dump-masks", dump_masks, "Also write mask_L{i}.png per level");

  EvalArgs ea;
  std::string e_ckpt, e_data, e_eval, e_out, e_images, e_ref, e_cache;
  auto* ev = app.add_subcommand("eval", "Metrics, ablation and fake-set sweep");
  ev->add_option("--mode", ea.mode, "fid | ablation | sweep | mask-score")->required();
  ev->add_option("--ckpt", e_ckpt, "Trained checkpoint");
  ev->add_option("--data", e_data, "Training manifest");
  ev->add_option("--eval-data", e_eval, "Evaluation manifest (default: --data)");
  ev->add_option("--out", e_out, "CSV output path (default: stdout)");
  ev->add_option("--images", e_images, "fid: directory of PNGs");
  ev->add_option("--reference", e_ref, "fid: reference directory of PNGs");
  ev->add_option("--cache", e_cache, "ablation/sweep: directory for per-run metrics");
  ev->add_option("--seeds", ea.seeds, "ablation/sweep: number of seeds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
  try {
    if (*gen) return cmd_gen_data(n, seed, out, height, width);
    if (*tr) return cmd_train(config, data, out, resume);
    if (*inf) return cmd_infer(person, cloth, ckpt, out, dump_masks);
    ea.ckpt = opt(e_ckpt);
    ea.data = opt(e_data);
    ea.eval_data = opt(e_eval);
    ea.out = opt(e_out);
    ea.images = opt(e_images);
    ea.reference = opt(e_ref);
    ea.cache = opt(e_cache);
    return cmd_eval(ea);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
