#include "rmgn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rmgn/errors.hpp"
#include "rmgn/keyvalue.hpp"

namespace rmgn {

EmbeddingStats fit_stats(const std::vector<std::vector<double>>& embeddings) {
  if (embeddings.size() < 2) throw InvariantError("fit_stats needs at least two samples");
  const auto d = static_cast<Eigen::Index>(embeddings[0].size());
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(embeddings[static_cast<std::size_t>(i)].size()) != d) {
      throw ShapeError("embeddings differ in dimension");
    }
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = embeddings[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  EmbeddingStats s;
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

EmbeddingStats fit_stats(const std::vector<ImageTensor>& images, const PerceptualEmbedder& emb) {
  if (images.size() < 2) throw InvariantError("fit_stats needs at least two images");
  std::vector<std::vector<double>> e;
  for (const auto& im : images) e.push_back(emb.embed(im));
  return fit_stats(e);
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows()) {
    throw ShapeError("frechet_distance: dimensions " + std::to_string(a.mean.size()) + " and " +
                     std::to_string(b.mean.size()) + " differ");
  }
  const Eigen::MatrixXd ra = psd_sqrt(a.cov);
  const Eigen::MatrixXd inner = ra * b.cov * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()),
                                                     Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

double mask_region_score(const std::vector<RegionalMask>& masks,
                         const std::vector<Tensor>& cloth_masks) {
  if (masks.empty() || masks.size() != cloth_masks.size()) {
    throw InvariantError("mask_region_score needs one cloth mask per regional mask");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const Tensor& m = masks[i].values();
    const Tensor& g = cloth_masks[i];
    require_binary_mask(g, "cloth mask");
    require_same_shape(m, g, "mask_region_score");
    double in = 0, out = 0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (g[k] > 0.5) {
        in += m[k];
        ++n_in;
      } else {
        out += m[k];
        ++n_out;
      }
    }
    if (n_in == 0 || n_out == 0) {
      throw InvariantError("cloth mask must have pixels both inside and outside the region");
    }
    total += in / static_cast<double>(n_in) - out / static_cast<double>(n_out);
  }
  return total / static_cast<double>(masks.size());
}

EvalMetrics evaluate_tryon(const ModelState& state, const Dataset& eval_set,
                           const PerceptualEmbedder& emb) {
  if (eval_set.items.empty()) throw InvariantError("empty evaluation set");
  std::vector<ImageTensor> outputs, oracles;
  std::vector<RegionalMask> finest;
  std::vector<Tensor> regions;
  EvalMetrics m;
  for (const auto& item : eval_set.items) {
    const PersonRender r = render_person(item.person, eval_set.canvas);
    const ImageTensor cloth = render_cloth(item.target, eval_set.canvas);
    const ImageTensor oracle = oracle_teacher(r.image, r.cloth_region, r.geometry, cloth);
    InferenceResult res = infer(r.image, cloth, state);
    m.l1_oracle += loss_pixel(res.image, oracle);
    double region_sum = 0, count = 0;
    const std::size_t hw = r.cloth_region.size();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < hw; ++p) {
        if (r.cloth_region[p] == 0.0) continue;
        region_sum += std::abs(res.image.tensor()[c * hw + p] - oracle.tensor()[c * hw + p]);
        count += 1;
      }
    }
    m.l1_region += count > 0 ? region_sum / count : 0.0;
    if (!res.masks.empty()) {
      finest.push_back(res.masks.back());
      regions.push_back(r.cloth_region);
    }
    outputs.push_back(std::move(res.image));
    oracles.push_back(oracle);
  }
  const double n = static_cast<double>(eval_set.items.size());
  m.l1_oracle /= n;
  m.l1_region /= n;
  if (outputs.size() >= 2) m.fid = frechet_distance(fit_stats(outputs, emb), fit_stats(oracles, emb));
  if (!finest.empty()) m.mask_score = mask_region_score(finest, regions);
  return m;
}

std::vector<Variant> ablation_variants(std::uint64_t full_fake_set_size) {
  return {{"A", false, false, 1},
          {"B", true, false, 1},
          {"C", true, true, 1},
          {"D", true, true, full_fake_set_size}};
}

namespace {

std::string metrics_text(const EvalMetrics& m) {
  KeyValueFile kv;
  kv.set("l1_oracle", format_double(m.l1_oracle));
  kv.set("l1_region", format_double(m.l1_region));
  kv.set("fid", format_double(m.fid));
  kv.set("mask_score", format_double(m.mask_score));
  return kv.to_string();
}

char hex_digit(unsigned v) { return "0123456789abcdef"[v & 15]; }

std::string hex64(std::uint64_t h) {
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = hex_digit(static_cast<unsigned>(h));
  return s;
}

}  // namespace

EvalMetrics RunCache::get(const TrainConfig& config, const Dataset& train_set,
                          const Dataset& eval_set, const std::function<void(const std::string&)>& log) {
  const std::string key = config.to_text() + manifest_text(train_set) + manifest_text(eval_set);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  std::optional<std::filesystem::path> file;
  if (dir_) {
    std::filesystem::create_directories(*dir_);
    file = *dir_ / ("run_" + hex64(content_hash(key)) + ".txt");
    if (std::filesystem::exists(*file)) {
      const auto kv = KeyValueFile::load(*file);
      EvalMetrics m{kv.get_double("l1_oracle"), kv.get_double("l1_region"), kv.get_double("fid"),
                    kv.get_double("mask_score")};
      memo_[key] = m;
      if (log) log("recalled " + file->filename().string());
      return m;
    }
  }
  const auto result = train(config, train_set);
  const EvalMetrics m = evaluate_tryon(result.state, eval_set, PerceptualEmbedder(kEmbedderSeed));
  if (file) {
    std::ofstream out(*file);
    out << metrics_text(m);
  }
  memo_[key] = m;
  return m;
}

std::vector<RunRecord> run_ablation(const TrainConfig& base, const Dataset& train_set,
                                    const Dataset& eval_set, const std::vector<std::uint64_t>& seeds,
                                    RunCache& cache, const std::function<void(const std::string&)>& log) {
  if (seeds.empty()) throw InvariantError("ablation needs at least one seed");
  std::vector<RunRecord> out;
  for (const auto& v : ablation_variants(base.fake_set_size)) {
    for (auto seed : seeds) {
      TrainConfig c = base;
      c.seed = seed;
      c.gen.multilevel = v.multilevel;
      c.gen.mask_fusion = v.mask_fusion;
      c.fake_set_size = v.fake_set_size;
      if (log) log("ablation variant " + v.name + " seed " + std::to_string(seed));
      out.push_back({v.name, seed, v.fake_set_size, cache.get(c, train_set, eval_set, log)});
    }
  }
  return out;
}

std::vector<RunRecord> run_fakeset_sweep(const TrainConfig& base, const Dataset& train_set,
                                         const Dataset& eval_set,
                                         const std::vector<std::uint64_t>& n_values,
                                         const std::vector<std::uint64_t>& seeds, RunCache& cache,
                                         const std::function<void(const std::string&)>& log) {
  if (n_values.empty() || seeds.empty()) throw InvariantError("sweep needs n values and seeds");
  std::vector<RunRecord> out;
  for (auto n : n_values) {
    if (n < 1 || n > 3) throw InvariantError("fake-set sizes must lie in {1, 2, 3}");
    for (auto seed : seeds) {
      TrainConfig c = base;
      c.seed = seed;
      c.fake_set_size = n;
      if (log) log("sweep n_fake " + std::to_string(n) + " seed " + std::to_string(seed));
      out.push_back({"n" + std::to_string(n), seed, n, cache.get(c, train_set, eval_set, log)});
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvariantError("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::pair<std::string, double>> median_l1_by(
    const std::vector<RunRecord>& runs, const std::function<std::string(const RunRecord&)>& key) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : runs) {
    const auto k = key(r);
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(r.metrics.l1_oracle);
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& k : order) out.emplace_back(k, median(groups[k]));
  return out;
}

std::string records_csv(const std::vector<RunRecord>& runs) {
  std::string s = "variant,seed,fake_set_size,l1_oracle,l1_region,fid,mask_score\n";
  for (const auto& r : runs) {
    s += r.variant + "," + std::to_string(r.seed) + "," + std::to_string(r.fake_set_size) + "," +
         format_double(r.metrics.l1_oracle) + "," + format_double(r.metrics.l1_region) + "," +
         format_double(r.metrics.fid) + "," + format_double(r.metrics.mask_score) + "\n";
  }
  return s;
}

void save_panel(const ImageTensor& person, const ImageTensor& cloth, const ImageTensor& output,
                const RegionalMask& mask, const std::filesystem::path& path) {
  const std::size_t h = person.height(), w = person.width();
  for (const ImageTensor* im : {&cloth, &output}) {
    if (im->height() != h || im->width() != w || im->channels() != 3) {
      throw ShapeError("panel images must share one RGB size");
    }
  }
  Tensor panel = Tensor::chw(3, h, 4 * w);
  const ImageTensor* tiles[3] = {&person, &cloth, &output};
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) panel.at(c, y, t * w + x) = tiles[t]->at(c, y, x);
      }
    }
  }
  const std::size_t mh = mask.height(), mw = mask.width();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = 2.0 * mask.values().at(0, y * mh / h, x * mw / w) - 1.0;
      for (std::size_t c = 0; c < 3; ++c) panel.at(c, y, 3 * w + x) = v;
    }
  }
  save_image(ImageTensor(std::move(panel)), path);
}

}  // namespace rmgn
