#pragma once

// Fréchet distance on frozen random embeddings, mask probes and the
// ablation / fake-set sweep harness.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmgn/training.hpp"

namespace rmgn {

struct EmbeddingStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Spatially pooled final-tap embeddings; unbiased covariance.
EmbeddingStats fit_stats(const std::vector<ImageTensor>& images, const PerceptualEmbedder& emb);
EmbeddingStats fit_stats(const std::vector<std::vector<double>>& embeddings);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), eigenvalues
/// clamped at zero; never negative.
double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

/// Mean over samples of (mean mask inside the cloth region - mean outside).
double mask_region_score(const std::vector<RegionalMask>& masks,
                         const std::vector<Tensor>& cloth_masks);

struct EvalMetrics {
  double l1_oracle = 0;  // full image
  double l1_region = 0;  // restricted to the person's cloth region
  double fid = 0;        // outputs vs oracle composites
  double mask_score = 0; // finest mask vs cloth region; 0 without mask fusion
};

/// Tries every person of `eval_set` on its target cloth and compares with
/// the oracle composite.
EvalMetrics evaluate_tryon(const ModelState& state, const Dataset& eval_set,
                           const PerceptualEmbedder& emb);

struct Variant {
  std::string name;
  bool multilevel = true;
  bool mask_fusion = true;
  std::uint64_t fake_set_size = 3;
};

/// A: single-level extractor, concat fusion, one fake. B adds the multi-level
/// extractor, C the regional mask, D the full fake set.
std::vector<Variant> ablation_variants(std::uint64_t full_fake_set_size = 3);

struct RunRecord {
  std::string variant;
  std::uint64_t seed = 0;
  std::uint64_t fake_set_size = 0;
  EvalMetrics metrics;
};

/// Trains (or recalls) one configuration and evaluates it. Runs are keyed by
/// the full config text, so identical configurations across the ablation and
/// the sweep train once. With a cache directory the metrics persist as
/// small text files.
class RunCache {
 public:
  explicit RunCache(std::optional<std::filesystem::path> dir = std::nullopt) : dir_(std::move(dir)) {}

  EvalMetrics get(const TrainConfig& config, const Dataset& train_set, const Dataset& eval_set,
                  const std::function<void(const std::string&)>& log = {});

 private:
  std::optional<std::filesystem::path> dir_;
  std::map<std::string, EvalMetrics> memo_;
};

std::vector<RunRecord> run_ablation(const TrainConfig& base, const Dataset& train_set,
                                    const Dataset& eval_set, const std::vector<std::uint64_t>& seeds,
                                    RunCache& cache,
                                    const std::function<void(const std::string&)>& log = {});

std::vector<RunRecord> run_fakeset_sweep(const TrainConfig& base, const Dataset& train_set,
                                         const Dataset& eval_set,
                                         const std::vector<std::uint64_t>& n_values,
                                         const std::vector<std::uint64_t>& seeds, RunCache& cache,
                                         const std::function<void(const std::string&)>& log = {});

double median(std::vector<double> v);

/// Median l1_oracle per group key (variant name or fake-set size), in order
/// of first appearance.
std::vector<std::pair<std::string, double>> median_l1_by(
    const std::vector<RunRecord>& runs, const std::function<std::string(const RunRecord&)>& key);

std::string records_csv(const std::vector<RunRecord>& runs);

/// person | cloth | output | mask, side by side as one RGB PNG. The mask is
/// resized to the image grid by nearest neighbour.
void save_panel(const ImageTensor& person, const ImageTensor& cloth, const ImageTensor& output,
                const RegionalMask& mask, const std::filesystem::path& path);

}  // namespace rmgn
