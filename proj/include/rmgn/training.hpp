#pragma once

// Parser-free training on fake triplets, checkpointing and inference.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rmgn/atelier.hpp"
#include "rmgn/generator.hpp"
#include "rmgn/objectives.hpp"
#include "rmgn/warp.hpp"

namespace rmgn {

inline constexpr std::uint64_t kEmbedderSeed = 20211;

struct TrainConfig {
  std::uint64_t steps = 500;
  std::uint64_t batch_size = 1;
  std::uint64_t fake_set_size = 3;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Canvas canvas;
  LossWeights weights;
  std::uint64_t checkpoint_interval = 100;
  WarpConfig warp;
  GeneratorConfig gen;

  void validate() const;
  std::string to_text() const;
  /// Required keys: steps, batch_size, fake_set_size, learning_rate, seed,
  /// height, width, gen_levels, warp_levels, lambda_f, lambda_sec, lambda_d,
  /// lambda_p, checkpoint_interval. Optional: gen_widths, warp_widths,
  /// units_per_block, multilevel, mask_fusion.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
};

struct ModelState {
  TrainConfig config;
  WarpParams warp;
  GeneratorParams gen;
  Adam optimizer;
  std::uint64_t step = 0;

  static ModelState init(const TrainConfig& config);
};

/// Checkpoint container: "RMGNCKPT", u32 version, u32 section count, then a
/// table of (name, offset, size) followed by the sections config, warp, gen,
/// optimizer and rng.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Everything the loop needs about one person, rendered once.
struct PreparedItem {
  PersonRender render;
  ImageTensor worn_cloth;
  WarpedCloth gt;
  FlowPyramid teacher;
  std::vector<ClothSpec> pool;
  std::vector<ImageTensor> pool_fakes;  // oracle composite per pool cloth
  ClothSpec target;
};

std::vector<PreparedItem> prepare_dataset(const Dataset& dataset, int warp_levels);

/// `n` oracle composites of distinct clothes drawn without replacement from
/// `clothes`, all over the geometry of `person`.
std::vector<ImageTensor> sample_fake_set(const PersonRender& person,
                                         const std::vector<ClothSpec>& clothes, std::size_t n,
                                         Rng& rng);

struct StepMetrics {
  std::uint64_t step = 0;  // step count after the update
  double l_w = 0, l_g = 0, o = 0;
};

struct ObjectiveGraph {
  ag::Var l_w, l_g, o;
};

/// O = L_W + L_G averaged over the batch; fakes[b] indexes the pool
/// composites of batch[b]. Gradients flow into both parameter stores.
ObjectiveGraph objective_graph(ModelState& state, const std::vector<const PreparedItem*>& batch,
                               const std::vector<std::vector<std::size_t>>& fakes,
                               const PerceptualEmbedder& emb);

/// One optimiser update on the given persons (each with its own fake set).
StepMetrics train_step(ModelState& state, const std::vector<const PreparedItem*>& batch,
                       const PerceptualEmbedder& emb, Rng& rng);

struct TrainOptions {
  std::optional<std::filesystem::path> run_dir;  // checkpoints/ and metrics.csv
  bool resume = false;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  ModelState state;
  std::vector<StepMetrics> metrics;
};

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainOptions& options = {});

std::string metrics_header();
std::string metrics_row(const StepMetrics& m);

struct InferenceResult {
  ImageTensor image;
  std::vector<RegionalMask> masks;
  WarpedCloth warped;
};

/// predict_flow -> warp -> generate on exactly two images.
InferenceResult infer(const ImageTensor& person, const ImageTensor& cloth, const ModelState& state);

/// Path of the highest-step checkpoint in `dir`, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir);
std::string checkpoint_name(std::uint64_t step);

}  // namespace rmgn
