#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "rmgn/autograd.hpp"
#include "rmgn/tensor.hpp"

namespace rmgn {

/// splitmix64 finaliser; used to derive per-item and per-step seeds so that
/// results do not depend on evaluation order.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Named, ordered collection of trainable tensors.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor init);
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t index_of(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  bool all_finite() const;

  /// Writes count, then per parameter: name, rank, dims, raw float64 values.
  void write(std::ostream& out) const;
  /// Reads a block written by write(); names and shapes must match this store.
  void read(std::istream& in);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Binds parameters into one forward graph. With a mutable store the leaves
/// record gradients into Parameter::grad; with a const store they are
/// constants and nothing is recorded.
class Session {
 public:
  explicit Session(ParamStore& store) : store_(&store), sink_(&store), leaves_(store.size()) {}
  explicit Session(const ParamStore& store) : store_(&store), leaves_(store.size()) {}

  const ag::Var& param(std::size_t index);
  bool tracking() const { return sink_ != nullptr; }

 private:
  const ParamStore* store_;
  ParamStore* sink_ = nullptr;
  std::vector<ag::Var> leaves_;
};

/// Handle to a conv weight/bias pair inside a ParamStore.
struct Conv {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int stride = 1;
};

enum class Init { kLecun, kZero, kSmall };

/// Registers `<name>.w` [cout,cin,k,k] and `<name>.b` [cout]. kLecun draws
/// N(0, 1/fan_in); kSmall draws N(0, 0.01/fan_in); kZero leaves zeros.
/// Biases start at `bias_fill`.
Conv add_conv(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
              std::size_t kernel, int stride, Rng& rng, Init init = Init::kLecun,
              double bias_fill = 0.0);

ag::Var apply(Session& s, const Conv& conv, const ag::Var& x);

/// Adam with bias correction. Moments are keyed by position in the stores
/// passed to step(), which must be the same stores in the same order on
/// every call.
class Adam {
 public:
  struct Settings {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam() = default;
  explicit Adam(Settings settings) : settings_(settings) {}

  void step(std::vector<ParamStore*> stores);
  std::uint64_t steps_taken() const { return t_; }
  const Settings& settings() const { return settings_; }
  void set_learning_rate(double lr) { settings_.learning_rate = lr; }

  void write(std::ostream& out) const;
  void read(std::istream& in);

 private:
  Settings settings_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace rmgn
