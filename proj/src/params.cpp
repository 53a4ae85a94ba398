#include "rmgn/params.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "rmgn/binary_io.hpp"
#include "rmgn/errors.hpp"

namespace rmgn {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t ParamStore::add(std::string name, Tensor init) {
  Tensor grad(init.shape(), 0.0);
  params_.push_back({std::move(name), std::move(init), std::move(grad)});
  return params_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

bool ParamStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

void ParamStore::write(std::ostream& out) const {
  io::write_u64(out, params_.size());
  for (const auto& p : params_) {
    io::write_string(out, p.name);
    io::write_tensor(out, p.value);
  }
}

void ParamStore::read(std::istream& in) {
  const auto count = io::read_u64(in);
  if (count != params_.size()) {
    throw InvariantError("parameter block holds " + std::to_string(count) + " tensors, expected " +
                         std::to_string(params_.size()));
  }
  for (auto& p : params_) {
    const std::string name = io::read_string(in);
    if (name != p.name) throw InvariantError("parameter order mismatch: " + name + " vs " + p.name);
    Tensor t = io::read_tensor(in);
    if (!t.same_shape(p.value)) {
      throw ShapeError("parameter " + name + " has shape " + shape_string(t.shape()) +
                       ", expected " + shape_string(p.value.shape()));
    }
    p.value = std::move(t);
  }
}

const ag::Var& Session::param(std::size_t index) {
  ag::Var& slot = leaves_.at(index);
  if (!slot.defined()) {
    const Parameter& p = (*store_)[index];
    slot = sink_ ? ag::Var::leaf(p.value, &(*sink_)[index].grad) : ag::Var::constant(p.value);
  }
  return slot;
}

Conv add_conv(ParamStore& store, const std::string& name, std::size_t cin, std::size_t cout,
              std::size_t kernel, int stride, Rng& rng, Init init, double bias_fill) {
  Tensor w({cout, cin, kernel, kernel}, 0.0);
  const double fan_in = static_cast<double>(cin * kernel * kernel);
  if (init != Init::kZero) {
    const double sd = std::sqrt((init == Init::kSmall ? 0.01 : 1.0) / fan_in);
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : w.values()) v = dist(rng);
  }
  Conv c;
  c.weight = store.add(name + ".w", std::move(w));
  c.bias = store.add(name + ".b", Tensor({cout}, bias_fill));
  c.stride = stride;
  return c;
}

ag::Var apply(Session& s, const Conv& conv, const ag::Var& x) {
  return ag::conv2d(x, s.param(conv.weight), s.param(conv.bias), conv.stride);
}

void Adam::step(std::vector<ParamStore*> stores) {
  std::size_t total = 0;
  for (const auto* st : stores) total += st->size();
  if (m_.empty()) {
    for (const auto* st : stores) {
      for (const auto& p : *st) {
        m_.emplace_back(p.value.shape(), 0.0);
        v_.emplace_back(p.value.shape(), 0.0);
      }
    }
  }
  if (m_.size() != total) throw InvariantError("Adam: parameter layout changed between steps");
  ++t_;
  const auto& s = settings_;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(t_));
  std::size_t slot = 0;
  for (auto* st : stores) {
    for (auto& p : *st) {
      Tensor& m = m_[slot];
      Tensor& v = v_[slot];
      ++slot;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
        p.value[i] -= s.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.epsilon);
      }
    }
  }
}

void Adam::write(std::ostream& out) const {
  io::write_f64(out, settings_.learning_rate);
  io::write_f64(out, settings_.beta1);
  io::write_f64(out, settings_.beta2);
  io::write_f64(out, settings_.epsilon);
  io::write_u64(out, t_);
  io::write_u64(out, m_.size());
  for (std::size_t i = 0; i < m_.size(); ++i) {
    io::write_tensor(out, m_[i]);
    io::write_tensor(out, v_[i]);
  }
}

void Adam::read(std::istream& in) {
  settings_.learning_rate = io::read_f64(in);
  settings_.beta1 = io::read_f64(in);
  settings_.beta2 = io::read_f64(in);
  settings_.epsilon = io::read_f64(in);
  t_ = io::read_u64(in);
  const auto n = io::read_u64(in);
  m_.clear();
  v_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    m_.push_back(io::read_tensor(in));
    v_.push_back(io::read_tensor(in));
  }
}

}  // namespace rmgn
