#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "dslam/core/autodiff.hpp"
#include "dslam/core/random.hpp"
#include "dslam/core/tensor.hpp"

namespace dslam {

// Named parameter tensors with Adam moment accumulators and a trainable flag.
// Frozen parameters receive no updates and no moment changes.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    bool trainable = true;
  };

  Tensor& create(const std::string& name, Shape shape, double fill = 0.0) {
    if (params_.count(name)) throw std::invalid_argument("param already exists: " + name);
    Entry e;
    e.value = Tensor(shape, fill);
    e.grad = Tensor(shape);
    e.m = Tensor(shape);
    e.v = Tensor(shape);
    auto [it, ok] = params_.emplace(name, std::move(e));
    (void)ok;
    return it->second.value;
  }

  // Uniform in +/- sqrt(6 / (fan_in + fan_out)); biases should use create().
  Tensor& create_dense(const std::string& name, Shape shape, int fan_in, int fan_out, Rng& rng) {
    Tensor& t = create(name, shape);
    const double lim = std::sqrt(6.0 / double(fan_in + fan_out));
    for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-lim, lim);
    return t;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("no such param: " + name);
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("no such param: " + name);
    return it->second;
  }

  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }

  void set_trainable(const std::string& name, bool flag) { entry(name).trainable = flag; }
  bool trainable(const std::string& name) const { return entry(name).trainable; }

  // Freeze every parameter whose name starts with `prefix`.
  void freeze_prefix(const std::string& prefix, bool frozen = true) {
    for (auto& [k, e] : params_)
      if (k.rfind(prefix, 0) == 0) e.trainable = !frozen;
  }

  void zero_grads() {
    for (auto& [k, e] : params_) std::fill(e.grad.data(), e.grad.data() + e.grad.numel(), 0.0);
  }

  // Overwrite grads with the tape adjoints; parameters unreachable from the
  // loss end up with zero gradient. Names not present in the store (watched
  // non-parameter inputs) are ignored.
  void set_grads(const std::map<std::string, Tensor>& adjoints) {
    zero_grads();
    add_grads(adjoints);
  }

  void add_grads(const std::map<std::string, Tensor>& adjoints) {
    for (const auto& [name, g] : adjoints) {
      auto it = params_.find(name);
      if (it == params_.end()) continue;
      Tensor& dst = it->second.grad;
      if (dst.shape() != g.shape())
        throw std::invalid_argument("gradient shape mismatch for " + name + ": " +
                                    dst.shape().str() + " vs " + g.shape().str());
      for (int i = 0; i < dst.numel(); ++i) dst.data()[i] += g.data()[i];
    }
  }

  // Adaptive moment estimation update on trainable parameters.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1, double(step_count_));
    const double bc2 = 1.0 - std::pow(beta2, double(step_count_));
    for (auto& [k, e] : params_) {
      if (!e.trainable) continue;
      for (int i = 0; i < e.value.numel(); ++i) {
        const double g = e.grad.data()[i];
        double& m = e.m.data()[i];
        double& v = e.v.data()[i];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        e.value.data()[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
      }
    }
  }

  int64_t step_count() const { return step_count_; }

  std::map<std::string, Tensor> snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [k, e] : params_) out.emplace(k, e.value.clone());
    return out;
  }

  void restore(const std::map<std::string, Tensor>& snap) {
    for (const auto& [name, t] : snap) {
      auto it = params_.find(name);
      if (it == params_.end()) throw std::invalid_argument("restore: no such param: " + name);
      if (it->second.value.shape() != t.shape())
        throw std::invalid_argument("restore: shape mismatch for " + name);
      std::copy(t.data(), t.data() + t.numel(), it->second.value.data());
    }
  }

  void reset_moments() {
    step_count_ = 0;
    for (auto& [k, e] : params_) {
      std::fill(e.m.data(), e.m.data() + e.m.numel(), 0.0);
      std::fill(e.v.data(), e.v.data() + e.v.numel(), 0.0);
    }
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Entry> params_;
  int64_t step_count_ = 0;
};

// Run the reverse pass and deposit adjoints into the store.
inline void backward_into(Tape& tape, const Tensor& loss, ParamStore& store,
                          bool accumulate = false) {
  tape.backward(loss);
  auto g = tape.leaf_grads();
  if (accumulate)
    store.add_grads(g);
  else
    store.set_grads(g);
}

// Resolves named parameters either as watched tape leaves (training) or as
// plain value tensors (inference); each parameter is watched at most once per
// tape so adjoints from repeated use accumulate on one leaf.
class ParamCtx {
 public:
  ParamCtx(const ParamStore& store, Tape* tape) : store_(&store), tape_(tape) {}
  explicit ParamCtx(const ParamStore& store) : store_(&store), tape_(nullptr) {}

  Tensor operator()(const std::string& name) {
    if (!tape_) return store_->value(name);
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Tensor leaf = tape_->leaf(store_->value(name), name);
    cache_.emplace(name, leaf);
    return leaf;
  }

  Tape* tape() const { return tape_; }

 private:
  const ParamStore* store_;
  Tape* tape_;
  std::map<std::string, Tensor> cache_;
};

}  // namespace dslam
