#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "gf/tensor.hpp"

namespace gf {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable parameters plus their Adam moments. std::map keeps a
// stable name order, so updates and checkpoints are deterministic.
template <class S>
struct ParamStore {
  struct Entry {
    Tensor<S> value;
    Tensor<S> m;
    Tensor<S> v;
  };

  std::map<std::string, Entry> entries;
  int64_t step = 0;  // shared step count, incremented once per adam_step

  void add(const std::string& name, Tensor<S> init) {
    if (entries.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    Entry e;
    e.m = Tensor<S>(init.shape);
    e.v = Tensor<S>(init.shape);
    e.value = std::move(init);
    entries.emplace(name, std::move(e));
  }

  Entry& at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
    return it->second;
  }

  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& [k, e] : entries) n += e.value.numel();
    return n;
  }
};

// One Adam update with bias correction. Every parameter must have a gradient
// and vice versa; anything else is a wiring bug and is rejected.
template <class S>
void adam_step(ParamStore<S>& store, const std::map<std::string, Tensor<S>>& grads,
               const AdamConfig& cfg) {
  for (const auto& [name, g] : grads)
    if (!store.entries.count(name))
      throw std::invalid_argument("adam_step: gradient for unknown parameter " + name);
  for (const auto& [name, e] : store.entries)
    if (!grads.count(name))
      throw std::invalid_argument("adam_step: missing gradient for parameter " + name);

  store.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(store.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(store.step));
  for (auto& [name, e] : store.entries) {
    const Tensor<S>& g = grads.at(name);
    if (!g.same_shape(e.value))
      throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() +
                                  " != parameter shape " + e.value.shape_str() + " for " + name);
    for (size_t i = 0; i < e.value.data.size(); ++i) {
      const double gi = double(g.data[i]);
      const double m = cfg.beta1 * double(e.m.data[i]) + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * double(e.v.data[i]) + (1.0 - cfg.beta2) * gi * gi;
      e.m.data[i] = S(m);
      e.v.data[i] = S(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      e.value.data[i] = S(double(e.value.data[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace gf
