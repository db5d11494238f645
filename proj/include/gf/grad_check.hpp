#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gf/graph.hpp"
#include "gf/param_store.hpp"
#include "gf/rng.hpp"

namespace gf {

struct GradCheckParamResult {
  std::string name;
  double max_rel_err = 0.0;
  int probed = 0;
};

struct GradCheckReport {
  std::vector<GradCheckParamResult> params;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Central finite differences against the tape's analytic gradients.
// make_loss builds a fresh graph from the current store values and returns a
// scalar root. probe_limit == 0 checks every element; otherwise a seeded
// random subset of that size per parameter.
template <class S, class LossFn>
GradCheckReport grad_check(LossFn&& make_loss, ParamStore<S>& store, double tolerance, double h,
                           int probe_limit = 0, uint64_t seed = 0) {
  GradCheckReport report;
  report.tolerance = tolerance;

  std::map<std::string, Tensor<S>> analytic;
  {
    Graph<S> g;
    std::map<std::string, Var> vars;
    for (auto& [name, e] : store.entries) vars[name] = g.input(e.value);
    Var root = make_loss(g, vars);
    const S loss = g.value(root).data[0];
    if (!std::isfinite(double(loss)))
      throw std::invalid_argument("grad_check: loss is not finite");
    g.backward(root);
    for (auto& [name, v] : vars) analytic.emplace(name, g.grad(v));
  }

  auto eval_loss = [&]() -> double {
    Graph<S> g;
    std::map<std::string, Var> vars;
    for (auto& [name, e] : store.entries) vars[name] = g.input(e.value);
    Var root = make_loss(g, vars);
    return double(g.value(root).data[0]);
  };

  Rng rng(derive_seed(seed, "grad_check_probes"));
  for (auto& [name, e] : store.entries) {
    GradCheckParamResult pr;
    pr.name = name;
    const int64_t n = e.value.numel();
    std::vector<int64_t> idx;
    if (probe_limit <= 0 || probe_limit >= n) {
      idx.resize(size_t(n));
      for (int64_t i = 0; i < n; ++i) idx[size_t(i)] = i;
    } else {
      for (int i = 0; i < probe_limit; ++i) idx.push_back(rng.uniform_int(0, n - 1));
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    }
    for (int64_t i : idx) {
      const S saved = e.value.data[size_t(i)];
      const S hi = S(double(saved) + h);
      const S lo = S(double(saved) - h);
      e.value.data[size_t(i)] = hi;
      const double fp = eval_loss();
      e.value.data[size_t(i)] = lo;
      const double fm = eval_loss();
      e.value.data[size_t(i)] = saved;
      const double fd = (fp - fm) / (double(hi) - double(lo));
      const double an = double(analytic.at(name).data[size_t(i)]);
      const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      pr.max_rel_err = std::max(pr.max_rel_err, rel);
      ++pr.probed;
    }
    report.max_rel_err = std::max(report.max_rel_err, pr.max_rel_err);
    report.params.push_back(std::move(pr));
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace gf
