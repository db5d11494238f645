#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gf {

// Dense n-dimensional array, row-major. The substrate for all numerics:
// activations, parameters and gradients.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> sh) : shape(std::move(sh)) {
    data.assign(size_t(numel_of(shape)), S(0));
  }
  Tensor(std::vector<int> sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
    if (int64_t(data.size()) != numel_of(shape))
      throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str());
  }

  static int64_t numel_of(const std::vector<int>& sh) {
    int64_t n = 1;
    for (int e : sh) {
      if (e <= 0) throw std::invalid_argument("Tensor: nonpositive extent " + std::to_string(e));
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> sh) { return Tensor(std::move(sh)); }
  static Tensor full(std::vector<int> sh, S v) {
    Tensor t(std::move(sh));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  int64_t numel() const { return int64_t(data.size()); }
  int rank() const { return int(shape.size()); }

  S& operator[](size_t i) { return data[i]; }
  const S& operator[](size_t i) const { return data[i]; }

  S& at(int i) { return data[size_t(i)]; }
  S& at(int i, int j) { return data[size_t(i) * shape[1] + j]; }
  S& at(int i, int j, int k) { return data[(size_t(i) * shape[1] + j) * shape[2] + k]; }
  S& at(int i, int j, int k, int l) {
    return data[((size_t(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const S& at(int i) const { return data[size_t(i)]; }
  const S& at(int i, int j) const { return data[size_t(i) * shape[1] + j]; }
  const S& at(int i, int j, int k) const {
    return data[(size_t(i) * shape[1] + j) * shape[2] + k];
  }
  const S& at(int i, int j, int k, int l) const {
    return data[((size_t(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const S& v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

}  // namespace gf
