#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gf/gemm.hpp"
#include "gf/tensor.hpp"

namespace gf {

// Handle into a Graph's node list.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction, so backward() is a single reverse sweep.
// Operators are pure functions of their input node values; graphs built from
// identical inputs are bitwise identical.
template <class S>
class Graph {
 public:
  Var input(Tensor<S> v) { return push(std::move(v), {}); }

  const Tensor<S>& value(Var x) const { return node(x).val; }
  const Tensor<S>& grad(Var x) const {
    const Node& n = node(x);
    if (n.grad.data.empty()) throw std::logic_error("Graph: grad read before backward()");
    return n.grad;
  }
  int size() const { return int(nodes_.size()); }

  // y = conv(x, w) + b; x:[Cin,H,W], w:[Cout,Cin,k,k], b:[Cout]
  Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor<S>& X = value(x);
    const Tensor<S>& W = value(w);
    const Tensor<S>& B = value(b);
    if (X.rank() != 3) throw std::invalid_argument("conv2d: input rank " + std::to_string(X.rank()) + " != 3");
    if (W.rank() != 4) throw std::invalid_argument("conv2d: weight rank " + std::to_string(W.rank()) + " != 4");
    const int Cin = X.shape[0], H = X.shape[1], Wd = X.shape[2];
    const int Cout = W.shape[0], k = W.shape[2];
    if (W.shape[1] != Cin)
      throw std::invalid_argument("conv2d: weight input channels " + std::to_string(W.shape[1]) +
                                  " != input channels " + std::to_string(Cin));
    if (W.shape[3] != k)
      throw std::invalid_argument("conv2d: non-square kernel " + std::to_string(k) + "x" +
                                  std::to_string(W.shape[3]));
    if (B.rank() != 1 || B.shape[0] != Cout)
      throw std::invalid_argument("conv2d: bias shape " + B.shape_str() + " != [" +
                                  std::to_string(Cout) + "]");
    if (stride < 1) throw std::invalid_argument("conv2d: stride " + std::to_string(stride) + " < 1");
    if (pad < 0) throw std::invalid_argument("conv2d: negative pad");
    if (k > H + 2 * pad)
      throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + " exceeds padded height " +
                                  std::to_string(H + 2 * pad));
    if (k > Wd + 2 * pad)
      throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + " exceeds padded width " +
                                  std::to_string(Wd + 2 * pad));
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (Wd + 2 * pad - k) / stride + 1;
    const int K = Cin * k * k, N = Ho * Wo;

    Tensor<S> out({Cout, Ho, Wo});
    std::vector<S> col(size_t(K) * N);
    im2col(X.data.data(), Cin, H, Wd, k, stride, pad, Ho, Wo, col.data());
    for (int oc = 0; oc < Cout; ++oc) {
      S* row = out.data.data() + size_t(oc) * N;
      for (int n = 0; n < N; ++n) row[n] = B.data[oc];
    }
    gemm_nn_acc(Cout, N, K, W.data.data(), col.data(), out.data.data());

    const int xi = x.id, wi = w.id, bi = b.id;
    return push(std::move(out), [=](Graph& g, int self) {
      const Tensor<S>& Xv = g.nodes_[xi].val;
      const Tensor<S>& Wv = g.nodes_[wi].val;
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      Tensor<S>& gw = g.nodes_[wi].grad;
      Tensor<S>& gb = g.nodes_[bi].grad;
      std::vector<S> col2(size_t(K) * N);
      im2col(Xv.data.data(), Cin, H, Wd, k, stride, pad, Ho, Wo, col2.data());
      gemm_nt_acc(Cout, K, N, go.data.data(), col2.data(), gw.data.data());
      for (int oc = 0; oc < Cout; ++oc) {
        S acc = S(0);
        const S* row = go.data.data() + size_t(oc) * N;
        for (int n = 0; n < N; ++n) acc += row[n];
        gb.data[oc] += acc;
      }
      std::vector<S> dcol(size_t(K) * N, S(0));
      gemm_tn_acc(K, N, Cout, Wv.data.data(), go.data.data(), dcol.data());
      col2im_acc(dcol.data(), Cin, H, Wd, k, stride, pad, Ho, Wo, gx.data.data());
    });
  }

  Var relu(Var x) {
    Tensor<S> out = value(x);
    for (S& v : out.data) v = v > S(0) ? v : S(0);
    const int xi = x.id;
    return push(std::move(out), [xi](Graph& g, int self) {
      const Tensor<S>& xv = g.nodes_[xi].val;
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      for (size_t i = 0; i < go.data.size(); ++i)
        if (xv.data[i] > S(0)) gx.data[i] += go.data[i];
    });
  }

  Var sigmoid(Var x) {
    Tensor<S> out = value(x);
    for (S& v : out.data) v = S(1) / (S(1) + std::exp(-v));
    const int xi = x.id;
    return push(std::move(out), [xi](Graph& g, int self) {
      const Tensor<S>& y = g.nodes_[self].val;
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      for (size_t i = 0; i < go.data.size(); ++i)
        gx.data[i] += go.data[i] * y.data[i] * (S(1) - y.data[i]);
    });
  }

  Var tanh_fn(Var x) {
    Tensor<S> out = value(x);
    for (S& v : out.data) v = std::tanh(v);
    const int xi = x.id;
    return push(std::move(out), [xi](Graph& g, int self) {
      const Tensor<S>& y = g.nodes_[self].val;
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      for (size_t i = 0; i < go.data.size(); ++i)
        gx.data[i] += go.data[i] * (S(1) - y.data[i] * y.data[i]);
    });
  }

  // Max pooling, no padding. Gradient routes to the argmax; ties go to the
  // first occurrence in row-major window order.
  Var maxpool2d(Var x, int k, int stride) {
    const Tensor<S>& X = value(x);
    if (X.rank() != 3) throw std::invalid_argument("maxpool2d: input rank != 3");
    const int C = X.shape[0], H = X.shape[1], W = X.shape[2];
    if (k > H || k > W)
      throw std::invalid_argument("maxpool2d: window " + std::to_string(k) +
                                  " exceeds spatial extent " + X.shape_str());
    if (stride < 1) throw std::invalid_argument("maxpool2d: stride < 1");
    const int Ho = (H - k) / stride + 1;
    const int Wo = (W - k) / stride + 1;
    Tensor<S> out({C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int>>(size_t(C) * Ho * Wo);
    for (int c = 0; c < C; ++c) {
      const S* src = X.data.data() + size_t(c) * H * W;
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          int best = (oy * stride) * W + ox * stride;
          S bv = src[best];
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int idx = (oy * stride + ky) * W + ox * stride + kx;
              if (src[idx] > bv) {
                bv = src[idx];
                best = idx;
              }
            }
          }
          out.at(c, oy, ox) = bv;
          (*argmax)[(size_t(c) * Ho + oy) * Wo + ox] = best;
        }
      }
    }
    const int xi = x.id;
    const size_t plane = size_t(H) * W;
    return push(std::move(out), [xi, argmax, plane](Graph& g, int self) {
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      const int C = go.shape[0];
      const size_t per_c = go.data.size() / C;
      for (int c = 0; c < C; ++c)
        for (size_t i = 0; i < per_c; ++i)
          gx.data[size_t(c) * plane + (*argmax)[c * per_c + i]] += go.data[c * per_c + i];
    });
  }

  // y[m] = W[m,n] x[n] + b[m]
  Var linear(Var x, Var w, Var b) {
    Var y = linear_nb(x, w);
    return add(y, b);
  }

  Var linear_nb(Var x, Var w) {
    const Tensor<S>& X = value(x);
    const Tensor<S>& W = value(w);
    if (X.rank() != 1) throw std::invalid_argument("linear: input rank != 1");
    if (W.rank() != 2) throw std::invalid_argument("linear: weight rank != 2");
    const int m = W.shape[0], n = W.shape[1];
    if (X.shape[0] != n)
      throw std::invalid_argument("linear: input length " + std::to_string(X.shape[0]) +
                                  " != weight columns " + std::to_string(n));
    Tensor<S> out({m});
    for (int i = 0; i < m; ++i) {
      const S* row = W.data.data() + size_t(i) * n;
      S acc = S(0);
      for (int j = 0; j < n; ++j) acc += row[j] * X.data[j];
      out.data[i] = acc;
    }
    const int xi = x.id, wi = w.id;
    return push(std::move(out), [xi, wi, m, n](Graph& g, int self) {
      const Tensor<S>& Xv = g.nodes_[xi].val;
      const Tensor<S>& Wv = g.nodes_[wi].val;
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      Tensor<S>& gw = g.nodes_[wi].grad;
      for (int i = 0; i < m; ++i) {
        const S gi = go.data[i];
        if (gi == S(0)) continue;
        S* wrow = gw.data.data() + size_t(i) * n;
        const S* vrow = Wv.data.data() + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
          wrow[j] += gi * Xv.data[j];
          gx.data[j] += gi * vrow[j];
        }
      }
    });
  }

  Var add(Var a, Var b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (!A.same_shape(B))
      throw std::invalid_argument("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor<S> out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    const int ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Graph& g, int self) {
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& ga = g.nodes_[ai].grad;
      Tensor<S>& gb = g.nodes_[bi].grad;
      for (size_t i = 0; i < go.data.size(); ++i) {
        ga.data[i] += go.data[i];
        gb.data[i] += go.data[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (!A.same_shape(B))
      throw std::invalid_argument("mul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor<S> out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    const int ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Graph& g, int self) {
      const Tensor<S>& Av = g.nodes_[ai].val;
      const Tensor<S>& Bv = g.nodes_[bi].val;
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& ga = g.nodes_[ai].grad;
      Tensor<S>& gb = g.nodes_[bi].grad;
      for (size_t i = 0; i < go.data.size(); ++i) {
        ga.data[i] += go.data[i] * Bv.data[i];
        gb.data[i] += go.data[i] * Av.data[i];
      }
    });
  }

  // Concat along dim 0. Trailing dims must agree.
  Var concat0(Var a, Var b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (A.rank() != B.rank())
      throw std::invalid_argument("concat0: rank mismatch " + A.shape_str() + " vs " + B.shape_str());
    for (int d = 1; d < A.rank(); ++d)
      if (A.shape[d] != B.shape[d])
        throw std::invalid_argument("concat0: trailing dim " + std::to_string(d) + " mismatch " +
                                    A.shape_str() + " vs " + B.shape_str());
    std::vector<int> sh = A.shape;
    sh[0] += B.shape[0];
    Tensor<S> out(sh);
    std::copy(A.data.begin(), A.data.end(), out.data.begin());
    std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.data.size());
    const int ai = a.id, bi = b.id;
    const size_t na = A.data.size();
    return push(std::move(out), [ai, bi, na](Graph& g, int self) {
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& ga = g.nodes_[ai].grad;
      Tensor<S>& gb = g.nodes_[bi].grad;
      for (size_t i = 0; i < na; ++i) ga.data[i] += go.data[i];
      for (size_t i = na; i < go.data.size(); ++i) gb.data[i - na] += go.data[i];
    });
  }

  // Slice along dim 0: elements [from, from+count).
  Var slice0(Var x, int from, int count) {
    const Tensor<S>& X = value(x);
    if (from < 0 || count < 1 || from + count > X.shape[0])
      throw std::invalid_argument("slice0: range [" + std::to_string(from) + "," +
                                  std::to_string(from + count) + ") out of " + X.shape_str());
    std::vector<int> sh = X.shape;
    sh[0] = count;
    size_t inner = 1;
    for (int d = 1; d < X.rank(); ++d) inner *= size_t(X.shape[d]);
    Tensor<S> out(sh);
    std::copy(X.data.begin() + from * inner, X.data.begin() + (from + count) * inner,
              out.data.begin());
    const int xi = x.id;
    const size_t off = from * inner;
    return push(std::move(out), [xi, off](Graph& g, int self) {
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      for (size_t i = 0; i < go.data.size(); ++i) gx.data[off + i] += go.data[i];
    });
  }

  // [C,H,W] -> [C], mean over the spatial plane.
  Var global_avg_pool(Var x) {
    const Tensor<S>& X = value(x);
    if (X.rank() != 3) throw std::invalid_argument("global_avg_pool: input rank != 3");
    const int C = X.shape[0];
    const size_t plane = size_t(X.shape[1]) * X.shape[2];
    Tensor<S> out({C});
    for (int c = 0; c < C; ++c) {
      S acc = S(0);
      const S* src = X.data.data() + size_t(c) * plane;
      for (size_t i = 0; i < plane; ++i) acc += src[i];
      out.data[c] = acc / S(plane);
    }
    const int xi = x.id;
    return push(std::move(out), [xi, plane](Graph& g, int self) {
      const Tensor<S>& go = g.nodes_[self].grad;
      Tensor<S>& gx = g.nodes_[xi].grad;
      const int C = go.shape[0];
      for (int c = 0; c < C; ++c) {
        const S gi = go.data[c] / S(plane);
        S* dst = gx.data.data() + size_t(c) * plane;
        for (size_t i = 0; i < plane; ++i) dst[i] += gi;
      }
    });
  }

  // loss = -log softmax(logits)[label], computed with max subtraction.
  Var softmax_cross_entropy(Var logits, int label) {
    const Tensor<S>& L = value(logits);
    if (L.rank() != 1) throw std::invalid_argument("softmax_cross_entropy: logits rank != 1");
    const int K = L.shape[0];
    if (label < 0 || label >= K)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                  " out of range [0," + std::to_string(K) + ")");
    S mx = L.data[0];
    for (int i = 1; i < K; ++i) mx = std::max(mx, L.data[i]);
    auto probs = std::make_shared<std::vector<S>>(size_t(K));
    S denom = S(0);
    for (int i = 0; i < K; ++i) {
      (*probs)[i] = std::exp(L.data[i] - mx);
      denom += (*probs)[i];
    }
    for (int i = 0; i < K; ++i) (*probs)[i] /= denom;
    Tensor<S> out = Tensor<S>::scalar(S(-std::log(double((*probs)[label]))));
    const int li = logits.id;
    return push(std::move(out), [li, probs, label](Graph& g, int self) {
      const S go = g.nodes_[self].grad.data[0];
      Tensor<S>& gl = g.nodes_[li].grad;
      for (size_t i = 0; i < probs->size(); ++i)
        gl.data[i] += go * ((*probs)[i] - (int(i) == label ? S(1) : S(0)));
    });
  }

  // Scalar projection against fixed coefficients; the reduction runs in
  // double so finite-difference probes of float graphs stay clean.
  Var inner_const(Var x, Tensor<S> coeffs) {
    const Tensor<S>& X = value(x);
    if (!X.same_shape(coeffs))
      throw std::invalid_argument("inner_const: shape mismatch " + X.shape_str() + " vs " +
                                  coeffs.shape_str());
    double acc = 0.0;
    for (size_t i = 0; i < X.data.size(); ++i) acc += double(X.data[i]) * double(coeffs.data[i]);
    auto c = std::make_shared<Tensor<S>>(std::move(coeffs));
    const int xi = x.id;
    return push(Tensor<S>::scalar(S(acc)), [xi, c](Graph& g, int self) {
      const S go = g.nodes_[self].grad.data[0];
      Tensor<S>& gx = g.nodes_[xi].grad;
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += go * c->data[i];
    });
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse.
  void backward(Var root) {
    const Tensor<S>& r = value(root);
    if (r.numel() != 1) throw std::invalid_argument("backward: root is not a scalar");
    for (Node& n : nodes_) n.grad = Tensor<S>(n.val.shape);
    nodes_[root.id].grad.data[0] = S(1);
    for (int i = root.id; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this, i);
  }

 private:
  struct Node {
    Tensor<S> val;
    Tensor<S> grad;
    std::function<void(Graph&, int)> back;
  };
  std::vector<Node> nodes_;

  const Node& node(Var v) const {
    if (v.id < 0 || v.id >= int(nodes_.size())) throw std::logic_error("Graph: invalid Var");
    return nodes_[size_t(v.id)];
  }

  Var push(Tensor<S> val, std::function<void(Graph&, int)> back) {
    nodes_.push_back(Node{std::move(val), {}, std::move(back)});
    return Var{int(nodes_.size()) - 1};
  }
};

}  // namespace gf
