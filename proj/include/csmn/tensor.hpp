#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csmn/rng.hpp"

namespace csmn {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover the whole
// model; a zero dimension is allowed so empty gathers have a shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated only for trainable parameters
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw ShapeError("Tensor: data length does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor vector(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
  }

  static Tensor matrix(std::size_t r, std::size_t c, std::initializer_list<double> v) {
    return Tensor({r, c}, std::vector<double>(v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const { return ndim() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  void ensure_grad() {
    requires_grad = true;
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() {
    for (auto& g : grad) g = 0.0;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// Handle into a Graph; cheap to copy.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Record-and-replay tape. Forward values are computed eagerly as ops are
// recorded; backward() replays the records in reverse exactly once. A Graph
// lives for one loss evaluation and is confined to one thread.
class Graph {
 public:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    std::function<void(Graph&)> back;
  };

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }
  const std::vector<double>& grad(Var v) const { return nodes_[check(v)].grad; }
  bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  double scalar_value(Var v) const {
    const Tensor& t = value(v);
    if (t.numel() != 1) throw ShapeError("scalar_value: tensor is not scalar");
    return t.data[0];
  }

  Var constant(Tensor t) {
    check_finite(t, "constant");
    return push(std::move(t), false, nullptr);
  }

  // Leaf backed by a persistent parameter; backward accumulates into p.grad.
  // The caller keeps p alive for the graph's lifetime.
  Var param(Tensor& p) {
    if (!p.requires_grad || p.grad.size() != p.data.size())
      throw std::invalid_argument("Graph::param: parameter has no grad buffer");
    Tensor copy(p.shape, p.data);
    Tensor* pp = &p;
    Var out = push(std::move(copy), true, nullptr);
    int self = out.idx;
    nodes_[self].back = [self, pp](Graph& g) {
      const auto& ng = g.nodes_[self].grad;
      for (std::size_t i = 0; i < ng.size(); ++i) pp->grad[i] += ng[i];
    };
    return out;
  }

  // ---- matmul -----------------------------------------------------------
  // [m x k]*[k x n] -> [m x n]; vector operands are treated as a row/column
  // as context requires: [m x k]*[k] -> [m], [k]*[k x n] -> [n].
  Var matmul(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    std::size_t m, k, n;
    bool a_vec = a.ndim() == 1, b_vec = b.ndim() == 1;
    if (a_vec && b_vec) throw ShapeError("matmul: use dot for two vectors");
    if (a.ndim() > 2 || b.ndim() > 2) throw ShapeError("matmul: rank > 2");
    m = a_vec ? 1 : a.shape[0];
    k = a_vec ? a.shape[0] : a.shape[1];
    std::size_t bk = b_vec ? b.shape[0] : b.shape[0];
    n = b_vec ? 1 : b.shape[1];
    if (k != bk)
      throw ShapeError("matmul: inner dimensions " + std::to_string(k) + " vs " +
                       std::to_string(bk));
    std::vector<std::size_t> out_shape;
    if (a_vec)
      out_shape = {n};
    else if (b_vec)
      out_shape = {m};
    else
      out_shape = {m, n};
    Tensor out(out_shape);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) acc += a.data[i * k + t] * b.data[t * n + j];
        out.data[i * n + j] = acc;
      }
    check_finite(out, "matmul");
    bool ng = needs_grad(av) || needs_grad(bv);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, bi = bv.idx, oi = res.idx;
      nodes_[oi].back = [ai, bi, oi, m, k, n](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        const auto& ad = g.nodes_[ai].value.data;
        const auto& bd = g.nodes_[bi].value.data;
        if (g.nodes_[ai].needs_grad) {
          auto& ga = g.nodes_[ai].grad;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t < k; ++t) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bd[t * n + j];
              ga[i * k + t] += acc;
            }
        }
        if (g.nodes_[bi].needs_grad) {
          auto& gb = g.nodes_[bi].grad;
          for (std::size_t t = 0; t < k; ++t)
            for (std::size_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < m; ++i) acc += ad[i * k + t] * go[i * n + j];
              gb[t * n + j] += acc;
            }
        }
      };
    }
    return res;
  }

  Var dot(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (a.ndim() != 1 || b.ndim() != 1 || a.numel() != b.numel())
      throw ShapeError("dot: needs two equal-length vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.data[i] * b.data[i];
    Tensor out = Tensor::scalar(acc);
    check_finite(out, "dot");
    bool ng = needs_grad(av) || needs_grad(bv);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, bi = bv.idx, oi = res.idx;
      nodes_[oi].back = [ai, bi, oi](Graph& g) {
        double go = g.nodes_[oi].grad[0];
        const auto& ad = g.nodes_[ai].value.data;
        const auto& bd = g.nodes_[bi].value.data;
        if (g.nodes_[ai].needs_grad) {
          auto& ga = g.nodes_[ai].grad;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * bd[i];
        }
        if (g.nodes_[bi].needs_grad) {
          auto& gb = g.nodes_[bi].grad;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go * ad[i];
        }
      };
    }
    return res;
  }

  // outer(a[m], b[n]) -> [m x n]
  Var outer(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (a.ndim() != 1 || b.ndim() != 1) throw ShapeError("outer: needs two vectors");
    std::size_t m = a.numel(), n = b.numel();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = a.data[i] * b.data[j];
    check_finite(out, "outer");
    bool ng = needs_grad(av) || needs_grad(bv);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, bi = bv.idx, oi = res.idx;
      nodes_[oi].back = [ai, bi, oi, m, n](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        const auto& ad = g.nodes_[ai].value.data;
        const auto& bd = g.nodes_[bi].value.data;
        if (g.nodes_[ai].needs_grad) {
          auto& ga = g.nodes_[ai].grad;
          for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bd[j];
            ga[i] += acc;
          }
        }
        if (g.nodes_[bi].needs_grad) {
          auto& gb = g.nodes_[bi].grad;
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += go[i * n + j] * ad[i];
            gb[j] += acc;
          }
        }
      };
    }
    return res;
  }

  Var transpose(Var av) {
    const Tensor& a = value(av);
    if (a.ndim() != 2) throw ShapeError("transpose: needs a matrix");
    std::size_t m = a.shape[0], n = a.shape[1];
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = a.data[i * n + j];
    bool ng = needs_grad(av);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, oi = res.idx;
      nodes_[oi].back = [ai, oi, m, n](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        auto& ga = g.nodes_[ai].grad;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
      };
    }
    return res;
  }

  // ---- broadcast elementwise binary ops ---------------------------------
  // Supported layouts: identical shapes, scalar on either side, or a
  // trailing-row vector against a matrix (matching the last axis).
  enum class Bcast { same, a_scalar, b_scalar, a_row, b_row };

  Var add(Var a, Var b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  [](double, double, double g, double& dx, double& dy) {
                    dx = g;
                    dy = g;
                  });
  }
  Var sub(Var a, Var b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double, double g, double& dx, double& dy) {
                    dx = g;
                    dy = -g;
                  });
  }
  Var mul(Var a, Var b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double x, double y, double g, double& dx, double& dy) {
                    dx = g * y;
                    dy = g * x;
                  });
  }
  Var div(Var a, Var b) {
    return binary(a, b, "div", [](double x, double y) { return x / y; },
                  [](double x, double y, double g, double& dx, double& dy) {
                    dx = g / y;
                    dy = -g * x / (y * y);
                  });
  }

  // ---- unary ops --------------------------------------------------------
  Var relu(Var a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  }
  Var tanh_(Var a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
  }
  Var sigmoid_(Var a) {
    return unary(a, "sigmoid",
                 [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                : std::exp(x) / (1.0 + std::exp(x)); },
                 [](double, double y) { return y * (1.0 - y); });
  }
  Var log_(Var a) {
    return unary(a, "log", [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
  }
  Var sqrt_(Var a) {
    return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
  }
  // k*x + c
  Var affine(Var a, double k, double c) {
    return unary(a, "affine", [k, c](double x) { return k * x + c; },
                 [k](double, double) { return k; });
  }
  Var scale(Var a, double k) { return affine(a, k, 0.0); }

  // ---- softmax over the last axis, max-subtracted -----------------------
  Var softmax(Var av) {
    const Tensor& a = value(av);
    if (a.numel() == 0) throw ShapeError("softmax: empty input");
    std::size_t rows = a.ndim() == 2 ? a.shape[0] : 1;
    std::size_t n = a.shape.back();
    if (n == 0) throw ShapeError("softmax: empty rows");
    Tensor out(a.shape);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = a.data.data() + r * n;
      double* y = out.data.data() + r * n;
      double mx = x[0];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
      }
      for (std::size_t i = 0; i < n; ++i) y[i] /= sum;
    }
    check_finite(out, "softmax");
    bool ng = needs_grad(av);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, oi = res.idx;
      nodes_[oi].back = [ai, oi, rows, n](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        const auto& s = g.nodes_[oi].value.data;
        auto& ga = g.nodes_[ai].grad;
        for (std::size_t r = 0; r < rows; ++r) {
          double dotgs = 0.0;
          for (std::size_t i = 0; i < n; ++i) dotgs += go[r * n + i] * s[r * n + i];
          for (std::size_t i = 0; i < n; ++i)
            ga[r * n + i] += s[r * n + i] * (go[r * n + i] - dotgs);
        }
      };
    }
    return res;
  }

  // ---- concat along the last axis ---------------------------------------
  Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    if (parts.size() == 1) return parts[0];
    std::size_t rank = value(parts[0]).ndim();
    std::size_t rows = rank == 2 ? value(parts[0]).shape[0] : 1;
    std::size_t total = 0;
    bool ng = false;
    for (Var p : parts) {
      const Tensor& t = value(p);
      if (t.ndim() != rank || (rank == 2 && t.shape[0] != rows))
        throw ShapeError("concat: incompatible shapes");
      total += t.shape.back();
      ng = ng || needs_grad(p);
    }
    std::vector<std::size_t> shape = rank == 2 ? std::vector<std::size_t>{rows, total}
                                               : std::vector<std::size_t>{total};
    Tensor out(shape);
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& t = value(p);
      std::size_t w = t.shape.back();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c)
          out.data[r * total + off + c] = t.data[r * w + c];
      off += w;
    }
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      std::vector<int> in;
      in.reserve(parts.size());
      for (Var p : parts) in.push_back(p.idx);
      int oi = res.idx;
      nodes_[oi].back = [in, oi, rows, total](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        std::size_t off2 = 0;
        for (int pi : in) {
          std::size_t w = g.nodes_[pi].value.shape.back();
          if (g.nodes_[pi].needs_grad) {
            auto& gp = g.nodes_[pi].grad;
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < w; ++c)
                gp[r * w + c] += go[r * total + off2 + c];
          }
          off2 += w;
        }
      };
    }
    return res;
  }

  // ---- gather rows from a [V x d] table ---------------------------------
  Var gather_rows(Var tablev, std::vector<std::size_t> ids) {
    const Tensor& table = value(tablev);
    if (table.ndim() != 2) throw ShapeError("gather_rows: table must be [V x d]");
    std::size_t V = table.shape[0], d = table.shape[1];
    for (auto id : ids)
      if (id >= V)
        throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                                " out of range for vocab " + std::to_string(V));
    Tensor out({ids.size(), d});
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) out.data[r * d + c] = table.data[ids[r] * d + c];
    bool ng = needs_grad(tablev);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ti = tablev.idx, oi = res.idx;
      auto idcopy = std::move(ids);
      nodes_[oi].back = [ti, oi, idcopy, d](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        auto& gt = g.nodes_[ti].grad;
        for (std::size_t r = 0; r < idcopy.size(); ++r)
          for (std::size_t c = 0; c < d; ++c) gt[idcopy[r] * d + c] += go[r * d + c];
      };
    }
    return res;
  }

  // ---- inverted dropout --------------------------------------------------
  Var dropout(Var av, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
      throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) return av;
    const Tensor& a = value(av);
    double keep = 1.0 - rate;
    std::vector<double> mask(a.numel());
    for (auto& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] * mask[i];
    bool ng = needs_grad(av);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, oi = res.idx;
      auto m = std::move(mask);
      nodes_[oi].back = [ai, oi, m](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        auto& ga = g.nodes_[ai].grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * m[i];
      };
    }
    return res;
  }

  // ---- reductions & reshapes ---------------------------------------------
  Var sum(Var av) {
    const Tensor& a = value(av);
    double acc = std::accumulate(a.data.begin(), a.data.end(), 0.0);
    bool ng = needs_grad(av);
    Var res = push(Tensor::scalar(acc), ng, nullptr);
    if (ng) {
      int ai = av.idx, oi = res.idx;
      nodes_[oi].back = [ai, oi](Graph& g) {
        double go = g.nodes_[oi].grad[0];
        for (auto& x : g.nodes_[ai].grad) x += go;
      };
    }
    return res;
  }

  Var mean(Var av) {
    std::size_t n = value(av).numel();
    if (n == 0) throw ShapeError("mean: empty input");
    return scale(sum(av), 1.0 / static_cast<double>(n));
  }

  // column means of a [m x n] matrix -> [n]
  Var mean_rows(Var av) {
    const Tensor& a = value(av);
    if (a.ndim() != 2) throw ShapeError("mean_rows: needs a matrix");
    std::size_t m = a.shape[0], n = a.shape[1];
    if (m == 0) throw ShapeError("mean_rows: zero rows");
    Tensor out({n});
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a.data[i * n + j];
      out.data[j] = acc / static_cast<double>(m);
    }
    bool ng = needs_grad(av);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, oi = res.idx;
      nodes_[oi].back = [ai, oi, m, n](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        auto& ga = g.nodes_[ai].grad;
        double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j] * inv;
      };
    }
    return res;
  }

  Var reshape(Var av, std::vector<std::size_t> shape) {
    const Tensor& a = value(av);
    if (Tensor::numel_of(shape) != a.numel()) throw ShapeError("reshape: numel mismatch");
    Tensor out(std::move(shape), a.data);
    bool ng = needs_grad(av);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, oi = res.idx;
      nodes_[oi].back = [ai, oi](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        auto& ga = g.nodes_[ai].grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      };
    }
    return res;
  }

  // ---- cosine of a query against constant key rows -----------------------
  // keys is a detached [q x d] buffer; out[j] = cos(sk, keys[j]) with the
  // zero-norm guard: any vector of norm <= eps has similarity 0. Gradient
  // flows into sk only.
  Var cosine_rows(const Tensor& keys, Var skv, double eps = 1e-12) {
    const Tensor& sk = value(skv);
    if (keys.ndim() != 2 || sk.ndim() != 1 || keys.shape[1] != sk.numel())
      throw ShapeError("cosine_rows: keys [q x d] vs sk [d]");
    std::size_t q = keys.shape[0], d = keys.shape[1];
    double sk_norm = 0.0;
    for (double v : sk.data) sk_norm += v * v;
    sk_norm = std::sqrt(sk_norm);
    std::vector<double> key_norms(q);
    Tensor out({q});
    for (std::size_t j = 0; j < q; ++j) {
      double kn = 0.0, dp = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        double kv = keys.data[j * d + c];
        kn += kv * kv;
        dp += kv * sk.data[c];
      }
      kn = std::sqrt(kn);
      key_norms[j] = kn;
      out.data[j] = (sk_norm <= eps || kn <= eps) ? 0.0 : dp / (sk_norm * kn);
    }
    check_finite(out, "cosine_rows");
    bool ng = needs_grad(skv);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int si = skv.idx, oi = res.idx;
      Tensor kcopy = keys;
      auto kn = std::move(key_norms);
      nodes_[oi].back = [si, oi, kcopy, kn, sk_norm, eps, q, d](Graph& g) {
        if (sk_norm <= eps) return;  // flat region by definition
        const auto& go = g.nodes_[oi].grad;
        const auto& c = g.nodes_[oi].value.data;
        const auto& s = g.nodes_[si].value.data;
        auto& gs = g.nodes_[si].grad;
        for (std::size_t j = 0; j < q; ++j) {
          if (kn[j] <= eps || go[j] == 0.0) continue;
          // d cos_j / d s = k_j/(|k_j||s|) - cos_j * s/|s|^2
          double a = go[j] / (kn[j] * sk_norm);
          double b = go[j] * c[j] / (sk_norm * sk_norm);
          for (std::size_t t = 0; t < d; ++t) gs[t] += a * kcopy.data[j * d + t] - b * s[t];
        }
      };
    }
    return res;
  }

  // ---- mean binary cross-entropy against constant labels -----------------
  // Predictions are clamped to [1e-12, 1 - 1e-12] before the logs.
  Var bce_loss(Var yhatv, const std::vector<double>& labels) {
    const Tensor& yhat = value(yhatv);
    if (yhat.ndim() != 1 || yhat.numel() != labels.size() || labels.empty())
      throw ShapeError("bce_loss: predictions and labels must be equal-length vectors");
    const double lo = 1e-12, hi = 1.0 - 1e-12;
    std::size_t n = labels.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double p = std::min(hi, std::max(lo, yhat.data[i]));
      acc += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    Tensor out = Tensor::scalar(-acc / static_cast<double>(n));
    check_finite(out, "bce_loss");
    bool ng = needs_grad(yhatv);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int yi = yhatv.idx, oi = res.idx;
      auto ycopy = labels;
      nodes_[oi].back = [yi, oi, ycopy, lo, hi, n](Graph& g) {
        double go = g.nodes_[oi].grad[0];
        const auto& p = g.nodes_[yi].value.data;
        auto& gy = g.nodes_[yi].grad;
        for (std::size_t i = 0; i < n; ++i) {
          double pc = std::min(hi, std::max(lo, p[i]));
          gy[i] += go * (pc - ycopy[i]) / (pc * (1.0 - pc) * static_cast<double>(n));
        }
      };
    }
    return res;
  }

  // ---- backward -----------------------------------------------------------
  void backward(Var lossv) {
    Node& loss = nodes_[check(lossv)];
    if (loss.value.numel() != 1) throw ShapeError("backward: loss must be scalar");
    if (!std::isfinite(loss.value.data[0]))
      throw NumericsError("backward: loss is not finite");
    if (loss.needs_grad) loss.grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& nd = nodes_[i];
      if (nd.needs_grad && nd.back) nd.back(*this);
    }
  }

 private:
  template <class Fwd, class Bwd>
  Var unary(Var av, const char* name, Fwd fwd, Bwd dfd) {
    const Tensor& a = value(av);
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = fwd(a.data[i]);
    check_finite(out, name);
    bool ng = needs_grad(av);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, oi = res.idx;
      nodes_[oi].back = [ai, oi, dfd](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        const auto& x = g.nodes_[ai].value.data;
        const auto& y = g.nodes_[oi].value.data;
        auto& ga = g.nodes_[ai].grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * dfd(x[i], y[i]);
      };
    }
    return res;
  }

  static Bcast classify(const Tensor& a, const Tensor& b) {
    if (same_shape(a, b)) return Bcast::same;
    if (b.numel() == 1) return Bcast::b_scalar;
    if (a.numel() == 1) return Bcast::a_scalar;
    if (a.ndim() == 2 && b.ndim() <= 2 && b.numel() == a.shape[1] &&
        (b.ndim() == 1 || b.shape[0] == 1))
      return Bcast::b_row;
    if (b.ndim() == 2 && a.ndim() <= 2 && a.numel() == b.shape[1] &&
        (a.ndim() == 1 || a.shape[0] == 1))
      return Bcast::a_row;
    throw ShapeError("elementwise: shapes not broadcastable (scalar/row only)");
  }

  template <class Fwd, class Bwd>
  Var binary(Var av, Var bv, const char* name, Fwd fwd, Bwd bwd) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    Bcast k = classify(a, b);
    const Tensor& big = (k == Bcast::a_scalar || k == Bcast::a_row) ? b : a;
    Tensor out(big.shape);
    std::size_t n = big.numel();
    std::size_t w = big.shape.back();
    for (std::size_t i = 0; i < n; ++i) {
      double x = pick(a, k == Bcast::a_scalar, k == Bcast::a_row, i, w);
      double y = pick(b, k == Bcast::b_scalar, k == Bcast::b_row, i, w);
      out.data[i] = fwd(x, y);
    }
    check_finite(out, name);
    bool ng = needs_grad(av) || needs_grad(bv);
    Var res = push(std::move(out), ng, nullptr);
    if (ng) {
      int ai = av.idx, bi = bv.idx, oi = res.idx;
      nodes_[oi].back = [ai, bi, oi, k, w, bwd](Graph& g) {
        const auto& go = g.nodes_[oi].grad;
        const Tensor& a2 = g.nodes_[ai].value;
        const Tensor& b2 = g.nodes_[bi].value;
        bool ga_on = g.nodes_[ai].needs_grad;
        bool gb_on = g.nodes_[bi].needs_grad;
        auto& ga = g.nodes_[ai].grad;
        auto& gb = g.nodes_[bi].grad;
        for (std::size_t i = 0; i < go.size(); ++i) {
          double x = pick(a2, k == Bcast::a_scalar, k == Bcast::a_row, i, w);
          double y = pick(b2, k == Bcast::b_scalar, k == Bcast::b_row, i, w);
          double dx = 0.0, dy = 0.0;
          bwd(x, y, go[i], dx, dy);
          if (ga_on) ga[index_for(k == Bcast::a_scalar, k == Bcast::a_row, i, w)] += dx;
          if (gb_on) gb[index_for(k == Bcast::b_scalar, k == Bcast::b_row, i, w)] += dy;
        }
      };
    }
    return res;
  }

  static std::size_t index_for(bool is_scalar, bool is_row, std::size_t i, std::size_t w) {
    if (is_scalar) return 0;
    if (is_row) return i % w;
    return i;
  }
  static double pick(const Tensor& t, bool is_scalar, bool is_row, std::size_t i,
                     std::size_t w) {
    return t.data[index_for(is_scalar, is_row, i, w)];
  }

  void check_finite(const Tensor& t, const char* op) const {
    if (!t.all_finite())
      throw NumericsError(std::string(op) + ": produced a non-finite value");
  }

  int check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
      throw std::out_of_range("invalid Var handle");
    return v.idx;
  }

  Var push(Tensor value, bool needs, std::function<void(Graph&)> back) {
    Node nd;
    nd.value = std::move(value);
    nd.needs_grad = needs;
    nd.back = std::move(back);
    if (needs) nd.grad.assign(nd.value.numel(), 0.0);
    nodes_.push_back(std::move(nd));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

}  // namespace csmn
