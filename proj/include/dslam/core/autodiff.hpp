#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dslam/core/tensor.hpp"

namespace dslam {

enum class OpKind : uint8_t {
  kConst,
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kBiasAdd,
  kNeg,
  kRelu,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kSqrt,
  kSin,
  kCos,
  kWrapAngle,
  kClamp,
  kAtan2,
  kMatmul,
  kConv2d,
  kAvgPool2d,
  kSum,
  kMean,
  kLogSumExp,
  kSoftmax,
  kConcat,
  kSlice,
  kReshape,
  kGather,
  kBilinearWarp,
  kHuberNorm,
  kScale,
  kAddConst,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kConst: return "const";
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kBiasAdd: return "bias_add";
    case OpKind::kNeg: return "neg";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSin: return "sin";
    case OpKind::kCos: return "cos";
    case OpKind::kWrapAngle: return "wrap_angle";
    case OpKind::kClamp: return "clamp";
    case OpKind::kAtan2: return "atan2";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kAvgPool2d: return "avg_pool2d";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kLogSumExp: return "logsumexp";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kReshape: return "reshape";
    case OpKind::kGather: return "gather";
    case OpKind::kBilinearWarp: return "bilinear_warp";
    case OpKind::kHuberNorm: return "huber_norm";
    case OpKind::kScale: return "scale";
    case OpKind::kAddConst: return "add_const";
  }
  return "?";
}

inline double wrap_pi(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  if (a <= -M_PI) a = M_PI;  // store (-pi, pi]
  return a;
}

namespace detail {

struct AxisView {
  int outer = 1, k = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, int axis) {
  if (axis < 0 || axis >= s.ndim)
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " + s.str());
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[i];
  v.k = s[axis];
  for (int i = axis + 1; i < s.ndim; ++i) v.inner *= s[i];
  return v;
}

inline Shape drop_axis_shape(const Shape& s, int axis) {
  Shape r;
  for (int i = 0; i < s.ndim; ++i)
    if (i != axis) r.d[r.ndim++] = s[i];
  if (r.ndim == 0) {
    r.ndim = 1;
    r.d[0] = 1;
  }
  return r;
}

// Local-map grid convention: row i is the forward (x) direction, column j is
// lateral (y); the anchor pose sits at the midpoint of the rear edge. Cell
// (i,j) center in the anchor frame:
//   px = (i + 0.5) * cell,  py = (j + 0.5) * cell - side/2.
// `pose` is the output frame expressed in the input map frame; out-of-bounds
// samples are zero.
inline void warp_forward(const double* in, int n, int ch, double cell, double tx, double ty,
                         double tth, double* out) {
  const double c = std::cos(tth), s = std::sin(tth);
  const double txc = tx / cell, tyc = ty / cell;
  const double half = 0.5 * n;
  for (int i = 0; i < n; ++i) {
    const double pu = i + 0.5;
    for (int j = 0; j < n; ++j) {
      const double pv = j + 0.5 - half;
      // sample position in input grid units; identity stays bit-exact
      const double u = txc + c * pu - s * pv - 0.5;
      const double v = tyc + s * pu + c * pv + half - 0.5;
      const int a0 = int(std::floor(u)), b0 = int(std::floor(v));
      const double du = u - a0, dv = v - b0;
      double* o = out + (size_t(i) * n + j) * ch;
      for (int q = 0; q < ch; ++q) o[q] = 0.0;
      for (int da = 0; da < 2; ++da) {
        const int a = a0 + da;
        if (a < 0 || a >= n) continue;
        const double wa = da ? du : 1.0 - du;
        for (int db = 0; db < 2; ++db) {
          const int b = b0 + db;
          if (b < 0 || b >= n) continue;
          const double w = wa * (db ? dv : 1.0 - dv);
          const double* src = in + (size_t(a) * n + b) * ch;
          for (int q = 0; q < ch; ++q) o[q] += w * src[q];
        }
      }
    }
  }
}

inline void warp_backward(const double* in, int n, int ch, double cell, double tx, double ty,
                          double tth, const double* gout, double* gin, double* gpose) {
  const double c = std::cos(tth), s = std::sin(tth);
  const double txc = tx / cell, tyc = ty / cell;
  const double half = 0.5 * n;
  double gtx = 0, gty = 0, gth = 0;
  for (int i = 0; i < n; ++i) {
    const double pu = i + 0.5;
    for (int j = 0; j < n; ++j) {
      const double pv = j + 0.5 - half;
      const double u = txc + c * pu - s * pv - 0.5;
      const double v = tyc + s * pu + c * pv + half - 0.5;
      const int a0 = int(std::floor(u)), b0 = int(std::floor(v));
      const double du = u - a0, dv = v - b0;
      const double* g = gout + (size_t(i) * n + j) * ch;
      double dval_du = 0, dval_dv = 0;
      for (int da = 0; da < 2; ++da) {
        const int a = a0 + da;
        if (a < 0 || a >= n) continue;
        const double wa = da ? du : 1.0 - du;
        const double sa = da ? 1.0 : -1.0;
        for (int db = 0; db < 2; ++db) {
          const int b = b0 + db;
          if (b < 0 || b >= n) continue;
          const double wb = db ? dv : 1.0 - dv;
          const double sb = db ? 1.0 : -1.0;
          const double* src = in + (size_t(a) * n + b) * ch;
          double* gi = gin ? gin + (size_t(a) * n + b) * ch : nullptr;
          for (int q = 0; q < ch; ++q) {
            const double gc = g[q];
            if (gi) gi[q] += wa * wb * gc;
            dval_du += gc * sa * wb * src[q];
            dval_dv += gc * wa * sb * src[q];
          }
        }
      }
      if (gpose) {
        gtx += dval_du / cell;
        gty += dval_dv / cell;
        gth += dval_du * (-s * pu - c * pv) + dval_dv * (c * pu - s * pv);
      }
    }
  }
  if (gpose) {
    gpose[0] += gtx;
    gpose[1] += gty;
    gpose[2] += gth;
  }
}

// 3x3 convolution, stride 1, zero padding; input [H,W,Ci], kernel [3,3,Ci,Co].
inline void conv2d_forward(const double* in, int h, int w, int ci, const double* ker, int co,
                           double* out) {
  std::fill(out, out + size_t(h) * w * co, 0.0);
  for (int i = 0; i < h; ++i) {
    for (int di = 0; di < 3; ++di) {
      const int ii = i + di - 1;
      if (ii < 0 || ii >= h) continue;
      for (int j = 0; j < w; ++j) {
        double* o = out + (size_t(i) * w + j) * co;
        for (int dj = 0; dj < 3; ++dj) {
          const int jj = j + dj - 1;
          if (jj < 0 || jj >= w) continue;
          const double* src = in + (size_t(ii) * w + jj) * ci;
          const double* kr = ker + (size_t(di) * 3 + dj) * ci * co;
          for (int a = 0; a < ci; ++a) {
            const double x = src[a];
            const double* kk = kr + size_t(a) * co;
            for (int b = 0; b < co; ++b) o[b] += x * kk[b];
          }
        }
      }
    }
  }
}

inline void conv2d_backward(const double* in, int h, int w, int ci, const double* ker, int co,
                            const double* gout, double* gin, double* gker) {
  for (int i = 0; i < h; ++i) {
    for (int di = 0; di < 3; ++di) {
      const int ii = i + di - 1;
      if (ii < 0 || ii >= h) continue;
      for (int j = 0; j < w; ++j) {
        const double* g = gout + (size_t(i) * w + j) * co;
        for (int dj = 0; dj < 3; ++dj) {
          const int jj = j + dj - 1;
          if (jj < 0 || jj >= w) continue;
          const double* src = in + (size_t(ii) * w + jj) * ci;
          double* gi = gin ? gin + (size_t(ii) * w + jj) * ci : nullptr;
          const double* kr = ker + (size_t(di) * 3 + dj) * ci * co;
          double* gk = gker ? gker + (size_t(di) * 3 + dj) * ci * co : nullptr;
          for (int a = 0; a < ci; ++a) {
            const double* kk = kr + size_t(a) * co;
            if (gi) {
              double acc = 0;
              for (int b = 0; b < co; ++b) acc += g[b] * kk[b];
              gi[a] += acc;
            }
            if (gk) {
              const double x = src[a];
              double* gkk = gk + size_t(a) * co;
              for (int b = 0; b < co; ++b) gkk[b] += x * g[b];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// Append-only op record. Backward visits nodes exactly once in reverse
// insertion order; insertion order is the topological order.
class Tape {
 public:
  struct Node {
    OpKind kind;
    std::vector<int> in;
    Tensor out;
    int i0 = 0, i1 = 0, i2 = 0;
    double f0 = 0.0, f1 = 0.0;
    std::vector<int> idx;
    std::string name;
  };

  int size() const { return int(nodes_.size()); }
  const Node& node(int i) const { return nodes_[size_t(i)]; }

  // Register a watched input. Adjoints for leaves are retrievable by name
  // after backward().
  Tensor leaf(const Tensor& value, const std::string& name) {
    Node n;
    n.kind = OpKind::kLeaf;
    n.out = value;
    n.name = name;
    Tensor t = value;
    t.tape = this;
    t.node = push(std::move(n));
    leaf_ids_.push_back(t.node);
    return t;
  }

  int node_of(const Tensor& t) {
    if (t.recorded()) {
      if (t.tape != this) throw std::invalid_argument("tensor belongs to a different tape");
      return t.node;
    }
    Node n;
    n.kind = OpKind::kConst;
    n.out = t;
    return push(std::move(n));
  }

  Tensor emit(OpKind kind, std::vector<int> in, Tensor out, int i0 = 0, int i1 = 0, int i2 = 0,
              double f0 = 0.0, double f1 = 0.0, std::vector<int> idx = {}) {
    if (!out.all_finite())
      throw std::runtime_error(std::string("non-finite values in forward op ") + op_name(kind));
    Node n;
    n.kind = kind;
    n.in = std::move(in);
    n.out = out;
    n.i0 = i0;
    n.i1 = i1;
    n.i2 = i2;
    n.f0 = f0;
    n.f1 = f1;
    n.idx = std::move(idx);
    int id = push(std::move(n));
    out.tape = this;
    out.node = id;
    return out;
  }

  // Reverse pass from a scalar loss. Adjoints are recomputed from scratch on
  // every call, so repeated calls give identical results.
  void backward(const Tensor& loss) {
    if (!loss.recorded() || loss.tape != this)
      throw std::invalid_argument("backward: loss is not recorded on this tape");
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    adj_.assign(nodes_.size(), {});
    adj_ref(loss.node)[0] = 1.0;
    for (int id = int(nodes_.size()) - 1; id >= 0; --id) {
      if (adj_[size_t(id)].empty()) continue;
      step_back(id);
    }
  }

  // Adjoint of a recorded tensor (valid after backward; zeros if unreached).
  Tensor grad(const Tensor& t) const {
    if (!t.recorded() || t.tape != this)
      throw std::invalid_argument("grad: tensor is not recorded on this tape");
    Tensor g(t.shape());
    if (size_t(t.node) < adj_.size() && !adj_[size_t(t.node)].empty())
      std::copy(adj_[size_t(t.node)].begin(), adj_[size_t(t.node)].end(), g.data());
    return g;
  }

  std::map<std::string, Tensor> leaf_grads() const {
    std::map<std::string, Tensor> out;
    for (int id : leaf_ids_) {
      const Node& n = nodes_[size_t(id)];
      const bool has = size_t(id) < adj_.size() && !adj_[size_t(id)].empty();
      auto it = out.find(n.name);
      if (it == out.end()) {
        Tensor g(n.out.shape());
        if (has) std::copy(adj_[size_t(id)].begin(), adj_[size_t(id)].end(), g.data());
        out.emplace(n.name, std::move(g));
      } else if (has) {
        double* d = it->second.data();
        for (size_t i = 0; i < adj_[size_t(id)].size(); ++i) d[i] += adj_[size_t(id)][i];
      }
    }
    return out;
  }

 private:
  int push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  std::vector<double>& adj_ref(int id) {
    auto& a = adj_[size_t(id)];
    if (a.empty()) a.assign(size_t(nodes_[size_t(id)].out.numel()), 0.0);
    return a;
  }

  // dst += s * g, reducing to a scalar slot when the operand was broadcast.
  static void axpy_or_reduce(std::vector<double>& dst, const std::vector<double>& g, double s) {
    if (dst.size() == g.size()) {
      for (size_t i = 0; i < g.size(); ++i) dst[i] += s * g[i];
    } else {
      double acc = 0;
      for (double v : g) acc += v;
      dst[0] += s * acc;
    }
  }

  void step_back(int id) {
    const Node& n = nodes_[size_t(id)];
    const std::vector<double>& g = adj_[size_t(id)];
    auto val = [&](int slot) -> const Tensor& { return nodes_[size_t(n.in[size_t(slot)])].out; };

    switch (n.kind) {
      case OpKind::kConst:
      case OpKind::kLeaf:
        break;

      case OpKind::kAdd: {
        axpy_or_reduce(adj_ref(n.in[0]), g, 1.0);
        axpy_or_reduce(adj_ref(n.in[1]), g, 1.0);
        break;
      }
      case OpKind::kSub: {
        axpy_or_reduce(adj_ref(n.in[0]), g, 1.0);
        axpy_or_reduce(adj_ref(n.in[1]), g, -1.0);
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        auto& ga = adj_ref(n.in[0]);
        auto& gb = adj_ref(n.in[1]);
        const int m = int(g.size());
        const bool as = a.numel() == 1, bs = b.numel() == 1;
        for (int i = 0; i < m; ++i) {
          const double av = a.data()[as ? 0 : i];
          const double bv = b.data()[bs ? 0 : i];
          ga[as ? 0 : size_t(i)] += g[size_t(i)] * bv;
          gb[bs ? 0 : size_t(i)] += g[size_t(i)] * av;
        }
        break;
      }
      case OpKind::kDiv: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        auto& ga = adj_ref(n.in[0]);
        auto& gb = adj_ref(n.in[1]);
        const int m = int(g.size());
        const bool as = a.numel() == 1, bs = b.numel() == 1;
        for (int i = 0; i < m; ++i) {
          const double av = a.data()[as ? 0 : i];
          const double bv = b.data()[bs ? 0 : i];
          ga[as ? 0 : size_t(i)] += g[size_t(i)] / bv;
          gb[bs ? 0 : size_t(i)] -= g[size_t(i)] * av / (bv * bv);
        }
        break;
      }
      case OpKind::kBiasAdd: {
        auto& gx = adj_ref(n.in[0]);
        auto& gb = adj_ref(n.in[1]);
        const int bn = int(gb.size());
        for (size_t i = 0; i < g.size(); ++i) {
          gx[i] += g[i];
          gb[i % size_t(bn)] += g[i];
        }
        break;
      }
      case OpKind::kNeg: {
        axpy_or_reduce(adj_ref(n.in[0]), g, -1.0);
        break;
      }
      case OpKind::kRelu: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i)
          if (x.data()[i] > 0) gx[i] += g[i];
        break;
      }
      case OpKind::kSigmoid: {
        auto& gx = adj_ref(n.in[0]);
        const double* o = n.out.data();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * o[i] * (1.0 - o[i]);
        break;
      }
      case OpKind::kTanh: {
        auto& gx = adj_ref(n.in[0]);
        const double* o = n.out.data();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - o[i] * o[i]);
        break;
      }
      case OpKind::kExp: {
        auto& gx = adj_ref(n.in[0]);
        const double* o = n.out.data();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * o[i];
        break;
      }
      case OpKind::kLog: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x.data()[i];
        break;
      }
      case OpKind::kSqrt: {
        auto& gx = adj_ref(n.in[0]);
        const double* o = n.out.data();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * 0.5 / o[i];
        break;
      }
      case OpKind::kSin: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * std::cos(x.data()[i]);
        break;
      }
      case OpKind::kCos: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) gx[i] -= g[i] * std::sin(x.data()[i]);
        break;
      }
      case OpKind::kWrapAngle: {
        axpy_or_reduce(adj_ref(n.in[0]), g, 1.0);
        break;
      }
      case OpKind::kClamp: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i)
          if (x.data()[i] > n.f0 && x.data()[i] < n.f1) gx[i] += g[i];
        break;
      }
      case OpKind::kAtan2: {
        const Tensor& y = val(0);
        const Tensor& x = val(1);
        auto& gy = adj_ref(n.in[0]);
        auto& gx = adj_ref(n.in[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          const double yy = y.data()[i], xx = x.data()[i];
          const double d = xx * xx + yy * yy;
          gy[i] += g[i] * xx / d;
          gx[i] -= g[i] * yy / d;
        }
        break;
      }
      case OpKind::kMatmul: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        auto& ga = adj_ref(n.in[0]);
        auto& gb = adj_ref(n.in[1]);
        const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j) {
            const double gij = g[size_t(i) * p + j];
            if (gij == 0.0) continue;
            for (int l = 0; l < k; ++l) {
              ga[size_t(i) * k + l] += gij * b.data()[size_t(l) * p + j];
              gb[size_t(l) * p + j] += gij * a.data()[size_t(i) * k + l];
            }
          }
        break;
      }
      case OpKind::kConv2d: {
        const Tensor& x = val(0);
        const Tensor& ker = val(1);
        auto& gx = adj_ref(n.in[0]);
        auto& gk = adj_ref(n.in[1]);
        detail::conv2d_backward(x.data(), x.dim(0), x.dim(1), x.dim(2), ker.data(), ker.dim(3),
                                g.data(), gx.data(), gk.data());
        break;
      }
      case OpKind::kAvgPool2d: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        const int h2 = n.out.dim(0), w2 = n.out.dim(1), c = n.out.dim(2);
        const int w = x.dim(1);
        for (int i = 0; i < h2; ++i)
          for (int j = 0; j < w2; ++j)
            for (int q = 0; q < c; ++q) {
              const double gv = 0.25 * g[(size_t(i) * w2 + j) * c + q];
              gx[(size_t(2 * i) * w + 2 * j) * c + q] += gv;
              gx[(size_t(2 * i) * w + 2 * j + 1) * c + q] += gv;
              gx[(size_t(2 * i + 1) * w + 2 * j) * c + q] += gv;
              gx[(size_t(2 * i + 1) * w + 2 * j + 1) * c + q] += gv;
            }
        break;
      }
      case OpKind::kSum: {
        auto& gx = adj_ref(n.in[0]);
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
        break;
      }
      case OpKind::kMean: {
        auto& gx = adj_ref(n.in[0]);
        const double s = g[0] / double(gx.size());
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += s;
        break;
      }
      case OpKind::kLogSumExp: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        const auto v = detail::axis_view(x.shape(), n.i0);
        for (int o = 0; o < v.outer; ++o)
          for (int in = 0; in < v.inner; ++in) {
            const double lse = n.out.data()[size_t(o) * v.inner + in];
            const double go = g[size_t(o) * v.inner + in];
            for (int j = 0; j < v.k; ++j) {
              const size_t off = (size_t(o) * v.k + j) * v.inner + in;
              gx[off] += go * std::exp(x.data()[off] - lse);
            }
          }
        break;
      }
      case OpKind::kSoftmax: {
        auto& gx = adj_ref(n.in[0]);
        const auto v = detail::axis_view(n.out.shape(), n.i0);
        const double* s = n.out.data();
        for (int o = 0; o < v.outer; ++o)
          for (int in = 0; in < v.inner; ++in) {
            double dot = 0;
            for (int j = 0; j < v.k; ++j) {
              const size_t off = (size_t(o) * v.k + j) * v.inner + in;
              dot += g[off] * s[off];
            }
            for (int j = 0; j < v.k; ++j) {
              const size_t off = (size_t(o) * v.k + j) * v.inner + in;
              gx[off] += s[off] * (g[off] - dot);
            }
          }
        break;
      }
      case OpKind::kConcat: {
        const auto v = detail::axis_view(n.out.shape(), n.i0);
        int pos = 0;
        for (size_t t = 0; t < n.in.size(); ++t) {
          const Tensor& x = val(int(t));
          auto& gx = adj_ref(n.in[t]);
          const auto xv = detail::axis_view(x.shape(), n.i0);
          for (int o = 0; o < xv.outer; ++o)
            for (int j = 0; j < xv.k; ++j)
              for (int in = 0; in < xv.inner; ++in)
                gx[(size_t(o) * xv.k + j) * xv.inner + in] +=
                    g[(size_t(o) * v.k + pos + j) * v.inner + in];
          pos += xv.k;
        }
        break;
      }
      case OpKind::kSlice: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        const auto xv = detail::axis_view(x.shape(), n.i0);
        const int start = n.i1, len = n.i2;
        for (int o = 0; o < xv.outer; ++o)
          for (int j = 0; j < len; ++j)
            for (int in = 0; in < xv.inner; ++in)
              gx[(size_t(o) * xv.k + start + j) * xv.inner + in] +=
                  g[(size_t(o) * len + j) * xv.inner + in];
        break;
      }
      case OpKind::kReshape: {
        axpy_or_reduce(adj_ref(n.in[0]), g, 1.0);
        break;
      }
      case OpKind::kGather: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        const int inner = x.numel() / x.dim(0);
        for (size_t r = 0; r < n.idx.size(); ++r)
          for (int i = 0; i < inner; ++i)
            gx[size_t(n.idx[r]) * inner + i] += g[r * size_t(inner) + i];
        break;
      }
      case OpKind::kBilinearWarp: {
        const Tensor& map = val(0);
        const Tensor& pose = val(1);
        auto& gm = adj_ref(n.in[0]);
        auto& gp = adj_ref(n.in[1]);
        detail::warp_backward(map.data(), map.dim(0), map.dim(2), n.f0, pose.data()[0],
                              pose.data()[1], pose.data()[2], g.data(), gm.data(), gp.data());
        break;
      }
      case OpKind::kHuberNorm: {
        const Tensor& x = val(0);
        auto& gx = adj_ref(n.in[0]);
        double r2 = 0;
        for (int i = 0; i < x.numel(); ++i) r2 += x.data()[i] * x.data()[i];
        const double r = std::sqrt(r2);
        const double delta = n.f0;
        if (r <= delta) {
          for (int i = 0; i < x.numel(); ++i) gx[size_t(i)] += g[0] * x.data()[i];
        } else {
          for (int i = 0; i < x.numel(); ++i) gx[size_t(i)] += g[0] * delta * x.data()[i] / r;
        }
        break;
      }
      case OpKind::kScale: {
        axpy_or_reduce(adj_ref(n.in[0]), g, n.f0);
        break;
      }
      case OpKind::kAddConst: {
        axpy_or_reduce(adj_ref(n.in[0]), g, 1.0);
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<int> leaf_ids_;
  std::vector<std::vector<double>> adj_;
};

// ---------------------------------------------------------------------------
// Op builders. Each computes the forward value, and records a node when any
// operand is on a tape. Untracked operands are materialized as constants.

namespace detail {

inline Tape* find_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->recorded()) continue;
    if (tape && tape != t->tape)
      throw std::invalid_argument("operands recorded on different tapes");
    tape = t->tape;
  }
  return tape;
}

inline Tensor finish(Tape* tape, OpKind kind, std::initializer_list<const Tensor*> ins,
                     Tensor out, int i0 = 0, int i1 = 0, int i2 = 0, double f0 = 0.0,
                     double f1 = 0.0, std::vector<int> idx = {}) {
  if (!tape) return out;
  std::vector<int> ids;
  ids.reserve(ins.size());
  for (const Tensor* t : ins) ids.push_back(tape->node_of(*t));
  return tape->emit(kind, std::move(ids), std::move(out), i0, i1, i2, f0, f1, std::move(idx));
}

inline void check_binary_shapes(OpKind k, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() && a.numel() != 1 && b.numel() != 1)
    throw std::invalid_argument(std::string(op_name(k)) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
}

template <typename F>
Tensor binary_elemwise(OpKind k, const Tensor& a, const Tensor& b, F f) {
  check_binary_shapes(k, a, b);
  const Tensor& ref = a.numel() == 1 ? b : a;
  Tensor out(ref.shape());
  const bool as = a.numel() == 1, bs = b.numel() == 1;
  for (int i = 0; i < out.numel(); ++i)
    out.data()[i] = f(a.data()[as ? 0 : i], b.data()[bs ? 0 : i]);
  return finish(find_tape({&a, &b}), k, {&a, &b}, std::move(out));
}

template <typename F>
Tensor unary_elemwise(OpKind k, const Tensor& a, F f) {
  Tensor out(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = f(a.data()[i]);
  return finish(find_tape({&a}), k, {&a}, std::move(out));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_elemwise(OpKind::kAdd, a, b, [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_elemwise(OpKind::kSub, a, b, [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_elemwise(OpKind::kMul, a, b, [](double x, double y) { return x * y; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_elemwise(OpKind::kDiv, a, b, [](double x, double y) { return x / y; });
}
inline Tensor atan2(const Tensor& y, const Tensor& x) {
  if (y.shape() != x.shape())
    throw std::invalid_argument("atan2: shape mismatch " + y.shape().str() + " vs " +
                                x.shape().str());
  Tensor out(y.shape());
  for (int i = 0; i < y.numel(); ++i) out.data()[i] = std::atan2(y.data()[i], x.data()[i]);
  return detail::finish(detail::find_tape({&y, &x}), OpKind::kAtan2, {&y, &x}, std::move(out));
}

inline Tensor neg(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kNeg, a, [](double x) { return -x; });
}
inline Tensor relu(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kRelu, a, [](double x) { return x > 0 ? x : 0.0; });
}
inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kSigmoid, a,
                                [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}
inline Tensor tanh(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kTanh, a, [](double x) { return std::tanh(x); });
}
inline Tensor exp(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kExp, a, [](double x) { return std::exp(x); });
}
inline Tensor log(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kLog, a, [](double x) { return std::log(x); });
}
inline Tensor sqrt(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kSqrt, a, [](double x) { return std::sqrt(x); });
}
inline Tensor sin(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kSin, a, [](double x) { return std::sin(x); });
}
inline Tensor cos(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kCos, a, [](double x) { return std::cos(x); });
}
inline Tensor wrap_angle(const Tensor& a) {
  return detail::unary_elemwise(OpKind::kWrapAngle, a, [](double x) { return wrap_pi(x); });
}
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  Tensor out(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = std::min(hi, std::max(lo, a.data()[i]));
  return detail::finish(detail::find_tape({&a}), OpKind::kClamp, {&a}, std::move(out), 0, 0, 0,
                        lo, hi);
}
inline Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = c * a.data()[i];
  return detail::finish(detail::find_tape({&a}), OpKind::kScale, {&a}, std::move(out), 0, 0, 0, c);
}
inline Tensor add_const(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (int i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + c;
  return detail::finish(detail::find_tape({&a}), OpKind::kAddConst, {&a}, std::move(out), 0, 0, 0,
                        c);
}

// [..., n] + [n], broadcast over every leading axis.
inline Tensor bias_add(const Tensor& x, const Tensor& b) {
  if (b.ndim() != 1 || x.dim(x.ndim() - 1) != b.dim(0))
    throw std::invalid_argument("bias_add: shape mismatch " + x.shape().str() + " vs " +
                                b.shape().str());
  Tensor out(x.shape());
  const int bn = b.numel();
  for (int i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] + b.data()[i % bn];
  return detail::finish(detail::find_tape({&x, &b}), OpKind::kBiasAdd, {&x, &b}, std::move(out));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape().str() + " x " +
                                b.shape().str());
  const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor out(Shape{m, p});
  for (int i = 0; i < m; ++i) {
    double* o = out.data() + size_t(i) * p;
    for (int l = 0; l < k; ++l) {
      const double av = a.data()[size_t(i) * k + l];
      if (av == 0.0) continue;
      const double* br = b.data() + size_t(l) * p;
      for (int j = 0; j < p; ++j) o[j] += av * br[j];
    }
  }
  return detail::finish(detail::find_tape({&a, &b}), OpKind::kMatmul, {&a, &b}, std::move(out));
}

inline Tensor conv2d(const Tensor& x, const Tensor& ker) {
  if (x.ndim() != 3 || ker.ndim() != 4 || ker.dim(0) != 3 || ker.dim(1) != 3 ||
      ker.dim(2) != x.dim(2))
    throw std::invalid_argument("conv2d: incompatible shapes " + x.shape().str() + " vs kernel " +
                                ker.shape().str());
  const int h = x.dim(0), w = x.dim(1), co = ker.dim(3);
  Tensor out(Shape{h, w, co});
  detail::conv2d_forward(x.data(), h, w, x.dim(2), ker.data(), co, out.data());
  return detail::finish(detail::find_tape({&x, &ker}), OpKind::kConv2d, {&x, &ker},
                        std::move(out));
}

inline Tensor avg_pool2(const Tensor& x) {
  if (x.ndim() != 3 || x.dim(0) % 2 != 0 || x.dim(1) % 2 != 0)
    throw std::invalid_argument("avg_pool2d: needs even [H,W,C], got " + x.shape().str());
  const int h2 = x.dim(0) / 2, w2 = x.dim(1) / 2, c = x.dim(2);
  const int w = x.dim(1);
  Tensor out(Shape{h2, w2, c});
  for (int i = 0; i < h2; ++i)
    for (int j = 0; j < w2; ++j)
      for (int q = 0; q < c; ++q)
        out.data()[(size_t(i) * w2 + j) * c + q] =
            0.25 * (x.data()[(size_t(2 * i) * w + 2 * j) * c + q] +
                    x.data()[(size_t(2 * i) * w + 2 * j + 1) * c + q] +
                    x.data()[(size_t(2 * i + 1) * w + 2 * j) * c + q] +
                    x.data()[(size_t(2 * i + 1) * w + 2 * j + 1) * c + q]);
  return detail::finish(detail::find_tape({&x}), OpKind::kAvgPool2d, {&x}, std::move(out));
}

inline Tensor sum(const Tensor& x) {
  double acc = 0;
  for (int i = 0; i < x.numel(); ++i) acc += x.data()[i];
  return detail::finish(detail::find_tape({&x}), OpKind::kSum, {&x}, Tensor::scalar(acc));
}

inline Tensor mean(const Tensor& x) {
  double acc = 0;
  for (int i = 0; i < x.numel(); ++i) acc += x.data()[i];
  return detail::finish(detail::find_tape({&x}), OpKind::kMean, {&x},
                        Tensor::scalar(acc / double(x.numel())));
}

inline Tensor logsumexp(const Tensor& x, int axis) {
  const auto v = detail::axis_view(x.shape(), axis);
  Tensor out(detail::drop_axis_shape(x.shape(), axis));
  for (int o = 0; o < v.outer; ++o)
    for (int in = 0; in < v.inner; ++in) {
      double mx = -HUGE_VAL;
      for (int j = 0; j < v.k; ++j)
        mx = std::max(mx, x.data()[(size_t(o) * v.k + j) * v.inner + in]);
      double s = 0;
      for (int j = 0; j < v.k; ++j)
        s += std::exp(x.data()[(size_t(o) * v.k + j) * v.inner + in] - mx);
      out.data()[size_t(o) * v.inner + in] = mx + std::log(s);
    }
  return detail::finish(detail::find_tape({&x}), OpKind::kLogSumExp, {&x}, std::move(out), axis);
}

inline Tensor softmax(const Tensor& x, int axis) {
  const auto v = detail::axis_view(x.shape(), axis);
  Tensor out(x.shape());
  for (int o = 0; o < v.outer; ++o)
    for (int in = 0; in < v.inner; ++in) {
      double mx = -HUGE_VAL;
      for (int j = 0; j < v.k; ++j)
        mx = std::max(mx, x.data()[(size_t(o) * v.k + j) * v.inner + in]);
      double s = 0;
      for (int j = 0; j < v.k; ++j)
        s += std::exp(x.data()[(size_t(o) * v.k + j) * v.inner + in] - mx);
      for (int j = 0; j < v.k; ++j) {
        const size_t off = (size_t(o) * v.k + j) * v.inner + in;
        out.data()[off] = std::exp(x.data()[off] - mx) / s;
      }
    }
  return detail::finish(detail::find_tape({&x}), OpKind::kSoftmax, {&x}, std::move(out), axis);
}

inline Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  Shape s = xs[0].shape();
  int total = 0;
  for (const Tensor& t : xs) {
    if (t.ndim() != s.ndim)
      throw std::invalid_argument("concat: rank mismatch " + t.shape().str() + " vs " + s.str());
    for (int i = 0; i < s.ndim; ++i)
      if (i != axis && t.dim(i) != s[i])
        throw std::invalid_argument("concat: shape mismatch " + t.shape().str() + " vs " +
                                    s.str());
    total += t.dim(axis);
  }
  s.d[axis] = total;
  Tensor out(s);
  const auto ov = detail::axis_view(s, axis);
  int pos = 0;
  for (const Tensor& t : xs) {
    const auto tv = detail::axis_view(t.shape(), axis);
    for (int o = 0; o < tv.outer; ++o)
      for (int j = 0; j < tv.k; ++j)
        for (int in = 0; in < tv.inner; ++in)
          out.data()[(size_t(o) * ov.k + pos + j) * ov.inner + in] =
              t.data()[(size_t(o) * tv.k + j) * tv.inner + in];
    pos += tv.k;
  }
  Tape* tape = nullptr;
  for (const Tensor& t : xs) {
    if (!t.recorded()) continue;
    if (tape && tape != t.tape)
      throw std::invalid_argument("concat: operands recorded on different tapes");
    tape = t.tape;
  }
  if (!tape) return out;
  std::vector<int> ids;
  ids.reserve(xs.size());
  for (const Tensor& t : xs) ids.push_back(tape->node_of(t));
  return tape->emit(OpKind::kConcat, std::move(ids), std::move(out), axis);
}

inline Tensor slice(const Tensor& x, int axis, int start, int len) {
  const auto v = detail::axis_view(x.shape(), axis);
  if (start < 0 || len < 1 || start + len > v.k)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of bounds for " +
                                x.shape().str());
  Shape s = x.shape();
  s.d[axis] = len;
  Tensor out(s);
  for (int o = 0; o < v.outer; ++o)
    for (int j = 0; j < len; ++j)
      for (int in = 0; in < v.inner; ++in)
        out.data()[(size_t(o) * len + j) * v.inner + in] =
            x.data()[(size_t(o) * v.k + start + j) * v.inner + in];
  return detail::finish(detail::find_tape({&x}), OpKind::kSlice, {&x}, std::move(out), axis,
                        start, len);
}

inline Tensor reshape(const Tensor& x, Shape s) {
  if (s.numel() != x.numel())
    throw std::invalid_argument("reshape: numel mismatch " + x.shape().str() + " -> " + s.str());
  Tensor out = x.clone().reshaped(s);
  return detail::finish(detail::find_tape({&x}), OpKind::kReshape, {&x}, std::move(out));
}

// Select rows along axis 0; indices are not differentiated.
inline Tensor gather(const Tensor& x, const std::vector<int>& indices) {
  if (x.ndim() < 1) throw std::invalid_argument("gather: input must have rank >= 1");
  const int inner = x.numel() / x.dim(0);
  Shape s = x.shape();
  s.d[0] = int(indices.size());
  Tensor out(s);
  for (size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= x.dim(0))
      throw std::invalid_argument("gather: index " + std::to_string(indices[r]) +
                                  " out of range for " + x.shape().str());
    std::copy(x.data() + size_t(indices[r]) * inner, x.data() + size_t(indices[r] + 1) * inner,
              out.data() + r * size_t(inner));
  }
  return detail::finish(detail::find_tape({&x}), OpKind::kGather, {&x}, std::move(out), 0, 0, 0,
                        0.0, 0.0, indices);
}

// Rigid bilinear resample of a square [N,N,C] grid map; `pose` is [3]
// (x, y, theta), the output frame expressed in the input frame.
inline Tensor bilinear_warp(const Tensor& map, const Tensor& pose, double cell_size) {
  if (map.ndim() != 3 || map.dim(0) != map.dim(1))
    throw std::invalid_argument("bilinear_warp: map must be square [N,N,C], got " +
                                map.shape().str());
  if (pose.numel() != 3)
    throw std::invalid_argument("bilinear_warp: pose must have 3 elements, got " +
                                pose.shape().str());
  Tensor out(map.shape());
  detail::warp_forward(map.data(), map.dim(0), map.dim(2), cell_size, pose.data()[0],
                       pose.data()[1], pose.data()[2], out.data());
  return detail::finish(detail::find_tape({&map, &pose}), OpKind::kBilinearWarp, {&map, &pose},
                        std::move(out), 0, 0, 0, cell_size);
}

// Huber loss of the Euclidean norm of `v`.
inline Tensor huber_norm(const Tensor& v, double delta) {
  double r2 = 0;
  for (int i = 0; i < v.numel(); ++i) r2 += v.data()[i] * v.data()[i];
  const double r = std::sqrt(r2);
  const double f = r <= delta ? 0.5 * r2 : delta * (r - 0.5 * delta);
  return detail::finish(detail::find_tape({&v}), OpKind::kHuberNorm, {&v}, Tensor::scalar(f), 0,
                        0, 0, delta);
}

// Dense layer helper: x [B,in] or [in]; w [in,out]; b [out].
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor x2 = x.ndim() == 1 ? reshape(x, Shape{1, x.dim(0)}) : x;
  Tensor y = bias_add(matmul(x2, w), b);
  if (x.ndim() == 1) return reshape(y, Shape{y.dim(1)});
  return y;
}

}  // namespace dslam
