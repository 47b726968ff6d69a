#include "socnav/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "socnav/errors.hpp"
#include "socnav/voxelizer.hpp"

namespace socnav::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
// Sums below are plain loops: Eigen's vectorized reductions peel on pointer
// alignment, which makes results depend on where buffers were allocated.

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void require(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}

void same_size(const Graph& g, Var a, Var b, const char* op) {
  require(g.value(a).size() == g.value(b).size(),
          std::string(op) + ": size mismatch " + shape_str(g.shape(a)) + " vs " + shape_str(g.shape(b)));
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
}

template <class F, class D>
Var unary(Graph& g, Var a, F f, D dfdx_given_x_y) {
  const Tensor& x = g.value(a);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  if (!g.needs_grad(a)) return g.emit(std::move(y), false, {});
  Graph::Backward back = [a, dfdx_given_x_y, ys = y.data](Graph& gr, const Tensor& dy) {
    const Tensor& xv = gr.value(a);
    Tensor& dx = gr.grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] += dy.data[i] * dfdx_given_x_y(xv.data[i], ys[i]);
  };
  return g.emit(std::move(y), true, std::move(back));
}

// Convolution bookkeeping shared by the dense and sparse variants.
struct ConvShape {
  int C = 1;
  std::array<int, 3> in{1, 1, 1};
  std::array<int, 3> out{1, 1, 1};
  ConvGeometry geom;
  int O = 1;

  int rows() const { return C * geom.kernel[0] * geom.kernel[1] * geom.kernel[2]; }
  int positions() const { return out[0] * out[1] * out[2]; }
  int in_volume() const { return in[0] * in[1] * in[2]; }
};

std::array<int, 3> conv_out(const std::array<int, 3>& in, const ConvGeometry& geom) {
  std::array<int, 3> out{};
  for (int a = 0; a < 3; ++a) {
    const int span = in[a] + 2 * geom.pad[a] - geom.kernel[a];
    require(span >= 0 && geom.stride[a] >= 1, "convolution kernel larger than padded input");
    out[a] = span / geom.stride[a] + 1;
  }
  return out;
}

void im2col(const double* in, const ConvShape& s, double* col) {
  const auto& k = s.geom.kernel;
  const auto& st = s.geom.stride;
  const auto& p = s.geom.pad;
  const int P = s.positions();
  int row = 0;
  for (int c = 0; c < s.C; ++c) {
    const double* plane = in + static_cast<std::size_t>(c) * s.in_volume();
    for (int a = 0; a < k[0]; ++a)
      for (int b = 0; b < k[1]; ++b)
        for (int e = 0; e < k[2]; ++e, ++row) {
          double* dst = col + static_cast<std::size_t>(row) * P;
          for (int oz = 0; oz < s.out[0]; ++oz) {
            const int iz = oz * st[0] + a - p[0];
            for (int oy = 0; oy < s.out[1]; ++oy) {
              const int iy = oy * st[1] + b - p[1];
              double* d = dst + (static_cast<std::size_t>(oz) * s.out[1] + oy) * s.out[2];
              if (iz < 0 || iz >= s.in[0] || iy < 0 || iy >= s.in[1]) {
                std::fill(d, d + s.out[2], 0.0);
                continue;
              }
              const double* src = plane + (static_cast<std::size_t>(iz) * s.in[1] + iy) * s.in[2];
              // Columns whose input index falls inside [0, in) form one contiguous range.
              const int shift = e - p[2];
              int lo = 0;
              while (lo < s.out[2] && lo * st[2] + shift < 0) ++lo;
              int hi = s.out[2];
              while (hi > lo && (hi - 1) * st[2] + shift >= s.in[2]) --hi;
              std::fill(d, d + lo, 0.0);
              for (int ox = lo; ox < hi; ++ox) d[ox] = src[ox * st[2] + shift];
              std::fill(d + hi, d + s.out[2], 0.0);
            }
          }
        }
  }
}

void col2im(const double* col, const ConvShape& s, double* dx) {
  const auto& k = s.geom.kernel;
  const auto& st = s.geom.stride;
  const auto& p = s.geom.pad;
  const int P = s.positions();
  int row = 0;
  for (int c = 0; c < s.C; ++c) {
    double* plane = dx + static_cast<std::size_t>(c) * s.in_volume();
    for (int a = 0; a < k[0]; ++a)
      for (int b = 0; b < k[1]; ++b)
        for (int e = 0; e < k[2]; ++e, ++row) {
          const double* srcrow = col + static_cast<std::size_t>(row) * P;
          for (int oz = 0; oz < s.out[0]; ++oz) {
            const int iz = oz * st[0] + a - p[0];
            if (iz < 0 || iz >= s.in[0]) continue;
            for (int oy = 0; oy < s.out[1]; ++oy) {
              const int iy = oy * st[1] + b - p[1];
              if (iy < 0 || iy >= s.in[1]) continue;
              const double* sp = srcrow + (static_cast<std::size_t>(oz) * s.out[1] + oy) * s.out[2];
              double* d = plane + (static_cast<std::size_t>(iz) * s.in[1] + iy) * s.in[2];
              for (int ox = 0; ox < s.out[2]; ++ox) {
                const int ix = ox * st[2] + e - p[2];
                if (ix >= 0 && ix < s.in[2]) d[ix] += sp[ox];
              }
            }
          }
        }
  }
}

// Shared dense convolution over a [C, D, H, W] view of x.
Var conv_generic(Graph& g, Var x, Var w, Var b, ConvShape s, std::vector<int> out_shape) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require(wv.size() == static_cast<std::size_t>(s.O) * s.rows(), "conv: weight size mismatch " + shape_str(wv.shape));
  require(bv.size() == static_cast<std::size_t>(s.O), "conv: bias size mismatch");

  const int R = s.rows();
  const int P = s.positions();
  const bool track = g.any_needs_grad({x, w, b});
  // Without a backward pass the column buffer is reused; freeing megabyte
  // buffers on every call makes the allocator hand pages back to the kernel.
  thread_local std::vector<double> scratch;
  std::vector<double> owned;
  std::vector<double>& col = track ? owned : scratch;
  col.resize(static_cast<std::size_t>(R) * P);
  im2col(xv.data.data(), s, col.data());

  Tensor y(std::move(out_shape));
  MatMap ym(y.data.data(), s.O, P);
  ym.noalias() = ConstMatMap(wv.data.data(), s.O, R) * ConstMatMap(col.data(), R, P);
  ym.colwise() += ConstVecMap(bv.data.data(), s.O);

  if (!track) return g.emit(std::move(y), false, {});
  return g.emit(std::move(y), true, [x, w, b, s, col = std::move(owned)](Graph& gr, const Tensor& dy) {
    const int R = s.rows();
    const int P = s.positions();
    ConstMatMap dym(dy.data.data(), s.O, P);
    if (gr.needs_grad(w)) {
      MatMap dw(gr.grad(w).data.data(), s.O, R);
      dw.noalias() += dym * ConstMatMap(col.data(), R, P).transpose();
    }
    if (gr.needs_grad(b)) {
      double* gb = gr.grad(b).data.data();
      for (int o = 0; o < s.O; ++o)
        for (int p = 0; p < P; ++p) gb[o] += dym(o, p);
    }
    if (gr.needs_grad(x)) {
      RowMat dcol = ConstMatMap(gr.value(w).data.data(), s.O, R).transpose() * dym;
      col2im(dcol.data(), s, gr.grad(x).data.data());
    }
  });
}

}  // namespace

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InputError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape_, double fill) : shape(std::move(shape_)), data(element_count(shape), fill) {}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_) : shape(std::move(shape_)), data(std::move(data_)) {
  if (data.size() != element_count(shape)) throw InputError("tensor data does not match shape " + shape_str(shape));
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(const Tensor& value, Tensor* grad_sink) {
  Node n;
  n.external = &value;
  if (track_ && grad_sink) {
    if (grad_sink->size() != value.size()) *grad_sink = Tensor(value.shape);
    n.sink = grad_sink;
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw InputError("invalid graph variable");
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.external ? *n.external : n.owned;
}

double Graph::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw InputError("expected a scalar, got " + shape_str(t.shape));
  return t.data[0];
}

bool Graph::any_needs_grad(std::initializer_list<Var> vs) const {
  for (Var v : vs)
    if (needs_grad(v)) return true;
  return false;
}

Var Graph::emit(Tensor value, bool needs, Backward back) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = track_ && needs;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.sink) return *n.sink;
  if (n.grad.size() != value(v).size()) n.grad = Tensor(value(v).shape);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (!track_) throw InputError("backward on a graph built without gradient tracking");
  if (value(loss).size() != 1) throw InputError("backward requires a scalar loss");
  if (!needs_grad(loss)) return;
  grad(loss).data[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.back || n.grad.size() == 0) continue;
    n.back(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Graph& g, Var a, Var b) {
  same_size(g, a, b, "add");
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] + bv.data[i];
  return g.emit(std::move(y), g.any_needs_grad({a, b}), [a, b](Graph& gr, const Tensor& dy) {
    if (gr.needs_grad(a)) accumulate(gr.grad(a), dy);
    if (gr.needs_grad(b)) accumulate(gr.grad(b), dy);
  });
}

Var sub(Graph& g, Var a, Var b) {
  same_size(g, a, b, "sub");
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] - bv.data[i];
  return g.emit(std::move(y), g.any_needs_grad({a, b}), [a, b](Graph& gr, const Tensor& dy) {
    if (gr.needs_grad(a)) accumulate(gr.grad(a), dy);
    if (gr.needs_grad(b)) {
      Tensor& db = gr.grad(b);
      for (std::size_t i = 0; i < dy.size(); ++i) db.data[i] -= dy.data[i];
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  same_size(g, a, b, "mul");
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] * bv.data[i];
  return g.emit(std::move(y), g.any_needs_grad({a, b}), [a, b](Graph& gr, const Tensor& dy) {
    const Tensor& av2 = gr.value(a);
    const Tensor& bv2 = gr.value(b);
    if (gr.needs_grad(a)) {
      Tensor& da = gr.grad(a);
      for (std::size_t i = 0; i < dy.size(); ++i) da.data[i] += dy.data[i] * bv2.data[i];
    }
    if (gr.needs_grad(b)) {
      Tensor& db = gr.grad(b);
      for (std::size_t i = 0; i < dy.size(); ++i) db.data[i] += dy.data[i] * av2.data[i];
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  return unary(g, a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var relu(Graph& g, Var a) {
  return unary(g, a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Graph& g, Var a) {
  return unary(g, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Graph& g, Var a) {
  return unary(g, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(Graph& g, Var a) {
  return unary(g, a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Graph& g, Var a) {
  return unary(g, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  return g.emit(Tensor({1}, {s}), g.needs_grad(a), [a](Graph& gr, const Tensor& dy) {
    Tensor& da = gr.grad(a);
    for (double& v : da.data) v += dy.data[0];
  });
}

Var mean(Graph& g, Var a) {
  const std::size_t n = g.value(a).size();
  require(n > 0, "mean of an empty tensor");
  return scale(g, sum(g, a), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var reshape(Graph& g, Var a, std::vector<int> shape) {
  require(element_count(shape) == g.value(a).size(),
          "reshape: " + shape_str(g.shape(a)) + " -> " + shape_str(shape));
  Tensor y(std::move(shape), g.value(a).data);
  return g.emit(std::move(y), g.needs_grad(a), [a](Graph& gr, const Tensor& dy) { accumulate(gr.grad(a), dy); });
}

Var concat(Graph& g, std::span<const Var> parts) {
  std::vector<double> data;
  std::vector<Var> ins(parts.begin(), parts.end());
  bool needs = false;
  for (Var p : ins) {
    const auto& d = g.value(p).data;
    data.insert(data.end(), d.begin(), d.end());
    needs = needs || g.needs_grad(p);
  }
  const int n = static_cast<int>(data.size());
  return g.emit(Tensor({n}, std::move(data)), needs, [ins](Graph& gr, const Tensor& dy) {
    std::size_t off = 0;
    for (Var p : ins) {
      const std::size_t len = gr.value(p).size();
      if (gr.needs_grad(p)) {
        Tensor& dp = gr.grad(p);
        for (std::size_t i = 0; i < len; ++i) dp.data[i] += dy.data[off + i];
      }
      off += len;
    }
  });
}

Var slice(Graph& g, Var a, int offset, int length) {
  const Tensor& av = g.value(a);
  require(offset >= 0 && length >= 0 && static_cast<std::size_t>(offset + length) <= av.size(), "slice out of range");
  std::vector<double> data(av.data.begin() + offset, av.data.begin() + offset + length);
  return g.emit(Tensor({length}, std::move(data)), g.needs_grad(a), [a, offset](Graph& gr, const Tensor& dy) {
    Tensor& da = gr.grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) da.data[offset + i] += dy.data[i];
  });
}

// ---------------------------------------------------------------------------
// Matrix algebra

Var linear(Graph& g, Var x, Var w, Var b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require(wv.shape.size() == 2, "linear: weight must be 2-D");
  const int m = wv.shape[0];
  const int n = wv.shape[1];
  require(xv.size() == static_cast<std::size_t>(n),
          "linear: input " + shape_str(xv.shape) + " incompatible with weight " + shape_str(wv.shape));
  require(bv.size() == static_cast<std::size_t>(m), "linear: bias size mismatch");
  Tensor y({m});
  VecMap(y.data.data(), m).noalias() =
      ConstMatMap(wv.data.data(), m, n) * ConstVecMap(xv.data.data(), n) + ConstVecMap(bv.data.data(), m);
  return g.emit(std::move(y), g.any_needs_grad({x, w, b}), [x, w, b, m, n](Graph& gr, const Tensor& dy) {
    ConstVecMap dyv(dy.data.data(), m);
    if (gr.needs_grad(w))
      MatMap(gr.grad(w).data.data(), m, n).noalias() += dyv * ConstVecMap(gr.value(x).data.data(), n).transpose();
    if (gr.needs_grad(b)) VecMap(gr.grad(b).data.data(), m) += dyv;
    if (gr.needs_grad(x))
      VecMap(gr.grad(x).data.data(), n).noalias() += ConstMatMap(gr.value(w).data.data(), m, n).transpose() * dyv;
  });
}

Var linear_rows(Graph& g, Var x, Var w, Var b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require(xv.shape.size() == 2 && wv.shape.size() == 2 && xv.shape[1] == wv.shape[1],
          "linear_rows: " + shape_str(xv.shape) + " x " + shape_str(wv.shape));
  const int t = xv.shape[0];
  const int n = xv.shape[1];
  const int m = wv.shape[0];
  require(bv.size() == static_cast<std::size_t>(m), "linear_rows: bias size mismatch");
  Tensor y({t, m});
  MatMap ym(y.data.data(), t, m);
  ym.noalias() = ConstMatMap(xv.data.data(), t, n) * ConstMatMap(wv.data.data(), m, n).transpose();
  ym.rowwise() += ConstVecMap(bv.data.data(), m).transpose();
  return g.emit(std::move(y), g.any_needs_grad({x, w, b}), [x, w, b, t, n, m](Graph& gr, const Tensor& dy) {
    ConstMatMap dym(dy.data.data(), t, m);
    if (gr.needs_grad(w))
      MatMap(gr.grad(w).data.data(), m, n).noalias() += dym.transpose() * ConstMatMap(gr.value(x).data.data(), t, n);
    if (gr.needs_grad(b)) {
      double* gb = gr.grad(b).data.data();
      for (int r = 0; r < t; ++r)
        for (int c = 0; c < m; ++c) gb[c] += dym(r, c);
    }
    if (gr.needs_grad(x))
      MatMap(gr.grad(x).data.data(), t, n).noalias() += dym * ConstMatMap(gr.value(w).data.data(), m, n);
  });
}

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.shape.size() == 2 && bv.shape.size() == 2 && av.shape[1] == bv.shape[0],
          "matmul: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  const int m = av.shape[0];
  const int k = av.shape[1];
  const int n = bv.shape[1];
  Tensor y({m, n});
  MatMap(y.data.data(), m, n).noalias() = ConstMatMap(av.data.data(), m, k) * ConstMatMap(bv.data.data(), k, n);
  return g.emit(std::move(y), g.any_needs_grad({a, b}), [a, b, m, k, n](Graph& gr, const Tensor& dy) {
    ConstMatMap dym(dy.data.data(), m, n);
    if (gr.needs_grad(a))
      MatMap(gr.grad(a).data.data(), m, k).noalias() += dym * ConstMatMap(gr.value(b).data.data(), k, n).transpose();
    if (gr.needs_grad(b))
      MatMap(gr.grad(b).data.data(), k, n).noalias() += ConstMatMap(gr.value(a).data.data(), m, k).transpose() * dym;
  });
}

Var transpose(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  require(av.shape.size() == 2, "transpose: expected a matrix");
  const int m = av.shape[0];
  const int n = av.shape[1];
  Tensor y({n, m});
  MatMap(y.data.data(), n, m) = ConstMatMap(av.data.data(), m, n).transpose();
  return g.emit(std::move(y), g.needs_grad(a), [a, m, n](Graph& gr, const Tensor& dy) {
    MatMap(gr.grad(a).data.data(), m, n) += ConstMatMap(dy.data.data(), n, m).transpose();
  });
}

Var slice_cols(Graph& g, Var a, int col, int count) {
  const Tensor& av = g.value(a);
  require(av.shape.size() == 2 && col >= 0 && count >= 0 && col + count <= av.shape[1], "slice_cols out of range");
  const int rows = av.shape[0];
  const int cols = av.shape[1];
  Tensor y({rows, count});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < count; ++c) y.data[r * count + c] = av.data[r * cols + col + c];
  return g.emit(std::move(y), g.needs_grad(a), [a, col, count, rows, cols](Graph& gr, const Tensor& dy) {
    Tensor& da = gr.grad(a);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < count; ++c) da.data[r * cols + col + c] += dy.data[r * count + c];
  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  std::vector<Var> ins(parts.begin(), parts.end());
  const int rows = g.shape(ins[0])[0];
  int cols = 0;
  bool needs = false;
  for (Var p : ins) {
    require(g.shape(p).size() == 2 && g.shape(p)[0] == rows, "concat_cols: row mismatch");
    cols += g.shape(p)[1];
    needs = needs || g.needs_grad(p);
  }
  Tensor y({rows, cols});
  int off = 0;
  for (Var p : ins) {
    const Tensor& pv = g.value(p);
    const int pc = pv.shape[1];
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < pc; ++c) y.data[r * cols + off + c] = pv.data[r * pc + c];
    off += pc;
  }
  return g.emit(std::move(y), needs, [ins, rows, cols](Graph& gr, const Tensor& dy) {
    int off2 = 0;
    for (Var p : ins) {
      const int pc = gr.shape(p)[1];
      if (gr.needs_grad(p)) {
        Tensor& dp = gr.grad(p);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < pc; ++c) dp.data[r * pc + c] += dy.data[r * cols + off2 + c];
      }
      off2 += pc;
    }
  });
}

Var softmax_rows(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  require(av.shape.size() == 2, "softmax_rows: expected a matrix");
  const int rows = av.shape[0];
  const int cols = av.shape[1];
  Tensor y(av.shape);
  for (int r = 0; r < rows; ++r) {
    const double* x = av.data.data() + r * cols;
    double* out = y.data.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += (out[c] = std::exp(x[c] - mx));
    for (int c = 0; c < cols; ++c) out[c] /= z;
  }
  Graph::Backward back = [a, rows, cols, ys = y.data](Graph& gr, const Tensor& dy) {
    Tensor& da = gr.grad(a);
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += dy.data[r * cols + c] * ys[r * cols + c];
      for (int c = 0; c < cols; ++c) da.data[r * cols + c] += ys[r * cols + c] * (dy.data[r * cols + c] - dot);
    }
  };
  return g.emit(std::move(y), g.needs_grad(a), std::move(back));
}

Var layer_norm_rows(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = g.value(x);
  require(xv.shape.size() == 2, "layer_norm_rows: expected a matrix");
  const int rows = xv.shape[0];
  const int cols = xv.shape[1];
  require(g.value(gamma).size() == static_cast<std::size_t>(cols) && g.value(beta).size() == static_cast<std::size_t>(cols),
          "layer_norm_rows: affine size mismatch");
  const auto& gv = g.value(gamma).data;
  const auto& bv = g.value(beta).data;
  Tensor y(xv.shape);
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const double* xr = xv.data.data() + r * cols;
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += xr[c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= cols;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c) {
      const double h = (xr[c] - mu) * inv_std[r];
      xhat[r * cols + c] = h;
      y.data[r * cols + c] = gv[c] * h + bv[c];
    }
  }
  return g.emit(std::move(y), g.any_needs_grad({x, gamma, beta}),
                [x, gamma, beta, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Graph& gr, const Tensor& dy) {
                  const auto& gam = gr.value(gamma).data;
                  if (gr.needs_grad(gamma)) {
                    Tensor& dg = gr.grad(gamma);
                    for (int r = 0; r < rows; ++r)
                      for (int c = 0; c < cols; ++c) dg.data[c] += dy.data[r * cols + c] * xhat[r * cols + c];
                  }
                  if (gr.needs_grad(beta)) {
                    Tensor& db = gr.grad(beta);
                    for (int r = 0; r < rows; ++r)
                      for (int c = 0; c < cols; ++c) db.data[c] += dy.data[r * cols + c];
                  }
                  if (gr.needs_grad(x)) {
                    Tensor& dx = gr.grad(x);
                    for (int r = 0; r < rows; ++r) {
                      double m1 = 0.0;
                      double m2 = 0.0;
                      for (int c = 0; c < cols; ++c) {
                        const double dh = dy.data[r * cols + c] * gam[c];
                        m1 += dh;
                        m2 += dh * xhat[r * cols + c];
                      }
                      m1 /= cols;
                      m2 /= cols;
                      for (int c = 0; c < cols; ++c) {
                        const double dh = dy.data[r * cols + c] * gam[c];
                        dx.data[r * cols + c] += inv_std[r] * (dh - m1 - xhat[r * cols + c] * m2);
                      }
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Convolution and pooling

Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad) {
  const auto& xs = g.shape(x);
  const auto& ws = g.shape(w);
  require(xs.size() == 3, "conv2d: input must be [C,H,W], got " + shape_str(xs));
  require(ws.size() == 4 && ws[1] == xs[0] && ws[2] == ws[3],
          "conv2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  ConvShape s;
  s.C = xs[0];
  s.in = {1, xs[1], xs[2]};
  s.geom = ConvGeometry{{1, ws[2], ws[3]}, {1, stride, stride}, {0, pad, pad}};
  s.O = ws[0];
  s.out = conv_out(s.in, s.geom);
  return conv_generic(g, x, w, b, s, {s.O, s.out[1], s.out[2]});
}

Var conv3d(Graph& g, Var x, Var w, Var b, const ConvGeometry& geom) {
  const auto& xs = g.shape(x);
  const auto& ws = g.shape(w);
  require(xs.size() == 4, "conv3d: input must be [C,D,H,W], got " + shape_str(xs));
  require(ws.size() == 5 && ws[1] == xs[0] && ws[2] == geom.kernel[0] && ws[3] == geom.kernel[1] &&
              ws[4] == geom.kernel[2],
          "conv3d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  ConvShape s;
  s.C = xs[0];
  s.in = {xs[1], xs[2], xs[3]};
  s.geom = geom;
  s.O = ws[0];
  s.out = conv_out(s.in, s.geom);
  return conv_generic(g, x, w, b, s, {s.O, s.out[0], s.out[1], s.out[2]});
}

Var voxel_conv(Graph& g, const VoxelGrid& grid, Var w, Var b, const ConvGeometry& geom) {
  const auto& ws = g.shape(w);
  require(ws.size() == 5 && ws[1] == 1 && ws[2] == geom.kernel[0] && ws[3] == geom.kernel[1] &&
              ws[4] == geom.kernel[2],
          "voxel_conv: weight " + shape_str(ws) + " does not match kernel");
  const int O = ws[0];
  require(g.value(b).size() == static_cast<std::size_t>(O), "voxel_conv: bias size mismatch");
  const auto in = grid.dims();
  const auto out = conv_out(in, geom);
  const int P = out[0] * out[1] * out[2];
  const int K = geom.kernel[0] * geom.kernel[1] * geom.kernel[2];

  // (kernel offset, output position) pairs touched by occupied cells.
  std::vector<std::pair<int, int>> taps;
  const int plane = in[1] * in[2];
  for (std::uint32_t cell : grid.occupied()) {
    const int ci = static_cast<int>(cell) / plane;
    const int cj = (static_cast<int>(cell) / in[2]) % in[1];
    const int ck = static_cast<int>(cell) % in[2];
    // Only offsets congruent to the padded cell index modulo the stride land on an output.
    for (int a = (ci + geom.pad[0]) % geom.stride[0]; a < geom.kernel[0]; a += geom.stride[0]) {
      const int ni = ci + geom.pad[0] - a;
      if (ni < 0) break;
      const int oi = ni / geom.stride[0];
      if (oi >= out[0]) continue;
      for (int bb = (cj + geom.pad[1]) % geom.stride[1]; bb < geom.kernel[1]; bb += geom.stride[1]) {
        const int nj = cj + geom.pad[1] - bb;
        if (nj < 0) break;
        const int oj = nj / geom.stride[1];
        if (oj >= out[1]) continue;
        for (int e = (ck + geom.pad[2]) % geom.stride[2]; e < geom.kernel[2]; e += geom.stride[2]) {
          const int nk = ck + geom.pad[2] - e;
          if (nk < 0) break;
          const int ok = nk / geom.stride[2];
          if (ok >= out[2]) continue;
          taps.emplace_back((a * geom.kernel[1] + bb) * geom.kernel[2] + e, (oi * out[1] + oj) * out[2] + ok);
        }
      }
    }
  }

  const auto& wv = g.value(w).data;
  const auto& bv = g.value(b).data;
  Tensor y({O, out[0], out[1], out[2]});
  for (int o = 0; o < O; ++o) {
    double* yo = y.data.data() + static_cast<std::size_t>(o) * P;
    std::fill(yo, yo + P, bv[o]);
    const double* wo = wv.data() + static_cast<std::size_t>(o) * K;
    for (const auto& [off, pos] : taps) yo[pos] += wo[off];
  }
  return g.emit(std::move(y), g.any_needs_grad({w, b}), [w, b, O, P, K, taps = std::move(taps)](Graph& gr, const Tensor& dy) {
    if (gr.needs_grad(w)) {
      Tensor& dw = gr.grad(w);
      for (int o = 0; o < O; ++o) {
        const double* dyo = dy.data.data() + static_cast<std::size_t>(o) * P;
        double* dwo = dw.data.data() + static_cast<std::size_t>(o) * K;
        for (const auto& [off, pos] : taps) dwo[off] += dyo[pos];
      }
    }
    if (gr.needs_grad(b)) {
      Tensor& db = gr.grad(b);
      for (int o = 0; o < O; ++o) {
        const double* dyo = dy.data.data() + static_cast<std::size_t>(o) * P;
        double s = 0.0;
        for (int p = 0; p < P; ++p) s += dyo[p];
        db.data[o] += s;
      }
    }
  });
}

Var max_pool2d(Graph& g, Var x, int kernel, int stride, int pad) {
  const Tensor& xv = g.value(x);
  require(xv.shape.size() == 3, "max_pool2d: input must be [C,H,W]");
  const int C = xv.shape[0];
  const int H = xv.shape[1];
  const int W = xv.shape[2];
  const auto out = conv_out({1, H, W}, ConvGeometry{{1, kernel, kernel}, {1, stride, stride}, {0, pad, pad}});
  const int OH = out[1];
  const int OW = out[2];
  Tensor y({C, OH, OW});
  std::vector<int> arg(y.size(), -1);
  for (int c = 0; c < C; ++c)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            const int idx = (c * H + iy) * W + ix;
            if (xv.data[idx] > best) {
              best = xv.data[idx];
              best_i = idx;
            }
          }
        }
        const int o = (c * OH + oy) * OW + ox;
        y.data[o] = best;
        arg[o] = best_i;
      }
  return g.emit(std::move(y), g.needs_grad(x), [x, arg = std::move(arg)](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad(x);
    for (std::size_t o = 0; o < arg.size(); ++o)
      if (arg[o] >= 0) dx.data[arg[o]] += dy.data[o];
  });
}

Var global_avg_pool(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  require(xv.shape.size() >= 2, "global_avg_pool: expected [C, ...]");
  const int C = xv.shape[0];
  const int P = static_cast<int>(xv.size() / static_cast<std::size_t>(C));
  Tensor y({C});
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int p = 0; p < P; ++p) s += xv.data[c * P + p];
    y.data[c] = s / P;
  }
  return g.emit(std::move(y), g.needs_grad(x), [x, C, P](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad(x);
    for (int c = 0; c < C; ++c)
      for (int p = 0; p < P; ++p) dx.data[c * P + p] += dy.data[c] / P;
  });
}

}  // namespace socnav::ad
