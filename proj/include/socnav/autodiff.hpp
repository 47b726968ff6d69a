#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Graph records one forward evaluation. Parameter nodes reference caller-owned
// tensors (no copy) and, when tracking, accumulate their gradients straight into a
// caller-provided sink. Graphs are single-use and not thread-safe; distinct graphs
// may share read-only parameters.

#include <array>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace socnav {
class VoxelGrid;
}

namespace socnav::ad {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);
  Tensor(std::vector<int> shape_, std::vector<double> data_);

  std::size_t size() const { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t element_count(const std::vector<int>& shape);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return track_; }

  Var constant(Tensor value);
  /// `value` must outlive the graph. A null sink marks the parameter frozen.
  Var parameter(const Tensor& value, Tensor* grad_sink);

  const Tensor& value(Var v) const;
  const std::vector<int>& shape(Var v) const { return value(v).shape; }
  double scalar(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates to every parameter sink.
  void backward(Var loss);

  // Used by op implementations.
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  bool any_needs_grad(std::initializer_list<Var> vs) const;
  Var emit(Tensor value, bool needs_grad, Backward back);
  Tensor& grad(Var v);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    Tensor grad;
    bool needs_grad = false;
    Backward back;
  };
  std::vector<Node> nodes_;
  bool track_;
};

// Spatial layout for convolutions: channels first, then up to three spatial axes.
struct ConvGeometry {
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};
};

// Dense algebra. Shapes are validated; violations throw InputError.
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var relu(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);
Var tanh(Graph& g, Var a);
Var abs(Graph& g, Var a);
Var square(Graph& g, Var a);
Var sum(Graph& g, Var a);
Var mean(Graph& g, Var a);

Var reshape(Graph& g, Var a, std::vector<int> shape);
Var concat(Graph& g, std::span<const Var> parts);  // flat concatenation
Var slice(Graph& g, Var a, int offset, int length);  // flat slice

/// y = W x + b for flat x of length n, W [m, n], b [m].
Var linear(Graph& g, Var x, Var w, Var b);
/// Row-wise linear map: X [t, n] -> [t, m].
Var linear_rows(Graph& g, Var x, Var w, Var b);
Var matmul(Graph& g, Var a, Var b);  // [m,k] x [k,n]
Var transpose(Graph& g, Var a);      // [m,n] -> [n,m]
Var slice_cols(Graph& g, Var a, int col, int count);
Var concat_cols(Graph& g, std::span<const Var> parts);
Var softmax_rows(Graph& g, Var a);
Var layer_norm_rows(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);

/// Input [C, H, W], weight [O, C, k, k], bias [O] -> [O, H', W'].
Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad);
/// Input [C, D, H, W], weight [O, C, kd, kh, kw], bias [O] -> [O, D', H', W'].
Var conv3d(Graph& g, Var x, Var w, Var b, const ConvGeometry& geom);
/// 3D convolution whose single input channel is a binary voxel grid; cost scales
/// with the number of occupied cells. Weight [O, 1, kd, kh, kw].
Var voxel_conv(Graph& g, const VoxelGrid& grid, Var w, Var b, const ConvGeometry& geom);
Var max_pool2d(Graph& g, Var x, int kernel, int stride, int pad);
/// [C, ...spatial] -> [C]
Var global_avg_pool(Graph& g, Var x);

}  // namespace socnav::ad
