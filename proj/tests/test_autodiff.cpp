#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "socnav/autodiff.hpp"
#include "socnav/errors.hpp"
#include "socnav/voxelizer.hpp"

namespace socnav::ad {
namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Builds a scalar from the given inputs; every input is a parameter.
using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

double max_rel_error(std::vector<Tensor> inputs, const Builder& build) {
  std::vector<Tensor> grads;
  for (const auto& t : inputs) grads.emplace_back(t.shape);
  {
    Graph g(true);
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.parameter(inputs[i], &grads[i]));
    g.backward(build(g, vars));
  }
  auto eval = [&] {
    Graph g(false);
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.parameter(t, nullptr));
    return g.scalar(build(g, vars));
  };
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double keep = inputs[i].data[k];
      inputs[i].data[k] = keep + h;
      const double up = eval();
      inputs[i].data[k] = keep - h;
      const double down = eval();
      inputs[i].data[k] = keep;
      const double num = (up - down) / (2 * h);
      const double ana = grads[i].data[k];
      worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
    }
  }
  return worst;
}

// Weighted sum so that every output element carries a distinct upstream gradient.
Var probe(Graph& g, Var y) {
  const Tensor& v = g.value(y);
  Tensor w(v.shape);
  for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = std::sin(0.37 * static_cast<double>(i) + 0.1);
  return sum(g, mul(g, y, g.constant(std::move(w))));
}

class AutodiffGrad : public ::testing::Test {
 protected:
  std::mt19937_64 rng{123};
};

TEST_F(AutodiffGrad, Elementwise) {
  auto a = random_tensor({7}, rng), b = random_tensor({7}, rng, 0.5, 2.0);
  EXPECT_LT(max_rel_error({a, b}, [](Graph& g, const std::vector<Var>& v) {
              Var x = add(g, mul(g, v[0], v[1]), sub(g, v[1], scale(g, v[0], 0.3)));
              x = add(g, sigmoid(g, x), tanh(g, square(g, x)));
              return probe(g, add(g, abs(g, x), relu(g, v[0])));
            }),
            1e-5);
}

TEST_F(AutodiffGrad, MeanReshapeConcatSlice) {
  auto a = random_tensor({6}, rng), b = random_tensor({2, 3}, rng);
  EXPECT_LT(max_rel_error({a, b}, [](Graph& g, const std::vector<Var>& v) {
              const Var parts[] = {v[0], reshape(g, v[1], {6})};
              Var c = concat(g, parts);
              return add(g, probe(g, slice(g, c, 2, 7)), mean(g, square(g, c)));
            }),
            1e-5);
}

TEST_F(AutodiffGrad, LinearAndMatmul) {
  auto x = random_tensor({5}, rng), w = random_tensor({3, 5}, rng), b = random_tensor({3}, rng);
  auto X = random_tensor({4, 5}, rng), B = random_tensor({5, 2}, rng);
  EXPECT_LT(max_rel_error({x, w, b, X, B}, [](Graph& g, const std::vector<Var>& v) {
              Var y = probe(g, linear(g, v[0], v[1], v[2]));
              Var z = probe(g, linear_rows(g, v[3], v[1], v[2]));
              Var m = probe(g, matmul(g, v[3], v[4]));
              Var t = probe(g, transpose(g, v[3]));
              return add(g, add(g, y, z), add(g, m, t));
            }),
            1e-5);
}

TEST_F(AutodiffGrad, ColumnsSoftmaxLayerNorm) {
  auto X = random_tensor({3, 6}, rng), gam = random_tensor({4}, rng), bet = random_tensor({4}, rng);
  EXPECT_LT(max_rel_error({X, gam, bet}, [](Graph& g, const std::vector<Var>& v) {
              Var a = slice_cols(g, v[0], 1, 4);
              Var b = slice_cols(g, v[0], 0, 2);
              const Var parts[] = {softmax_rows(g, a), b};
              Var c = concat_cols(g, parts);
              return add(g, probe(g, c), probe(g, layer_norm_rows(g, a, v[1], v[2])));
            }),
            1e-5);
}

TEST_F(AutodiffGrad, Conv2dPoolGap) {
  auto x = random_tensor({2, 9, 8}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
  EXPECT_LT(max_rel_error({x, w, b}, [](Graph& g, const std::vector<Var>& v) {
              Var y = conv2d(g, v[0], v[1], v[2], 2, 1);
              Var p = max_pool2d(g, y, 3, 2, 1);
              return add(g, probe(g, y), add(g, probe(g, p), probe(g, global_avg_pool(g, y))));
            }),
            1e-5);
}

TEST_F(AutodiffGrad, Conv3d) {
  auto x = random_tensor({2, 5, 6, 4}, rng), w = random_tensor({2, 2, 3, 3, 2}, rng), b = random_tensor({2}, rng);
  ConvGeometry geom{{3, 3, 2}, {2, 1, 2}, {1, 1, 0}};
  EXPECT_LT(max_rel_error({x, w, b}, [geom](Graph& g, const std::vector<Var>& v) {
              return probe(g, conv3d(g, v[0], v[1], v[2], geom));
            }),
            1e-5);
}

TEST_F(AutodiffGrad, VoxelConvMatchesDense) {
  GridSpec spec;
  spec.x_max = 0.5;
  spec.y_min = -0.25;
  spec.y_max = 0.25;
  spec.z_extent = 0.4;
  VoxelGrid grid(spec);
  std::bernoulli_distribution occ(0.2);
  Tensor dense({1, 10, 10, 8});
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 8; ++k)
        if (occ(rng)) {
          grid.set(i, j, k);
          dense.data[(static_cast<std::size_t>(i) * 10 + j) * 8 + k] = 1.0;
        }
  auto w = random_tensor({3, 1, 3, 3, 3}, rng), b = random_tensor({3}, rng);
  for (ConvGeometry geom : {ConvGeometry{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}}, ConvGeometry{{2, 2, 2}, {2, 2, 2}, {0, 0, 0}}}) {
    Tensor ws = w;
    ws.shape = {3, 1, geom.kernel[0], geom.kernel[1], geom.kernel[2]};
    ws.data.resize(element_count(ws.shape));
    Tensor gs(ws.shape), gd(ws.shape), gbs({3}), gbd({3});
    Graph g(true);
    Var ys = voxel_conv(g, grid, g.parameter(ws, &gs), g.parameter(b, &gbs), geom);
    Var yd = conv3d(g, g.constant(dense), g.parameter(ws, &gd), g.parameter(b, &gbd), geom);
    ASSERT_EQ(g.shape(ys), g.shape(yd));
    for (std::size_t i = 0; i < g.value(ys).size(); ++i) EXPECT_NEAR(g.value(ys).data[i], g.value(yd).data[i], 1e-12);
    g.backward(add(g, probe(g, ys), probe(g, yd)));
    for (std::size_t i = 0; i < gs.size(); ++i) EXPECT_NEAR(gs.data[i], gd.data[i], 1e-12);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(gbs.data[i], gbd.data[i], 1e-12);
  }
}

TEST(Autodiff, ShapeErrors) {
  Graph g(false);
  Var a = g.constant(Tensor({3}));
  Var b = g.constant(Tensor({4}));
  EXPECT_THROW(add(g, a, b), InputError);
  EXPECT_THROW(matmul(g, g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), InputError);
  EXPECT_THROW(reshape(g, a, {2, 2}), InputError);
}

TEST(Autodiff, FrozenParameterNoGrad) {
  Tensor x({2}, 1.5);
  Graph g(true);
  Var p = g.parameter(x, nullptr);
  EXPECT_FALSE(g.needs_grad(p));
  Var y = sum(g, square(g, p));
  EXPECT_DOUBLE_EQ(g.scalar(y), 4.5);
  g.backward(y);
}

TEST(Autodiff, GradientsAccumulate) {
  Tensor x({1}, 3.0), gx({1});
  for (int rep = 0; rep < 2; ++rep) {
    Graph g(true);
    Var p = g.parameter(x, &gx);
    g.backward(square(g, p));
  }
  EXPECT_DOUBLE_EQ(gx.data[0], 12.0);
}

}  // namespace
}  // namespace socnav::ad
