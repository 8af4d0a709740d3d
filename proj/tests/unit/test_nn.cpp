#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "litevsr/errors.hpp"
#include "litevsr/nn/adam.hpp"
#include "litevsr/nn/layers.hpp"
#include "litevsr/nn/ops.hpp"
#include "litevsr/nn/weights.hpp"
#include "test_util.hpp"

namespace litevsr::nn {
namespace {

using test::check_gradients;

Var random_leaf(Shape shape, Rng& rng, double scale = 1.0) {
  return Var::leaf(shape, test::random_values(numel(shape), rng, scale));
}

// Weighted sum with fixed random weights so every output element matters.
Var probe(const Var& y, uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, Var::constant(y.shape(), test::random_values(y.numel(), rng))));
}

TEST(Autograd, ElementwiseOps) {
  Rng rng(1);
  Var a = random_leaf({3, 4}, rng);
  Var b = random_leaf({3, 4}, rng);
  auto loss = [&] {
    return probe(add(mul(silu(a), sigmoid(b)), add_scaled(sub(a, b), relu(b), 0.3)), 11);
  };
  EXPECT_LT(check_gradients({a, b}, loss, 20, rng).max_rel_error, 1e-6);
}

TEST(Autograd, LinearAndMatmul) {
  Rng rng(2);
  Var x = random_leaf({5, 3}, rng);
  Var w = random_leaf({3, 4}, rng);
  Var bias = random_leaf({4}, rng);
  auto loss = [&] { return probe(linear(x, w, bias), 12); };
  EXPECT_LT(check_gradients({x, w, bias}, loss, 25, rng).max_rel_error, 1e-6);
  const Matrix expected = to_matrix(x) * to_matrix(w);
  const Matrix got = to_matrix(matmul(x, w));
  EXPECT_LT((expected - got).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autograd, LayerNormForwardAndGradient) {
  Rng rng(3);
  Var x = random_leaf({4, 6}, rng, 3.0);
  Var g = random_leaf({6}, rng);
  Var b = random_leaf({6}, rng);
  const Var ones = Var::constant({6}, std::vector<double>(6, 1.0));
  const Var zeros = Var::zeros({6});
  const Matrix y = to_matrix(layer_norm(x, ones, zeros));
  for (int r = 0; r < 4; ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(y.row(r).squaredNorm() / 6.0), 1.0, 1e-5);
  }
  auto loss = [&] { return probe(layer_norm(x, g, b), 13); };
  EXPECT_LT(check_gradients({x, g, b}, loss, 30, rng).max_rel_error, 1e-5);
}

TEST(Autograd, AttentionGradient) {
  Rng rng(4);
  Var q = random_leaf({5, 8}, rng);
  Var k = random_leaf({5, 8}, rng);
  Var v = random_leaf({5, 8}, rng);
  auto loss = [&] { return probe(multi_head_attention(q, k, v, 2), 14); };
  EXPECT_LT(check_gradients({q, k, v}, loss, 30, rng).max_rel_error, 1e-5);
}

TEST(Autograd, AttentionSingleKeyReturnsValue) {
  Rng rng(5);
  const Var q = random_leaf({1, 4}, rng);
  const Var k = random_leaf({1, 4}, rng);
  const Var v = random_leaf({1, 4}, rng);
  const Matrix out = to_matrix(multi_head_attention(q, k, v, 2));
  EXPECT_LT((out - to_matrix(v)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Autograd, DepthwiseConvMatchesDirectSum) {
  Rng rng(6);
  Var x = random_leaf({7, 3}, rng);
  Var w = random_leaf({5, 3}, rng);
  Var b = random_leaf({3}, rng);
  const Matrix y = to_matrix(depthwise_conv1d(x, w, b));
  const Matrix xm = to_matrix(x);
  const Matrix wm = to_matrix(w);
  for (int t = 0; t < 7; ++t) {
    for (int c = 0; c < 3; ++c) {
      double acc = b.value()[c];
      for (int j = 0; j < 5; ++j) {
        const int s = t + j - 2;
        if (s >= 0 && s < 7) acc += wm(j, c) * xm(s, c);
      }
      EXPECT_NEAR(y(t, c), acc, 1e-12);
    }
  }
  auto loss = [&] { return probe(depthwise_conv1d(x, w, b), 15); };
  EXPECT_LT(check_gradients({x, w, b}, loss, 25, rng).max_rel_error, 1e-6);
}

TEST(Autograd, Conv3dMatchesDirectConvolution) {
  Rng rng(7);
  const int F = 4, H = 6, W = 5, Cin = 2, Cout = 3;
  Var x = random_leaf({F, H, W, Cin}, rng);
  Var w = random_leaf({3, 3, 3, Cin, Cout}, rng);
  Var b = random_leaf({Cout}, rng);
  const Conv3dGeometry geom{1, 2, 2, 1, 1, 1};
  const Var y = conv3d(x, w, b, geom);
  const int Fo = F, Ho = (H + 2 - 3) / 2 + 1, Wo = (W + 2 - 3) / 2 + 1;
  ASSERT_EQ(y.shape(), (Shape{Fo, Ho, Wo, Cout}));
  auto xv = x.value();
  auto wv = w.value();
  for (int f = 0; f < Fo; ++f) {
    for (int i = 0; i < Ho; ++i) {
      for (int j = 0; j < Wo; ++j) {
        for (int co = 0; co < Cout; ++co) {
          double acc = b.value()[co];
          for (int kt = 0; kt < 3; ++kt) {
            for (int kh = 0; kh < 3; ++kh) {
              for (int kw = 0; kw < 3; ++kw) {
                const int sf = f + kt - 1, sh = 2 * i + kh - 1, sw = 2 * j + kw - 1;
                if (sf < 0 || sf >= F || sh < 0 || sh >= H || sw < 0 || sw >= W) continue;
                for (int ci = 0; ci < Cin; ++ci) {
                  acc += xv[((sf * H + sh) * W + sw) * Cin + ci] *
                         wv[(((kt * 3 + kh) * 3 + kw) * Cin + ci) * Cout + co];
                }
              }
            }
          }
          EXPECT_NEAR(y.value()[((f * Ho + i) * Wo + j) * Cout + co], acc, 1e-12);
        }
      }
    }
  }
  auto loss = [&] { return probe(conv3d(x, w, b, geom), 16); };
  EXPECT_LT(check_gradients({x, w, b}, loss, 40, rng).max_rel_error, 1e-6);
}

TEST(Autograd, PoolingGluAndLogSoftmax) {
  Rng rng(8);
  Var v = random_leaf({3, 2, 2, 4}, rng);
  Var s = random_leaf({7, 6}, rng);
  auto loss = [&] {
    return add(probe(spatial_mean(v), 17),
               add(probe(temporal_mean_pool(s, 2), 18),
                   add(probe(glu(s), 19), probe(log_softmax(s), 20))));
  };
  EXPECT_LT(check_gradients({v, s}, loss, 40, rng).max_rel_error, 1e-6);
  EXPECT_EQ(temporal_mean_pool(s, 2).dim(0), 3);
  const Matrix ls = to_matrix(log_softmax(s));
  for (int r = 0; r < 7; ++r) EXPECT_NEAR(ls.row(r).array().exp().sum(), 1.0, 1e-12);
}

TEST(Autograd, AffineColumnsReshapeSlice) {
  Rng rng(9);
  Var x = random_leaf({4, 3}, rng);
  const std::vector<double> scale{2.0, 0.5, -1.0};
  const std::vector<double> shift{1.0, 0.0, 3.0};
  auto loss = [&] {
    return probe(slice_rows(reshape(affine_columns(x, scale, shift), {2, 6}), 1, 2), 21);
  };
  EXPECT_LT(check_gradients({x}, loss, 12, rng).max_rel_error, 1e-6);
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  Var a = Var::leaf({1}, {3.0});
  const Var y = add(mul(a, a), a);  // a^2 + a
  y.backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 7.0);
}

TEST(Autograd, NoGradGuardBuildsNoGraph) {
  Var a = Var::leaf({2}, {1.0, 2.0});
  NoGradGuard guard;
  const Var y = sum(mul(a, a));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_FALSE(grad_enabled());
}

TEST(Autograd, ShapeMismatchThrows) {
  const Var a = Var::zeros({2, 3});
  const Var b = Var::zeros({3, 2});
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Layers, ConformerBlockGradient) {
  Rng rng(10);
  ConformerBlock block(ConformerConfig{8, 2, 2, 3}, rng);
  ParameterList params;
  block.collect(params, "b.");
  Var x = random_leaf({6, 8}, rng);
  auto leaves = test::vars_of(params);
  leaves.push_back(x);
  auto loss = [&] { return probe(block(x), 22); };
  EXPECT_LT(check_gradients(leaves, loss, 40, rng).max_rel_error, 1e-4);
}

TEST(Layers, ClipGradNormScalesToMax) {
  Var a = Var::leaf({2}, {0.0, 0.0});
  ParameterList params{{"a", a}};
  a.node()->grad = {3.0, 4.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(global_grad_norm(params), 1.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  Var p = Var::leaf({2}, {1.0, -2.0});
  Adam adam({{"p", p}}, AdamConfig{0.9, 0.98, 1e-9});
  p.node()->grad = {0.5, -0.25};
  adam.step(0.1);
  // After bias correction m_hat = g and v_hat = g^2, so the step is lr * sign(g).
  EXPECT_NEAR(p.value()[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-9), 1e-12);
  EXPECT_NEAR(p.value()[1], -2.0 + 0.1 * 0.25 / (0.25 + 1e-9), 1e-12);

  p.node()->grad = {0.1, 0.1};
  adam.step(0.1);
  const double m0 = (0.9 * 0.1 * 0.5 + 0.1 * 0.1) / (1 - 0.81);
  const double v0 = (0.98 * 0.02 * 0.25 + 0.02 * 0.01) / (1 - 0.98 * 0.98);
  EXPECT_NEAR(p.value()[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-9) - 0.1 * m0 / (std::sqrt(v0) + 1e-9),
              1e-12);
}

TEST(Adam, StateRoundTripContinuesIdentically) {
  auto run = [](bool reload) {
    Var p = Var::leaf({3}, {1.0, 2.0, 3.0});
    auto adam = std::make_unique<Adam>(ParameterList{{"p", p}}, AdamConfig{});
    for (int s = 0; s < 6; ++s) {
      if (reload && s == 3) {
        const auto state = adam->state();
        adam = std::make_unique<Adam>(ParameterList{{"p", p}}, AdamConfig{});
        adam->load_state(state);
      }
      p.node()->grad = {std::sin(s * 1.0), std::cos(s * 1.0), 0.5};
      adam->step(0.01);
    }
    return std::vector<double>(p.value().begin(), p.value().end());
  };
  EXPECT_EQ(run(false), run(true));
}

TEST(Weights, RoundTripAndLayoutOffsets) {
  test::TempDir dir;
  Rng rng(11);
  ParameterList params{{"a.weight", random_leaf({2, 3}, rng)}, {"a.bias", random_leaf({3}, rng)}};
  write_weights(dir / "w.lvw", to_weights(params, {{"kind", "test"}}));
  const auto file = read_weights(dir / "w.lvw");
  EXPECT_EQ(file.model["kind"], "test");
  ASSERT_EQ(file.entries.size(), 2u);
  EXPECT_EQ(file.entries[0].shape, (Shape{2, 3}));

  ParameterList other{{"a.weight", Var::leaf({2, 3}, std::vector<double>(6, 0.0))},
                      {"a.bias", Var::leaf({3}, std::vector<double>(3, 0.0))}};
  load_parameters(other, file);
  EXPECT_EQ(parameter_checksum(other), parameter_checksum(params));

  std::ifstream layout(layout_path(dir / "w.lvw"));
  const auto j = nlohmann::json::parse(layout);
  EXPECT_EQ(j["format"], "litevsr-weights");
  std::ifstream bin(dir / "w.lvw", std::ios::binary);
  const auto& e = j["entries"][1];
  bin.seekg(e["offset"].get<std::streamoff>());
  double first = 0.0;
  bin.read(reinterpret_cast<char*>(&first), sizeof first);
  EXPECT_EQ(first, params[1].var.value()[0]);
}

TEST(Weights, ShapeMismatchAndMissingEntryThrow) {
  test::TempDir dir;
  ParameterList params{{"w", Var::leaf({2}, {1.0, 2.0})}};
  write_weights(dir / "w.lvw", to_weights(params, {}));
  const auto file = read_weights(dir / "w.lvw");
  ParameterList wrong{{"w", Var::leaf({3}, {0, 0, 0})}};
  EXPECT_THROW(load_parameters(wrong, file), DataError);
  ParameterList missing{{"z", Var::leaf({2}, {0, 0})}};
  EXPECT_THROW(load_parameters(missing, file), DataError);
}

TEST(Weights, Float32Storage) {
  test::TempDir dir;
  ParameterList params{{"w", Var::leaf({2}, {0.1, 1.0 / 3.0})}};
  write_weights(dir / "w.lvw", to_weights(params, {}, DType::kFloat32));
  const auto file = read_weights(dir / "w.lvw");
  EXPECT_EQ(file.entries[0].dtype, DType::kFloat32);
  EXPECT_EQ(file.entries[0].data[1], static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

}  // namespace
}  // namespace litevsr::nn
