// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "informer/error.hpp"
#include "informer/model.hpp"
#include "test_util.hpp"

using namespace informer;
using informer::testing::random_tensor;
using informer::testing::to_vector;

namespace {

ModelConfig small_config(Variant v, std::uint64_t seed = 1) {
  ModelConfig c;
  c.latent_channels = 16;
  c.global_tokens = 4;
  c.num_heads = 2;
  c.transform_channels = 8;
  c.variant = v;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Variant, NamesRoundTrip) {
  for (Variant v : all_variants()) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
    EXPECT_EQ(variant_from_id(static_cast<std::uint8_t>(v)), v);
  }
  EXPECT_THROW(parse_variant("nope"), ConfigError);
  EXPECT_FALSE(variant_from_id(200).has_value());
}

TEST(ModelConfig, Validation) {
  ModelConfig c = small_config(Variant::kInformer);
  c.latent_channels = 24;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Variant::kInformer);
  c.global_tokens = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Model, ShapesForEveryVariant) {
  RngState rng(1);
  const Tensor x = random_tensor({32, 48, 3}, rng, 0, 1);
  for (Variant v : all_variants()) {
    const InformerModel m(small_config(v));
    const ForwardResult f = m.forward(x, QuantizeMode::kEvalRound, nullptr);
    EXPECT_EQ(f.latents.y.shape(), (Shape{2, 3, 16})) << variant_name(v);
    EXPECT_EQ(f.x_hat.shape(), x.shape());
    EXPECT_EQ(f.params.mu.shape(), (Shape{2, 3, 16}));
    for (double s : f.params.sigma.values()) EXPECT_GE(s, 0.11);
    const auto& t = m.traits();
    EXPECT_EQ(f.rate_zg_bits.defined(), t.global_hyper) << variant_name(v);
    EXPECT_EQ(f.rate_zl_bits.defined(), t.local_hyper || t.spatial_hyper) << variant_name(v);
    if (t.global_hyper) EXPECT_EQ(f.latents.z_g.shape(), (Shape{4, 4}));
    if (t.local_hyper) EXPECT_EQ(f.latents.z_l.shape(), (Shape{2, 3, 1}));
    if (t.spatial_hyper) EXPECT_EQ(f.latents.z_l.shape(), (Shape{1, 1, 16}));
  }
}

TEST(Model, RejectsIndivisibleImages) {
  const InformerModel m(small_config(Variant::kInformer));
  EXPECT_THROW(m.analysis(Tensor::zeros({20, 16, 3})), ShapeError);
}

TEST(Model, ParametersAreNamedUniquelyAndDeterministic) {
  const InformerModel a(small_config(Variant::kInformer, 5)), b(small_config(Variant::kInformer, 5));
  const InformerModel c(small_config(Variant::kInformer, 6));
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  std::set<std::string> names;
  for (const auto& p : a.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

TEST(Model, LossComposition) {
  RngState rng(2);
  const Tensor x = random_tensor({16, 16, 3}, rng, 0, 1);
  ModelConfig cfg = small_config(Variant::kInformer);
  cfg.lambda = 0.05;
  const InformerModel m(cfg);
  const ForwardResult f = m.forward(x, QuantizeMode::kEvalRound, nullptr);
  const double expected = f.total_bits() / 256.0 + 0.05 * 255.0 * 255.0 * f.mse.item();
  EXPECT_NEAR(f.loss.item(), expected, 1e-9 * expected);
}

TEST(Model, SerialPredictionMatchesVectorizedBitwise) {
  RngState rng(3);
  const Tensor x = random_tensor({48, 32, 3}, rng, 0, 1);
  for (Variant v : all_variants()) {
    const InformerModel m(small_config(v, 9));
    NoGradGuard guard;
    const ForwardResult f = m.forward(x, QuantizeMode::kEvalRound, nullptr);
    const std::size_t h = f.latents.y.dim(0), w = f.latents.y.dim(1), c = m.channels();
    const auto& t = m.traits();
    Tensor psi_g, side;
    if (t.global_hyper) psi_g = m.global_hyper_decode(f.latents.z_g_hat);
    if (t.local_hyper) side = m.local_hyper_decode(f.latents.z_l_hat);
    if (t.spatial_hyper) side = m.spatial_hyper_decode(f.latents.z_l_hat, h, w);
    SerialPredictor sp(m, psi_g, side, h, w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const auto [mu, sigma] = sp.predict(f.latents.y_hat, i, j);
        for (std::size_t k = 0; k < c; ++k) {
          ASSERT_EQ(mu[k], f.params.mu[(i * w + j) * c + k]) << variant_name(v);
          ASSERT_EQ(sigma[k], f.params.sigma[(i * w + j) * c + k]) << variant_name(v);
        }
      }
  }
}

TEST(Model, GlobalHyperpriorIgnoresSpatialOrder) {
  RngState rng(4);
  const InformerModel m(small_config(Variant::kInformer));
  const Tensor y = random_tensor({3, 4, 16}, rng, -3, 3);
  // Reverse the 12 positions.
  std::vector<double> rev(y.numel());
  for (std::size_t p = 0; p < 12; ++p)
    for (std::size_t c = 0; c < 16; ++c) rev[(11 - p) * 16 + c] = y[p * 16 + c];
  const Tensor a = m.global_hyper_encode(y), b = m.global_hyper_encode(Tensor({3, 4, 16}, rev));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
}

TEST(Model, LocalHyperpriorIsPerPosition) {
  RngState rng(5);
  const InformerModel m(small_config(Variant::kInformer));
  const Tensor y = random_tensor({3, 3, 16}, rng, -3, 3);
  const Tensor z = m.local_hyper_encode(y);
  std::vector<double> v = to_vector(y);
  for (std::size_t c = 0; c < 16; ++c) v[4 * 16 + c] += 1.0;  // center position
  const Tensor z2 = m.local_hyper_encode(Tensor({3, 3, 16}, v));
  for (std::size_t p = 0; p < 9; ++p) {
    if (p != 4) EXPECT_EQ(z2[p], z[p]);
  }
}

TEST(Model, EndToEndGradient) {
  RngState rng(6);
  const Tensor x = random_tensor({16, 16, 3}, rng, 0, 1);
  const InformerModel m(small_config(Variant::kInformer, 3));
  std::vector<Tensor> inputs;
  for (const auto& p : m.parameters()) inputs.push_back(p.tensor);
  const double err = grad_check(
      [&](auto) {
        RngState noise(77);
        return m.forward(x, QuantizeMode::kTrainNoise, &noise).loss;
      },
      inputs, {1e-5, 4});
  EXPECT_LT(err, 1e-4);
}
