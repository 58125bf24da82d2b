// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "informer/error.hpp"
#include "informer/train.hpp"

using namespace informer;

namespace {

TrainConfig tiny_config() {
  TrainConfig c = parse_train_config(
      "variant = informer\n"
      "latent_channels = 16\n"
      "global_tokens = 4\n"
      "num_heads = 2\n"
      "transform_channels = 8\n"
      "batch_size = 2\n"
      "patch_size = 16\n"
      "max_steps = 12\n"
      "learning_rate = 1e-3\n"
      "seed = 5\n"
      "dataset = generator=repeated_motifs,height=32,width=32,count=4,seed=2\n");
  return c;
}

}  // namespace

TEST(TrainConfig, ParsesAndRejectsUnknownKeys) {
  const TrainConfig c = tiny_config();
  EXPECT_EQ(c.model.latent_channels, 16u);
  EXPECT_EQ(c.dataset.count, 4u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-3);
  EXPECT_THROW(parse_train_config("lamda = 0.01\n"), ConfigError);
  EXPECT_THROW(parse_train_config("lambda 0.01\n"), ConfigError);
  EXPECT_THROW(parse_train_config("lambda = abc\n"), ConfigError);
  EXPECT_THROW(parse_train_config("patch_size = 24\n"), ConfigError);
  EXPECT_THROW(parse_train_config("max_steps = 0\n"), ConfigError);
  EXPECT_THROW(parse_train_config("lambda = 1\nlambda = 2\n"), ConfigError);
  EXPECT_NO_THROW(parse_train_config("# only a comment\n\nlambda = 0.0483  # trailing\n"));
}

TEST(TrainConfig, LearningRateSchedule) {
  EXPECT_DOUBLE_EQ(learning_rate_at(1e-4, 0, 100), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(1e-4, 59, 100), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(1e-4, 60, 100), 1e-4 / 3);
  EXPECT_DOUBLE_EQ(learning_rate_at(1e-4, 72, 100), 1e-4 / 9);
  EXPECT_DOUBLE_EQ(learning_rate_at(1e-4, 99, 100), 1e-4 / 81);
}

TEST(Adam, MatchesHandComputedUpdate) {
  Tensor w = Tensor::parameter({2}, {1.0, -1.0});
  Adam adam({{"w", w}});
  const double grads[2][2] = {{0.5, -2.0}, {0.1, 0.3}};
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -1.0};
  for (int t = 1; t <= 2; ++t) {
    w.zero_grad();
    auto g = w.mutable_grad();
    for (int i = 0; i < 2; ++i) g[i] = grads[t - 1][i];
    adam.step(0.01);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_NEAR(w[0], ref[0], 1e-15);
  EXPECT_NEAR(w[1], ref[1], 1e-15);
}

TEST(Trainer, StepsKeepGdnInBounds) {
  Trainer t(tiny_config());
  for (int i = 0; i < 5; ++i) {
    t.step();
    for (const auto& p : t.model().parameters()) {
      if (p.name.find("gdn") == std::string::npos) continue;
      const bool is_beta = p.name.find("beta") != std::string::npos;
      for (double v : p.tensor.values()) EXPECT_GE(v, is_beta ? GdnLayer::kBetaMin : 0.0) << p.name;
    }
  }
}

TEST(Trainer, DeterministicCurves) {
  Trainer a(tiny_config()), b(tiny_config());
  a.run();
  b.run();
  ASSERT_EQ(a.history().size(), 12u);
  for (std::size_t i = 0; i < a.history().size(); ++i) EXPECT_EQ(a.history()[i].loss, b.history()[i].loss);
}

TEST(Trainer, ResumeEqualsUninterruptedRun) {
  Trainer full(tiny_config());
  full.run();
  Trainer first(tiny_config());
  for (int i = 0; i < 5; ++i) first.step();
  const Checkpoint mid = parse_checkpoint(serialize_checkpoint(first.checkpoint()));
  Trainer second(tiny_config(), mid);
  second.run();
  const auto pa = full.model().parameters(), pb = second.model().parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_TRUE(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(), pb[i].tensor.values().begin()))
        << pa[i].name;
  }
  EXPECT_EQ(second.history().back().loss, full.history().back().loss);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Trainer t(tiny_config());
  t.step();
  const auto bytes = serialize_checkpoint(t.checkpoint());
  EXPECT_EQ(serialize_checkpoint(parse_checkpoint(bytes)), bytes);
  const auto path = std::filesystem::temp_directory_path() / "informer_ckpt_test.bin";
  save_checkpoint(path, t.checkpoint());
  const InformerModel m = load_model(path);
  EXPECT_EQ(m.hash(), t.model().hash());
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMalformedInput) {
  Trainer t(tiny_config());
  auto bytes = serialize_checkpoint(t.checkpoint());
  for (std::size_t n : {0ul, 3ul, 10ul, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(parse_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(n))),
                 FormatError);
  }
  Checkpoint c = t.checkpoint();
  c.parameters.pop_back();
  InformerModel m(c.model);
  EXPECT_THROW(c.load_into(m), FormatError);
}

TEST(Dataset, GeneratorsAreDeterministic) {
  for (const char* g : {"repeated_motifs", "gaussian_noise", "gradient_fields"}) {
    const auto spec = SyntheticDatasetSpec::parse(std::string("generator=") + g + ",height=24,width=40,seed=9");
    EXPECT_EQ(generate_image(spec, 3), generate_image(spec, 3));
    EXPECT_NE(generate_image(spec, 3), generate_image(spec, 4));
    EXPECT_EQ(generate_image(spec, 0).width, 40u);
    EXPECT_EQ(SyntheticDatasetSpec::parse(spec.to_string()).to_string(), spec.to_string());
  }
  EXPECT_THROW(SyntheticDatasetSpec::parse("generator=clouds"), ConfigError);
  EXPECT_THROW(SyntheticDatasetSpec::parse("count=0"), ConfigError);
  EXPECT_THROW(SyntheticDatasetSpec::parse("colour=red"), ConfigError);
}

TEST(Dataset, MotifsRepeat) {
  // The same motif block appears at more than one location.
  const auto spec = SyntheticDatasetSpec::parse("generator=repeated_motifs,height=64,width=64,motif_count=1,seed=1");
  const Image img = generate_image(spec, 0);
  std::map<std::vector<std::uint8_t>, int> blocks;
  for (std::size_t y = 0; y + 8 <= 64; ++y)
    for (std::size_t x = 0; x + 8 <= 64; ++x) {
      std::vector<std::uint8_t> b;
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
          for (std::size_t c = 0; c < 3; ++c) b.push_back(img.at(y + i, x + j, c));
      ++blocks[b];
    }
  int most = 0;
  for (const auto& [b, n] : blocks) most = std::max(most, n);
  EXPECT_GE(most, 2);
}

TEST(Evaluate, ReportsInfForPerfectReconstructionAndConsistency) {
  Trainer t(tiny_config());
  const MetricsReport r = evaluate(t.model(), {{"a", t.images()[0]}, {"b", t.images()[1]}});
  ASSERT_EQ(r.images.size(), 2u);
  for (const auto& m : r.images) {
    EXPECT_TRUE(m.consistent);
    EXPECT_GE(m.actual_bpp, 0.0);
    EXPECT_LE(std::abs(m.actual_bpp - m.estimated_bpp), 0.01 * m.estimated_bpp + 192.0 / (32 * 32));
  }
  EXPECT_NE(r.csv().find("image,width,height"), std::string::npos);
  MetricsReport fake;
  fake.images.push_back({"x", 1, 1, 0, 0, 0, std::numeric_limits<double>::infinity(), true});
  EXPECT_NE(fake.table().find("inf"), std::string::npos);
  EXPECT_NE(fake.csv().find(",inf,"), std::string::npos);
}
