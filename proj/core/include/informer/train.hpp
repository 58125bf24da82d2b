// SPDX-License-Identifier: Apache-2.0
//
// Rate-distortion training, evaluation reports and the training config file.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "informer/checkpoint.hpp"
#include "informer/dataset.hpp"
#include "informer/model.hpp"

namespace informer {

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-4;
  std::size_t batch_size = 4;
  std::size_t patch_size = 32;
  std::size_t max_steps = 500;
  std::uint64_t seed = 0;  // sampling and quantization noise
  SyntheticDatasetSpec dataset;
  std::filesystem::path data_dir;  // used instead of `dataset` when set
  std::size_t log_every = 50;
  std::filesystem::path checkpoint_path;  // empty: no checkpoints written
  std::size_t checkpoint_every = 0;       // 0: only at the end

  void validate() const;
};

// Flat key=value text, one entry per line, '#' comments. Unknown keys are
// ConfigErrors. Keys: variant, latent_channels, global_tokens, num_heads,
// transform_channels, model_seed, lambda, learning_rate, batch_size,
// patch_size, max_steps, seed, dataset (inline generator spec), data_dir,
// log_every, checkpoint, checkpoint_every.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);

// Step decay: the rate drops to one third at 60%, 72%, 84% and 96% of
// max_steps.
double learning_rate_at(double initial, std::size_t step, std::size_t max_steps);

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  explicit Adam(ParameterList params);

  // Applies one update from the parameters' current gradients.
  void step(double lr);
  std::uint64_t steps() const { return t_; }

  void save(Checkpoint& c) const;
  void restore(const Checkpoint& c);

 private:
  ParameterList params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

struct StepLog {
  std::size_t step = 0;  // 1-based
  double learning_rate = 0.0;
  double loss = 0.0;
  double bpp = 0.0;  // estimated, noise-quantized
  double mse = 0.0;  // [0, 1] scale
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);
  // Continues from a checkpoint written by a trainer with the same config.
  Trainer(TrainConfig config, const Checkpoint& resume);

  // Runs one optimization step. On a non-finite loss the parameters are
  // left untouched, the last good checkpoint is written when configured,
  // and DomainError is thrown.
  StepLog step();
  // Steps until max_steps, reporting every step to `on_step`.
  void run(const std::function<void(const StepLog&)>& on_step = {});

  std::size_t steps_done() const { return step_; }
  bool finished() const { return step_ >= config_.max_steps; }
  const InformerModel& model() const { return model_; }
  const std::vector<StepLog>& history() const { return history_; }
  const std::vector<Image>& images() const { return images_; }
  Checkpoint checkpoint() const;

 private:
  TrainConfig config_;
  InformerModel model_;
  Adam adam_;
  RngState rng_;
  std::vector<Image> images_;
  std::size_t step_ = 0;
  std::vector<StepLog> history_;
};

// Eval-mode (rounded) averages over whole images.
struct ValidationMetrics {
  double bpp = 0.0;
  double mse = 0.0;
};
ValidationMetrics validate(const InformerModel& model, const std::vector<Image>& images);

struct ImageMetrics {
  std::string name;
  std::size_t height = 0;
  std::size_t width = 0;
  double estimated_bpp = 0.0;  // eval-mode rate of the padded image over the original pixels
  double actual_bpp = 0.0;     // coded payload bits over the original pixels
  double file_bpp = 0.0;       // whole serialized file, header included
  double psnr = 0.0;
  bool consistent = false;     // decoded image equals the encoder-side reconstruction
};

struct MetricsReport {
  std::vector<ImageMetrics> images;
  ImageMetrics mean() const;
  std::string table() const;
  std::string csv() const;
};

MetricsReport evaluate(const InformerModel& model, const std::vector<std::pair<std::string, Image>>& images);

}  // namespace informer
