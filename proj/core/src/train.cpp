// SPDX-License-Identifier: Apache-2.0
#include "informer/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "informer/codec.hpp"
#include "informer/config.hpp"
#include "informer/error.hpp"
#include "informer/ops.hpp"

namespace informer {

namespace {

constexpr double kDecayPoints[] = {0.6, 0.72, 0.84, 0.96};

std::uint64_t training_rng_seed(std::uint64_t seed) { return seed ^ 0x5DEECE66Dull; }

std::string format_double(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (max_steps == 0) throw ConfigError("max_steps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (patch_size == 0 || patch_size % InformerModel::kDownsample != 0) {
    throw ConfigError("patch_size must be a positive multiple of 16");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (data_dir.empty()) {
    dataset.validate();
    if (dataset.height < patch_size || dataset.width < patch_size) {
      throw ConfigError("dataset images are smaller than patch_size");
    }
  }
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  for (const auto& [key, value] : parse_key_values(text, '\n')) {
    if (key == "variant") {
      c.model.variant = parse_variant(value);
    } else if (key == "latent_channels") {
      c.model.latent_channels = parse_size(key, value);
    } else if (key == "global_tokens") {
      c.model.global_tokens = parse_size(key, value);
    } else if (key == "num_heads") {
      c.model.num_heads = parse_size(key, value);
    } else if (key == "transform_channels") {
      c.model.transform_channels = parse_size(key, value);
    } else if (key == "model_seed") {
      c.model.seed = parse_u64(key, value);
    } else if (key == "lambda") {
      c.model.lambda = parse_double(key, value);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_double(key, value);
    } else if (key == "batch_size") {
      c.batch_size = parse_size(key, value);
    } else if (key == "patch_size") {
      c.patch_size = parse_size(key, value);
    } else if (key == "max_steps") {
      c.max_steps = parse_size(key, value);
    } else if (key == "seed") {
      c.seed = parse_u64(key, value);
    } else if (key == "dataset") {
      c.dataset = SyntheticDatasetSpec::parse(value);
    } else if (key == "data_dir") {
      c.data_dir = value;
    } else if (key == "log_every") {
      c.log_every = parse_size(key, value);
    } else if (key == "checkpoint") {
      c.checkpoint_path = value;
    } else if (key == "checkpoint_every") {
      c.checkpoint_every = parse_size(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_train_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

double learning_rate_at(double initial, std::size_t step, std::size_t max_steps) {
  double lr = initial;
  for (double f : kDecayPoints) {
    if (static_cast<double>(step) >= f * static_cast<double>(max_steps)) lr /= 3.0;
  }
  return lr;
}

Adam::Adam(ParameterList params) : params_(std::move(params)) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEpsilon);
    }
  }
}

void Adam::save(Checkpoint& c) const {
  if (c.parameters.size() != params_.size()) throw Error("optimizer and checkpoint parameters differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    c.parameters[i].adam_m = m_[i];
    c.parameters[i].adam_v = v_[i];
  }
  c.step = t_;
}

void Adam::restore(const Checkpoint& c) {
  if (c.parameters.size() != params_.size()) throw FormatError("checkpoint does not match the optimizer");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = c.parameters[i];
    if (p.adam_m.empty()) {
      std::fill(m_[i].begin(), m_[i].end(), 0.0);
      std::fill(v_[i].begin(), v_[i].end(), 0.0);
    } else {
      m_[i] = p.adam_m;
      v_[i] = p.adam_v;
    }
  }
  t_ = c.step;
}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)),
      model_((config_.validate(), config_.model)),
      adam_(model_.parameters()),
      rng_(training_rng_seed(config_.seed)) {
  images_ = config_.data_dir.empty() ? generate_dataset(config_.dataset) : load_directory(config_.data_dir);
  for (const auto& img : images_) {
    if (img.height < config_.patch_size || img.width < config_.patch_size) {
      throw ConfigError("training image smaller than patch_size");
    }
  }
}

Trainer::Trainer(TrainConfig config, const Checkpoint& resume) : Trainer(std::move(config)) {
  if (resume.model.variant != config_.model.variant ||
      resume.model.latent_channels != config_.model.latent_channels ||
      resume.model.global_tokens != config_.model.global_tokens ||
      resume.model.num_heads != config_.model.num_heads ||
      resume.model.transform_channels != config_.model.transform_channels) {
    throw ConfigError("checkpoint model does not match the training config");
  }
  resume.load_into(model_);
  adam_.restore(resume);
  rng_ = RngState::deserialize(resume.rng_seed, resume.rng_state);
  step_ = resume.step;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = Checkpoint::from_model(model_);
  adam_.save(c);
  c.step = step_;
  c.rng_seed = rng_.seed();
  c.rng_state = rng_.serialize();
  return c;
}

StepLog Trainer::step() {
  StepLog log;
  log.step = step_ + 1;
  log.learning_rate = learning_rate_at(config_.learning_rate, step_, config_.max_steps);
  const auto params = model_.parameters();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  Tape tape;
  try {
    TapeScope scope(tape);
    Tensor total;
    for (std::size_t b = 0; b < config_.batch_size; ++b) {
      const Image& img = images_[rng_.index(images_.size())];
      const Tensor x = random_crop(img, config_.patch_size, rng_);
      const ForwardResult f = model_.forward(x, QuantizeMode::kTrainNoise, &rng_);
      total = total.defined() ? add(total, f.loss) : f.loss;
      log.bpp += f.bpp();
      log.mse += f.mse.item();
    }
    const double inv = 1.0 / static_cast<double>(config_.batch_size);
    const Tensor loss = scale(total, inv);
    log.loss = loss.item();
    log.bpp *= inv;
    log.mse *= inv;
    tape.backward(loss);
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double g : p.tensor.grad()) {
        if (!std::isfinite(g)) throw DomainError("non-finite gradient in '" + p.name + "'");
      }
    }
  } catch (const DomainError& e) {
    if (!config_.checkpoint_path.empty()) save_checkpoint(config_.checkpoint_path, checkpoint());
    throw DomainError("training aborted at step " + std::to_string(log.step) + ": " + e.what());
  }
  adam_.step(log.learning_rate);
  model_.project_constraints();
  ++step_;
  history_.push_back(log);
  return log;
}

void Trainer::run(const std::function<void(const StepLog&)>& on_step) {
  while (!finished()) {
    const StepLog log = step();
    if (on_step) on_step(log);
    const bool periodic = config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0;
    if (!config_.checkpoint_path.empty() && (periodic || finished())) {
      save_checkpoint(config_.checkpoint_path, checkpoint());
    }
  }
}

ValidationMetrics validate(const InformerModel& model, const std::vector<Image>& images) {
  if (images.empty()) throw ConfigError("validation set is empty");
  NoGradGuard no_grad;
  ValidationMetrics m;
  for (const auto& img : images) {
    const std::size_t ph = round_up(img.height, InformerModel::kDownsample);
    const std::size_t pw = round_up(img.width, InformerModel::kDownsample);
    const Tensor x = pad_edge(image_to_tensor(img), ph, pw);
    const ForwardResult f = model.forward(x, QuantizeMode::kEvalRound, nullptr);
    m.bpp += f.total_bits() / static_cast<double>(img.height * img.width);
    m.mse += mean(square(sub(crop(f.x_hat, img.height, img.width), crop(x, img.height, img.width)))).item();
  }
  m.bpp /= static_cast<double>(images.size());
  m.mse /= static_cast<double>(images.size());
  return m;
}

ImageMetrics MetricsReport::mean() const {
  ImageMetrics m;
  m.name = "mean";
  m.consistent = true;
  if (images.empty()) return m;
  for (const auto& i : images) {
    m.estimated_bpp += i.estimated_bpp;
    m.actual_bpp += i.actual_bpp;
    m.file_bpp += i.file_bpp;
    m.psnr += i.psnr;
    m.consistent = m.consistent && i.consistent;
  }
  const double n = static_cast<double>(images.size());
  m.estimated_bpp /= n;
  m.actual_bpp /= n;
  m.file_bpp /= n;
  m.psnr /= n;
  return m;
}

std::string MetricsReport::table() const {
  std::ostringstream s;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %9s %9s %9s %9s %9s\n", "image", "size", "est_bpp", "act_bpp", "file_bpp",
                "psnr_db");
  s << line;
  auto row = [&](const ImageMetrics& m, const std::string& size) {
    std::snprintf(line, sizeof(line), "%-24s %9s %9s %9s %9s %9s%s\n", m.name.c_str(), size.c_str(),
                  format_double(m.estimated_bpp, 4).c_str(), format_double(m.actual_bpp, 4).c_str(),
                  format_double(m.file_bpp, 4).c_str(), format_double(m.psnr, 2).c_str(),
                  m.consistent ? "" : "  MISMATCH");
    s << line;
  };
  for (const auto& m : images) row(m, std::to_string(m.width) + "x" + std::to_string(m.height));
  row(mean(), "");
  return s.str();
}

std::string MetricsReport::csv() const {
  std::ostringstream s;
  s << "image,width,height,estimated_bpp,actual_bpp,file_bpp,psnr_db,consistent\n";
  auto row = [&](const ImageMetrics& m) {
    s << m.name << ',' << m.width << ',' << m.height << ',' << format_double(m.estimated_bpp, 6) << ','
      << format_double(m.actual_bpp, 6) << ',' << format_double(m.file_bpp, 6) << ',' << format_double(m.psnr, 4)
      << ',' << (m.consistent ? 1 : 0) << '\n';
  };
  for (const auto& m : images) row(m);
  row(mean());
  return s.str();
}

MetricsReport evaluate(const InformerModel& model, const std::vector<std::pair<std::string, Image>>& images) {
  MetricsReport report;
  for (const auto& [name, img] : images) {
    ImageMetrics m;
    m.name = name;
    m.height = img.height;
    m.width = img.width;
    const double pixels = static_cast<double>(img.height * img.width);
    m.estimated_bpp = estimate_rate(model, img).total() / pixels;
    const EncodeResult enc = encode_image(model, img);
    const auto bytes = serialize(enc.bitstream);
    m.actual_bpp = static_cast<double>(enc.bitstream.payload_bits()) / pixels;
    m.file_bpp = 8.0 * static_cast<double>(bytes.size()) / pixels;
    const DecodeResult dec = decode_image(model, parse(bytes));
    m.psnr = psnr(img, dec.image);
    m.consistent = dec.image == enc.reconstruction;
    report.images.push_back(std::move(m));
  }
  return report;
}

}  // namespace informer
