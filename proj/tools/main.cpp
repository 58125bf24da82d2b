// SPDX-License-Identifier: Apache-2.0
//
// informer: train, encode, decode, eval, profile, gen-data.
// Exit codes: 0 success, 1 usage error, 2 runtime error.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "informer/checkpoint.hpp"
#include "informer/codec.hpp"
#include "informer/dataset.hpp"
#include "informer/error.hpp"
#include "informer/profiler.hpp"
#include "informer/train.hpp"

namespace fs = std::filesystem;
using namespace informer;

namespace {

int run_train(const fs::path& config_path, const fs::path& resume, const fs::path& output) {
  TrainConfig config = load_train_config(config_path);
  if (!output.empty()) config.checkpoint_path = output;
  if (config.checkpoint_path.empty()) std::cerr << "warning: no checkpoint path configured; nothing will be saved\n";
  Trainer trainer = resume.empty() ? Trainer(config) : Trainer(config, load_checkpoint(resume));
  std::cout << "step,lr,loss,bpp,mse\n";
  trainer.run([&](const StepLog& log) {
    if (log.step == 1 || log.step % std::max<std::size_t>(1, config.log_every) == 0 || trainer.finished()) {
      std::printf("%zu,%.3e,%.6f,%.6f,%.6e\n", log.step, log.learning_rate, log.loss, log.bpp, log.mse);
      std::fflush(stdout);
    }
  });
  const ValidationMetrics v = validate(trainer.model(), trainer.images());
  std::printf("# eval bpp=%.6f mse=%.6e\n", v.bpp, v.mse);
  return 0;
}

int run_encode(const fs::path& model_path, const fs::path& input, const fs::path& output) {
  const InformerModel model = load_model(model_path);
  const Image img = read_ppm(input);
  const EncodeResult enc = encode_image(model, img);
  const auto bytes = serialize(enc.bitstream);
  write_file(output, bytes);
  const double pixels = static_cast<double>(img.width * img.height);
  std::printf("%s: %zux%zu, %zu bytes, %.4f bpp (payload %.4f bpp)\n", output.string().c_str(), img.width,
              img.height, bytes.size(), 8.0 * static_cast<double>(bytes.size()) / pixels,
              static_cast<double>(enc.bitstream.payload_bits()) / pixels);
  return 0;
}

int run_decode(const fs::path& model_path, const fs::path& input, const fs::path& output) {
  const InformerModel model = load_model(model_path);
  const DecodeResult dec = decode_image(model, parse(read_file(input)));
  write_ppm(output, dec.image);
  std::printf("%s: %zux%zu\n", output.string().c_str(), dec.image.width, dec.image.height);
  return 0;
}

int run_eval(const fs::path& model_path, const fs::path& dir, const fs::path& csv) {
  const InformerModel model = load_model(model_path);
  std::vector<std::pair<std::string, Image>> images;
  for (const auto& p : list_ppm_files(dir)) images.emplace_back(p.filename().string(), read_ppm(p));
  if (images.empty()) throw Error("no .ppm images in " + dir.string());
  const MetricsReport report = evaluate(model, images);
  std::cout << report.table();
  if (!csv.empty()) {
    const std::string text = report.csv();
    write_file(csv, std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  return 0;
}

int run_profile(const fs::path& config_path, const std::string& resolutions, const std::string& variants,
                const fs::path& csv) {
  const TrainConfig config = load_train_config(config_path);
  std::vector<std::string> models;
  if (variants.empty()) {
    models = profile_models();
  } else {
    std::stringstream ss(variants);
    for (std::string m; std::getline(ss, m, ',');) {
      if (m != kGlobalReference) parse_variant(m);
      models.push_back(m);
    }
  }
  const FlopsReport report = profile(config.model, parse_resolutions(resolutions), models);
  std::cout << report.summary();
  if (!csv.empty()) {
    const std::string text = report.csv();
    write_file(csv, std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  return 0;
}

int run_gen_data(const std::string& spec_text, const fs::path& output) {
  const SyntheticDatasetSpec spec = SyntheticDatasetSpec::parse(spec_text);
  fs::create_directories(output);
  for (std::size_t i = 0; i < spec.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "image_%04zu.ppm", i);
    write_ppm(output / name, generate_image(spec, i));
  }
  std::printf("wrote %zu images to %s\n", spec.count, output.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned image codec with a global + local hyperprior entropy model"};
  app.require_subcommand(1);

  fs::path config, resume, model, input, output, dir, csv;
  std::string resolutions, variants, spec;

  auto* train = app.add_subcommand("train", "Train a model from a key=value config file");
  train->add_option("--config", config, "Training config")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--output", output, "Checkpoint path (overrides the config)");

  auto* encode = app.add_subcommand("encode", "Compress a PPM image");
  encode->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  encode->add_option("--input", input, "Input PPM (P6)")->required()->check(CLI::ExistingFile);
  encode->add_option("--output", output, "Output bitstream")->required();

  auto* decode = app.add_subcommand("decode", "Decompress a bitstream to PPM");
  decode->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  decode->add_option("--input", input, "Input bitstream")->required()->check(CLI::ExistingFile);
  decode->add_option("--output", output, "Output PPM")->required();

  auto* eval = app.add_subcommand("eval", "Rate and PSNR over a directory of PPM images");
  eval->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--dir", dir, "Image directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--csv", csv, "Also write metrics as CSV");

  auto* prof = app.add_subcommand("profile", "Entropy-model FLOPs across resolutions");
  prof->add_option("--config", config, "Config with the model dimensions")->required()->check(CLI::ExistingFile);
  prof->add_option("--resolutions", resolutions, "Comma-separated WxH list")->required();
  prof->add_option("--variants", variants, "Comma-separated models (default: all)");
  prof->add_option("--csv", csv, "Also write per-submodule counts as CSV");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic PPM dataset");
  gen->add_option("--spec", spec, "e.g. generator=repeated_motifs,height=64,width=64,count=8,seed=1")->required();
  gen->add_option("--output", output, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*train) return run_train(config, resume, output);
    if (*encode) return run_encode(model, input, output);
    if (*decode) return run_decode(model, input, output);
    if (*eval) return run_eval(model, dir, csv);
    if (*prof) return run_profile(config, resolutions, variants, csv);
    if (*gen) return run_gen_data(spec, output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
