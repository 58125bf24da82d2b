// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "informer/codec.hpp"
#include "informer/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace informer;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("informer_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = std::string(INFORMER_CLI_PATH) + " " + args + " > " + (dir_ / "out.txt").string() +
                            " 2> " + (dir_ / "err.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string slurp(const std::string& name) {
    std::ifstream in(dir_ / name);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  fs::path p(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("--bogus-flag"), 1);
  EXPECT_NE(slurp("err.txt").find("Usage"), std::string::npos);
  EXPECT_EQ(run("encode --input x.ppm --output y.bin"), 1);
  EXPECT_EQ(run(""), 1);
}

TEST_F(Cli, RuntimeErrorsExitTwo) {
  std::ofstream(p("bad.cfg")) << "no_such_key = 1\n";
  EXPECT_EQ(run("train --config " + p("bad.cfg").string()), 2);
  EXPECT_NE(slurp("err.txt").find("no_such_key"), std::string::npos);
}

TEST_F(Cli, TrainEncodeDecodeEvalProfile) {
  ASSERT_EQ(run("gen-data --spec generator=gradient_fields,height=32,width=48,count=2,seed=4 --output " +
                p("data").string()),
            0);
  std::ofstream(p("train.cfg")) << "latent_channels = 16\nglobal_tokens = 4\nnum_heads = 2\ntransform_channels = 8\n"
                                   "max_steps = 3\nbatch_size = 1\npatch_size = 16\n"
                                   "dataset = generator=repeated_motifs,height=32,width=32,count=2,seed=1\n"
                                   "checkpoint = "
                                << p("m.ckpt").string() << "\n";
  ASSERT_EQ(run("train --config " + p("train.cfg").string()), 0) << slurp("err.txt");
  ASSERT_TRUE(fs::exists(p("m.ckpt")));
  const std::string img = (p("data") / "image_0000.ppm").string();
  ASSERT_EQ(run("encode --model " + p("m.ckpt").string() + " --input " + img + " --output " + p("a.bin").string()), 0);
  ASSERT_EQ(run("decode --model " + p("m.ckpt").string() + " --input " + p("a.bin").string() + " --output " +
                p("a.ppm").string()),
            0);
  // The decoded file equals the encoder-side reconstruction.
  const InformerModel model = load_model(p("m.ckpt"));
  EXPECT_EQ(read_ppm(p("a.ppm")), encode_image(model, read_ppm(img)).reconstruction);
  ASSERT_EQ(run("eval --model " + p("m.ckpt").string() + " --dir " + p("data").string() + " --csv " +
                p("m.csv").string()),
            0);
  EXPECT_NE(slurp("out.txt").find("image_0001.ppm"), std::string::npos);
  EXPECT_NE(slurp("m.csv").find("estimated_bpp"), std::string::npos);
  ASSERT_EQ(run("profile --config " + p("train.cfg").string() +
                " --resolutions 320x240,640x480,1280x720,1920x1080 --csv " + p("f.csv").string()),
            0);
  EXPECT_NE(slurp("out.txt").find("exponent"), std::string::npos);
  EXPECT_NE(slurp("f.csv").find("global_reference"), std::string::npos);
  // Decoding garbage is a runtime error, not a crash.
  std::ofstream(p("junk.bin")) << "not a bitstream";
  EXPECT_EQ(run("decode --model " + p("m.ckpt").string() + " --input " + p("junk.bin").string() + " --output " +
                p("j.ppm").string()),
            2);
}
