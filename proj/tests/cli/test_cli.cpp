#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kSmall =
    " --meta_steps 2 --hidden 8 --projection 4 --eval_episodes 4 --eval_query 3 --class_count 8 --per_class 8"
    " --no-timing";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("bmssl_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd =
        "cd '" + dir_.string() + "' && '" BMSSL_CLI_PATH "' " + args + " > out.txt 2> err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndMissingSubcommand) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(Cli, ValidationErrorsExitTwo) {
  EXPECT_EQ(run("train --alpha -1" + kSmall), 2);
  EXPECT_EQ(run("train --set nonsense=1" + kSmall), 2);
  EXPECT_EQ(run("train --mode sideways" + kSmall), 2);
  EXPECT_EQ(run("ablate --kind depth" + kSmall), 2);
  EXPECT_NE(read("err.txt").find("depth"), std::string::npos);
}

TEST_F(Cli, IoErrorsExitThree) {
  EXPECT_EQ(run("eval --checkpoint missing.bmsl"), 3);
  EXPECT_NE(read("err.txt").find("missing.bmsl"), std::string::npos);
  EXPECT_EQ(run("train --config missing.cfg"), 3);
  std::ofstream(dir_ / "junk.bmsl") << "not a checkpoint";
  EXPECT_EQ(run("eval --checkpoint junk.bmsl"), 3);
}

TEST_F(Cli, GradcheckExitCodes) {
  EXPECT_EQ(run("gradcheck --out gc.csv"), 0);
  EXPECT_EQ(read("gc.csv").rfind("check,max_relative_error", 0), 0u);
  EXPECT_EQ(run("gradcheck --corrupt meta:bootstrapped"), 5);
  EXPECT_NE(read("err.txt").find("meta:bootstrapped"), std::string::npos);
}

TEST_F(Cli, TrainEvalRoundTrip) {
  ASSERT_EQ(run("train --mode bmssl" + kSmall + " --out run"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoint.bmsl"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "config.txt"));
  const std::string metrics = read("run/metrics.csv");
  EXPECT_EQ(metrics.rfind("meta_step,outer_loss,kl_value,mean_inner_loss,eval_accuracy,wallclock_seconds\n", 0), 0u);
  ASSERT_EQ(run("eval --checkpoint run/checkpoint.bmsl --out eval.csv"), 0);
  EXPECT_EQ(read("eval.csv").rfind("episode,accuracy\n0,", 0), 0u);
}

TEST_F(Cli, ConfigFileAndOverrides) {
  std::ofstream(dir_ / "c.cfg") << "mode=metassl\nmeta_steps=1\nhidden=8\nprojection=4\neval_episodes=2\n"
                                   "eval_query=3\nclass_count=8\nper_class=8\nrecord_time=false\n";
  ASSERT_EQ(run("train --config c.cfg --set hidden=6 --out run"), 0);
  const std::string cfg = read("run/config.txt");
  EXPECT_NE(cfg.find("mode=metassl\n"), std::string::npos);
  EXPECT_NE(cfg.find("hidden=6\n"), std::string::npos);
}

TEST_F(Cli, SpectralAndGenData) {
  ASSERT_EQ(run("spectral-demo --samples 20 --out sp"), 0);
  EXPECT_EQ(read("sp/spectrum.csv").rfind("index,eigenvalue\n", 0), 0u);
  EXPECT_EQ(read("sp/gaps.csv").rfind("subspace_id,gap\n", 0), 0u);
  EXPECT_EQ(run("spectral-demo --dim 10 --views 10"), 2);
  ASSERT_EQ(run("gen-data --class_count 8 --per_class 8 --eval_query 3 --out d.bin"), 0);
  EXPECT_EQ(read("d.bin").substr(0, 4), "BMSD");
}
