#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pifnet/config.hpp"
#include "pifnet/errors.hpp"
#include "pifnet/experiment.hpp"

using namespace pifnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(PIFNET_TEST_TMP) / "cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliRun {
  int code;
  std::string out;
};

CliRun cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + PIFNET_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

// Small enough to train in well under a second per epoch.
const char* kTinyConfig = R"(# tiny run
[experiment]
repetitions = 2

[data]
image_size = 16
train_per_class = 16
val_per_class = 8
test_per_class = 8
signal_offset = 4
signal_size = 8

[train]
batch_size = 8
max_epochs = 3
patience = 2
)";

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.ini";
  std::ofstream(p) << kTinyConfig;
  return p;
}

}  // namespace

TEST(Config, SectionsAndComments) {
  const Config c = Config::parse("top = 1\n[train]\nlearning_rate = 0.5  # inline\n; full line\n[model.pif]\npatch_size = 2, 2\n");
  EXPECT_EQ(c.get_size("top", 0), 1u);
  EXPECT_EQ(c.get_double("train.learning_rate", 0.0), 0.5);
  EXPECT_EQ(c.get_size_list("model.pif.patch_size", {}), (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(c.get_size("missing", 7), 7u);
  EXPECT_TRUE(c.unused_keys().empty());
}

TEST(Config, Errors) {
  EXPECT_THROW(Config::parse("[a]\nx = 1\nx = 2\n"), ConfigError);
  EXPECT_THROW(Config::parse("[a\n"), ConfigError);
  EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
  EXPECT_THROW(Config::parse("= 3\n"), ConfigError);
  const Config c = Config::parse("n = -3\nd = 1.5x\nb = maybe\nl = 1,,2\n");
  EXPECT_THROW(c.get_size("n", 0), ConfigError);
  EXPECT_THROW(c.get_double("d", 0), ConfigError);
  EXPECT_THROW(c.get_bool("b", false), ConfigError);
  EXPECT_THROW(c.get_size_list("l", {}), ConfigError);
  try {
    Config::parse("a = 1\n[s]\nbroken\n", "x.ini");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.ini:3"), std::string::npos);
  }
  EXPECT_THROW(Config::load("/nonexistent/pifnet.ini"), IoError);
}

TEST(Experiment, Defaults) {
  const ExperimentConfig e = default_experiment();
  EXPECT_EQ(e.repetitions, 10u);
  EXPECT_EQ(e.data.image_size, (std::vector<std::size_t>{32, 32}));
  EXPECT_EQ(e.data.train_per_class, 200u);
  EXPECT_EQ(e.data.signal_size, (std::vector<std::size_t>{8, 8}));
  EXPECT_EQ(e.data.signal_strength, 0.6);
  EXPECT_EQ(e.data.jitter, 0u);
  EXPECT_EQ(e.baseline_train.augmentation, Augmentation::flips_translation);
  EXPECT_EQ(e.pif_train.augmentation, Augmentation::flips);
  EXPECT_EQ(train_config_for(e, ModelKind::pif).augmentation, Augmentation::flips);
  EXPECT_TRUE(model_spec_for(e, ModelKind::pif).pif.has_value());
  EXPECT_FALSE(model_spec_for(e, ModelKind::baseline).pif.has_value());
}

TEST(Experiment, FromConfig) {
  const ExperimentConfig e = experiment_from_config(Config::parse(kTinyConfig));
  EXPECT_EQ(e.repetitions, 2u);
  EXPECT_EQ(e.data.image_size, (std::vector<std::size_t>{16, 16}));
  EXPECT_EQ(e.data.signal_offset, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(e.model.input_shape, (Shape{1, 16, 16}));
  EXPECT_EQ(e.baseline_train.batch_size, 8u);
  EXPECT_EQ(e.pif_train.max_epochs, 3u);

  const ExperimentConfig arms = experiment_from_config(
      Config::parse("[train.pif]\nlearning_rate = 0.02\n[train]\nlearning_rate = 0.5\n"));
  EXPECT_EQ(arms.baseline_train.learning_rate, 0.5);
  EXPECT_EQ(arms.pif_train.learning_rate, 0.02);

  const ExperimentConfig vol = experiment_from_config(Config::parse("[data]\ndims = 3\n"));
  EXPECT_NO_THROW(validate(vol.data));
  EXPECT_EQ(vol.model.input_shape.size(), 4u);
}

TEST(Experiment, Rejections) {
  EXPECT_THROW(experiment_from_config(Config::parse("[train]\nlearning_rte = 0.1\n")), ConfigError);
  EXPECT_THROW(experiment_from_config(Config::parse("[train.pif]\naugmentation = flips+translation\n")),
               ConfigError);
  EXPECT_THROW(experiment_from_config(Config::parse("[experiment]\nsubset = 1.5\n")), ConfigError);
  EXPECT_THROW(experiment_from_config(Config::parse("[experiment]\nrepetitions = 0\n")), ConfigError);
  EXPECT_THROW(experiment_from_config(Config::parse("[model]\nfilters = 8,8\n")), ConfigError);
  EXPECT_THROW(experiment_from_config(Config::parse("[data]\ndims = 4\n")), ConfigError);
  try {
    experiment_from_config(Config::parse("[data]\nbogus = 1\n[train]\nrate = 2\n"));
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("data.bogus"), std::string::npos);
    EXPECT_NE(msg.find("train.rate"), std::string::npos);
  }
}

TEST(Experiment, PairedSeedsMakeIdenticalArmsAgree) {
  const ExperimentConfig e = experiment_from_config(Config::parse(kTinyConfig));
  const DataSplits data = load_or_generate(e);
  for (std::optional<double> subset : {std::optional<double>{}, std::optional<double>{0.5}}) {
    const RunResult a = run_training(e, data, ModelKind::pif, 5, subset);
    const RunResult b = run_training(e, data, ModelKind::pif, 5, subset);
    EXPECT_EQ(history_csv(a.history), history_csv(b.history));
    EXPECT_EQ(a.test_bacc, b.test_bacc);
    EXPECT_EQ(summary_csv(a), summary_csv(b));
  }
  const RunResult c = run_training(e, data, ModelKind::pif, 6, std::nullopt);
  const RunResult a = run_training(e, data, ModelKind::pif, 5, std::nullopt);
  EXPECT_NE(history_csv(a.history), history_csv(c.history));
}

TEST(Experiment, RunDirectoriesAreVersioned) {
  const fs::path dir = scratch("versioned");
  const fs::path a = next_run_dir(dir, "train");
  const fs::path b = next_run_dir(dir, "train");
  EXPECT_EQ(a.filename(), "train-0001");
  EXPECT_EQ(b.filename(), "train-0002");
}

TEST(Cli, UsageErrors) {
  const fs::path dir = scratch("usage");
  EXPECT_EQ(cli("", dir).code, 1);
  EXPECT_EQ(cli("frobnicate", dir).code, 1);
  EXPECT_EQ(cli("train --model resnet", dir).code, 1);
  EXPECT_EQ(cli("train --subset 1.5", dir).code, 1);
  EXPECT_EQ(cli("train --config /nonexistent.ini", dir).code, 1);
  EXPECT_EQ(cli("compare --reps 0", dir).code, 1);
  EXPECT_EQ(cli("gen", dir).code, 1);
  EXPECT_EQ(cli("--help", dir).code, 0);
}

TEST(Cli, GenIsDeterministicAndRefusesToOverwrite) {
  const fs::path dir = scratch("gen");
  const fs::path cfg = tiny_config(dir);
  const CliRun a = cli("gen --config " + cfg.string() + " --out " + (dir / "a").string(), dir);
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("64"), std::string::npos);
  ASSERT_EQ(cli("gen --config " + cfg.string() + " --out " + (dir / "b").string(), dir).code, 0);
  for (const char* f : {"images.pift", "labels.csv", "meta.txt"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const CliRun again = cli("gen --config " + cfg.string() + " --out " + (dir / "a").string(), dir);
  EXPECT_EQ(again.code, 2) << again.out;
}

TEST(Cli, InvalidRegionNamesTheField) {
  const fs::path dir = scratch("region");
  const fs::path cfg = dir / "bad.ini";
  std::ofstream(cfg) << "[data]\nsignal_offset = 30, 2\n";
  const CliRun r = cli("gen --config " + cfg.string() + " --out " + (dir / "d").string(), dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("signal_offset"), std::string::npos) << r.out;

  std::ofstream(cfg) << "[train.pif]\naugmentation = flips+translation\n";
  EXPECT_EQ(cli("train --model pif --config " + cfg.string(), dir).code, 3);
}

TEST(Cli, TrainIsReproducibleUnderSeed) {
  const fs::path dir = scratch("train");
  const fs::path cfg = tiny_config(dir);
  const std::string args = "train --model pif --seed 7 --config " + cfg.string() + " --out " + (dir / "runs").string();
  const CliRun a = cli(args, dir);
  ASSERT_EQ(a.code, 0) << a.out;
  const CliRun b = cli(args, dir);
  ASSERT_EQ(b.code, 0) << b.out;
  const fs::path r1 = dir / "runs" / "train-0001", r2 = dir / "runs" / "train-0002";
  EXPECT_EQ(slurp(r1 / "history.csv"), slurp(r2 / "history.csv"));
  EXPECT_EQ(slurp(r1 / "summary.csv"), slurp(r2 / "summary.csv"));
  EXPECT_EQ(slurp(r1 / "history.csv").rfind("epoch,train_loss,val_balanced_accuracy,is_best\n", 0), 0u);
  EXPECT_TRUE(fs::exists(r1 / "weights" / "manifest.txt"));
}

TEST(Cli, TrainOnSavedDatasetWithSubset) {
  const fs::path dir = scratch("subset");
  const fs::path cfg = tiny_config(dir);
  ASSERT_EQ(cli("gen --config " + cfg.string() + " --out " + (dir / "data").string(), dir).code, 0);
  std::ofstream(dir / "with_dir.ini") << "[data]\ndir = " << (dir / "data").string()
                                       << "\nimage_size = 16\nsignal_offset = 4\n[train]\nbatch_size = 4\nmax_epochs = 2\n";
  const CliRun r = cli("train --subset 0.25 --config " + (dir / "with_dir.ini").string() + " --out " +
                        (dir / "runs").string(),
                    dir);
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, CompareWritesReport) {
  const fs::path dir = scratch("compare");
  const fs::path cfg = tiny_config(dir);
  const CliRun r = cli("compare --reps 2 --subset 0.5 --config " + cfg.string() + " --out " + (dir / "runs").string(), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path out = dir / "runs" / "compare-0001";
  const std::string csv = slurp(out / "compare.csv");
  EXPECT_EQ(csv.rfind("model,regime,mean_bal_acc,mean_stop_iter,param_count", 0), 0u) << csv;
  for (const char* row : {"\nbaseline,full,", "\npif,full,", "\nbaseline,subset,", "\npif,subset,"}) {
    EXPECT_NE(csv.find(row), std::string::npos) << row;
  }
  EXPECT_TRUE(fs::exists(out / "runs.csv"));
  EXPECT_TRUE(fs::exists(out / "report.txt"));
}

TEST(Cli, GradcheckExitCodes) {
  const fs::path dir = scratch("gradcheck");
  const CliRun ok = cli("gradcheck", dir);
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("all components passed"), std::string::npos);
  const CliRun bad = cli("gradcheck --corrupt-conv-backward", dir);
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("conv2d"), std::string::npos);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}
