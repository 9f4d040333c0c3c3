// pifnet command-line driver: gen, train, compare, gradcheck.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pifnet/errors.hpp"
#include "pifnet/experiment.hpp"
#include "pifnet/gradcheck.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kValidation = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> subset;
  std::optional<std::size_t> reps;
  std::string out;
  std::string model = "baseline";
  bool corrupt = false;
};

pifnet::ExperimentConfig load(const Flags& f) {
  return f.config.empty() ? pifnet::default_experiment() : pifnet::load_experiment(f.config);
}

int run_gradcheck(const Flags& f) {
  pifnet::GradcheckOptions opt;
  if (f.seed) opt.seed = *f.seed;
  opt.corrupt_conv_backward = f.corrupt;
  const auto report = pifnet::run_gradcheck(opt);
  for (const auto& c : report.components) {
    std::printf("%-24s %-4s max rel error %.3e over %zu entries\n", c.component.c_str(), c.passed ? "ok" : "FAIL",
                c.max_rel_error, c.checked);
    if (!c.passed) {
      std::printf("    at %s: analytic %.10g, numeric %.10g\n", c.worst_location.c_str(), c.analytic, c.numeric);
    }
  }
  std::printf("%s in %.2f s\n", report.all_passed() ? "all components passed" : "gradient check FAILED",
              report.seconds);
  return report.all_passed() ? kOk : kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-individual filter layers vs shared convolutions on synthetic images"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "Experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Random seed");
  };

  auto* gen = app.add_subcommand("gen", "Generate the synthetic dataset");
  common(gen);
  gen->add_option("--out", f.out, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train one model");
  common(train);
  train->add_option("--model", f.model, "Model kind")->check(CLI::IsMember({"baseline", "pif"}));
  train->add_option("--subset", f.subset, "Train on this fraction of the training split")
      ->check(CLI::Range(0.0, 1.0));
  train->add_option("--out", f.out, "Base directory for run output")->default_val("runs");

  auto* compare = app.add_subcommand("compare", "Baseline vs PIF over paired seeds");
  common(compare);
  compare->add_option("--subset", f.subset, "Subset fraction for the subset regime")->check(CLI::Range(0.0, 1.0));
  compare->add_option("--reps", f.reps, "Repetitions per arm and regime")->check(CLI::PositiveNumber);
  compare->add_option("--out", f.out, "Base directory for run output")->default_val("runs");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--seed", f.seed, "Seed for the random test tensors");
  grad->add_flag("--corrupt-conv-backward", f.corrupt, "Negate the conv input gradient (suite self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (grad->parsed()) return run_gradcheck(f);

    pifnet::ExperimentConfig cfg = load(f);
    if (gen->parsed()) {
      if (f.seed) cfg.data.seed = *f.seed;
      pifnet::validate(cfg.data);
      pifnet::cmd_gen(cfg, f.out, std::cout);
      return kOk;
    }
    const std::uint64_t seed = f.seed.value_or(cfg.seed);
    if (train->parsed()) {
      pifnet::cmd_train(cfg, pifnet::parse_model_kind(f.model), seed, f.subset, f.out, std::cout);
      return kOk;
    }
    const auto report = pifnet::cmd_compare(cfg, seed, f.reps.value_or(cfg.repetitions), f.subset, f.out, std::cout);
    if (report.failed) {
      std::cerr << "error: more than half of the runs of some arm diverged\n";
      return kRuntime;
    }
    return kOk;
  } catch (const pifnet::TrainingDivergedError& e) {
    std::cerr << "error: training diverged in epoch " << e.epoch() << ": " << e.what() << "\n";
    return kRuntime;
  } catch (const pifnet::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const pifnet::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const pifnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
