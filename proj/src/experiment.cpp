#include "pifnet/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pifnet/errors.hpp"
#include "pifnet/weights.hpp"

namespace pifnet {

namespace {

std::vector<std::size_t> broadcast(const std::vector<std::size_t>& v, std::size_t dims,
                                   const std::string& key) {
  if (v.size() == dims) return v;
  if (v.size() == 1) return std::vector<std::size_t>(dims, v[0]);
  throw ConfigError(key + " needs 1 or " + std::to_string(dims) + " entries");
}

TrainConfig read_train(const Config& c, const std::string& section, TrainConfig t) {
  t.learning_rate = c.get_double(section + ".learning_rate", t.learning_rate);
  t.weight_decay = c.get_double(section + ".weight_decay", t.weight_decay);
  t.batch_size = c.get_size(section + ".batch_size", t.batch_size);
  t.max_epochs = c.get_size(section + ".max_epochs", t.max_epochs);
  t.patience = c.get_size(section + ".patience", t.patience);
  t.translation_max = c.get_size(section + ".translation_max", t.translation_max);
  if (c.has(section + ".augmentation")) {
    t.augmentation = parse_augmentation(c.get_string(section + ".augmentation", ""));
  }
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string fmt(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace

ExperimentConfig default_experiment() {
  ExperimentConfig e;
  e.model.dims = 2;
  e.model.input_shape = {1, 32, 32};
  e.model.num_classes = 2;
  e.model.filters_per_block = {8, 8, 16, 16, 16};
  e.model.strides = {1, 2, 2, 1, 1};
  e.model.kernel_size = 3;

  e.pif.patch_size = {2, 2};
  e.pif.kernel_size = {3, 3};
  e.pif.pad = {2, 2};
  e.pif.out_channels = 16;
  e.pif.with_bn_relu = true;
  e.pif.blocks = 1;

  TrainConfig t;
  t.learning_rate = 0.1;
  t.weight_decay = 1e-4;
  t.batch_size = 32;
  t.max_epochs = 100;
  t.patience = 10;
  t.translation_max = 2;
  e.baseline_train = t;
  e.baseline_train.augmentation = default_augmentation(ModelKind::baseline);
  e.pif_train = t;
  e.pif_train.augmentation = default_augmentation(ModelKind::pif);
  return e;
}

ExperimentConfig experiment_from_config(const Config& c) {
  ExperimentConfig e = default_experiment();

  e.seed = c.get_u64("experiment.seed", e.seed);
  e.repetitions = c.get_size("experiment.repetitions", e.repetitions);
  if (c.has("experiment.subset")) e.subset_fraction = c.get_double("experiment.subset", 0.2);

  SynthSpec& d = e.data;
  d.dims = c.get_size("data.dims", d.dims);
  if (d.dims != 2 && d.dims != 3) throw ConfigError("data.dims must be 2 or 3");
  if (d.dims == 3 && !c.has("data.image_size")) d.image_size = {16, 16, 16};
  if (d.dims == 3 && !c.has("data.signal_offset")) d.signal_offset = {4, 4, 6};
  if (d.dims == 3 && !c.has("data.signal_size")) d.signal_size = {4, 4, 4};
  d.image_size = broadcast(c.get_size_list("data.image_size", d.image_size), d.dims, "data.image_size");
  d.train_per_class = c.get_size("data.train_per_class", d.train_per_class);
  d.val_per_class = c.get_size("data.val_per_class", d.val_per_class);
  d.test_per_class = c.get_size("data.test_per_class", d.test_per_class);
  d.signal_offset = broadcast(c.get_size_list("data.signal_offset", d.signal_offset), d.dims, "data.signal_offset");
  d.signal_size = broadcast(c.get_size_list("data.signal_size", d.signal_size), d.dims, "data.signal_size");
  d.signal_strength = c.get_double("data.signal_strength", d.signal_strength);
  d.background_modes = c.get_size("data.background_modes", d.background_modes);
  d.max_frequency = c.get_size("data.max_frequency", d.max_frequency);
  d.white_noise = c.get_double("data.white_noise", d.white_noise);
  d.jitter = c.get_size("data.jitter", d.jitter);
  d.seed = c.get_u64("data.seed", d.seed);
  if (c.has("data.dir")) e.data_dir = c.get_string("data.dir", "");

  ModelSpec& m = e.model;
  m.dims = d.dims;
  m.input_shape = {1};
  m.input_shape.insert(m.input_shape.end(), d.image_size.begin(), d.image_size.end());
  m.num_classes = c.get_size("model.num_classes", m.num_classes);
  m.filters_per_block = c.get_size_list("model.filters", m.filters_per_block);
  m.strides = c.get_size_list("model.strides", m.strides);
  m.kernel_size = c.get_size("model.kernel_size", m.kernel_size);
  if (m.filters_per_block.size() != 5) throw ConfigError("model.filters needs 5 entries");
  if (m.strides.size() != 5) throw ConfigError("model.strides needs 5 entries");

  PifConfig& p = e.pif;
  p.patch_size = broadcast(c.get_size_list("model.pif.patch_size", {p.patch_size[0]}), d.dims, "model.pif.patch_size");
  p.kernel_size = broadcast(c.get_size_list("model.pif.kernel_size", {p.kernel_size[0]}), d.dims, "model.pif.kernel_size");
  p.pad = broadcast(c.get_size_list("model.pif.pad", {p.pad[0]}), d.dims, "model.pif.pad");
  p.out_channels = c.get_size("model.pif.out_channels", p.out_channels);
  p.with_bn_relu = c.get_bool("model.pif.with_bn_relu", p.with_bn_relu);
  p.blocks = c.get_size("model.pif.blocks", p.blocks);

  const TrainConfig shared = read_train(c, "train", e.baseline_train);
  TrainConfig base = shared;
  base.augmentation = default_augmentation(ModelKind::baseline);
  TrainConfig pif = shared;
  pif.augmentation = default_augmentation(ModelKind::pif);
  if (c.has("train.augmentation")) {
    base.augmentation = pif.augmentation = parse_augmentation(c.get_string("train.augmentation", ""));
  }
  e.baseline_train = read_train(c, "train.baseline", base);
  e.pif_train = read_train(c, "train.pif", pif);
  validate(e.baseline_train);
  validate(e.pif_train);
  check_augmentation_policy(ModelKind::pif, e.pif_train);

  if (e.repetitions < 1) throw ConfigError("experiment.repetitions must be at least 1");
  if (e.subset_fraction && !(*e.subset_fraction > 0.0 && *e.subset_fraction < 1.0)) {
    throw ConfigError("experiment.subset must lie in (0, 1)");
  }

  const auto unused = c.unused_keys();
  if (!unused.empty()) {
    std::string keys;
    for (const auto& k : unused) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config keys: " + keys);
  }
  return e;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from_config(Config::load(path));
}

ModelSpec model_spec_for(const ExperimentConfig& cfg, ModelKind kind) {
  ModelSpec s = cfg.model;
  if (kind == ModelKind::pif) {
    s.filters_per_block.resize(4);
    s.strides.resize(std::min<std::size_t>(s.strides.size(), 4));
    s.pif = cfg.pif;
  } else {
    s.pif.reset();
  }
  return s;
}

TrainConfig train_config_for(const ExperimentConfig& cfg, ModelKind kind) {
  return kind == ModelKind::pif ? cfg.pif_train : cfg.baseline_train;
}

DataSplits load_or_generate(const ExperimentConfig& cfg) {
  if (cfg.data_dir) return split_dataset(load_dataset(*cfg.data_dir));
  return split_dataset(generate(cfg.data));
}

std::filesystem::path next_run_dir(const std::filesystem::path& base, const std::string& prefix) {
  std::filesystem::create_directories(base);
  for (int i = 1; i < 100000; ++i) {
    std::ostringstream name;
    name << prefix << '-' << std::setw(4) << std::setfill('0') << i;
    const auto dir = base / name.str();
    if (std::filesystem::create_directory(dir)) return dir;
  }
  throw IoError("no free run directory under " + base.string());
}

GenSummary cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  if (std::filesystem::exists(out / "images.pift")) {
    throw IoError(out.string() + " already holds a dataset; refusing to overwrite");
  }
  const Dataset d = generate(cfg.data);
  save_dataset(d, out);
  GenSummary s{out, d.size(), class_counts(d.labels, 2), meta_hash(d.meta)};
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(s.spec_hash));
  log << "wrote " << out.string() << ": N=" << s.samples << " images " << shape_to_string(d.images.shape())
      << ", class counts " << s.class_counts[0] << "/" << s.class_counts[1] << ", spec hash " << hash << "\n";
  return s;
}

RunResult run_training(const ExperimentConfig& cfg, const DataSplits& data, ModelKind kind,
                       std::uint64_t seed, std::optional<double> subset) {
  RunResult r;
  r.kind = kind;
  r.regime = subset ? "subset" : "full";
  r.seed = seed;

  TrainConfig tc = train_config_for(cfg, kind);
  tc.seed = seed;
  check_augmentation_policy(kind, tc);

  Rng init = Rng(seed).derive(streams::kInit);
  Model model = build_model(kind, model_spec_for(cfg, kind), init);
  r.param_count = model_param_count(model);

  Dataset train_set = data.train;
  if (subset) {
    Rng srng = Rng(seed).derive(streams::kSubset);
    train_set = subset_sample(data.train, *subset, srng, model.spec().num_classes);
  }
  try {
    r.history = train(model, train_set, data.val, tc);
    r.test_bacc = evaluate_balanced_accuracy(model, data.test);
  } catch (const TrainingDivergedError& e) {
    r.diverged = true;
    r.diverged_epoch = e.epoch();
  }
  return r;
}

std::string summary_csv(const RunResult& r) {
  std::ostringstream os;
  os << "stop_iteration,best_epoch,best_val_bacc,param_count,seed\n"
     << r.history.stop_iteration << ',' << r.history.best_epoch << ',' << fmt(r.history.best_val_bacc) << ','
     << r.param_count << ',' << r.seed << '\n';
  return os.str();
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, ModelKind kind, std::uint64_t seed,
                       std::optional<double> subset, const std::filesystem::path& out_base,
                       std::ostream& log) {
  const DataSplits data = load_or_generate(cfg);
  TrainConfig tc = train_config_for(cfg, kind);
  tc.seed = seed;
  check_augmentation_policy(kind, tc);

  Rng init = Rng(seed).derive(streams::kInit);
  Model model = build_model(kind, model_spec_for(cfg, kind), init);
  Dataset train_set = data.train;
  if (subset) {
    Rng srng = Rng(seed).derive(streams::kSubset);
    train_set = subset_sample(data.train, *subset, srng, model.spec().num_classes);
  }
  log << "training " << to_string(kind) << " (" << model_param_count(model) << " parameters) on "
      << train_set.size() << " samples, augmentation " << to_string(tc.augmentation) << "\n";

  TrainOutcome out;
  out.result.kind = kind;
  out.result.regime = subset ? "subset" : "full";
  out.result.seed = seed;
  out.result.param_count = model_param_count(model);
  out.result.history = train(model, train_set, data.val, tc);  // divergence propagates
  out.result.test_bacc = evaluate_balanced_accuracy(model, data.test);

  out.dir = next_run_dir(out_base, "train");
  write_text(out.dir / "history.csv", history_csv(out.result.history));
  write_text(out.dir / "summary.csv", summary_csv(out.result));
  save_weights(model, out.dir / "weights");
  const auto& h = out.result.history;
  log << "stopped at epoch " << h.stop_iteration << " (best epoch " << h.best_epoch << ", val bal. acc "
      << fmt(h.best_val_bacc, 6) << ", test bal. acc " << fmt(out.result.test_bacc, 6) << ")\n"
      << "results in " << out.dir.string() << "\n";
  return out;
}

const CompareRow& CompareReport::row(const std::string& model, const std::string& regime) const {
  for (const auto& r : rows) {
    if (r.model == model && r.regime == regime) return r;
  }
  throw InvalidArgumentError("no comparison row for " + model + "/" + regime);
}

CompareReport cmd_compare(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t reps,
                          std::optional<double> subset, const std::filesystem::path& out_base,
                          std::ostream& log) {
  if (reps < 1) throw ConfigError("--reps must be at least 1");
  const double fraction = subset.value_or(cfg.subset_fraction.value_or(0.2));
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("subset fraction must lie in (0, 1)");
  for (ModelKind k : {ModelKind::baseline, ModelKind::pif}) {
    check_augmentation_policy(k, train_config_for(cfg, k));
  }

  const DataSplits data = load_or_generate(cfg);
  CompareReport rep;
  rep.repetitions = reps;
  rep.subset_fraction = fraction;

  const std::vector<std::pair<std::string, std::optional<double>>> regimes{{"full", std::nullopt},
                                                                           {"subset", fraction}};
  for (const auto& [regime, sub] : regimes) {
    for (std::size_t r = 0; r < reps; ++r) {
      for (ModelKind kind : {ModelKind::baseline, ModelKind::pif}) {
        RunResult run = run_training(cfg, data, kind, seed + r, sub);
        run.repetition = r;
        if (run.diverged) {
          log << "warning: " << to_string(kind) << "/" << regime << " repetition " << r
              << " diverged in epoch " << run.diverged_epoch << "; excluded" << std::endl;
        } else {
          log << to_string(kind) << "/" << regime << " rep " << r << ": stop " << run.history.stop_iteration
              << ", val bal. acc " << fmt(run.history.best_val_bacc, 4) << std::endl;
        }
        rep.runs.push_back(std::move(run));
      }
    }
    for (ModelKind kind : {ModelKind::baseline, ModelKind::pif}) {
      CompareRow row;
      row.model = to_string(kind);
      row.regime = regime;
      double acc = 0.0, stop = 0.0, test = 0.0;
      std::size_t total = 0;
      for (const auto& run : rep.runs) {
        if (run.kind != kind || run.regime != regime) continue;
        ++total;
        row.param_count = run.param_count;
        if (run.diverged) {
          ++row.diverged;
          continue;
        }
        ++row.runs;
        acc += run.history.best_val_bacc;
        stop += static_cast<double>(run.history.stop_iteration);
        test += run.test_bacc;
      }
      if (row.runs > 0) {
        row.mean_bal_acc = acc / static_cast<double>(row.runs);
        row.mean_stop_iter = stop / static_cast<double>(row.runs);
        row.mean_test_bal_acc = test / static_cast<double>(row.runs);
      }
      if (2 * row.diverged > total) rep.failed = true;
      rep.rows.push_back(row);
    }
  }

  rep.dir = next_run_dir(out_base, "compare");
  std::ostringstream runs;
  runs << "model,regime,repetition,seed,stop_iteration,best_epoch,best_val_bacc,test_bacc,param_count,diverged\n";
  for (const auto& r : rep.runs) {
    runs << to_string(r.kind) << ',' << r.regime << ',' << r.repetition << ',' << r.seed << ','
         << r.history.stop_iteration << ',' << r.history.best_epoch << ',' << fmt(r.history.best_val_bacc)
         << ',' << fmt(r.test_bacc) << ',' << r.param_count << ',' << (r.diverged ? 1 : 0) << '\n';
  }
  write_text(rep.dir / "runs.csv", runs.str());
  write_text(rep.dir / "compare.csv", compare_csv(rep));
  write_text(rep.dir / "report.txt", compare_table(rep));
  log << compare_table(rep) << "results in " << rep.dir.string() << "\n";
  return rep;
}

std::string compare_csv(const CompareReport& r) {
  std::ostringstream os;
  os << "model,regime,mean_bal_acc,mean_stop_iter,param_count,mean_test_bal_acc,runs,diverged\n";
  for (const auto& row : r.rows) {
    os << row.model << ',' << row.regime << ',' << fmt(row.mean_bal_acc) << ',' << fmt(row.mean_stop_iter)
       << ',' << row.param_count << ',' << fmt(row.mean_test_bal_acc) << ',' << row.runs << ','
       << row.diverged << '\n';
  }
  return os.str();
}

std::string compare_table(const CompareReport& r) {
  std::ostringstream os;
  os << "Paired-seed comparison, " << r.repetitions << " repetitions, subset fraction " << r.subset_fraction
     << "\n";
  os << std::left << std::setw(10) << "model" << std::setw(8) << "regime" << std::right << std::setw(14)
     << "val bal.acc" << std::setw(12) << "stop iter" << std::setw(12) << "params" << std::setw(14)
     << "test bal.acc" << std::setw(10) << "diverged" << "\n";
  for (const auto& row : r.rows) {
    os << std::left << std::setw(10) << row.model << std::setw(8) << row.regime << std::right << std::fixed
       << std::setprecision(4) << std::setw(14) << row.mean_bal_acc << std::setprecision(1) << std::setw(12)
       << row.mean_stop_iter << std::setw(12) << row.param_count << std::setprecision(4) << std::setw(14)
       << row.mean_test_bal_acc << std::setw(10) << row.diverged << "\n";
  }
  return os.str();
}

}  // namespace pifnet
