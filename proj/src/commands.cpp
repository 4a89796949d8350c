#include "cxr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "cxr/checkpoint.hpp"
#include "cxr/errors.hpp"
#include "cxr/eval.hpp"
#include "cxr/fit.hpp"
#include "cxr/image.hpp"
#include "cxr/parallel.hpp"

namespace fs = std::filesystem;

namespace cxr {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return "[" + out + "]";
}

void print_counts(const DatasetManifest& m, std::ostream& log) {
  for (Split s : {Split::Train, Split::Test}) {
    const auto counts = m.counts(s);
    log << to_string(s) << " counts:";
    for (std::size_t c = 0; c < counts.size(); ++c) log << ' ' << m.classes[c] << '=' << counts[c];
    log << '\n';
  }
}

ModelGraph<float> read_model(const fs::path& checkpoint) {
  try {
    return load_checkpoint<float>(checkpoint);
  } catch (const CheckpointError& e) {
    throw DataError("checkpoint " + checkpoint.string() + ": " + e.what());
  }
}

// Scans `root` and lines its classes up with the checkpoint's; any difference is a
// configuration error showing both lists.
DatasetManifest scan_for_model(const fs::path& root, const ModelGraph<float>& model) {
  const auto discovered = scan_dataset(root);
  auto a = discovered.classes, b = model.class_names();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) {
    throw ConfigError("class lists differ: checkpoint " + join(model.class_names()) + ", dataset " +
                      join(discovered.classes));
  }
  if (discovered.classes == model.class_names()) return discovered;
  return scan_dataset(root, model.class_names());
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string layer_details(const LayerSpec& s) {
  std::ostringstream out;
  switch (s.kind) {
    case LayerKind::Conv:
      out << "filters=" << s.filters << " kernel=" << s.kernel << " stride=" << s.stride
          << " padding=" << (s.padding == Padding::Same ? "same" : "valid");
      break;
    case LayerKind::MaxPool:
      out << "window=" << s.window << " stride=" << s.stride;
      break;
    case LayerKind::Dense:
      out << "units=" << s.units;
      break;
    default:
      break;
  }
  if (!s.inputs.empty()) {
    out << (out.tellp() > 0 ? " " : "") << "inputs=";
    for (std::size_t i = 0; i < s.inputs.size(); ++i) out << (i ? "," : "") << s.inputs[i];
  }
  return out.str();
}

}  // namespace

PrepSummary cmd_prep(const fs::path& src, const fs::path& out, std::size_t size,
                     const std::vector<std::string>& classes, std::ostream& log) {
  if (size == 0) throw ConfigError("--size must be positive");
  const DatasetManifest scanned = scan_dataset(src, classes);
  PrepSummary summary;
  summary.rejected = scanned.rejected;

  DatasetManifest written;
  written.root = out;
  written.classes = scanned.classes;
  // Output names are stem + ".jpg"; a stem shared by two sources in one directory
  // falls back to the full file name + ".jpg".
  std::map<std::string, std::size_t> stems;
  for (const auto& r : scanned.records) {
    const fs::path rel(r.path);
    ++stems[(rel.parent_path() / rel.stem()).generic_string()];
  }
  for (const auto& r : scanned.records) {
    const fs::path rel(r.path);
    const bool clash = stems[(rel.parent_path() / rel.stem()).generic_string()] > 1;
    const fs::path target = rel.parent_path() / ((clash ? rel.filename().string() : rel.stem().string()) + ".jpg");
    written.records.push_back({target.generic_string(), r.label, r.split});
  }
  std::vector<std::string> failures(written.records.size());
  for (const auto& r : written.records) fs::create_directories((out / r.path).parent_path());
  parallel_for(written.records.size(), [&](std::size_t i) {
    try {
      write_image(out / written.records[i].path, load_and_resize(src / scanned.records[i].path, size));
    } catch (const DataError& e) {
      failures[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i].empty()) summary.rejected.push_back({scanned.records[i].path, failures[i]});
  }
  std::vector<ManifestRecord> kept;
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (failures[i].empty()) kept.push_back(written.records[i]);
  }
  written.records = std::move(kept);
  summary.written = written.records.size();
  fs::create_directories(out);
  write_manifest_csv(written, out / "manifest.csv");

  log << "wrote " << summary.written << " images to " << out.generic_string() << '\n';
  print_counts(written, log);
  const auto train_counts = written.counts(Split::Train);
  log << "class weights:";
  if (std::find(train_counts.begin(), train_counts.end(), 0u) != train_counts.end()) {
    log << " undefined (a class has no training images)\n";
  } else {
    const auto w = compute_class_weights(train_counts, written.classes);
    for (std::size_t c = 0; c < w.size(); ++c) log << ' ' << written.classes[c] << '=' << format_rate(w[c]);
    log << '\n';
  }
  return summary;
}

void cmd_train(RunConfig config, std::ostream& log) {
  config.validate();
  const DatasetManifest manifest = scan_dataset(config.dataset_root, config.classes);
  for (const auto& r : manifest.rejected) log << "skipped " << r.path << ": " << r.reason << '\n';
  const ImageSet train = load_split(manifest, Split::Train, config.image_size);
  std::optional<ImageSet> validation;
  if (manifest.size(Split::Test) > 0) validation = load_split(manifest, Split::Test, config.image_size);

  TrainPlan& plan = config.plan;
  if (config.class_weight_mode == "auto") {
    try {
      plan.class_weights = compute_class_weights(train.counts(), train.classes);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("cannot derive class weights: ") + e.what());
    }
  } else if (config.class_weight_mode == "none") {
    plan.class_weights.clear();
  }
  const std::size_t steps = steps_per_epoch(train.size(), plan.batch_size);
  const ScheduleSpec defaults = default_schedule(plan.schedule.peak_lr, plan.epochs, steps);
  // An explicit boundary wins; the other default is bent so warmup never passes decay.
  plan.schedule.warmup_steps =
      config.warmup_steps.value_or(std::min(defaults.warmup_steps, config.decay_start_step.value_or(UINT64_MAX)));
  plan.schedule.decay_start_step =
      config.decay_start_step.value_or(std::max(defaults.decay_start_step, plan.schedule.warmup_steps));
  config.warmup_steps = plan.schedule.warmup_steps;
  config.decay_start_step = plan.schedule.decay_start_step;
  try {
    plan.validate(config.classes.size());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  fs::create_directories(config.output_dir);
  {
    std::ofstream resolved(config.output_dir / "resolved_config.json", std::ios::trunc);
    auto doc = to_json(config);
    // Derived weights are written as explicit values so the file replays the run.
    if (config.class_weight_mode == "auto") doc["train"]["class_weights"] = plan.class_weights;
    resolved << doc.dump(2) << '\n';
    if (!resolved) throw DataError("cannot write " + (config.output_dir / "resolved_config.json").string());
  }

  auto model = build_model<float>(config.model_layers(), Shape{3, config.image_size, config.image_size},
                                  config.classes.size(), config.seed);
  model.set_class_names(config.classes);

  const fs::path history_path = config.output_dir / "history.csv";
  fs::remove(history_path);
  HistoryCsv history(history_path);
  std::ofstream run_log(config.output_dir / "train.log", std::ios::app);
  run_log << timestamp() << " start: " << train.size() << " training images, " << plan.epochs << " epochs, "
          << steps << " steps per epoch\n";
  log << "training on " << train.size() << " images";
  if (validation) log << ", validating on " << validation->size();
  log << '\n';

  auto sink = [&](const EpochRecord& r) {
    history(r);
    std::ostringstream line;
    line << "epoch " << r.epoch << ' ' << r.split << " loss " << std::fixed << std::setprecision(6) << r.loss
         << " accuracy " << format_rate(r.accuracy) << " precision " << format_rate(r.precision) << " recall "
         << format_rate(r.recall) << " lr " << std::scientific << std::setprecision(3) << r.lr;
    log << line.str() << '\n';
    run_log << timestamp() << ' ' << line.str() << std::endl;
  };
  try {
    fit(model, train, plan, sink, validation ? &*validation : nullptr);
  } catch (const NumericError& e) {
    run_log << timestamp() << " aborted: " << e.what() << '\n';
    throw;
  }
  save_checkpoint(model, config.output_dir / "model.cxrf");
  run_log << timestamp() << " saved " << (config.output_dir / "model.cxrf").generic_string() << '\n';
  log << "saved " << (config.output_dir / "model.cxrf").generic_string() << '\n';
}

void cmd_evaluate(const fs::path& checkpoint, const fs::path& dataset_root, Split split, const fs::path& out_dir,
                  std::ostream& log) {
  const auto model = read_model(checkpoint);
  const auto manifest = scan_for_model(dataset_root, model);
  for (const auto& r : manifest.rejected) log << "skipped " << r.path << ": " << r.reason << '\n';
  if (manifest.size(split) == 0) throw DataError("split '" + to_string(split) + "' has no images");
  const Evaluation ev = evaluate(model, load_split(manifest, split, model.input_shape().back()));
  fs::create_directories(out_dir);
  render_report(ev, out_dir / "confusion.csv", out_dir / "metrics.csv", log);
}

void cmd_predict(const fs::path& checkpoint, const fs::path& image, std::ostream& log) {
  const auto model = read_model(checkpoint);
  const Shape& in = model.input_shape();
  if (in.size() != 3 || in[0] != 3 || in[1] != in[2]) {
    throw ConfigError("checkpoint input shape " + to_string(in) + " is not a square RGB image");
  }
  const auto pixels = load_and_resize(image, in[1]);
  Shape batch_shape = in;
  batch_shape.insert(batch_shape.begin(), 1);
  const auto probs = model.predict(pixels.reshaped(batch_shape));
  const auto& names = model.class_names();
  std::ostringstream row;
  row << std::fixed << std::setprecision(9);
  for (std::size_t k = 0; k < names.size(); ++k) row << names[k] << ',' << probs.at(0, k) << '\n';
  log << row.str();
  log << "predicted," << names[argmax_rows(probs)[0]] << '\n';
}

void cmd_inspect(const fs::path& checkpoint, std::ostream& log) {
  const auto model = read_model(checkpoint);
  log << "input " << to_string(model.input_shape()) << ", classes " << join(model.class_names()) << '\n';
  std::size_t name_w = 5, shape_w = 12;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    name_w = std::max(name_w, model.layers()[i].name.size());
    shape_w = std::max(shape_w, to_string(model.output_shape(i)).size());
  }
  log << std::left << std::setw(static_cast<int>(name_w + 2)) << "layer" << std::setw(10) << "kind"
      << std::setw(static_cast<int>(shape_w + 2)) << "output" << std::right << std::setw(12) << "params"
      << "  details\n";
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& s = model.layers()[i];
    log << std::left << std::setw(static_cast<int>(name_w + 2)) << s.name << std::setw(10) << to_string(s.kind)
        << std::setw(static_cast<int>(shape_w + 2)) << to_string(model.output_shape(i)) << std::right
        << std::setw(12) << layer_parameter_count(model, i) << "  " << layer_details(s) << '\n';
  }
  log << "total parameters: " << count_parameters(model) << '\n';
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chest X-ray classifier: dataset prep, training, evaluation and inspection"};
  app.require_subcommand(1);

  std::string config_path, out_dir, split_name = "test", checkpoint, dataset_root, image, src;
  std::optional<std::uint64_t> seed;
  std::size_t size = kDefaultImageSize;

  auto* prep = app.add_subcommand("prep", "re-encode and resize a dataset tree, writing manifest.csv");
  prep->add_option("src", src, "source root with {train,test}/<class>/ images")->required();
  prep->add_option("--out", out_dir, "output root")->required();
  prep->add_option("--size", size, "output edge length in pixels")->capture_default_str();
  prep->add_option("--config", config_path, "take the class list from this config");

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "run config (JSON)")->required();
  train->add_option("--out", out_dir, "output directory (overrides output_dir)");
  train->add_option("--seed", seed, "seed (overrides the config)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "confusion matrix and metrics for a dataset split");
  evaluate_cmd->add_option("checkpoint", checkpoint, "model checkpoint")->required();
  evaluate_cmd->add_option("dataset", dataset_root, "dataset root")->required();
  evaluate_cmd->add_option("--split", split_name, "train or test")->capture_default_str();
  evaluate_cmd->add_option("--out", out_dir, "directory for confusion.csv and metrics.csv");

  auto* predict = app.add_subcommand("predict", "class probabilities for one image");
  predict->add_option("checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("image", image, "JPEG or PNG image")->required();

  auto* inspect = app.add_subcommand("inspect", "layer table and parameter count of a checkpoint");
  inspect->add_option("checkpoint", checkpoint, "model checkpoint")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    configure_threads();
    if (*prep) {
      std::vector<std::string> classes;
      if (!config_path.empty()) classes = load_run_config(config_path).classes;
      const auto summary = cmd_prep(src, out_dir, size, classes, out);
      if (!summary.rejected.empty()) {
        for (const auto& r : summary.rejected) err << "error: " << r.path << ": " << r.reason << '\n';
        return kExitData;
      }
    } else if (*train) {
      RunConfig config = load_run_config(config_path);
      if (!out_dir.empty()) config.output_dir = out_dir;
      if (seed) {
        config.seed = *seed;
        config.plan.seed = *seed;
      }
      cmd_train(std::move(config), out);
    } else if (*evaluate_cmd) {
      Split split;
      try {
        split = parse_split(split_name);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("--split: ") + e.what());
      }
      cmd_evaluate(checkpoint, dataset_root, split, out_dir.empty() ? fs::path(".") : fs::path(out_dir), out);
    } else if (*predict) {
      cmd_predict(checkpoint, image, out);
    } else if (*inspect) {
      cmd_inspect(checkpoint, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace cxr
