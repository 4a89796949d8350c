#include "cxr/config.hpp"

#include <fstream>
#include <set>

#include "cxr/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(key_path(key) + ": " + e.what());
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), key_path(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError("unknown config key '" + key_path(item.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_range(Section& s, const std::string& key, Range& r) {
  if (!s.has(key)) return;
  const json& v = s.raw(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(s.key_path(key) + ": expected [lo, hi]");
  }
  r = {v[0].get<double>(), v[1].get<double>()};
}

void read_optimizer(Section s, RunConfig& c) {
  std::string kind = "adam";
  s.read("kind", kind);
  if (kind == "adam") {
    c.plan.optimizer = OptimizerKind::Adam;
    s.read("lr", c.plan.adam.lr);
    s.read("beta1", c.plan.adam.beta1);
    s.read("beta2", c.plan.adam.beta2);
    s.read("eps", c.plan.adam.eps);
  } else if (kind == "sgd") {
    c.plan.optimizer = OptimizerKind::Sgd;
    s.read("lr", c.plan.sgd.lr);
    s.read("momentum", c.plan.sgd.momentum);
  } else {
    throw ConfigError(s.key_path("kind") + ": expected adam or sgd, got '" + kind + "'");
  }
  s.finish();
}

void read_schedule(Section s, RunConfig& c) {
  if (s.has("warmup_steps")) {
    std::uint64_t v = 0;
    s.read("warmup_steps", v);
    c.warmup_steps = v;
  }
  if (s.has("decay_start_step")) {
    std::uint64_t v = 0;
    s.read("decay_start_step", v);
    c.decay_start_step = v;
  }
  s.read("decay_factor", c.plan.schedule.decay_factor);
  s.finish();
}

void read_train(Section s, RunConfig& c) {
  s.read("epochs", c.plan.epochs);
  s.read("batch_size", c.plan.batch_size);
  s.read("label_smoothing", c.plan.label_smoothing);
  if (s.has("class_weights")) {
    const json& w = s.raw("class_weights");
    if (w.is_string()) {
      c.class_weight_mode = w.get<std::string>();
      if (c.class_weight_mode != "auto" && c.class_weight_mode != "none") {
        throw ConfigError(s.key_path("class_weights") + ": expected \"auto\", \"none\" or a list of numbers");
      }
      c.plan.class_weights.clear();
    } else {
      s.read("class_weights", c.plan.class_weights);
      c.class_weight_mode = "explicit";
    }
  }
  if (s.has("optimizer")) read_optimizer(s.child("optimizer"), c);
  if (s.has("schedule")) read_schedule(s.child("schedule"), c);
  s.finish();
}

void read_augment(Section s, AugmentPolicy& p) {
  s.read("flip", p.flip);
  s.read("flip_probability", p.flip_probability);
  s.read("crop", p.crop);
  read_range(s, "crop_fraction", p.crop_fraction);
  s.read("brightness", p.brightness);
  read_range(s, "brightness_delta", p.brightness_delta);
  s.read("contrast", p.contrast);
  read_range(s, "contrast_factor", p.contrast_factor);
  s.read("saturation", p.saturation);
  read_range(s, "saturation_factor", p.saturation_factor);
  s.finish();
}

void read_model(Section s, RunConfig& c) {
  s.read("preset", c.model_preset);
  if (s.has("layers")) {
    const json& layers = s.raw("layers");
    if (!layers.is_array()) throw ConfigError("model.layers must be a list");
    c.layers.clear();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      try {
        c.layers.push_back(layers[i].get<LayerSpec>());
      } catch (const std::exception& e) {
        throw ConfigError("model.layers[" + std::to_string(i) + "]: " + e.what());
      }
    }
  }
  s.finish();
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

}  // namespace

std::vector<LayerSpec> RunConfig::model_layers() const {
  if (!layers.empty()) return layers;
  if (model_preset == kDefaultPreset) return default_layers(classes.size());
  throw ConfigError("model.preset: unknown preset '" + model_preset + "'");
}

void RunConfig::validate(bool check_paths) const {
  if (classes.empty()) throw ConfigError("classes: the class list is empty");
  std::set<std::string> unique(classes.begin(), classes.end());
  if (unique.size() != classes.size()) throw ConfigError("classes: duplicate class names");
  if (classes.size() < 2) throw ConfigError("classes: at least two classes are required");
  if (image_size == 0) throw ConfigError("image_size must be positive");
  if (plan.epochs > 0 && plan.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (class_weight_mode == "explicit" && plan.class_weights.size() != classes.size()) {
    throw ConfigError("train.class_weights: " + std::to_string(plan.class_weights.size()) + " weights for " +
                      std::to_string(classes.size()) + " classes");
  }
  if (warmup_steps && decay_start_step && *warmup_steps > *decay_start_step) {
    throw ConfigError("train.schedule: warmup_steps exceeds decay_start_step");
  }
  try {
    plan.validate(classes.size());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  try {
    ModelGraph<float>(model_layers(), Shape{3, image_size, image_size}, classes.size());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (check_paths) {
    if (dataset_root.empty()) throw ConfigError("dataset_root is required");
    if (!fs::is_directory(dataset_root)) {
      throw ConfigError("dataset_root: " + dataset_root.string() + " is not a directory");
    }
  }
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  Section top(doc, "");
  std::string root, out;
  top.read("dataset_root", root);
  c.dataset_root = resolve(root, base_dir);
  top.read("classes", c.classes);
  if (top.has("model")) read_model(top.child("model"), c);
  top.read("image_size", c.image_size);
  if (top.has("output_dir")) {
    top.read("output_dir", out);
    c.output_dir = resolve(out, base_dir);
  }
  top.read("seed", c.seed);
  if (top.has("train")) read_train(top.child("train"), c);
  if (top.has("augment")) read_augment(top.child("augment"), c.plan.augment);
  top.finish();
  c.plan.seed = c.seed;
  c.plan.schedule.peak_lr = c.plan.optimizer == OptimizerKind::Adam ? c.plan.adam.lr : c.plan.sgd.lr;
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  const auto& p = c.plan;
  json optimizer;
  if (p.optimizer == OptimizerKind::Adam) {
    optimizer = {{"kind", "adam"}, {"lr", p.adam.lr}, {"beta1", p.adam.beta1}, {"beta2", p.adam.beta2}, {"eps", p.adam.eps}};
  } else {
    optimizer = {{"kind", "sgd"}, {"lr", p.sgd.lr}, {"momentum", p.sgd.momentum}};
  }
  json schedule = {{"decay_factor", p.schedule.decay_factor}};
  if (c.warmup_steps) schedule["warmup_steps"] = *c.warmup_steps;
  if (c.decay_start_step) schedule["decay_start_step"] = *c.decay_start_step;
  json weights = c.class_weight_mode == "explicit" ? json(p.class_weights) : json(c.class_weight_mode);
  json layers = json::array();
  for (const auto& l : c.model_layers()) layers.push_back(l);
  return {
      {"dataset_root", c.dataset_root.generic_string()},
      {"classes", c.classes},
      {"model", {{"preset", c.model_preset}, {"layers", layers}}},
      {"image_size", c.image_size},
      {"output_dir", c.output_dir.generic_string()},
      {"seed", c.seed},
      {"train",
       {{"epochs", p.epochs},
        {"batch_size", p.batch_size},
        {"label_smoothing", p.label_smoothing},
        {"class_weights", weights},
        {"optimizer", optimizer},
        {"schedule", schedule}}},
      {"augment",
       {{"flip", p.augment.flip},
        {"flip_probability", p.augment.flip_probability},
        {"crop", p.augment.crop},
        {"crop_fraction", range_json(p.augment.crop_fraction)},
        {"brightness", p.augment.brightness},
        {"brightness_delta", range_json(p.augment.brightness_delta)},
        {"contrast", p.augment.contrast},
        {"contrast_factor", range_json(p.augment.contrast_factor)},
        {"saturation", p.augment.saturation},
        {"saturation_factor", range_json(p.augment.saturation_factor)}}},
  };
}

}  // namespace cxr
