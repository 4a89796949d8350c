#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cxr/fit.hpp"
#include "cxr/model.hpp"
#include "json.hpp"

namespace cxr {

inline constexpr const char* kDefaultPreset = "paper-default";

// Everything a training run needs. Read from JSON; see README for the key schema.
struct RunConfig {
  std::filesystem::path dataset_root;
  std::vector<std::string> classes = {"COVID-19", "Normal", "Pneumonia"};
  // A named preset or explicit layers; explicit layers win when present.
  std::string model_preset = kDefaultPreset;
  std::vector<LayerSpec> layers;
  std::size_t image_size = 80;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 42;

  // Training plan. `plan.seed` mirrors `seed`; `plan.schedule.peak_lr` mirrors the
  // optimizer learning rate.
  TrainPlan plan = [] {
    TrainPlan p;
    p.augment = AugmentPolicy{};
    return p;
  }();
  // "auto" derives weights from training counts, "none" uses 1 for every class,
  // otherwise `plan.class_weights` holds explicit values.
  std::string class_weight_mode = "auto";
  // Unset boundaries resolve to one epoch of warmup and decay at 80% of all steps.
  std::optional<std::uint64_t> warmup_steps;
  std::optional<std::uint64_t> decay_start_step;

  // Layers for the configured model.
  std::vector<LayerSpec> model_layers() const;

  // Throws ConfigError naming the first offending key. Checks that dataset_root exists
  // unless `check_paths` is false.
  void validate(bool check_paths = true) const;
};

// Parses a config document. Relative paths resolve against `base_dir`.
// Unknown keys and malformed values throw ConfigError naming the key.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Every field materialized, suitable for writing next to the run's artifacts.
nlohmann::json to_json(const RunConfig& config);

}  // namespace cxr
