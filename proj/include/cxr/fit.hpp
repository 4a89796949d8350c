#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cxr/augment.hpp"
#include "cxr/dataset.hpp"
#include "cxr/model.hpp"
#include "cxr/optim.hpp"
#include "cxr/schedule.hpp"

namespace cxr {

enum class OptimizerKind { Adam, Sgd };

struct TrainPlan {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double label_smoothing = 0.1;
  // One positive weight per class; empty means every class weighs 1.
  std::vector<double> class_weights;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamConfig adam;
  SgdConfig sgd;
  ScheduleSpec schedule;
  AugmentPolicy augment = AugmentPolicy::identity();

  // Throws std::invalid_argument describing the first violated constraint.
  void validate(std::size_t class_count) const;
};

// Warmup of one epoch of steps, decay at 80% of all steps, factor 0.1.
ScheduleSpec default_schedule(double peak_lr, std::size_t epochs, std::size_t steps_per_epoch);

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::string split;      // "train" or "validation"
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> precision;  // macro
  std::optional<double> recall;     // macro
  double lr = 0.0;                  // rate used by the epoch's last step
};

struct History {
  std::vector<EpochRecord> records;
};

using EpochSink = std::function<void(const EpochRecord&)>;

// Mini-batch training. Per step: augment -> forward -> smoothed weighted cross-entropy
// -> backward -> lr_at -> optimizer update. Training metrics are accumulated from the
// augmented batches as they are seen; validation metrics come from a clean pass.
// Throws NumericError on a non-finite loss and DataError on an empty dataset.
History fit(ModelGraph<float>& model, const ImageSet& train, const TrainPlan& plan,
            const EpochSink& sink = {}, const ImageSet* validation = nullptr);

// Objective value of the plan's loss over a whole set, without augmentation.
double dataset_loss(const ModelGraph<float>& model, const ImageSet& data, const TrainPlan& plan);

// Appends epoch,split,loss,accuracy,precision,recall,lr rows (header written on creation).
class HistoryCsv {
 public:
  explicit HistoryCsv(const std::filesystem::path& path);
  void operator()(const EpochRecord& record);

 private:
  std::filesystem::path path_;
};

}  // namespace cxr
