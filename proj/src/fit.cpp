#include "cxr/fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cxr/errors.hpp"
#include "cxr/eval.hpp"
#include "cxr/loss.hpp"
#include "cxr/parallel.hpp"

namespace cxr {

void TrainPlan::validate(std::size_t class_count) const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("label_smoothing must lie in [0,1)");
  }
  if (!class_weights.empty()) {
    if (class_weights.size() != class_count) {
      throw std::invalid_argument("class_weights has " + std::to_string(class_weights.size()) +
                                  " entries for " + std::to_string(class_count) + " classes");
    }
    for (double w : class_weights) {
      if (!(w > 0.0)) throw std::invalid_argument("class weights must be positive");
    }
  }
  if (optimizer == OptimizerKind::Adam) {
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw std::invalid_argument("adam betas must lie in [0,1)");
    }
    if (!(adam.eps > 0.0)) throw std::invalid_argument("adam eps must be positive");
  } else if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) {
    throw std::invalid_argument("sgd momentum must lie in [0,1)");
  }
  schedule.validate();
  augment.validate();
}

std::size_t steps_per_epoch(std::size_t samples, std::size_t batch_size) {
  return (samples + batch_size - 1) / batch_size;
}

ScheduleSpec default_schedule(double peak_lr, std::size_t epochs, std::size_t steps) {
  ScheduleSpec s;
  s.peak_lr = peak_lr;
  const std::uint64_t total = static_cast<std::uint64_t>(epochs) * steps;
  s.decay_start_step = static_cast<std::uint64_t>(std::floor(0.8 * static_cast<double>(total)));
  s.warmup_steps = std::min<std::uint64_t>(steps, s.decay_start_step);
  s.decay_factor = 0.1;
  return s;
}

namespace {

Tensor<float> weight_tensor(const TrainPlan& plan) {
  if (plan.class_weights.empty()) return {};
  const Shape shape{plan.class_weights.size()};
  return Tensor<float>(shape, std::vector<float>(plan.class_weights.begin(), plan.class_weights.end()));
}

}  // namespace

double dataset_loss(const ModelGraph<float>& model, const ImageSet& data, const TrainPlan& plan) {
  const Tensor<float> weights = weight_tensor(plan);
  double total = 0.0;
  constexpr std::size_t kChunk = 64;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    indices.resize(std::min(kChunk, data.size() - start));
    std::iota(indices.begin(), indices.end(), start);
    const Batch batch = assemble_batch(data, indices);
    const Tensor<float> probs = model.predict(batch.images);
    total += static_cast<double>(smoothed_cross_entropy(probs, batch.labels, plan.label_smoothing, weights)) *
             static_cast<double>(indices.size());
  }
  return total / static_cast<double>(data.size());
}

History fit(ModelGraph<float>& model, const ImageSet& train, const TrainPlan& plan, const EpochSink& sink,
            const ImageSet* validation) {
  plan.validate(model.class_count());
  History history;
  if (plan.epochs == 0) return history;
  if (train.size() == 0) throw DataError("training set is empty");
  if (train.classes != model.class_names()) throw ConfigError("training classes do not match the model's classes");

  const Tensor<float> weights = weight_tensor(plan);
  OptimizerState<float> state;
  std::uint64_t step = 0;
  std::vector<Tensor<float>*> params = model.parameter_tensors();

  for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::vector<std::size_t> seen_labels;
    std::vector<std::size_t> seen_predictions;
    double lr = 0.0;
    const auto order = batch_order(train.size(), plan.batch_size, plan.seed, epoch);
    for (std::size_t b = 0; b < order.size(); ++b) {
      const auto& indices = order[b];
      ImageSet augmented;
      augmented.classes = train.classes;
      augmented.images.resize(indices.size());
      augmented.labels.resize(indices.size());
      parallel_for(indices.size(), [&](std::size_t i) {
        auto rng = sample_stream(plan.seed, epoch, indices[i]);
        augmented.images[i] = augment(train.images[indices[i]], plan.augment, rng);
        augmented.labels[i] = train.labels[indices[i]];
      });
      std::vector<std::size_t> local(indices.size());
      std::iota(local.begin(), local.end(), std::size_t{0});
      const Batch batch = assemble_batch(augmented, local);
      const Tensor<float> targets = label_smooth(batch.labels, plan.label_smoothing);

      Tape<float> tape;
      const auto pass = model.forward(tape, batch.images);
      const Var<float> loss = cross_entropy(pass.output, targets, weights);
      const float loss_value = loss.value()[0];
      if (!std::isfinite(loss_value)) {
        std::ostringstream os;
        os << "non-finite loss " << loss_value << " at step " << step << " (epoch " << epoch + 1 << ", batch "
           << b + 1 << " of " << order.size() << ")";
        throw NumericError(os.str());
      }
      const auto grads = tape.backward(loss, pass.parameters);
      lr = lr_at(step, plan.schedule);
      if (plan.optimizer == OptimizerKind::Adam) {
        adam_step<float>(params, grads.values, state, lr, plan.adam);
      } else {
        sgd_step<float>(params, grads.values, state, lr, plan.sgd.momentum);
      }
      // The loss clamp can hide divergence, so the parameters are checked as well.
      for (std::size_t k = 0; k < params.size(); ++k) {
        const float* p = params[k]->raw();
        if (!std::all_of(p, p + params[k]->size(), [](float v) { return std::isfinite(v); })) {
          std::ostringstream os;
          os << "non-finite value in parameter tensor " << k << " after step " << step << " (epoch " << epoch + 1
             << ", batch " << b + 1 << " of " << order.size() << ")";
          throw NumericError(os.str());
        }
      }
      ++step;

      loss_sum += static_cast<double>(loss_value) * static_cast<double>(indices.size());
      const auto predicted = argmax_rows(pass.output.value());
      seen_predictions.insert(seen_predictions.end(), predicted.begin(), predicted.end());
      seen_labels.insert(seen_labels.end(), augmented.labels.begin(), augmented.labels.end());
    }

    const auto cm = confusion_matrix(seen_predictions, seen_labels, train.classes);
    const auto macro = macro_metrics(cm);
    EpochRecord record{epoch + 1, "train", loss_sum / static_cast<double>(train.size()), accuracy(cm),
                       macro.precision, macro.recall, lr};
    history.records.push_back(record);
    if (sink) sink(record);

    if (validation && validation->size() > 0) {
      const auto eval = evaluate(model, *validation);
      EpochRecord v{epoch + 1, "validation", dataset_loss(model, *validation, plan), eval.report.accuracy,
                    eval.report.macro.precision, eval.report.macro.recall, lr};
      history.records.push_back(v);
      if (sink) sink(v);
    }
  }
  return history;
}

HistoryCsv::HistoryCsv(const std::filesystem::path& path) : path_(path) {
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write history " + path_.string());
  out << "epoch,split,loss,accuracy,precision,recall,lr\n";
}

void HistoryCsv::operator()(const EpochRecord& r) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to history " + path_.string());
  std::ostringstream loss, lr;
  loss.precision(8);
  lr.precision(8);
  loss << r.loss;
  lr << r.lr;
  out << r.epoch << ',' << r.split << ',' << loss.str() << ',' << format_rate(r.accuracy) << ','
      << format_rate(r.precision) << ',' << format_rate(r.recall) << ',' << lr.str() << '\n';
}

}  // namespace cxr
