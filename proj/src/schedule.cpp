#include "cxr/schedule.hpp"

#include <stdexcept>

namespace cxr {

void ScheduleSpec::validate() const {
  if (!(peak_lr > 0.0)) throw std::invalid_argument("schedule: peak learning rate must be positive");
  if (warmup_steps > decay_start_step) {
    throw std::invalid_argument("schedule: warmup steps exceed the decay start step");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("schedule: decay factor must lie in (0,1]");
  }
}

double lr_at(std::uint64_t step, const ScheduleSpec& schedule) {
  if (step < schedule.warmup_steps) {
    return schedule.peak_lr * static_cast<double>(step + 1) /
           static_cast<double>(schedule.warmup_steps);
  }
  if (step < schedule.decay_start_step) return schedule.peak_lr;
  return schedule.peak_lr * schedule.decay_factor;
}

}  // namespace cxr
