#pragma once

#include <cstdint>

namespace cxr {

// Three-stage learning rate: linear warmup, plateau at the peak, one decayed plateau.
struct ScheduleSpec {
  double peak_lr = 1e-3;
  std::uint64_t warmup_steps = 0;
  std::uint64_t decay_start_step = 0;
  double decay_factor = 0.1;

  // Throws std::invalid_argument when warmup > decay start, the peak is not
  // positive, or the factor is outside (0,1].
  void validate() const;
};

double lr_at(std::uint64_t step, const ScheduleSpec& schedule);

}  // namespace cxr
