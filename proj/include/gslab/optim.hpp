#pragma once

#include "gslab/resnet.hpp"

namespace gslab {

enum class OptimizerKind { sgd, adam };

// Moment buffers are kept per parameter slot, aligned with the registry order
// of collect_params. Adam uses bias-corrected first and second moments.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  long step = 0;
  std::vector<ArrayX> m;
  std::vector<ArrayX> v;
};

OptimizerState make_optimizer(OptimizerKind kind, Scalar lr,
                              const std::vector<ParamRef>& params);

// Applies one update in place from each parameter's gradient slot.
// Throws on non-finite gradients.
void optimizer_step(OptimizerState& state, const std::vector<ParamRef>& params);

enum class ScheduleKind { constant, step_decay, cosine };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  Scalar base_lr = 1e-3;
  Index step_epochs = 1;  // step_decay: epochs between decays
  Scalar gamma = 0.1;     // step_decay factor
  Index t_max = 1;        // cosine horizon
  Scalar eta_min = 0.0;   // cosine floor
};

// Learning rate for a given epoch. Pure function; epoch must be >= 0 and,
// for cosine, <= t_max.
Scalar lr_at(const LrSchedule& schedule, Index epoch);

}  // namespace gslab
