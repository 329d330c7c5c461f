#include "gslab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gslab {

OptimizerState make_optimizer(OptimizerKind kind, Scalar lr,
                              const std::vector<ParamRef>& params) {
  if (lr <= 0.0) throw std::invalid_argument("make_optimizer: lr must be positive");
  OptimizerState s;
  s.kind = kind;
  s.lr = lr;
  if (kind == OptimizerKind::adam) {
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const ParamRef& p : params) {
      s.m.push_back(ArrayX::Zero(p.size));
      s.v.push_back(ArrayX::Zero(p.size));
    }
  }
  return s;
}

void optimizer_step(OptimizerState& state, const std::vector<ParamRef>& params) {
  if (state.kind == OptimizerKind::adam && state.m.size() != params.size()) {
    throw std::invalid_argument("optimizer_step: state was built for a different parameter set");
  }
  for (const ParamRef& p : params) {
    if (!ConstMapVector(p.grad, p.size).allFinite()) {
      throw std::runtime_error("optimizer_step: non-finite gradient in " + p.name);
    }
  }
  ++state.step;
  if (state.kind == OptimizerKind::sgd) {
    for (const ParamRef& p : params) {
      MapVector(p.value, p.size) -= state.lr * ConstMapVector(p.grad, p.size);
    }
    return;
  }
  const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.step));
  const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    if (state.m[i].size() != p.size) {
      throw std::invalid_argument("optimizer_step: parameter size changed under the optimizer");
    }
    Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> g(p.grad, p.size);
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.square();
    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> value(p.value, p.size);
    value -= state.lr * (state.m[i] / bc1) / ((state.v[i] / bc2).sqrt() + state.eps);
  }
}

Scalar lr_at(const LrSchedule& schedule, Index epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  switch (schedule.kind) {
    case ScheduleKind::constant:
      return schedule.base_lr;
    case ScheduleKind::step_decay: {
      if (schedule.step_epochs <= 0) {
        throw std::invalid_argument("lr_at: step_epochs must be positive");
      }
      const Index decays = epoch / schedule.step_epochs;
      return schedule.base_lr * std::pow(schedule.gamma, static_cast<Scalar>(decays));
    }
    case ScheduleKind::cosine: {
      if (schedule.t_max <= 0) throw std::invalid_argument("lr_at: t_max must be positive");
      if (epoch > schedule.t_max) throw std::invalid_argument("lr_at: epoch beyond t_max");
      const Scalar phase = std::numbers::pi * static_cast<Scalar>(epoch) /
                           static_cast<Scalar>(schedule.t_max);
      return schedule.eta_min +
             0.5 * (schedule.base_lr - schedule.eta_min) * (1.0 + std::cos(phase));
    }
  }
  throw std::logic_error("lr_at: unknown schedule kind");
}

}  // namespace gslab
