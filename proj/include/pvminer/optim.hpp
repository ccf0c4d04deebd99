#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pvminer/tensor.hpp"

namespace pvminer {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

/// Moment accumulators for decoupled-weight-decay Adam. Moments are created
/// lazily on the first step and must keep their shapes afterwards.
struct OptimizerState {
    AdamWConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::int64_t step = 0;
    double learning_rate = 0.0;

    OptimizerState() = default;
    explicit OptimizerState(AdamWConfig cfg) : config(cfg) {}
};

/// One AdamW update. Uses state.learning_rate; increments state.step first so
/// bias correction sees step >= 1. Weight decay is applied as
/// param -= lr * wd * param, independent of the gradient moments.
void adamw_step(OptimizerState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads);

/// Linear warmup to the peak rate, then linear decay to zero at total_steps.
struct LrSchedule {
    double peak = 5e-5;
    std::int64_t total_steps = 1;
    double warmup_fraction = 0.1;

    std::int64_t warmup_steps() const;
};

double lr_at(const LrSchedule& schedule, std::int64_t step);

} // namespace pvminer
