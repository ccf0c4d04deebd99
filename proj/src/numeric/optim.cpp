#include "pvminer/optim.hpp"

#include <cmath>
#include <string>

namespace pvminer {

void adamw_step(OptimizerState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
    if (params.size() != grads.size()) {
        throw InvalidArgument("adamw_step: " + std::to_string(params.size()) + " parameters but " +
                              std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i])) {
            throw InvalidArgument("adamw_step: gradient shape " + shape_string(grads[i]->shape()) +
                                  " does not match parameter shape " + shape_string(params[i]->shape()));
        }
    }
    if (state.first_moment.empty()) {
        for (const Tensor* p : params) {
            state.first_moment.emplace_back(p->shape());
            state.second_moment.emplace_back(p->shape());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw InvalidArgument("adamw_step: parameter count changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!state.first_moment[i].same_shape(*params[i])) {
            throw InvalidArgument("adamw_step: moment shape mismatch for parameter " + std::to_string(i));
        }
    }

    ++state.step;
    const auto& cfg = state.config;
    const double lr = state.learning_rate;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        auto g = grads[i]->data();
        auto m = state.first_moment[i].data();
        auto v = state.second_moment[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double grad = g[j];
            const double m1 = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad;
            const double m2 = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad * grad;
            m[j] = static_cast<float>(m1);
            v[j] = static_cast<float>(m2);
            const double update = (m1 / bc1) / (std::sqrt(m2 / bc2) + cfg.epsilon);
            double value = p[j];
            value -= lr * cfg.weight_decay * value;
            value -= lr * update;
            p[j] = static_cast<float>(value);
        }
    }
}

std::int64_t LrSchedule::warmup_steps() const {
    return static_cast<std::int64_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
}

double lr_at(const LrSchedule& schedule, std::int64_t step) {
    if (schedule.total_steps < 1) {
        throw InvalidArgument("lr_at: total steps must be positive");
    }
    if (!(schedule.warmup_fraction >= 0.0 && schedule.warmup_fraction < 1.0)) {
        throw InvalidArgument("lr_at: warmup fraction must lie in [0, 1)");
    }
    if (step < 0 || step > schedule.total_steps) {
        throw InvalidArgument("lr_at: step " + std::to_string(step) + " outside [0, " +
                              std::to_string(schedule.total_steps) + "]");
    }
    const std::int64_t warmup = schedule.warmup_steps();
    if (step < warmup) {
        return schedule.peak * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return schedule.peak * static_cast<double>(schedule.total_steps - step) /
           static_cast<double>(schedule.total_steps - warmup);
}

} // namespace pvminer
