#pragma once

#include <cstdint>
#include <optional>

#include "pslab/errors.hpp"

namespace pslab {

struct NetworkParams {
    double bandwidth_bps = 1.25e9;  // bytes per second
    double latency_s = 0.0;
    double loss_rate = 0.0;  // fraction in [0, 1)

    void validate() const {
        if (bandwidth_bps <= 0) throw ConfigError("bandwidth must be positive");
        if (latency_s < 0) throw ConfigError("latency must be non-negative");
        if (loss_rate < 0 || loss_rate >= 1) throw ConfigError("loss_rate must be in [0, 1)");
    }
};

// Upper bound on the bytes deferred to in-computation sync, capped at 80% of
// the model size. The default reading treats loss as shrinking usable
// bandwidth: b * t_c / (N * (1 + lr)). eq5_literal switches to the printed
// form b * (1 + lr) * t_c / N for fidelity experiments.
uint64_t compute_umax(const NetworkParams& net, double t_c_seconds, int n_workers,
                      uint64_t model_bytes, bool eq5_literal = false);

// Per-epoch budget schedule. Epoch 1 records the reference loss and keeps the
// budget at zero; epoch i returns clamp(1 - loss_i / L, 0, 1) * u_max.
struct SguSchedule {
    uint64_t u_max = 0;
    std::optional<double> initial_loss;
    uint64_t current_budget = 0;
    uint64_t epoch = 0;
};

uint64_t tune_sgu(SguSchedule& sched, uint64_t epoch_index, double epoch_loss);

}  // namespace pslab
