#include "pslab/tuning.hpp"

#include <algorithm>
#include <cmath>

namespace pslab {

uint64_t compute_umax(const NetworkParams& net, double t_c_seconds, int n_workers,
                      uint64_t model_bytes, bool eq5_literal) {
    net.validate();
    if (t_c_seconds < 0) throw ConfigError("t_c must be non-negative");
    if (n_workers < 1) throw ConfigError("n_workers must be at least 1");
    double raw;
    if (eq5_literal) {
        raw = net.bandwidth_bps * (1.0 + net.loss_rate) * t_c_seconds / n_workers;
    } else {
        raw = net.bandwidth_bps * t_c_seconds / (n_workers * (1.0 + net.loss_rate));
    }
    double cap = 0.8 * static_cast<double>(model_bytes);
    return static_cast<uint64_t>(std::floor(std::min(raw, cap)));
}

uint64_t tune_sgu(SguSchedule& sched, uint64_t epoch_index, double epoch_loss) {
    if (epoch_index < 1) throw ConfigError("epoch index is 1-based");
    if (epoch_loss < 0) throw NumericError("epoch loss must be non-negative");
    sched.epoch = epoch_index;
    if (epoch_index == 1) {
        sched.initial_loss = epoch_loss;
        sched.current_budget = 0;
        return 0;
    }
    if (!sched.initial_loss.has_value()) {
        throw ProtocolError("tune_sgu called for epoch " + std::to_string(epoch_index) +
                            " before epoch 1 recorded the reference loss");
    }
    double reference = *sched.initial_loss;
    double factor;
    if (reference <= 0.0) {
        // Degenerate start: a zero first-epoch loss means training is done;
        // open the budget fully.
        factor = 1.0;
    } else {
        factor = std::clamp(1.0 - epoch_loss / reference, 0.0, 1.0);
    }
    sched.current_budget =
        static_cast<uint64_t>(std::floor(factor * static_cast<double>(sched.u_max)));
    return sched.current_budget;
}

}  // namespace pslab
