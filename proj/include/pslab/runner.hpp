#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "pslab/config.hpp"
#include "pslab/metrics.hpp"
#include "pslab/param.hpp"

namespace pslab {

// Observation points for property tests; all optional.
struct RunHooks {
    // Server finished applying every layer of the iteration.
    std::function<void(uint64_t iteration, const ParamVector& global)> on_iteration_resolved;
    // The iteration's aggregated global delta, ascending layer order.
    std::function<void(uint64_t iteration, const LayerPayload& delta)> on_delta_resolved;
    // Worker became ready to start the next compute (its pull was applied).
    std::function<void(uint64_t iteration, int worker, const ParamVector& params)>
        on_worker_synced;
    // Worker's last outstanding correction for the iteration landed.
    std::function<void(uint64_t iteration, int worker, const ParamVector& params)>
        on_worker_corrected;
    std::function<void(int worker, uint64_t iteration, uint64_t min_done)> on_compute_start;
    // Overlapped protocol only: which bitmap generation split this iteration.
    std::function<void(uint64_t iteration, int worker, uint32_t gib_tag)> on_worker_split;
};

struct RunResult {
    MetricsLog log;
    RunSummary summary;
    uint64_t samples_per_iteration = 0;
    std::string config_echo;
    std::string trace;  // populated when cfg.trace is set
    uint64_t gradient_push_bytes = 0;  // nominal bytes the ingress link delivered
    std::vector<double> worker_weights;
    std::vector<size_t> shard_sizes;
};

RunResult run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {});

struct ComparisonRow {
    SyncModel sync = SyncModel::bsp;
    std::string status = "ok";  // or "failed: <reason>"
    double throughput = 0.0;
    double top1 = 0.0;
    uint64_t iterations_to_top1 = 0;
    double mean_bst = 0.0;
    double rel_throughput_vs_bsp = 0.0;
};

// One run per model over a shared seed; only sync-specific behavior varies.
std::vector<ComparisonRow> run_comparison(const ExperimentConfig& base,
                                          const std::vector<SyncModel>& models);

void emit_report(const std::vector<ComparisonRow>& rows, const std::string& csv_path,
                 std::ostream& text);

}  // namespace pslab
