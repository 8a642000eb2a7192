#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pslab/learner.hpp"
#include "pslab/sim.hpp"
#include "pslab/tuning.hpp"

namespace pslab {

enum class SyncModel { bsp, asp, ssp, r2sp, osp };

const char* sync_model_name(SyncModel m);
SyncModel sync_model_from_name(const std::string& name);

enum class WorkloadKind { mlp, synth };

// Fully-resolved run description. Every key is settable from a config file or
// a CLI flag through set_key(); see config_keys() for the documented set.
struct ExperimentConfig {
    SyncModel sync = SyncModel::bsp;
    int workers = 4;

    // Workload: a real MLP over a dataset, or a synthetic gradient source for
    // pure timing studies (real payload bytes, no matmuls).
    WorkloadKind workload = WorkloadKind::mlp;
    std::vector<int> model_widths = {8, 32, 4};
    Activation activation = Activation::relu;
    Loss loss_fn = Loss::softmax_cross_entropy;
    std::vector<size_t> synth_layer_elems;  // synth workload layer sizes
    uint32_t bytes_per_element = 4;
    uint64_t synth_iters_per_epoch = 50;

    // Dataset (mlp workload only).
    size_t dataset_n = 1024;
    size_t dataset_d = 8;
    size_t dataset_classes = 4;
    double dataset_sep = 6.0;
    std::string dataset_csv;       // overrides the synthetic source when set
    double eval_fraction = 0.2;

    // Network and delay knobs keep their flag units; SI values are derived.
    double bandwidth_gbps = 10.0;
    double latency_us = 100.0;
    double loss_rate = 0.0;
    double tc_ms = 10.0;
    double jitter = 0.0;
    std::vector<double> straggler_mult;

    double agg_delay_ms = 0.0;
    double gib_calc_delay_ms = 0.0;
    bool gib_push_negligible = true;

    int ssp_staleness = 2;
    double chunk_period_ms = -1.0;  // <= 0: quarter of the compute time
    bool eq5_literal = false;
    int64_t sgu_fixed_budget = -1;  // >= 0 pins the deferred-byte budget
    // false: budget bound uses the configured compute time; true: re-measure
    // it each epoch from the simulated durations.
    bool umax_measured = false;

    double lr = 0.1;
    int batch = 32;
    int epochs = 10;
    uint64_t seed = 1;

    std::string out_dir;
    bool trace = false;

    void validate() const;  // names the offending key
    double t_c_seconds() const { return tc_ms * 1e-3; }
    double chunk_period_seconds() const {
        return chunk_period_ms > 0 ? chunk_period_ms * 1e-3 : t_c_seconds() / 4.0;
    }
    NetworkParams net() const {
        return NetworkParams{bandwidth_gbps * 1e9 / 8.0, latency_us * 1e-6, loss_rate};
    }
    ServerDelayProfile delays() const {
        return ServerDelayProfile{agg_delay_ms * 1e-3, gib_calc_delay_ms * 1e-3,
                                  gib_push_negligible};
    }
    // Canonical key = value echo, one key per line, fixed order.
    std::string echo() const;
};

// Sets one key from its string form; throws ConfigError naming the key for
// unknown names, bad types, or constraint violations.
void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// `key = value` lines; '#' comments and blank lines ignored.
ExperimentConfig load_config_file(const std::string& path);

// File first (when non-empty), then flag overrides, then validation. The
// returned echo notes which keys the flags overrode.
struct ParsedConfig {
    ExperimentConfig cfg;
    std::vector<std::string> overridden;
};
ParsedConfig parse_config(const std::string& file_path,
                          const std::vector<std::pair<std::string, std::string>>& flag_overrides);

std::vector<std::string> config_keys();

}  // namespace pslab
