#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "pslab/importance.hpp"
#include "pslab/message.hpp"
#include "pslab/param.hpp"
#include "pslab/tuning.hpp"

namespace pslab {

// Weighted mean of per-worker payloads covering the same layer set.
// Accumulation runs in double, ascending worker id, so results are identical
// for any arrival order.
LayerPayload aggregate(const std::vector<const LayerPayload*>& by_worker,
                       const std::vector<double>& weights);
std::vector<float> aggregate_layer(const std::vector<const std::vector<float>*>& contribs,
                                   const std::vector<double>& weights);

// All layers synchronized at the barrier until the first bitmap arrives.
Gib first_iteration_bootstrap(size_t layer_count);

// ---------------------------------------------------------------------------
// Worker side
// ---------------------------------------------------------------------------

struct PendingLayer {
    std::vector<float> base;         // values before the local estimate
    std::vector<float> local_delta;  // what was applied in its place
};

struct WorkerState {
    int worker_id = 0;
    ParamVector params;
    uint64_t iteration = 0;  // iteration currently being computed
    Gib current_gib;
    std::vector<int> current_ics_order;  // deferred layers, least important first
    std::map<int, PendingLayer> pending_local_ics;
    double subset_weight = 1.0;
};

// End-of-barrier update: layers covered by the global payload take the global
// delta; every other layer takes the worker's own local delta and is recorded
// for later correction. The two payloads must not overlap.
void lgp_partial(WorkerState& ws, const LayerPayload& global_rs_delta,
                 const LayerPayload& local_ics_delta);

// Replace a local estimate with the now-known global delta. Realized as
// base + global_delta so the corrected value is bit-identical to a single
// global update; the layer leaves the pending set.
void lgp_correct(WorkerState& ws, const LayerPayload& global_chunk);

// Split one iteration's delta into the barrier payload and the deferred
// chunk sequence (least important layers first, byte-balanced).
struct IterationSplit {
    LayerPayload rs;
    std::vector<LayerPayload> ics_chunks;
};
IterationSplit split_for_sync(const GradVector& delta, const Gib& gib,
                              const std::vector<int>& ics_order, int n_chunks);

class OspWorker {
public:
    OspWorker(int worker_id, ParamVector init_params, double subset_weight);

    struct ComputeOutput {
        Message rs_push;
        Message loss_report;
        std::vector<Message> ics_chunks;  // send one per chunk period
    };
    // Compute for `iteration` finished with additive update `delta`.
    ComputeOutput on_compute_done(uint64_t iteration, const GradVector& delta, double loss,
                                  int n_chunks);

    // True when the worker may start the next compute (the pull was applied;
    // a pull arriving with corrections still outstanding is stashed).
    bool on_pull_important(const Message& pull);
    void on_ics_global_chunk(const Message& chunk);
    // A stashed pull whose corrections have all landed can be applied now.
    bool stashed_pull_ready() const {
        return stashed_pull_.has_value() && st_.pending_local_ics.empty();
    }
    void apply_stashed_pull();
    void on_gib_update(const Message& msg);

    const WorkerState& state() const { return st_; }
    const ParamVector& params() const { return st_.params; }
    uint64_t iteration() const { return st_.iteration; }
    bool pending_empty() const { return st_.pending_local_ics.empty(); }

private:
    void apply_pull(const Message& pull);

    WorkerState st_;
    GradVector last_delta_;  // full delta of the iteration awaiting its pull
    bool have_delta_ = false;
    std::optional<Message> stashed_pull_;
};

// ---------------------------------------------------------------------------
// Server side
// ---------------------------------------------------------------------------

struct OspServerOptions {
    uint64_t iterations_per_epoch = 1;
    std::optional<uint64_t> fixed_budget_bytes;  // bypasses the tuner when set
};

struct ServerState {
    ParamVector global_params;
    SguSchedule sched;
    Gib next_gib;
    uint64_t resolved_count = 0;  // iterations fully aggregated and applied
    uint64_t dropped_stale = 0;
};

class OspServer {
public:
    OspServer(ParamVector global_params, std::vector<double> weights, SguSchedule sched,
              OspServerOptions opts);

    struct Output {
        std::optional<Message> pull_important;  // broadcast after agg delay
        std::optional<Message> ics_broadcast;   // broadcast immediately
        std::optional<Message> gib_update;      // broadcast after GIB calc delay
    };

    Output on_push_important(const Message& msg);
    Output on_push_ics_chunk(const Message& msg);
    void on_loss_report(const Message& msg);
    // Re-bound the deferral budget, e.g. from measured compute times.
    void set_umax(uint64_t u_max) { st_.sched.u_max = u_max; }

    const ParamVector& global_params() const { return st_.global_params; }
    const ServerState& state() const { return st_; }
    uint64_t resolved_count() const { return st_.resolved_count; }
    uint64_t dropped_stale() const { return st_.dropped_stale; }
    // Budget in force for a 1-based epoch (0 for epoch 1 unless overridden).
    uint64_t budget_for_epoch(uint64_t epoch) const;
    uint64_t epoch_of_iteration(uint64_t iteration) const {
        return iteration / opts_.iterations_per_epoch + 1;
    }

    // Aggregated global delta of a resolved iteration, ascending layer order.
    // Consumed by tests and the metrics reconciliation.
    std::optional<LayerPayload> take_resolved_delta(uint64_t iteration);

private:
    struct LayerAgg {
        std::vector<std::vector<float>> contrib;  // indexed by worker
        int arrived = 0;
        bool applied = false;
    };
    struct IterationAgg {
        std::map<int, LayerAgg> layers;
        int rs_msgs = 0;
        bool barrier_emitted = false;
        size_t layers_applied = 0;
        LayerPayload applied_deltas;  // for GIB importance and observers
    };

    bool is_stale(uint64_t iteration) const;
    void add_contribution(IterationAgg& agg, int worker, const LayerPayload& payload);
    std::vector<float> finish_layer(IterationAgg& agg, int layer_id);
    void try_close_barrier(uint64_t iteration, Output& out);
    void check_resolution(uint64_t iteration, Output& out);

    ServerState st_;
    std::vector<double> weights_;
    OspServerOptions opts_;
    std::map<uint64_t, IterationAgg> iters_;
    std::map<uint64_t, LayerPayload> resolved_deltas_;
    std::map<uint64_t, std::pair<double, uint64_t>> epoch_loss_;  // sum, count
    std::map<uint64_t, uint64_t> epoch_budget_;                   // tuned budgets
    std::vector<int> next_ics_order_;
};

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

class BspWorker {
public:
    BspWorker(int worker_id, ParamVector init_params, double subset_weight);
    Message on_compute_done(uint64_t iteration, const GradVector& delta);
    void on_pull_full(const Message& pull);  // replaces parameters
    const ParamVector& params() const { return params_; }

private:
    int worker_id_;
    ParamVector params_;
    double weight_;
};

class BspServer {
public:
    BspServer(ParamVector global_params, std::vector<double> weights);
    // Returns the broadcast once all workers pushed for the iteration.
    std::optional<Message> on_push_full(const Message& msg);
    const ParamVector& global_params() const { return global_; }
    std::optional<LayerPayload> take_resolved_delta(uint64_t iteration);

private:
    ParamVector global_;
    std::vector<double> weights_;
    uint64_t next_iteration_ = 0;
    std::map<uint64_t, std::vector<std::optional<LayerPayload>>> buffers_;
    std::map<uint64_t, LayerPayload> resolved_deltas_;
};

// Asynchronous server: applies each worker's weighted delta on arrival and
// returns the updated parameters to that worker alone.
class AspServer {
public:
    AspServer(ParamVector global_params, std::vector<double> weights);
    Message on_push_full(const Message& msg);
    const ParamVector& global_params() const { return global_; }

private:
    ParamVector global_;
    std::vector<double> weights_;
};

// Round-robin schedule: worker k pushes in slot (k + round) mod N; one push
// occupies the ingress at a time and each pull pipelines behind it.
class R2spServer {
public:
    R2spServer(ParamVector global_params, std::vector<double> weights);

    // Worker finished compute for `round`. Returns the worker id to start
    // pushing now, if the slot owner just became ready.
    std::optional<int> on_worker_ready(int worker, uint64_t round);
    struct PushResult {
        Message pull;                  // updated params for the pusher
        std::optional<int> next_push;  // next slot owner, if already ready
    };
    PushResult on_push_full(const Message& msg);

    const ParamVector& global_params() const { return global_; }
    uint64_t round() const { return round_; }

private:
    int worker_for_slot(int slot) const;

    ParamVector global_;
    std::vector<double> weights_;
    uint64_t round_ = 0;
    int slot_ = 0;
    bool push_in_flight_ = false;
    std::map<uint64_t, std::vector<bool>> ready_;
};

}  // namespace pslab
