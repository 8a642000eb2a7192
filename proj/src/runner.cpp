#include "pslab/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include "pslab/learner.hpp"
#include "pslab/protocol.hpp"
#include "pslab/rng.hpp"
#include "pslab/sim.hpp"

namespace pslab {

namespace {

// Stop once the best accuracy of the trailing window no longer beats the
// best before it by at least 0.1 accuracy points.
constexpr int kConvergenceWindow = 10;
constexpr double kConvergenceDelta = 0.001;

struct PendingCompute {
    double loss = 0.0;
    GradVector delta;
};

class Orchestrator {
public:
    Orchestrator(const ExperimentConfig& cfg, const RunHooks& hooks)
        : cfg_(cfg), hooks_(hooks) {
        setup();
    }

    RunResult run();

private:
    void setup();
    void setup_dataset();
    void start_compute(int worker, uint64_t iteration);
    PendingCompute compute_numeric(int worker, uint64_t iteration);
    Batch batch_for(int worker, uint64_t iteration);
    const ParamVector& worker_params(int w) const;
    const ParamVector& global_params() const;

    void handle_compute_done(int worker, uint64_t iteration);
    void handle_server_message(const Message& msg);
    void handle_worker_message(int worker, const Message& msg);
    void handle_osp_server_output(OspServer::Output&& out);
    void worker_ready(int worker);
    void maybe_start_next(int worker, uint64_t next_iteration);
    void release_parked();
    void mark_resolved_baseline(uint64_t iteration);
    void after_resolution(uint64_t iteration);
    void drain_osp_resolutions();

    int64_t defer(double at, std::function<void()> action);
    void send_push(const Message& msg);

    uint64_t epoch_of(uint64_t iteration) const { return iteration / ipe_ + 1; }
    uint64_t min_done() const;

    ExperimentConfig cfg_;
    RunHooks hooks_;

    PartitionPtr part_;
    MlpSpec mlp_;
    Dataset train_, eval_;
    std::vector<std::vector<size_t>> shards_;       // global row ids per worker
    std::vector<double> weights_;
    uint64_t ipe_ = 1;
    uint64_t total_iters_ = 1;
    int n_chunks_ = 1;
    double chunk_period_ = 0.0;

    std::unique_ptr<Simulator> sim_;
    std::unique_ptr<BstTracker> bst_;
    std::ostringstream trace_;

    // Engines; only the ones for cfg_.sync are populated. The full-push
    // worker is shared by bsp/asp/ssp/r2sp.
    std::vector<std::unique_ptr<OspWorker>> osp_workers_;
    std::unique_ptr<OspServer> osp_server_;
    std::vector<std::unique_ptr<BspWorker>> full_workers_;
    std::unique_ptr<BspServer> bsp_server_;
    std::unique_ptr<AspServer> asp_server_;
    std::unique_ptr<R2spServer> r2sp_server_;

    std::vector<PendingCompute> pending_compute_;
    std::vector<Message> r2sp_cached_push_;
    std::vector<std::vector<Message>> osp_pending_chunks_;
    std::vector<uint64_t> done_count_;
    std::set<int> parked_;

    std::map<int64_t, std::function<void()>> timer_actions_;
    int64_t next_timer_id_ = 0;

    // Per-iteration accumulation.
    std::vector<double> loss_sum_;
    std::vector<int> loss_count_;
    std::vector<uint64_t> rs_bytes_, ics_bytes_;
    std::vector<uint64_t> budget_bytes_;
    std::vector<uint64_t> dropped_;
    std::map<uint64_t, double> eval_by_iter_;
    std::vector<int> applied_count_;  // baseline resolution tracking
    uint64_t osp_resolved_seen_ = 0;
    uint64_t osp_dropped_seen_ = 0;
    std::vector<double> epoch_accuracy_;
    bool stop_ = false;

    // Measured compute durations per epoch, for the re-measured budget bound.
    std::vector<double> compute_started_;
    std::map<uint64_t, std::pair<double, uint64_t>> epoch_compute_;  // sum, count

    std::map<std::pair<int, uint64_t>, std::vector<size_t>> perm_cache_;
};

void Orchestrator::setup_dataset() {
    Dataset full = cfg_.dataset_csv.empty()
                       ? synth_dataset(cfg_.seed, cfg_.dataset_n, cfg_.dataset_d,
                                       cfg_.dataset_classes, cfg_.dataset_sep)
                       : load_csv(cfg_.dataset_csv);
    size_t eval_n = static_cast<size_t>(std::floor(cfg_.eval_fraction *
                                                   static_cast<double>(full.n)));
    std::vector<size_t> order(full.n);
    for (size_t i = 0; i < full.n; ++i) order[i] = i;
    Rng rng(derive_seed(cfg_.seed, seed_purpose::kEvalSplit));
    rng.shuffle(order);

    auto take = [&](size_t from, size_t count) {
        Dataset ds;
        ds.d = full.d;
        ds.classes = full.classes;
        ds.n = count;
        ds.features.resize(count * full.d);
        ds.labels.resize(count);
        for (size_t i = 0; i < count; ++i) {
            size_t src = order[from + i];
            std::copy(full.row(src), full.row(src) + full.d, ds.features.begin() + i * full.d);
            ds.labels[i] = full.labels[src];
        }
        return ds;
    };
    eval_ = take(0, eval_n);
    train_ = take(eval_n, full.n - eval_n);
    if (train_.n < static_cast<size_t>(cfg_.workers)) {
        throw ConfigError("dataset_n: training split smaller than the worker count");
    }
}

void Orchestrator::setup() {
    cfg_.validate();
    if (!(cfg_.tc_ms > 0)) throw ConfigError("tc_ms: simulated runs need a positive compute time");
    int n = cfg_.workers;

    if (cfg_.workload == WorkloadKind::mlp) {
        mlp_.widths = cfg_.model_widths;
        mlp_.activation = cfg_.activation;
        mlp_.loss = cfg_.loss_fn;
        mlp_.validate();
        setup_dataset();
        part_ = mlp_partition(mlp_, cfg_.bytes_per_element);
        // Contiguous shards differing by at most one sample.
        size_t base = train_.n / static_cast<size_t>(n);
        size_t extra = train_.n % static_cast<size_t>(n);
        size_t at = 0;
        for (int w = 0; w < n; ++w) {
            size_t len = base + (static_cast<size_t>(w) < extra ? 1 : 0);
            std::vector<size_t> shard(len);
            for (size_t i = 0; i < len; ++i) shard[i] = at + i;
            at += len;
            shards_.push_back(std::move(shard));
            weights_.push_back(static_cast<double>(len) / static_cast<double>(train_.n));
        }
        size_t max_shard = shards_.front().size();
        ipe_ = (max_shard + static_cast<size_t>(cfg_.batch) - 1) /
               static_cast<size_t>(cfg_.batch);
    } else {
        part_ = make_partition(cfg_.synth_layer_elems, cfg_.bytes_per_element);
        weights_.assign(static_cast<size_t>(n), 1.0 / static_cast<double>(n));
        ipe_ = cfg_.synth_iters_per_epoch;
    }
    total_iters_ = static_cast<uint64_t>(cfg_.epochs) * ipe_;

    chunk_period_ = cfg_.chunk_period_seconds();
    n_chunks_ = std::max(1, static_cast<int>(std::floor(cfg_.t_c_seconds() / chunk_period_ +
                                                        1e-9)));

    ComputeProfile profile;
    profile.t_c_base = cfg_.t_c_seconds();
    profile.straggler_multipliers = cfg_.straggler_mult;
    profile.jitter_fraction = cfg_.jitter;
    profile.seed = cfg_.seed;
    sim_ = std::make_unique<Simulator>(cfg_.net(), profile, n, part_);
    bst_ = std::make_unique<BstTracker>(n);
    if (cfg_.trace) sim_->set_trace(&trace_);

    sim_->on_compute_done = [this](int w, uint64_t it) { handle_compute_done(w, it); };
    sim_->on_message_at_server = [this](const Message& m) { handle_server_message(m); };
    sim_->on_message_at_worker = [this](int w, const Message& m) {
        handle_worker_message(w, m);
    };
    sim_->on_timer = [this](int64_t tag, uint64_t) {
        auto it = timer_actions_.find(tag);
        if (it == timer_actions_.end()) throw SimulatorBug("timer fired without an action");
        auto action = std::move(it->second);
        timer_actions_.erase(it);
        action();
    };

    ParamVector init = cfg_.workload == WorkloadKind::mlp
                           ? init_params(mlp_, cfg_.seed, part_)
                           : zeros_params(part_);
    switch (cfg_.sync) {
        case SyncModel::osp: {
            SguSchedule sched;
            sched.u_max = compute_umax(cfg_.net(), cfg_.t_c_seconds(), n,
                                       part_->total_bytes(), cfg_.eq5_literal);
            OspServerOptions opts;
            opts.iterations_per_epoch = ipe_;
            if (cfg_.sgu_fixed_budget >= 0) {
                opts.fixed_budget_bytes = static_cast<uint64_t>(cfg_.sgu_fixed_budget);
            }
            osp_server_ = std::make_unique<OspServer>(init, weights_, sched, opts);
            for (int w = 0; w < n; ++w) {
                osp_workers_.push_back(std::make_unique<OspWorker>(w, init, weights_[w]));
            }
            break;
        }
        case SyncModel::bsp:
            bsp_server_ = std::make_unique<BspServer>(init, weights_);
            break;
        case SyncModel::asp:
        case SyncModel::ssp:
            asp_server_ = std::make_unique<AspServer>(init, weights_);
            break;
        case SyncModel::r2sp:
            r2sp_server_ = std::make_unique<R2spServer>(init, weights_);
            break;
    }
    if (cfg_.sync != SyncModel::osp) {
        for (int w = 0; w < n; ++w) {
            full_workers_.push_back(std::make_unique<BspWorker>(w, init, weights_[w]));
        }
    }

    pending_compute_.resize(static_cast<size_t>(n));
    compute_started_.assign(static_cast<size_t>(n), 0.0);
    r2sp_cached_push_.resize(static_cast<size_t>(n));
    osp_pending_chunks_.resize(static_cast<size_t>(n));
    done_count_.assign(static_cast<size_t>(n), 0);
    loss_sum_.assign(total_iters_, 0.0);
    loss_count_.assign(total_iters_, 0);
    rs_bytes_.assign(total_iters_, 0);
    ics_bytes_.assign(total_iters_, 0);
    budget_bytes_.assign(total_iters_, 0);
    dropped_.assign(total_iters_, 0);
    applied_count_.assign(total_iters_, 0);
}

const ParamVector& Orchestrator::worker_params(int w) const {
    if (cfg_.sync == SyncModel::osp) return osp_workers_[static_cast<size_t>(w)]->params();
    return full_workers_[static_cast<size_t>(w)]->params();
}

const ParamVector& Orchestrator::global_params() const {
    switch (cfg_.sync) {
        case SyncModel::osp: return osp_server_->global_params();
        case SyncModel::bsp: return bsp_server_->global_params();
        case SyncModel::asp:
        case SyncModel::ssp: return asp_server_->global_params();
        case SyncModel::r2sp: return r2sp_server_->global_params();
    }
    throw SimulatorBug("unreachable");
}

Batch Orchestrator::batch_for(int worker, uint64_t iteration) {
    uint64_t epoch = epoch_of(iteration);
    uint64_t pos = iteration % ipe_;
    const auto& shard = shards_[static_cast<size_t>(worker)];
    auto key = std::make_pair(worker, epoch);
    auto it = perm_cache_.find(key);
    if (it == perm_cache_.end()) {
        it = perm_cache_
                 .emplace(key, shuffle_epoch(shard.size(), cfg_.seed, epoch,
                                             static_cast<uint64_t>(worker)))
                 .first;
        // Keep at most the two most recent epochs per worker.
        if (epoch >= 2) perm_cache_.erase(std::make_pair(worker, epoch - 2));
    }
    const auto& perm = it->second;
    Batch batch;
    batch.reserve(static_cast<size_t>(cfg_.batch));
    for (int j = 0; j < cfg_.batch; ++j) {
        size_t idx = (pos * static_cast<uint64_t>(cfg_.batch) + static_cast<uint64_t>(j)) %
                     shard.size();
        batch.push_back(shard[perm[idx]]);
    }
    return batch;
}

PendingCompute Orchestrator::compute_numeric(int worker, uint64_t iteration) {
    PendingCompute out;
    if (cfg_.workload == WorkloadKind::mlp) {
        Batch batch = batch_for(worker, iteration);
        auto fb = forward_backward(mlp_, worker_params(worker), train_, batch);
        out.loss = fb.loss;
        out.delta = sgd_delta(fb.grad, lr_at_epoch(cfg_.lr, epoch_of(iteration)));
    } else {
        // Synthetic workload: deterministic pseudo-gradients and a loss curve
        // that decays per epoch, so the tuner sees realistic inputs.
        out.delta = zeros_grads(part_);
        Rng rng(derive_seed(cfg_.seed, seed_purpose::kSynthGrad, static_cast<uint64_t>(worker),
                            iteration));
        for (float& v : out.delta.values) {
            v = static_cast<float>(rng.uniform(-1e-3, 1e-3));
        }
        out.loss = std::pow(0.7, static_cast<double>(epoch_of(iteration) - 1));
    }
    return out;
}

void Orchestrator::start_compute(int worker, uint64_t iteration) {
    if (hooks_.on_compute_start) hooks_.on_compute_start(worker, iteration, min_done());
    // The gradient depends on the parameters at compute start; corrections
    // landing mid-compute only affect the next iteration.
    pending_compute_[static_cast<size_t>(worker)] = compute_numeric(worker, iteration);
    compute_started_[static_cast<size_t>(worker)] = sim_->now();
    sim_->start_compute(worker, iteration);
}

uint64_t Orchestrator::min_done() const {
    uint64_t m = done_count_.empty() ? 0 : done_count_[0];
    for (uint64_t d : done_count_) m = std::min(m, d);
    return m;
}

int64_t Orchestrator::defer(double at, std::function<void()> action) {
    int64_t id = next_timer_id_++;
    timer_actions_.emplace(id, std::move(action));
    sim_->schedule_timer(at, id);
    return id;
}

void Orchestrator::send_push(const Message& msg) {
    uint64_t size = message_size_bytes(msg, *part_);
    if (msg.kind == MsgKind::PushIcsChunk) {
        ics_bytes_[msg.iteration] += size;
    } else if (msg.kind != MsgKind::LossReport) {
        rs_bytes_[msg.iteration] += size;
    }
    sim_->send_to_server(msg);
}

void Orchestrator::handle_compute_done(int worker, uint64_t iteration) {
    bst_->worker_compute_done(worker, iteration, sim_->now());
    PendingCompute& pc = pending_compute_[static_cast<size_t>(worker)];
    loss_sum_[iteration] += pc.loss;
    loss_count_[iteration] += 1;

    if (cfg_.sync == SyncModel::osp && cfg_.umax_measured) {
        uint64_t epoch = epoch_of(iteration);
        auto& [sum, count] = epoch_compute_[epoch];
        sum += sim_->now() - compute_started_[static_cast<size_t>(worker)];
        count += 1;
        if (count == ipe_ * static_cast<uint64_t>(cfg_.workers)) {
            // Epoch fully measured; the bound feeds the tune at resolution.
            double mean_tc = sum / static_cast<double>(count);
            osp_server_->set_umax(compute_umax(cfg_.net(), mean_tc, cfg_.workers,
                                               part_->total_bytes(), cfg_.eq5_literal));
            epoch_compute_.erase(epoch);
        }
    }

    switch (cfg_.sync) {
        case SyncModel::bsp:
        case SyncModel::asp:
        case SyncModel::ssp: {
            Message push =
                full_workers_[static_cast<size_t>(worker)]->on_compute_done(iteration, pc.delta);
            send_push(push);
            break;
        }
        case SyncModel::r2sp: {
            r2sp_cached_push_[static_cast<size_t>(worker)] =
                full_workers_[static_cast<size_t>(worker)]->on_compute_done(iteration, pc.delta);
            auto grant = r2sp_server_->on_worker_ready(worker, iteration);
            if (grant) send_push(r2sp_cached_push_[static_cast<size_t>(*grant)]);
            break;
        }
        case SyncModel::osp: {
            if (hooks_.on_worker_split) {
                hooks_.on_worker_split(
                    iteration, worker,
                    osp_workers_[static_cast<size_t>(worker)]->state().current_gib.iteration_tag);
            }
            auto out = osp_workers_[static_cast<size_t>(worker)]->on_compute_done(
                iteration, pc.delta, pc.loss, n_chunks_);
            send_push(out.rs_push);
            sim_->send_to_server(out.loss_report);
            osp_pending_chunks_[static_cast<size_t>(worker)] = std::move(out.ics_chunks);
            break;
        }
    }
    pc.delta.values.clear();
}

void Orchestrator::handle_osp_server_output(OspServer::Output&& out) {
    if (out.pull_important) {
        defer(sim_->now() + cfg_.agg_delay_ms * 1e-3,
              [this, pull = *out.pull_important] { sim_->broadcast_to_workers(pull); });
    }
    if (out.ics_broadcast) {
        sim_->broadcast_to_workers(*out.ics_broadcast);
    }
    if (out.gib_update) {
        defer(sim_->now() + cfg_.gib_calc_delay_ms * 1e-3, [this, gib = *out.gib_update] {
            if (cfg_.gib_push_negligible) {
                for (auto& w : osp_workers_) w->on_gib_update(gib);
            } else {
                sim_->broadcast_to_workers(gib);
            }
        });
    }
    drain_osp_resolutions();
}

void Orchestrator::drain_osp_resolutions() {
    while (osp_resolved_seen_ < osp_server_->resolved_count()) {
        uint64_t iter = osp_resolved_seen_++;
        if (iter < total_iters_) {
            budget_bytes_[iter] =
                osp_server_->budget_for_epoch(osp_server_->epoch_of_iteration(iter));
            uint64_t dropped_now = osp_server_->dropped_stale();
            dropped_[iter] = dropped_now - osp_dropped_seen_;
            osp_dropped_seen_ = dropped_now;
        }
        auto delta = osp_server_->take_resolved_delta(iter);
        if (delta && hooks_.on_delta_resolved) hooks_.on_delta_resolved(iter, *delta);
        if (hooks_.on_iteration_resolved) {
            hooks_.on_iteration_resolved(iter, osp_server_->global_params());
        }
        after_resolution(iter);
    }
}

void Orchestrator::mark_resolved_baseline(uint64_t iteration) {
    if (hooks_.on_iteration_resolved) {
        hooks_.on_iteration_resolved(iteration, global_params());
    }
    after_resolution(iteration);
}

void Orchestrator::after_resolution(uint64_t iteration) {
    if (cfg_.workload != WorkloadKind::mlp || eval_.n == 0) return;
    if ((iteration + 1) % ipe_ != 0) return;
    double acc = evaluate(mlp_, global_params(), eval_);
    eval_by_iter_[iteration] = acc;
    epoch_accuracy_.push_back(acc);
    size_t e = epoch_accuracy_.size();
    if (e >= static_cast<size_t>(kConvergenceWindow) + 1) {
        double best_recent = 0.0, best_before = 0.0;
        for (size_t i = 0; i < e; ++i) {
            double a = epoch_accuracy_[i];
            if (i + static_cast<size_t>(kConvergenceWindow) >= e) {
                best_recent = std::max(best_recent, a);
            } else {
                best_before = std::max(best_before, a);
            }
        }
        if (best_recent < best_before + kConvergenceDelta) stop_ = true;
    }
}

void Orchestrator::handle_server_message(const Message& msg) {
    switch (cfg_.sync) {
        case SyncModel::bsp: {
            auto pull = bsp_server_->on_push_full(msg);
            if (pull) {
                auto delta = bsp_server_->take_resolved_delta(msg.iteration);
                if (delta && hooks_.on_delta_resolved) {
                    hooks_.on_delta_resolved(msg.iteration, *delta);
                }
                mark_resolved_baseline(msg.iteration);
                Message out = std::move(*pull);
                defer(sim_->now() + cfg_.agg_delay_ms * 1e-3,
                      [this, out = std::move(out)] { sim_->broadcast_to_workers(out); });
            }
            break;
        }
        case SyncModel::asp:
        case SyncModel::ssp: {
            Message pull = asp_server_->on_push_full(msg);
            if (++applied_count_[msg.iteration] == cfg_.workers) {
                mark_resolved_baseline(msg.iteration);
            }
            int dest = msg.from_worker;
            defer(sim_->now() + cfg_.agg_delay_ms * 1e-3,
                  [this, dest, pull = std::move(pull)] { sim_->send_to_worker(dest, pull); });
            break;
        }
        case SyncModel::r2sp: {
            auto res = r2sp_server_->on_push_full(msg);
            if (++applied_count_[msg.iteration] == cfg_.workers) {
                mark_resolved_baseline(msg.iteration);
            }
            int dest = msg.from_worker;
            Message pull = std::move(res.pull);
            defer(sim_->now() + cfg_.agg_delay_ms * 1e-3,
                  [this, dest, pull = std::move(pull)] { sim_->send_to_worker(dest, pull); });
            if (res.next_push) {
                send_push(r2sp_cached_push_[static_cast<size_t>(*res.next_push)]);
            }
            break;
        }
        case SyncModel::osp: {
            switch (msg.kind) {
                case MsgKind::PushImportant:
                    handle_osp_server_output(osp_server_->on_push_important(msg));
                    break;
                case MsgKind::PushIcsChunk:
                    handle_osp_server_output(osp_server_->on_push_ics_chunk(msg));
                    break;
                case MsgKind::LossReport:
                    osp_server_->on_loss_report(msg);
                    break;
                default:
                    throw ProtocolError("unexpected message at server: " +
                                        std::string(msg_kind_name(msg.kind)));
            }
            break;
        }
    }
}

void Orchestrator::handle_worker_message(int worker, const Message& msg) {
    if (cfg_.sync != SyncModel::osp) {
        if (msg.kind != MsgKind::PullFull) {
            throw ProtocolError("unexpected message at worker: " +
                                std::string(msg_kind_name(msg.kind)));
        }
        full_workers_[static_cast<size_t>(worker)]->on_pull_full(msg);
        worker_ready(worker);
        return;
    }
    OspWorker& w = *osp_workers_[static_cast<size_t>(worker)];
    switch (msg.kind) {
        case MsgKind::PullImportant: {
            bool ready = w.on_pull_important(msg);
            if (ready) {
                if (w.pending_empty() && hooks_.on_worker_corrected) {
                    hooks_.on_worker_corrected(msg.iteration, worker, w.params());
                }
                worker_ready(worker);
            }
            break;
        }
        case MsgKind::IcsGlobalChunk: {
            w.on_ics_global_chunk(msg);
            if (w.pending_empty() && hooks_.on_worker_corrected) {
                hooks_.on_worker_corrected(msg.iteration, worker, w.params());
            }
            if (w.stashed_pull_ready()) {
                w.apply_stashed_pull();
                worker_ready(worker);
            }
            break;
        }
        case MsgKind::GibUpdate:
            w.on_gib_update(msg);
            break;
        default:
            throw ProtocolError("unexpected message at worker: " +
                                std::string(msg_kind_name(msg.kind)));
    }
}

void Orchestrator::worker_ready(int worker) {
    uint64_t next_iter;
    if (cfg_.sync == SyncModel::osp) {
        next_iter = osp_workers_[static_cast<size_t>(worker)]->iteration();
        done_count_[static_cast<size_t>(worker)] = next_iter;
    } else {
        next_iter = ++done_count_[static_cast<size_t>(worker)];
    }
    bst_->worker_ready(worker, next_iter, sim_->now());
    if (hooks_.on_worker_synced) {
        hooks_.on_worker_synced(next_iter - 1, worker, worker_params(worker));
    }

    if (cfg_.sync == SyncModel::osp) {
        // The deferred layers of the finished iteration stream out one chunk
        // per period while the next compute runs.
        auto chunks = std::move(osp_pending_chunks_[static_cast<size_t>(worker)]);
        osp_pending_chunks_[static_cast<size_t>(worker)].clear();
        for (size_t j = 0; j < chunks.size(); ++j) {
            Message m = std::move(chunks[j]);
            defer(sim_->now() + static_cast<double>(j) * chunk_period_,
                  [this, m = std::move(m)] { send_push(m); });
        }
    }

    maybe_start_next(worker, next_iter);
    if (cfg_.sync == SyncModel::ssp) release_parked();
}

void Orchestrator::maybe_start_next(int worker, uint64_t next_iteration) {
    if (next_iteration >= total_iters_ || stop_) return;
    if (cfg_.sync == SyncModel::ssp) {
        if (next_iteration > min_done() + static_cast<uint64_t>(cfg_.ssp_staleness)) {
            parked_.insert(worker);
            return;
        }
    }
    start_compute(worker, next_iteration);
}

void Orchestrator::release_parked() {
    bool progressed = true;
    while (progressed) {
        progressed = false;
        for (auto it = parked_.begin(); it != parked_.end(); ++it) {
            int w = *it;
            uint64_t want = done_count_[static_cast<size_t>(w)];
            if (want >= total_iters_ || stop_) {
                parked_.erase(it);
                progressed = true;
                break;
            }
            if (want <= min_done() + static_cast<uint64_t>(cfg_.ssp_staleness)) {
                parked_.erase(it);
                start_compute(w, want);
                progressed = true;
                break;
            }
        }
    }
}

RunResult Orchestrator::run() {
    for (int w = 0; w < cfg_.workers; ++w) {
        bst_->worker_ready(w, 0, 0.0);
        start_compute(w, 0);
    }
    sim_->run();

    RunResult result;
    result.config_echo = cfg_.echo();
    result.worker_weights = weights_;
    for (const auto& shard : shards_) result.shard_sizes.push_back(shard.size());
    result.samples_per_iteration =
        static_cast<uint64_t>(cfg_.workers) * static_cast<uint64_t>(cfg_.batch);
    for (uint64_t i = 0; i < total_iters_; ++i) {
        auto bst = bst_->bst(i);
        auto end = bst_->last_ready_time(i);
        if (!bst || !end) break;  // iteration never completed on every worker
        IterationRecord rec;
        rec.iteration = i;
        rec.sim_time_end = *end;
        rec.bst = *bst;
        rec.train_loss = loss_count_[i] > 0
                             ? loss_sum_[i] / static_cast<double>(loss_count_[i])
                             : 0.0;
        auto ev = eval_by_iter_.find(i);
        if (ev != eval_by_iter_.end()) rec.eval_accuracy = ev->second;
        rec.sgu_budget_bytes = budget_bytes_[i];
        rec.rs_bytes = rs_bytes_[i];
        rec.ics_bytes = ics_bytes_[i];
        rec.dropped_stale_msgs = dropped_[i];
        result.log.record(rec);
    }
    if (result.log.empty()) throw ProtocolError("run completed no iterations");
    result.summary = summarize(result.log, result.samples_per_iteration);
    result.gradient_push_bytes = sim_->delivered_nominal(MsgKind::PushFull) +
                                 sim_->delivered_nominal(MsgKind::PushImportant) +
                                 sim_->delivered_nominal(MsgKind::PushIcsChunk);
    if (cfg_.trace) result.trace = trace_.str();

    if (!cfg_.out_dir.empty()) {
        std::filesystem::create_directories(cfg_.out_dir);
        export_csv(result.log, cfg_.out_dir + "/metrics.csv", result.config_echo);
        export_json(result.log, result.summary, cfg_.out_dir + "/summary.json",
                    result.config_echo);
        if (cfg_.trace) {
            std::ofstream tf(cfg_.out_dir + "/trace.tsv");
            if (!tf) throw IoError("cannot write " + cfg_.out_dir + "/trace.tsv");
            tf << result.trace;
        }
    }
    return result;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks) {
    Orchestrator orch(cfg, hooks);
    return orch.run();
}

std::vector<ComparisonRow> run_comparison(const ExperimentConfig& base,
                                          const std::vector<SyncModel>& models) {
    std::vector<ComparisonRow> rows;
    for (SyncModel m : models) {
        ExperimentConfig cfg = base;
        cfg.sync = m;
        if (!base.out_dir.empty()) cfg.out_dir = base.out_dir + "/" + sync_model_name(m);
        ComparisonRow row;
        row.sync = m;
        try {
            RunResult res = run_experiment(cfg);
            row.throughput = res.summary.throughput;
            row.top1 = res.summary.top1;
            row.iterations_to_top1 = res.summary.iterations_to_top1;
            row.mean_bst = res.summary.mean_bst;
        } catch (const Error& e) {
            row.status = std::string("failed: ") + e.what();
        }
        rows.push_back(row);
    }
    double bsp_throughput = 0.0;
    for (const auto& r : rows) {
        if (r.sync == SyncModel::bsp && r.status == "ok") bsp_throughput = r.throughput;
    }
    for (auto& r : rows) {
        if (bsp_throughput > 0 && r.status == "ok") {
            r.rel_throughput_vs_bsp = r.throughput / bsp_throughput;
        }
    }
    return rows;
}

void emit_report(const std::vector<ComparisonRow>& rows, const std::string& csv_path,
                 std::ostream& text) {
    if (rows.empty()) throw LoggingError("empty comparison table");
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path);
        out << "sync,status,throughput,top1,iterations_to_top1,mean_bst,rel_throughput_vs_bsp\n";
        for (const auto& r : rows) {
            std::string status = r.status;
            for (char& c : status) {
                if (c == ',' || c == '\n') c = ';';
            }
            out << sync_model_name(r.sync) << ',' << status << ','
                << format_double(r.throughput) << ',' << format_double(r.top1) << ','
                << r.iterations_to_top1 << ',' << format_double(r.mean_bst) << ','
                << format_double(r.rel_throughput_vs_bsp) << '\n';
        }
        if (!out) throw IoError("write failed for " + csv_path);
    }
    text << std::left << std::setw(6) << "sync" << std::setw(10) << "status" << std::right
         << std::setw(14) << "throughput" << std::setw(8) << "top1" << std::setw(12)
         << "iters@top1" << std::setw(12) << "mean_bst" << std::setw(10) << "vs_bsp" << '\n';
    for (const auto& r : rows) {
        std::ostringstream thr, bst;
        thr << std::fixed << std::setprecision(1) << r.throughput;
        bst << std::fixed << std::setprecision(6) << r.mean_bst;
        text << std::left << std::setw(6) << sync_model_name(r.sync) << std::setw(10)
             << (r.status == "ok" ? "ok" : "failed") << std::right << std::setw(14) << thr.str()
             << std::setw(8) << std::fixed << std::setprecision(4) << r.top1 << std::setw(12)
             << r.iterations_to_top1 << std::setw(12) << bst.str() << std::setw(10)
             << std::setprecision(3) << r.rel_throughput_vs_bsp << '\n';
    }
}

}  // namespace pslab
