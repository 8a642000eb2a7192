#include "pslab/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pslab {

std::vector<float> aggregate_layer(const std::vector<const std::vector<float>*>& contribs,
                                   const std::vector<double>& weights) {
    if (contribs.empty() || contribs.size() != weights.size()) {
        throw ProtocolError("aggregation needs one contribution per worker");
    }
    double total_weight = 0.0;
    for (double w : weights) total_weight += w;
    if (!(total_weight > 0.0)) throw ProtocolError("aggregation weights must sum > 0");
    size_t n = contribs[0]->size();
    std::vector<float> out(n);
    for (size_t e = 0; e < n; ++e) {
        double sum = 0.0;
        for (size_t w = 0; w < contribs.size(); ++w) {
            if (contribs[w]->size() != n) {
                throw ProtocolError("contribution size mismatch in aggregation");
            }
            sum += weights[w] * static_cast<double>((*contribs[w])[e]);
        }
        out[e] = static_cast<float>(sum / total_weight);
    }
    return out;
}

LayerPayload aggregate(const std::vector<const LayerPayload*>& by_worker,
                       const std::vector<double>& weights) {
    if (by_worker.empty()) throw ProtocolError("nothing to aggregate");
    const LayerPayload& first = *by_worker[0];
    for (const LayerPayload* p : by_worker) {
        if (p->size() != first.size()) {
            throw ProtocolError("aggregation payloads cover different layer sets");
        }
    }
    LayerPayload out;
    for (const auto& [layer_id, vals] : first) {
        (void)vals;
        std::vector<const std::vector<float>*> contribs;
        contribs.reserve(by_worker.size());
        for (const LayerPayload* p : by_worker) {
            auto it = p->find(layer_id);
            if (it == p->end()) {
                throw ProtocolError("aggregation payloads cover different layer sets");
            }
            contribs.push_back(&it->second);
        }
        out.emplace(layer_id, aggregate_layer(contribs, weights));
    }
    return out;
}

Gib first_iteration_bootstrap(size_t layer_count) {
    Gib g;
    g.ics_set = LayerSet::none(layer_count);
    g.iteration_tag = 0;
    return g;
}

// ---------------------------------------------------------------------------
// LGP
// ---------------------------------------------------------------------------

void lgp_partial(WorkerState& ws, const LayerPayload& global_rs_delta,
                 const LayerPayload& local_ics_delta) {
    for (const auto& [id, vals] : local_ics_delta) {
        (void)vals;
        if (global_rs_delta.count(id)) {
            throw ProtocolError("layer " + std::to_string(id) +
                                " appears in both global and local payloads");
        }
        if (ws.pending_local_ics.count(id)) {
            throw ProtocolError("layer " + std::to_string(id) +
                                " still awaiting a correction from the previous iteration");
        }
    }
    apply_delta(ws.params, global_rs_delta, 1.0f);
    for (const auto& [id, vals] : local_ics_delta) {
        const LayerInfo& info = ws.params.part->layer(id);
        if (vals.size() != info.count) {
            throw ShapeError("local delta for layer " + std::to_string(id) + " has wrong size");
        }
        PendingLayer pending;
        pending.base.assign(ws.params.values.begin() + static_cast<ptrdiff_t>(info.offset),
                            ws.params.values.begin() +
                                static_cast<ptrdiff_t>(info.offset + info.count));
        pending.local_delta = vals;
        float* dst = ws.params.values.data() + info.offset;
        for (size_t e = 0; e < info.count; ++e) dst[e] += vals[e];
        ws.pending_local_ics.emplace(id, std::move(pending));
    }
}

void lgp_correct(WorkerState& ws, const LayerPayload& global_chunk) {
    for (const auto& [id, global_vals] : global_chunk) {
        auto it = ws.pending_local_ics.find(id);
        if (it == ws.pending_local_ics.end()) {
            throw ProtocolError("correction for layer " + std::to_string(id) +
                                " with no pending local delta");
        }
        const LayerInfo& info = ws.params.part->layer(id);
        if (global_vals.size() != info.count) {
            throw ShapeError("correction for layer " + std::to_string(id) + " has wrong size");
        }
        // base + global is bit-identical to the single update the server made.
        float* dst = ws.params.values.data() + info.offset;
        const std::vector<float>& base = it->second.base;
        for (size_t e = 0; e < info.count; ++e) dst[e] = base[e] + global_vals[e];
        ws.pending_local_ics.erase(it);
    }
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

IterationSplit split_for_sync(const GradVector& delta, const Gib& gib,
                              const std::vector<int>& ics_order, int n_chunks) {
    if (gib.ics_set.layer_count() != delta.part->layer_count()) {
        throw ShapeError("gib covers a different layer count than the delta");
    }
    if (n_chunks < 1) throw ConfigError("need at least one chunk slot");
    IterationSplit split;
    split.rs = slice_layers(delta, gib.ics_set.complement());

    // Deferred layers in rank order; any set bit missing from the order list
    // is appended by ascending id (covers the bootstrap bitmap).
    std::vector<int> order;
    for (int id : ics_order) {
        if (gib.ics_set.test(id)) order.push_back(id);
    }
    for (size_t id = 0; id < gib.ics_set.layer_count(); ++id) {
        int lid = static_cast<int>(id);
        if (gib.ics_set.test(lid) && std::find(order.begin(), order.end(), lid) == order.end()) {
            order.push_back(lid);
        }
    }
    if (order.empty()) return split;

    uint64_t total = 0;
    for (int id : order) total += delta.part->layer_bytes(id);
    std::vector<LayerPayload> chunks(static_cast<size_t>(n_chunks));
    uint64_t cum = 0;
    for (int id : order) {
        size_t idx = total == 0 ? 0
                                : std::min<size_t>(static_cast<size_t>(n_chunks - 1),
                                                   static_cast<size_t>(cum * static_cast<uint64_t>(
                                                                                n_chunks) /
                                                                      total));
        const LayerInfo& info = delta.part->layer(id);
        chunks[idx].emplace(id, std::vector<float>(
                                    delta.values.begin() + static_cast<ptrdiff_t>(info.offset),
                                    delta.values.begin() +
                                        static_cast<ptrdiff_t>(info.offset + info.count)));
        cum += delta.part->layer_bytes(id);
    }
    for (auto& c : chunks) {
        if (!c.empty()) split.ics_chunks.push_back(std::move(c));
    }
    return split;
}

// ---------------------------------------------------------------------------
// OspWorker
// ---------------------------------------------------------------------------

OspWorker::OspWorker(int worker_id, ParamVector init_params, double subset_weight) {
    if (subset_weight <= 0) throw ConfigError("subset weight must be positive");
    st_.worker_id = worker_id;
    st_.params = std::move(init_params);
    st_.subset_weight = subset_weight;
    st_.current_gib = first_iteration_bootstrap(st_.params.part->layer_count());
}

OspWorker::ComputeOutput OspWorker::on_compute_done(uint64_t iteration, const GradVector& delta,
                                                    double loss, int n_chunks) {
    if (iteration != st_.iteration) {
        throw ProtocolError("compute finished for iteration " + std::to_string(iteration) +
                            " but worker is at " + std::to_string(st_.iteration));
    }
    last_delta_ = delta;
    have_delta_ = true;
    IterationSplit split = split_for_sync(delta, st_.current_gib, st_.current_ics_order, n_chunks);

    ComputeOutput out;
    out.rs_push.kind = MsgKind::PushImportant;
    out.rs_push.iteration = static_cast<uint32_t>(iteration);
    out.rs_push.from_worker = st_.worker_id;
    out.rs_push.payload = std::move(split.rs);

    out.loss_report.kind = MsgKind::LossReport;
    out.loss_report.iteration = static_cast<uint32_t>(iteration);
    out.loss_report.from_worker = st_.worker_id;
    out.loss_report.scalar = loss;

    out.ics_chunks.resize(split.ics_chunks.size());
    for (size_t c = 0; c < split.ics_chunks.size(); ++c) {
        Message& m = out.ics_chunks[c];
        m.kind = MsgKind::PushIcsChunk;
        m.iteration = static_cast<uint32_t>(iteration);
        m.from_worker = st_.worker_id;
        m.payload = std::move(split.ics_chunks[c]);
    }
    return out;
}

void OspWorker::apply_pull(const Message& pull) {
    if (!have_delta_) throw ProtocolError("pull arrived before any compute finished");
    // Everything the barrier did not deliver is locally estimated.
    LayerPayload local;
    for (size_t id = 0; id < st_.params.part->layer_count(); ++id) {
        int lid = static_cast<int>(id);
        if (pull.payload.count(lid)) continue;
        const LayerInfo& info = st_.params.part->layer(lid);
        local.emplace(lid, std::vector<float>(
                               last_delta_.values.begin() + static_cast<ptrdiff_t>(info.offset),
                               last_delta_.values.begin() +
                                   static_cast<ptrdiff_t>(info.offset + info.count)));
    }
    lgp_partial(st_, pull.payload, local);
    have_delta_ = false;
    st_.iteration += 1;
}

bool OspWorker::on_pull_important(const Message& pull) {
    if (pull.iteration != st_.iteration) {
        throw ProtocolError("pull for iteration " + std::to_string(pull.iteration) +
                            " but worker is at " + std::to_string(st_.iteration));
    }
    if (!st_.pending_local_ics.empty()) {
        stashed_pull_ = pull;  // previous corrections must land first
        return false;
    }
    apply_pull(pull);
    return true;
}

void OspWorker::on_ics_global_chunk(const Message& chunk) { lgp_correct(st_, chunk.payload); }

void OspWorker::apply_stashed_pull() {
    if (!stashed_pull_ready()) throw ProtocolError("no releasable stashed pull");
    Message pull = std::move(*stashed_pull_);
    stashed_pull_.reset();
    apply_pull(pull);
}

void OspWorker::on_gib_update(const Message& msg) {
    if (!msg.gib.has_value()) throw ProtocolError("gib update without a bitmap");
    st_.current_gib = *msg.gib;
    st_.current_ics_order = msg.ics_rank_order;
}

// ---------------------------------------------------------------------------
// OspServer
// ---------------------------------------------------------------------------

OspServer::OspServer(ParamVector global_params, std::vector<double> weights, SguSchedule sched,
                     OspServerOptions opts)
    : weights_(std::move(weights)), opts_(opts) {
    if (weights_.empty()) throw ConfigError("server needs worker weights");
    if (opts_.iterations_per_epoch < 1) throw ConfigError("iterations_per_epoch must be >= 1");
    st_.global_params = std::move(global_params);
    st_.sched = sched;
    st_.next_gib = first_iteration_bootstrap(st_.global_params.part->layer_count());
}

bool OspServer::is_stale(uint64_t iteration) const {
    return iteration + 1 < st_.resolved_count;
}

void OspServer::add_contribution(IterationAgg& agg, int worker, const LayerPayload& payload) {
    if (worker < 0 || static_cast<size_t>(worker) >= weights_.size()) {
        throw ProtocolError("push from unknown worker " + std::to_string(worker));
    }
    for (const auto& [layer_id, vals] : payload) {
        LayerAgg& la = agg.layers[layer_id];
        if (la.contrib.empty()) la.contrib.resize(weights_.size());
        if (!la.contrib[static_cast<size_t>(worker)].empty()) {
            throw ProtocolError("duplicate contribution for layer " + std::to_string(layer_id) +
                                " from worker " + std::to_string(worker));
        }
        la.contrib[static_cast<size_t>(worker)] = vals;
        la.arrived += 1;
    }
}

std::vector<float> OspServer::finish_layer(IterationAgg& agg, int layer_id) {
    LayerAgg& la = agg.layers.at(layer_id);
    std::vector<const std::vector<float>*> contribs;
    contribs.reserve(weights_.size());
    for (const auto& c : la.contrib) contribs.push_back(&c);
    std::vector<float> global = aggregate_layer(contribs, weights_);
    // Apply to the global model in place.
    const LayerInfo& info = st_.global_params.part->layer(layer_id);
    float* dst = st_.global_params.values.data() + info.offset;
    for (size_t e = 0; e < info.count; ++e) dst[e] += global[e];
    la.applied = true;
    la.contrib.clear();
    agg.layers_applied += 1;
    agg.applied_deltas.emplace(layer_id, global);
    return global;
}

OspServer::Output OspServer::on_push_important(const Message& msg) {
    Output out;
    if (is_stale(msg.iteration)) {
        st_.dropped_stale += 1;
        return out;
    }
    IterationAgg& agg = iters_[msg.iteration];
    agg.rs_msgs += 1;
    if (agg.rs_msgs > static_cast<int>(weights_.size())) {
        throw ProtocolError("more barrier pushes than workers for iteration " +
                            std::to_string(msg.iteration));
    }
    add_contribution(agg, msg.from_worker, msg.payload);
    try_close_barrier(msg.iteration, out);
    return out;
}

OspServer::Output OspServer::on_push_ics_chunk(const Message& msg) {
    Output out;
    if (is_stale(msg.iteration)) {
        st_.dropped_stale += 1;
        return out;
    }
    IterationAgg& agg = iters_[msg.iteration];
    add_contribution(agg, msg.from_worker, msg.payload);

    LayerPayload completed;
    for (const auto& [layer_id, vals] : msg.payload) {
        (void)vals;
        LayerAgg& la = agg.layers.at(layer_id);
        if (!la.applied && la.arrived == static_cast<int>(weights_.size()) &&
            agg.barrier_emitted) {
            completed.emplace(layer_id, finish_layer(agg, layer_id));
        }
    }
    if (!completed.empty()) {
        Message bc;
        bc.kind = MsgKind::IcsGlobalChunk;
        bc.iteration = msg.iteration;
        bc.payload = std::move(completed);
        out.ics_broadcast = std::move(bc);
    }
    check_resolution(msg.iteration, out);
    return out;
}

void OspServer::on_loss_report(const Message& msg) {
    auto& [sum, count] = epoch_loss_[epoch_of_iteration(msg.iteration)];
    sum += msg.scalar;
    count += 1;
}

void OspServer::try_close_barrier(uint64_t iteration, Output& out) {
    auto it = iters_.find(iteration);
    if (it == iters_.end()) return;
    IterationAgg& agg = it->second;
    if (agg.barrier_emitted || agg.rs_msgs != static_cast<int>(weights_.size()) ||
        st_.resolved_count != iteration) {
        return;
    }
    LayerPayload pull_payload;
    for (auto& [layer_id, la] : agg.layers) {
        if (!la.applied && la.arrived == static_cast<int>(weights_.size())) {
            pull_payload.emplace(layer_id, finish_layer(agg, layer_id));
        }
    }
    agg.barrier_emitted = true;
    Message pull;
    pull.kind = MsgKind::PullImportant;
    pull.iteration = static_cast<uint32_t>(iteration);
    pull.payload = std::move(pull_payload);
    out.pull_important = std::move(pull);
    check_resolution(iteration, out);
}

void OspServer::check_resolution(uint64_t iteration, Output& out) {
    auto it = iters_.find(iteration);
    if (it == iters_.end()) return;
    IterationAgg& agg = it->second;
    if (!agg.barrier_emitted || st_.resolved_count != iteration ||
        agg.layers_applied != st_.global_params.part->layer_count()) {
        return;
    }

    st_.resolved_count = iteration + 1;

    // Epoch boundary: fold the collected losses into the budget schedule.
    if (!opts_.fixed_budget_bytes.has_value() &&
        (iteration + 1) % opts_.iterations_per_epoch == 0) {
        uint64_t epoch = epoch_of_iteration(iteration);
        auto lt = epoch_loss_.find(epoch);
        if (lt != epoch_loss_.end() && lt->second.second > 0) {
            double mean_loss = lt->second.first / static_cast<double>(lt->second.second);
            epoch_budget_[epoch + 1] = tune_sgu(st_.sched, epoch, mean_loss);
            epoch_loss_.erase(lt);
        }
    }

    // Importance from the iteration's aggregated update against the
    // post-update parameters; the positive scale factor between the update
    // and the raw gradient leaves the ranking unchanged.
    GradVector surrogate = zeros_grads(st_.global_params.part);
    merge_payload(surrogate, agg.applied_deltas);
    LayerImportance imp = pgp_layer_importance(st_.global_params, surrogate);
    uint64_t budget = budget_for_epoch(epoch_of_iteration(iteration + 1));
    st_.next_gib = build_gib(imp, *st_.global_params.part, budget,
                             static_cast<uint32_t>(iteration + 1));
    next_ics_order_.clear();
    for (int id : rank_layers(imp)) {
        if (st_.next_gib.ics_set.test(id)) next_ics_order_.push_back(id);
    }
    Message gib_msg;
    gib_msg.kind = MsgKind::GibUpdate;
    gib_msg.iteration = static_cast<uint32_t>(iteration + 1);
    gib_msg.gib = st_.next_gib;
    gib_msg.ics_rank_order = next_ics_order_;
    out.gib_update = std::move(gib_msg);

    resolved_deltas_.emplace(iteration, std::move(agg.applied_deltas));
    iters_.erase(it);

    // A barrier that was waiting on this resolution can close now.
    try_close_barrier(iteration + 1, out);
}

uint64_t OspServer::budget_for_epoch(uint64_t epoch) const {
    if (opts_.fixed_budget_bytes.has_value()) return *opts_.fixed_budget_bytes;
    if (epoch <= 1) return 0;
    auto it = epoch_budget_.find(epoch);
    return it == epoch_budget_.end() ? 0 : it->second;
}

std::optional<LayerPayload> OspServer::take_resolved_delta(uint64_t iteration) {
    auto it = resolved_deltas_.find(iteration);
    if (it == resolved_deltas_.end()) return std::nullopt;
    LayerPayload p = std::move(it->second);
    resolved_deltas_.erase(it);
    return p;
}

// ---------------------------------------------------------------------------
// BSP
// ---------------------------------------------------------------------------

BspWorker::BspWorker(int worker_id, ParamVector init_params, double subset_weight)
    : worker_id_(worker_id), params_(std::move(init_params)), weight_(subset_weight) {
    if (weight_ <= 0) throw ConfigError("subset weight must be positive");
}

Message BspWorker::on_compute_done(uint64_t iteration, const GradVector& delta) {
    Message m;
    m.kind = MsgKind::PushFull;
    m.iteration = static_cast<uint32_t>(iteration);
    m.from_worker = worker_id_;
    m.payload = slice_layers(delta, LayerSet::all(delta.part->layer_count()));
    return m;
}

void BspWorker::on_pull_full(const Message& pull) { merge_payload(params_, pull.payload); }

BspServer::BspServer(ParamVector global_params, std::vector<double> weights)
    : global_(std::move(global_params)), weights_(std::move(weights)) {
    if (weights_.empty()) throw ConfigError("server needs worker weights");
}

std::optional<Message> BspServer::on_push_full(const Message& msg) {
    if (msg.iteration < next_iteration_) {
        throw ProtocolError("push for already aggregated iteration " +
                            std::to_string(msg.iteration));
    }
    auto& slots = buffers_[msg.iteration];
    if (slots.empty()) slots.resize(weights_.size());
    size_t w = static_cast<size_t>(msg.from_worker);
    if (w >= slots.size()) throw ProtocolError("push from unknown worker");
    if (slots[w].has_value()) {
        throw ProtocolError("duplicate push from worker " + std::to_string(msg.from_worker) +
                            " for iteration " + std::to_string(msg.iteration));
    }
    slots[w] = msg.payload;
    for (const auto& s : slots) {
        if (!s.has_value()) return std::nullopt;
    }
    std::vector<const LayerPayload*> per_worker;
    per_worker.reserve(slots.size());
    for (const auto& s : slots) per_worker.push_back(&*s);
    LayerPayload mean = aggregate(per_worker, weights_);
    apply_delta(global_, mean, 1.0f);
    resolved_deltas_.emplace(msg.iteration, std::move(mean));
    buffers_.erase(msg.iteration);
    next_iteration_ = std::max(next_iteration_, static_cast<uint64_t>(msg.iteration) + 1);

    Message pull;
    pull.kind = MsgKind::PullFull;
    pull.iteration = msg.iteration;
    pull.payload = slice_layers(global_, LayerSet::all(global_.part->layer_count()));
    return pull;
}

std::optional<LayerPayload> BspServer::take_resolved_delta(uint64_t iteration) {
    auto it = resolved_deltas_.find(iteration);
    if (it == resolved_deltas_.end()) return std::nullopt;
    LayerPayload p = std::move(it->second);
    resolved_deltas_.erase(it);
    return p;
}

// ---------------------------------------------------------------------------
// ASP
// ---------------------------------------------------------------------------

AspServer::AspServer(ParamVector global_params, std::vector<double> weights)
    : global_(std::move(global_params)), weights_(std::move(weights)) {
    if (weights_.empty()) throw ConfigError("server needs worker weights");
}

Message AspServer::on_push_full(const Message& msg) {
    size_t w = static_cast<size_t>(msg.from_worker);
    if (w >= weights_.size()) throw ProtocolError("push from unknown worker");
    apply_delta(global_, msg.payload, static_cast<float>(weights_[w]));
    Message pull;
    pull.kind = MsgKind::PullFull;
    pull.iteration = msg.iteration;
    pull.payload = slice_layers(global_, LayerSet::all(global_.part->layer_count()));
    return pull;
}

// ---------------------------------------------------------------------------
// R2SP
// ---------------------------------------------------------------------------

R2spServer::R2spServer(ParamVector global_params, std::vector<double> weights)
    : global_(std::move(global_params)), weights_(std::move(weights)) {
    if (weights_.empty()) throw ConfigError("server needs worker weights");
}

int R2spServer::worker_for_slot(int slot) const {
    int n = static_cast<int>(weights_.size());
    return ((slot - static_cast<int>(round_ % static_cast<uint64_t>(n))) % n + n) % n;
}

std::optional<int> R2spServer::on_worker_ready(int worker, uint64_t round) {
    auto& flags = ready_[round];
    if (flags.empty()) flags.resize(weights_.size(), false);
    flags[static_cast<size_t>(worker)] = true;
    if (round == round_ && !push_in_flight_ && worker_for_slot(slot_) == worker) {
        push_in_flight_ = true;
        return worker;
    }
    return std::nullopt;
}

R2spServer::PushResult R2spServer::on_push_full(const Message& msg) {
    if (msg.from_worker != worker_for_slot(slot_)) {
        throw ProtocolError("push out of slot order: worker " + std::to_string(msg.from_worker) +
                            " in slot " + std::to_string(slot_));
    }
    size_t w = static_cast<size_t>(msg.from_worker);
    apply_delta(global_, msg.payload, static_cast<float>(weights_[w]));

    PushResult res;
    res.pull.kind = MsgKind::PullFull;
    res.pull.iteration = msg.iteration;
    res.pull.payload = slice_layers(global_, LayerSet::all(global_.part->layer_count()));

    push_in_flight_ = false;
    slot_ += 1;
    if (slot_ == static_cast<int>(weights_.size())) {
        ready_.erase(round_);
        slot_ = 0;
        round_ += 1;
    }
    int next = worker_for_slot(slot_);
    auto it = ready_.find(round_);
    if (it != ready_.end() && it->second[static_cast<size_t>(next)]) {
        push_in_flight_ = true;
        res.next_push = next;
    }
    return res;
}

}  // namespace pslab
