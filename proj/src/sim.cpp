#include "pslab/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "pslab/rng.hpp"

namespace pslab {

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::ComputeDone: return "ComputeDone";
        case EventKind::FlowArrived: return "FlowArrived";
        case EventKind::TimerFired: return "TimerFired";
        case EventKind::FlowDrained: return "FlowDrained";
    }
    return "?";
}

void EventQueue::schedule(double time, EventKind kind, int64_t subject, uint64_t aux,
                          double now) {
    if (time < now || !std::isfinite(time)) {
        throw SimulatorBug("event scheduled in the past: t=" + std::to_string(time) +
                           " now=" + std::to_string(now));
    }
    heap_.push(SimEvent{time, next_seq_++, kind, subject, aux});
}

std::optional<SimEvent> EventQueue::pop() {
    if (heap_.empty()) return std::nullopt;
    SimEvent ev = heap_.top();
    heap_.pop();
    return ev;
}

Simulator::Simulator(NetworkParams net, ComputeProfile compute, int n_workers, PartitionPtr part)
    : net_(net), compute_(compute), n_workers_(n_workers), part_(std::move(part)) {
    net_.validate();
    if (n_workers_ < 1) throw ConfigError("simulator needs at least one worker");
    ingress_.bandwidth = net_.bandwidth_bps;
    egress_.bandwidth = net_.bandwidth_bps;
}

void Simulator::start_compute(int worker, uint64_t iteration) {
    double jitter = 0.0;
    if (compute_.jitter_fraction > 0.0) {
        Rng rng(derive_seed(compute_.seed, seed_purpose::kJitter, static_cast<uint64_t>(worker),
                            iteration));
        jitter = rng.uniform(-compute_.jitter_fraction, compute_.jitter_fraction);
    }
    double duration = compute_.t_c_base * compute_.multiplier(worker) * (1.0 + jitter);
    queue_.schedule(now_ + duration, EventKind::ComputeDone, worker, iteration, now_);
}

uint64_t Simulator::start_flow(LinkDir dir, uint64_t size_bytes, int dest_worker,
                               const Message& msg) {
    uint64_t id = next_flow_id_++;
    Flow flow;
    flow.id = id;
    flow.dest_worker = dest_worker;
    flow.msg = msg;
    flow.nominal_size = size_bytes;
    flow.effective_size = static_cast<double>(size_bytes) * (1.0 + net_.loss_rate);
    flow.remaining = flow.effective_size;
    if (size_bytes == 0) {
        // Nothing to transfer; only latency applies.
        in_latency_.emplace(id, std::move(flow));
        queue_.schedule(now_ + net_.latency_s, EventKind::FlowArrived, static_cast<int64_t>(id),
                        0, now_);
        return id;
    }
    Link& link = (dir == LinkDir::ingress) ? ingress_ : egress_;
    link_advance(link);
    link.active.emplace(id, std::move(flow));
    link_reschedule(dir);
    return id;
}

uint64_t Simulator::send_to_server(const Message& msg) {
    return start_flow(LinkDir::ingress, message_size_bytes(msg, *part_), -1, msg);
}

uint64_t Simulator::send_to_worker(int worker, const Message& msg) {
    return start_flow(LinkDir::egress, message_size_bytes(msg, *part_), worker, msg);
}

void Simulator::broadcast_to_workers(const Message& msg) {
    for (int w = 0; w < n_workers_; ++w) {
        send_to_worker(w, msg);
    }
}

void Simulator::schedule_timer(double at, int64_t tag, uint64_t aux) {
    queue_.schedule(at, EventKind::TimerFired, tag, aux, now_);
}

void Simulator::link_advance(Link& link) {
    if (!link.active.empty() && now_ > link.last_update) {
        double share = link.bandwidth / static_cast<double>(link.active.size());
        double drained = (now_ - link.last_update) * share;
        for (auto& [id, flow] : link.active) {
            flow.remaining = std::max(0.0, flow.remaining - drained);
        }
    }
    link.last_update = now_;
}

void Simulator::link_reschedule(LinkDir dir) {
    Link& link = (dir == LinkDir::ingress) ? ingress_ : egress_;
    ++link.generation;  // invalidate any outstanding drain event
    if (link.active.empty()) return;
    const Flow* next = nullptr;
    for (const auto& [id, flow] : link.active) {
        if (next == nullptr || flow.remaining < next->remaining) next = &flow;
    }
    double share = link.bandwidth / static_cast<double>(link.active.size());
    double at = now_ + next->remaining / share;
    link.scheduled_flow = next->id;
    queue_.schedule(at, EventKind::FlowDrained, dir == LinkDir::ingress ? 0 : 1,
                    link.generation, now_);
}

void Simulator::handle_drain(LinkDir dir, uint64_t generation) {
    Link& link = (dir == LinkDir::ingress) ? ingress_ : egress_;
    if (generation != link.generation) return;  // superseded by a membership change
    link_advance(link);
    auto it = link.active.find(link.scheduled_flow);
    if (it == link.active.end()) {
        throw SimulatorBug("drain event for a flow no longer on the link");
    }
    Flow flow = std::move(it->second);
    link.active.erase(it);
    flow.remaining = 0.0;
    link.delivered += static_cast<uint64_t>(std::llround(flow.effective_size));
    delivered_nominal_[flow.msg.kind] += flow.nominal_size;
    uint64_t id = flow.id;
    in_latency_.emplace(id, std::move(flow));
    queue_.schedule(now_ + net_.latency_s, EventKind::FlowArrived, static_cast<int64_t>(id), 0,
                    now_);
    link_reschedule(dir);
}

uint64_t Simulator::delivered_bytes(LinkDir dir) const {
    return dir == LinkDir::ingress ? ingress_.delivered : egress_.delivered;
}

uint64_t Simulator::delivered_nominal(MsgKind kind) const {
    auto it = delivered_nominal_.find(kind);
    return it == delivered_nominal_.end() ? 0 : it->second;
}

void Simulator::trace_event(const SimEvent& ev, const std::string& detail) {
    if (!trace_) return;
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, ev.time);
    (void)ec;
    *trace_ << std::string(buf, ptr) << '\t' << ev.seq << '\t' << event_kind_name(ev.kind)
            << '\t' << ev.subject << '\t' << detail << '\n';
}

bool Simulator::step() {
    auto ev = queue_.pop();
    if (!ev) return false;
    now_ = ev->time;
    switch (ev->kind) {
        case EventKind::ComputeDone:
            trace_event(*ev, "iter=" + std::to_string(ev->aux));
            if (on_compute_done) on_compute_done(static_cast<int>(ev->subject), ev->aux);
            break;
        case EventKind::FlowDrained:
            trace_event(*ev, "gen=" + std::to_string(ev->aux));
            handle_drain(ev->subject == 0 ? LinkDir::ingress : LinkDir::egress, ev->aux);
            break;
        case EventKind::FlowArrived: {
            auto it = in_latency_.find(static_cast<uint64_t>(ev->subject));
            if (it == in_latency_.end()) {
                throw SimulatorBug("arrival for unknown flow");
            }
            Flow flow = std::move(it->second);
            in_latency_.erase(it);
            trace_event(*ev, std::string(msg_kind_name(flow.msg.kind)) +
                                 " iter=" + std::to_string(flow.msg.iteration) +
                                 " from=" + std::to_string(flow.msg.from_worker) +
                                 " dest=" + std::to_string(flow.dest_worker));
            if (flow.dest_worker < 0) {
                if (on_message_at_server) on_message_at_server(flow.msg);
            } else {
                if (on_message_at_worker) on_message_at_worker(flow.dest_worker, flow.msg);
            }
            break;
        }
        case EventKind::TimerFired:
            trace_event(*ev, "aux=" + std::to_string(ev->aux));
            if (on_timer) on_timer(ev->subject, ev->aux);
            break;
    }
    return true;
}

void Simulator::run() {
    while (step()) {
    }
}

void BstTracker::worker_compute_done(int worker, uint64_t iteration, double time) {
    done_[static_cast<size_t>(worker)][iteration] = time;
}

void BstTracker::worker_ready(int worker, uint64_t iteration_next, double time) {
    ready_[static_cast<size_t>(worker)][iteration_next] = time;
}

std::optional<double> BstTracker::bst(uint64_t iteration) const {
    double sum = 0.0;
    for (size_t w = 0; w < done_.size(); ++w) {
        auto d = done_[w].find(iteration);
        auto r = ready_[w].find(iteration + 1);
        if (d == done_[w].end() || r == ready_[w].end()) return std::nullopt;
        sum += r->second - d->second;
    }
    return sum / static_cast<double>(done_.size());
}

std::optional<double> BstTracker::last_ready_time(uint64_t iteration) const {
    double latest = 0.0;
    for (size_t w = 0; w < ready_.size(); ++w) {
        auto r = ready_[w].find(iteration + 1);
        if (r == ready_[w].end()) return std::nullopt;
        latest = std::max(latest, r->second);
    }
    return latest;
}

std::optional<double> BstTracker::first_done_time(uint64_t iteration) const {
    double earliest = 0.0;
    bool first = true;
    for (size_t w = 0; w < done_.size(); ++w) {
        auto d = done_[w].find(iteration);
        if (d == done_[w].end()) return std::nullopt;
        if (first || d->second < earliest) earliest = d->second;
        first = false;
    }
    return earliest;
}

}  // namespace pslab
