#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "pslab/errors.hpp"
#include "pslab/message.hpp"
#include "pslab/tuning.hpp"

namespace pslab {

enum class EventKind { ComputeDone, FlowArrived, TimerFired, FlowDrained };

const char* event_kind_name(EventKind k);

struct SimEvent {
    double time = 0.0;
    uint64_t seq = 0;
    EventKind kind = EventKind::TimerFired;
    int64_t subject = 0;  // worker id, flow id, or timer tag
    uint64_t aux = 0;
};

// Min-queue ordered by (time, seq); ties pop in insertion order.
class EventQueue {
public:
    void schedule(double time, EventKind kind, int64_t subject, uint64_t aux, double now);
    std::optional<SimEvent> pop();
    bool empty() const { return heap_.empty(); }

private:
    struct Later {
        bool operator()(const SimEvent& a, const SimEvent& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.seq > b.seq;
        }
    };
    std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
    uint64_t next_seq_ = 0;
};

enum class LinkDir { ingress, egress };  // worker->PS, PS->worker

struct ComputeProfile {
    double t_c_base = 0.1;
    std::vector<double> straggler_multipliers;  // empty = all 1.0
    double jitter_fraction = 0.0;
    uint64_t seed = 0;

    double multiplier(int worker) const {
        if (straggler_multipliers.empty()) return 1.0;
        return straggler_multipliers[static_cast<size_t>(worker) %
                                     straggler_multipliers.size()];
    }
};

struct ServerDelayProfile {
    double agg_delay = 0.0;
    double gib_calc_delay = 0.0;
    bool gib_push_negligible = true;
};

// Star-around-PS network with one shared ingress and one shared egress
// resource, both fluid processor-sharing, plus simulated compute phases and
// timers. Deterministic: identical call sequences produce identical event
// streams.
class Simulator {
public:
    // The partition prices every message for the links.
    Simulator(NetworkParams net, ComputeProfile compute, int n_workers, PartitionPtr part);

    // Handlers are invoked from run(); they may call back into the simulator.
    std::function<void(int worker, uint64_t iteration)> on_compute_done;
    std::function<void(const Message&)> on_message_at_server;
    std::function<void(int worker, const Message&)> on_message_at_worker;
    std::function<void(int64_t tag, uint64_t aux)> on_timer;

    double now() const { return now_; }

    void start_compute(int worker, uint64_t iteration);
    // Explicit-size flow; dest_worker -1 targets the server.
    uint64_t start_flow(LinkDir dir, uint64_t size_bytes, int dest_worker, const Message& msg);
    // Partition-priced wrappers used by the protocol engines.
    uint64_t send_to_server(const Message& msg);
    uint64_t send_to_worker(int worker, const Message& msg);
    // One egress flow per worker, all starting now.
    void broadcast_to_workers(const Message& msg);
    void schedule_timer(double at, int64_t tag, uint64_t aux = 0);

    // Drains the queue; stops when empty.
    void run();
    // Processes one event; false when the queue is empty.
    bool step();

    uint64_t delivered_bytes(LinkDir dir) const;
    // Nominal (pre-inflation) bytes delivered for one message kind.
    uint64_t delivered_nominal(MsgKind kind) const;

    // Optional tab-separated event trace: time, seq, kind, subject, detail.
    void set_trace(std::ostream* sink) { trace_ = sink; }

private:
    struct Flow {
        uint64_t id = 0;
        double remaining = 0.0;  // effective bytes left
        double effective_size = 0.0;
        uint64_t nominal_size = 0;
        int dest_worker = -1;  // -1 = server
        Message msg;
    };

    struct Link {
        double bandwidth = 0.0;
        std::map<uint64_t, Flow> active;  // keyed by flow id: deterministic order
        double last_update = 0.0;
        uint64_t scheduled_flow = 0;  // flow whose drain event is live
        uint64_t generation = 0;      // invalidates stale drain events
        uint64_t delivered = 0;
    };

    void link_advance(Link& link);
    void link_reschedule(LinkDir dir);
    void handle_drain(LinkDir dir, uint64_t generation);
    void trace_event(const SimEvent& ev, const std::string& detail);

    NetworkParams net_;
    ComputeProfile compute_;
    int n_workers_;
    PartitionPtr part_;
    EventQueue queue_;
    double now_ = 0.0;
    Link ingress_;
    Link egress_;
    uint64_t next_flow_id_ = 1;
    std::map<uint64_t, Flow> in_latency_;  // drained, awaiting delivery
    std::map<MsgKind, uint64_t> delivered_nominal_;
    std::ostream* trace_ = nullptr;
};

// Per-iteration synchronization stall: mean over workers of the gap between
// finishing compute for iteration i and being ready to start iteration i+1.
class BstTracker {
public:
    explicit BstTracker(int n_workers) : done_(n_workers), ready_(n_workers) {}

    void worker_compute_done(int worker, uint64_t iteration, double time);
    void worker_ready(int worker, uint64_t iteration_next, double time);

    // Available once every worker has both instants for the iteration.
    std::optional<double> bst(uint64_t iteration) const;
    std::optional<double> last_ready_time(uint64_t iteration) const;
    std::optional<double> first_done_time(uint64_t iteration) const;

private:
    std::vector<std::map<uint64_t, double>> done_;   // per worker: iter -> time
    std::vector<std::map<uint64_t, double>> ready_;  // per worker: iter -> time
};

}  // namespace pslab
