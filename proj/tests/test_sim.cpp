#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "pslab/rng.hpp"
#include "pslab/sim.hpp"

using namespace pslab;

namespace {

Simulator make_sim(NetworkParams net, int workers = 2, double tc = 0.1) {
    ComputeProfile profile;
    profile.t_c_base = tc;
    return Simulator(net, profile, workers, make_partition({1000}, 1));
}

uint64_t push_bytes(Simulator& sim, uint64_t size, uint32_t tag = 0) {
    Message m;
    m.kind = MsgKind::PushFull;
    m.iteration = tag;
    return sim.start_flow(LinkDir::ingress, size, -1, m);
}

}  // namespace

TEST_SUITE("sim") {
    TEST_CASE("event queue pops by time with insertion-order ties") {
        EventQueue q;
        q.schedule(1.0, EventKind::TimerFired, 10, 0, 0.0);
        q.schedule(1.0, EventKind::TimerFired, 11, 0, 0.0);
        q.schedule(0.5, EventKind::TimerFired, 12, 0, 0.0);
        auto a = q.pop();
        auto b = q.pop();
        auto c = q.pop();
        REQUIRE(a);
        REQUIRE(b);
        REQUIRE(c);
        CHECK(a->subject == 12);
        CHECK(b->subject == 10);
        CHECK(c->subject == 11);
        CHECK(!q.pop().has_value());
    }

    TEST_CASE("scheduling in the past is a simulator bug") {
        EventQueue q;
        CHECK_THROWS_AS(q.schedule(1.0, EventKind::TimerFired, 0, 0, 2.0), SimulatorBug);
    }

    TEST_CASE("1000 random events pop in (time, seq) order") {
        EventQueue q;
        Rng rng(6);
        std::vector<std::pair<double, uint64_t>> expected;
        for (uint64_t i = 0; i < 1000; ++i) {
            double t = static_cast<double>(rng.next_below(50)) * 0.125;
            q.schedule(t, EventKind::TimerFired, static_cast<int64_t>(i), 0, 0.0);
            expected.emplace_back(t, i);
        }
        std::stable_sort(expected.begin(), expected.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [t, seq] : expected) {
            auto ev = q.pop();
            REQUIRE(ev);
            CHECK(ev->time == t);
            CHECK(ev->seq == seq);
        }
        CHECK(!q.pop().has_value());
    }

    TEST_CASE("single flow completes at latency plus size over bandwidth") {
        Simulator sim = make_sim(NetworkParams{1e9, 1e-4, 0.0});
        double arrival = -1;
        sim.on_message_at_server = [&](const Message&) { arrival = sim.now(); };
        push_bytes(sim, 1'000'000);
        sim.run();
        CHECK(arrival == doctest::Approx(1.1e-3).epsilon(1e-9));
    }

    TEST_CASE("two equal flows share the link and finish together") {
        Simulator sim = make_sim(NetworkParams{1e9, 1e-4, 0.0});
        std::vector<double> arrivals;
        sim.on_message_at_server = [&](const Message&) { arrivals.push_back(sim.now()); };
        push_bytes(sim, 1'000'000);
        push_bytes(sim, 1'000'000);
        sim.run();
        REQUIRE(arrivals.size() == 2);
        CHECK(arrivals[0] == doctest::Approx(2.1e-3).epsilon(1e-9));
        CHECK(arrivals[1] == doctest::Approx(2.1e-3).epsilon(1e-9));
    }

    TEST_CASE("a joining flow never accelerates an existing one") {
        // Flow A alone would finish at 1 ms; B joins halfway through.
        Simulator sim = make_sim(NetworkParams{1e9, 0.0, 0.0});
        double a_done = -1;
        int arrivals = 0;
        sim.on_message_at_server = [&](const Message& m) {
            ++arrivals;
            if (m.iteration == 1) a_done = sim.now();
        };
        push_bytes(sim, 1'000'000, 1);
        sim.schedule_timer(0.5e-3, 42);
        sim.on_timer = [&](int64_t, uint64_t) { push_bytes(sim, 1'000'000); };
        sim.run();
        CHECK(arrivals == 2);
        // A transfers 0.5 MB alone, then shares: remaining 0.5 MB at half rate.
        CHECK(a_done == doctest::Approx(1.5e-3).epsilon(1e-9));
    }

    TEST_CASE("loss rate inflates transferred bytes") {
        Simulator sim = make_sim(NetworkParams{1e9, 0.0, 0.5});
        double arrival = -1;
        sim.on_message_at_server = [&](const Message&) { arrival = sim.now(); };
        push_bytes(sim, 1'000'000);
        sim.run();
        CHECK(arrival == doctest::Approx(1.5e-3).epsilon(1e-9));
        CHECK(sim.delivered_bytes(LinkDir::ingress) == 1'500'000);
        CHECK(sim.delivered_nominal(MsgKind::PushFull) == 1'000'000);
    }

    TEST_CASE("byte conservation over many random flows") {
        Simulator sim = make_sim(NetworkParams{5e8, 2e-5, 0.25});
        Rng rng(4);
        uint64_t nominal = 0;
        uint64_t effective_expected = 0;
        for (int i = 0; i < 40; ++i) {
            uint64_t size = 1000 + rng.next_below(1'000'000);
            nominal += size;
            effective_expected +=
                static_cast<uint64_t>(std::llround(1.25 * static_cast<double>(size)));
            push_bytes(sim, size);
        }
        sim.run();
        CHECK(sim.delivered_nominal(MsgKind::PushFull) == nominal);
        CHECK(sim.delivered_bytes(LinkDir::ingress) == effective_expected);
    }

    TEST_CASE("zero-size messages arrive after latency alone") {
        Simulator sim = make_sim(NetworkParams{1e9, 3e-4, 0.0});
        double arrival = -1;
        sim.on_message_at_server = [&](const Message&) { arrival = sim.now(); };
        Message m;
        m.kind = MsgKind::PushImportant;  // empty payload: zero bytes
        sim.send_to_server(m);
        sim.run();
        CHECK(arrival == doctest::Approx(3e-4).epsilon(1e-12));
    }

    TEST_CASE("compute durations honor multipliers and jitter determinism") {
        NetworkParams net{1e9, 0.0, 0.0};
        ComputeProfile profile;
        profile.t_c_base = 0.25;
        profile.straggler_multipliers = {1.0, 1.0, 1.0, 2.0};
        auto part = make_partition({10});
        {
            Simulator sim(net, profile, 4, part);
            std::vector<double> done(4, -1);
            sim.on_compute_done = [&](int w, uint64_t) { done[static_cast<size_t>(w)] = sim.now(); };
            for (int w = 0; w < 4; ++w) sim.start_compute(w, 0);
            sim.run();
            CHECK(done[0] == doctest::Approx(0.25));
            CHECK(done[3] == doctest::Approx(0.5));
        }
        profile.jitter_fraction = 0.1;
        profile.seed = 99;
        auto durations = [&] {
            Simulator sim(net, profile, 4, part);
            std::vector<double> done(4, -1);
            sim.on_compute_done = [&](int w, uint64_t) { done[static_cast<size_t>(w)] = sim.now(); };
            for (int w = 0; w < 4; ++w) sim.start_compute(w, 7);
            sim.run();
            return done;
        };
        auto first = durations();
        auto second = durations();
        CHECK(first == second);
        for (size_t w = 0; w < 4; ++w) {
            double base = 0.25 * profile.straggler_multipliers[w];
            CHECK(first[w] >= base * 0.9);
            CHECK(first[w] <= base * 1.1);
        }
    }

    TEST_CASE("identical runs give identical traces") {
        auto trace_once = [] {
            std::ostringstream trace;
            Simulator sim = make_sim(NetworkParams{1e9, 1e-4, 0.1});
            sim.set_trace(&trace);
            sim.on_compute_done = [&](int w, uint64_t it) {
                push_bytes(sim, 5000 + 100 * static_cast<uint64_t>(w));
                if (it < 2) sim.start_compute(w, it + 1);
            };
            for (int w = 0; w < 2; ++w) sim.start_compute(w, 0);
            sim.run();
            return trace.str();
        };
        std::string a = trace_once();
        CHECK(!a.empty());
        CHECK(a == trace_once());
    }

    TEST_CASE("bst tracker averages per-worker stalls") {
        BstTracker t(2);
        t.worker_ready(0, 0, 0.0);
        t.worker_ready(1, 0, 0.0);
        t.worker_compute_done(0, 0, 1.0);
        t.worker_compute_done(1, 0, 1.5);
        CHECK(!t.bst(0).has_value());
        t.worker_ready(0, 1, 2.0);
        t.worker_ready(1, 1, 2.0);
        CHECK(t.bst(0) == doctest::Approx((1.0 + 0.5) / 2));
        CHECK(t.first_done_time(0) == doctest::Approx(1.0));
        CHECK(t.last_ready_time(0) == doctest::Approx(2.0));
    }
}
