#include <cstring>

#include "doctest.h"
#include "pslab/protocol.hpp"
#include "pslab/rng.hpp"

using namespace pslab;

namespace {

GradVector grads_of(PartitionPtr part, std::vector<float> values) {
    GradVector g;
    g.part = std::move(part);
    g.values = std::move(values);
    return g;
}

}  // namespace

TEST_SUITE("protocol") {
    TEST_CASE("aggregation: plain and weighted means") {
        LayerPayload a{{0, {1, 3}}};
        LayerPayload b{{0, {3, 5}}};
        SUBCASE("equal weights give the mean") {
            LayerPayload out = aggregate({&a, &b}, {1.0, 1.0});
            CHECK(out.at(0) == std::vector<float>{2, 4});
        }
        SUBCASE("weights 1 and 3") {
            LayerPayload out = aggregate({&a, &b}, {1.0, 3.0});
            CHECK(out.at(0) == std::vector<float>{2.5f, 4.5f});
        }
        SUBCASE("single worker passes through") {
            LayerPayload out = aggregate({&a}, {0.7});
            CHECK(out.at(0) == a.at(0));
        }
        SUBCASE("layer-set mismatch is a protocol error") {
            LayerPayload c{{1, {0, 0}}};
            CHECK_THROWS_AS(aggregate({&a, &c}, {1.0, 1.0}), ProtocolError);
        }
    }

    TEST_CASE("split: empty deferral sends everything at the barrier") {
        auto part = make_partition({2, 2});
        GradVector delta = grads_of(part, {1, 2, 3, 4});
        Gib gib = first_iteration_bootstrap(2);
        IterationSplit s = split_for_sync(delta, gib, {}, 4);
        CHECK(s.rs.size() == 2);
        CHECK(s.ics_chunks.empty());
    }

    TEST_CASE("split: full deferral leaves the barrier payload empty") {
        auto part = make_partition({2, 2});
        GradVector delta = grads_of(part, {1, 2, 3, 4});
        Gib gib;
        gib.ics_set = LayerSet::all(2);
        IterationSplit s = split_for_sync(delta, gib, {0, 1}, 1);
        CHECK(s.rs.empty());
        REQUIRE(s.ics_chunks.size() == 1);
        CHECK(s.ics_chunks[0].size() == 2);
    }

    TEST_CASE("split: two chunks order by ascending importance") {
        auto part = make_partition({4, 4, 4, 4});
        GradVector delta = grads_of(part, std::vector<float>(16, 1.0f));
        Gib gib;
        gib.ics_set = LayerSet::none(4);
        gib.ics_set.set(2);
        gib.ics_set.set(3);
        // Layer 3 is the less important of the deferred pair.
        IterationSplit s = split_for_sync(delta, gib, {3, 2}, 2);
        REQUIRE(s.ics_chunks.size() == 2);
        CHECK(s.ics_chunks[0].count(3) == 1);
        CHECK(s.ics_chunks[1].count(2) == 1);
        // Barrier and deferred sets never share a layer.
        for (const auto& [id, vals] : s.rs) {
            (void)vals;
            CHECK(!gib.ics_set.test(id));
        }
    }

    TEST_CASE("lgp_partial applies global and local deltas side by side") {
        auto part = make_partition({2, 2});
        WorkerState ws;
        ws.params = ParamVector{part, {1, 1, 1, 1}};
        ws.subset_weight = 0.5;
        lgp_partial(ws, LayerPayload{{0, {0.1f, -0.2f}}}, LayerPayload{{1, {0.05f, 0.05f}}});
        CHECK(ws.params.values[0] == doctest::Approx(1.1));
        CHECK(ws.params.values[1] == doctest::Approx(0.8));
        CHECK(ws.params.values[2] == doctest::Approx(1.05));
        CHECK(ws.params.values[3] == doctest::Approx(1.05));
        CHECK(ws.pending_local_ics.count(1) == 1);
    }

    TEST_CASE("lgp_partial with no deferred layers is a plain barrier update") {
        auto part = make_partition({2});
        WorkerState ws;
        ws.params = ParamVector{part, {1, 1}};
        lgp_partial(ws, LayerPayload{{0, {0.25f, 0.5f}}}, LayerPayload{});
        CHECK(ws.params.values == std::vector<float>{1.25f, 1.5f});
        CHECK(ws.pending_local_ics.empty());

        lgp_partial(ws, LayerPayload{{0, {0.0f, 0.0f}}}, LayerPayload{});
        CHECK(ws.params.values == std::vector<float>{1.25f, 1.5f});
    }

    TEST_CASE("lgp_partial rejects overlapping payloads") {
        auto part = make_partition({2});
        WorkerState ws;
        ws.params = ParamVector{part, {1, 1}};
        CHECK_THROWS_AS(
            lgp_partial(ws, LayerPayload{{0, {0.1f, 0.1f}}}, LayerPayload{{0, {0.2f, 0.2f}}}),
            ProtocolError);
    }

    TEST_CASE("lgp_correct swaps a local estimate for the global delta") {
        auto part = make_partition({2, 2});
        WorkerState ws;
        ws.params = ParamVector{part, {1, 1, 1, 1}};
        lgp_partial(ws, LayerPayload{{0, {0.1f, -0.2f}}}, LayerPayload{{1, {0.05f, 0.05f}}});
        lgp_correct(ws, LayerPayload{{1, {0.02f, -0.01f}}});
        CHECK(ws.params.values[2] == doctest::Approx(1.02));
        CHECK(ws.params.values[3] == doctest::Approx(0.99));
        CHECK(ws.pending_local_ics.empty());
    }

    TEST_CASE("lgp_correct with the local delta is an exact no-op") {
        auto part = make_partition({2});
        WorkerState ws;
        ws.params = ParamVector{part, {1, 1}};
        lgp_partial(ws, LayerPayload{}, LayerPayload{{0, {0.3f, -0.7f}}});
        std::vector<float> before = ws.params.values;
        lgp_correct(ws, LayerPayload{{0, {0.3f, -0.7f}}});
        CHECK(std::memcmp(ws.params.values.data(), before.data(), before.size() * sizeof(float)) ==
              0);
    }

    TEST_CASE("lgp_correct without a pending layer is a protocol error") {
        auto part = make_partition({2});
        WorkerState ws;
        ws.params = ParamVector{part, {1, 1}};
        CHECK_THROWS_AS(lgp_correct(ws, LayerPayload{{0, {0.1f, 0.1f}}}), ProtocolError);
    }

    TEST_CASE("server aggregates per layer and resolves the iteration") {
        auto part = make_partition({2, 2});
        ParamVector global{part, {0, 0, 0, 0}};
        SguSchedule sched;
        sched.u_max = 0;
        OspServerOptions opts;
        opts.iterations_per_epoch = 5;
        OspServer server(global, {0.5, 0.5}, sched, opts);

        auto push = [&](int w) {
            Message m;
            m.kind = MsgKind::PushImportant;
            m.iteration = 0;
            m.from_worker = w;
            m.payload = {{0, {1.0f * (w + 1), 2.0f}}, {1, {0.0f, 4.0f * (w + 1)}}};
            return m;
        };
        auto out0 = server.on_push_important(push(0));
        CHECK(!out0.pull_important.has_value());
        auto out1 = server.on_push_important(push(1));
        REQUIRE(out1.pull_important.has_value());
        CHECK(out1.pull_important->payload.size() == 2);
        CHECK(out1.pull_important->payload.at(0) == std::vector<float>{1.5f, 2.0f});
        CHECK(out1.pull_important->payload.at(1) == std::vector<float>{0.0f, 6.0f});
        CHECK(server.global_params().values == std::vector<float>{1.5f, 2.0f, 0.0f, 6.0f});
        CHECK(server.resolved_count() == 1);
        REQUIRE(out1.gib_update.has_value());
        CHECK(out1.gib_update->gib.has_value());
    }

    TEST_CASE("server drops pushes older than one resolved iteration") {
        auto part = make_partition({2});
        ParamVector global{part, {0, 0}};
        SguSchedule sched;
        OspServer server(global, {1.0}, sched, {});
        for (uint32_t it = 0; it < 3; ++it) {
            Message m;
            m.kind = MsgKind::PushImportant;
            m.iteration = it;
            m.from_worker = 0;
            m.payload = {{0, {1.0f, 1.0f}}};
            server.on_push_important(m);
        }
        CHECK(server.resolved_count() == 3);
        Message stale;
        stale.kind = MsgKind::PushImportant;
        stale.iteration = 0;
        stale.from_worker = 0;
        stale.payload = {{0, {1.0f, 1.0f}}};
        auto out = server.on_push_important(stale);
        CHECK(!out.pull_important.has_value());
        CHECK(server.dropped_stale() == 1);
    }

    TEST_CASE("a barrier waits until the previous iteration fully aggregates") {
        auto part = make_partition({2, 2});
        ParamVector global{part, {0, 0, 0, 0}};
        SguSchedule sched;
        OspServer server(global, {1.0}, sched, {});

        auto rs_push = [&](uint32_t it) {
            Message m;
            m.kind = MsgKind::PushImportant;
            m.iteration = it;
            m.from_worker = 0;
            m.payload = {{0, {1.0f, 1.0f}}};  // layer 1 deferred
            return m;
        };
        auto out0 = server.on_push_important(rs_push(0));
        REQUIRE(out0.pull_important.has_value());
        CHECK(server.resolved_count() == 0);  // layer 1 still outstanding

        // The next barrier has every push but must not close yet.
        auto out1 = server.on_push_important(rs_push(1));
        CHECK(!out1.pull_important.has_value());

        // The deferred layer lands: iteration 0 resolves and the gated
        // barrier for iteration 1 closes in the same step.
        Message chunk;
        chunk.kind = MsgKind::PushIcsChunk;
        chunk.iteration = 0;
        chunk.from_worker = 0;
        chunk.payload = {{1, {2.0f, 2.0f}}};
        auto out2 = server.on_push_ics_chunk(chunk);
        CHECK(server.resolved_count() == 1);
        REQUIRE(out2.ics_broadcast.has_value());
        CHECK(out2.ics_broadcast->payload.count(1) == 1);
        REQUIRE(out2.pull_important.has_value());
        CHECK(out2.pull_important->iteration == 1);
        REQUIRE(out2.gib_update.has_value());
    }

    TEST_CASE("bootstrap bitmap defers nothing") {
        Gib g = first_iteration_bootstrap(7);
        CHECK(g.ics_set.layer_count() == 7);
        CHECK(g.ics_set.popcount() == 0);
        CHECK(g.iteration_tag == 0);
    }

    TEST_CASE("worker stashes a pull while corrections are outstanding") {
        auto part = make_partition({2, 2});
        OspWorker w(0, ParamVector{part, {0, 0, 0, 0}}, 1.0);

        // Defer layer 1 from iteration 0 onward.
        Message gib_msg;
        gib_msg.kind = MsgKind::GibUpdate;
        Gib gib;
        gib.ics_set = LayerSet::none(2);
        gib.ics_set.set(1);
        gib.iteration_tag = 0;
        gib_msg.gib = gib;
        gib_msg.ics_rank_order = {1};
        w.on_gib_update(gib_msg);

        GradVector d0 = grads_of(part, {1, 1, 2, 2});
        auto out0 = w.on_compute_done(0, d0, 0.5, 2);
        CHECK(out0.rs_push.payload.count(0) == 1);
        CHECK(out0.rs_push.payload.count(1) == 0);
        REQUIRE(out0.ics_chunks.size() == 1);

        Message pull0;
        pull0.kind = MsgKind::PullImportant;
        pull0.iteration = 0;
        pull0.payload = {{0, {1.0f, 1.0f}}};
        CHECK(w.on_pull_important(pull0));
        CHECK(!w.pending_empty());
        CHECK(w.iteration() == 1);

        // Next compute finishes before the correction for layer 1 lands.
        GradVector d1 = grads_of(part, {3, 3, 4, 4});
        w.on_compute_done(1, d1, 0.4, 2);
        Message pull1;
        pull1.kind = MsgKind::PullImportant;
        pull1.iteration = 1;
        pull1.payload = {{0, {3.0f, 3.0f}}};
        CHECK(!w.on_pull_important(pull1));  // stashed
        CHECK(w.iteration() == 1);

        Message chunk;
        chunk.kind = MsgKind::IcsGlobalChunk;
        chunk.iteration = 0;
        chunk.payload = {{1, {2.5f, 2.5f}}};
        w.on_ics_global_chunk(chunk);
        REQUIRE(w.stashed_pull_ready());
        w.apply_stashed_pull();
        CHECK(w.iteration() == 2);
        // Layer 1 carries the global delta from iteration 0 plus the local
        // estimate from iteration 1.
        CHECK(w.params().values[2] == doctest::Approx(2.5 + 4.0));
    }

    TEST_CASE("bsp aggregates when the last worker pushes") {
        auto part = make_partition({2});
        ParamVector global{part, {0, 0}};
        BspServer server(global, {0.5, 0.5});
        BspWorker w0(0, global, 0.5), w1(1, global, 0.5);

        Message p0 = w0.on_compute_done(0, grads_of(part, {2, 0}));
        Message p1 = w1.on_compute_done(0, grads_of(part, {4, 2}));
        CHECK(!server.on_push_full(p0).has_value());
        auto pull = server.on_push_full(p1);
        REQUIRE(pull.has_value());
        CHECK(server.global_params().values == std::vector<float>{3.0f, 1.0f});
        w0.on_pull_full(*pull);
        w1.on_pull_full(*pull);
        CHECK(w0.params().values == server.global_params().values);
        CHECK(w1.params().values == server.global_params().values);

        CHECK_THROWS_AS(server.on_push_full(p1), ProtocolError);
    }

    TEST_CASE("asp applies each push immediately with the worker weight") {
        auto part = make_partition({2});
        ParamVector global{part, {0, 0}};
        AspServer server(global, {0.25, 0.75});
        Message m;
        m.kind = MsgKind::PushFull;
        m.iteration = 0;
        m.from_worker = 1;
        m.payload = {{0, {4.0f, -4.0f}}};
        Message pull = server.on_push_full(m);
        CHECK(server.global_params().values == std::vector<float>{3.0f, -3.0f});
        CHECK(pull.payload.at(0) == std::vector<float>{3.0f, -3.0f});
    }

    TEST_CASE("r2sp grants pushes in rotating slot order") {
        auto part = make_partition({1});
        ParamVector global{part, {0}};
        R2spServer server(global, {1.0, 1.0, 1.0});

        // Round 0: slots 0,1,2 -> workers 0,1,2. Worker 2 is ready first but
        // must wait for the slot owner.
        CHECK(!server.on_worker_ready(2, 0).has_value());
        CHECK(!server.on_worker_ready(1, 0).has_value());
        auto grant = server.on_worker_ready(0, 0);
        REQUIRE(grant.has_value());
        CHECK(*grant == 0);

        auto mk = [&](int w, uint32_t round) {
            Message m;
            m.kind = MsgKind::PushFull;
            m.iteration = round;
            m.from_worker = w;
            m.payload = {{0, {1.0f}}};
            return m;
        };
        auto r0 = server.on_push_full(mk(0, 0));
        REQUIRE(r0.next_push.has_value());
        CHECK(*r0.next_push == 1);
        auto r1 = server.on_push_full(mk(1, 0));
        REQUIRE(r1.next_push.has_value());
        CHECK(*r1.next_push == 2);
        auto r2 = server.on_push_full(mk(2, 0));
        CHECK(!r2.next_push.has_value());
        CHECK(server.round() == 1);

        // Round 1: slot 0 belongs to worker (0 - 1) mod 3 = 2.
        CHECK(!server.on_worker_ready(0, 1).has_value());
        auto grant2 = server.on_worker_ready(2, 1);
        REQUIRE(grant2.has_value());
        CHECK(*grant2 == 2);
        CHECK_THROWS_AS(server.on_push_full(mk(1, 1)), ProtocolError);
    }
}
