#include "doctest.h"
#include "pslab/importance.hpp"
#include "pslab/rng.hpp"

using namespace pslab;

TEST_SUITE("importance") {
    TEST_CASE("per-layer score is the sum of |g * p|") {
        auto part = make_partition({2});
        ParamVector p{part, {1.0f, -2.0f}};
        GradVector g{part, {0.5f, 0.25f}};
        LayerImportance imp = pgp_layer_importance(p, g);
        CHECK(imp.scores[0] == doctest::Approx(1.0));

        GradVector zero{part, {0.0f, 0.0f}};
        CHECK(pgp_layer_importance(p, zero).scores[0] == 0.0);

        ParamVector negated{part, {-1.0f, 2.0f}};
        CHECK(pgp_layer_importance(negated, g).scores[0] == doctest::Approx(1.0));
    }

    TEST_CASE("positive gradient rescaling preserves the ranking") {
        Rng rng(31);
        auto part = make_partition({4, 2, 7, 3});
        ParamVector p = zeros_params(part);
        GradVector g = zeros_grads(part);
        for (auto& x : p.values) x = static_cast<float>(rng.uniform(-1, 1));
        for (auto& x : g.values) x = static_cast<float>(rng.uniform(-1, 1));
        LayerImportance before = pgp_layer_importance(p, g);
        GradVector scaled = g;
        for (auto& x : scaled.values) x *= 3.5f;
        LayerImportance after = pgp_layer_importance(p, scaled);
        for (size_t l = 0; l < before.scores.size(); ++l) {
            CHECK(after.scores[l] == doctest::Approx(3.5 * before.scores[l]));
        }
        CHECK(rank_layers(before) == rank_layers(after));
    }

    TEST_CASE("rank_layers sorts ascending with id tie-break") {
        LayerImportance imp{{5.0, 1.0, 0.2}};
        CHECK(rank_layers(imp) == std::vector<int>{2, 1, 0});
        CHECK(rank_layers(LayerImportance{{1.0, 1.0, 1.0}}) == std::vector<int>{0, 1, 2});
        CHECK(rank_layers(LayerImportance{{9.0}}) == std::vector<int>{0});
    }

    TEST_CASE("build_gib walks the prefix rule") {
        auto part = make_partition({10, 15, 12}, 4);  // 40, 60, 48 bytes
        LayerImportance imp{{5.0, 1.0, 0.2}};
        SUBCASE("budget cuts at the first misfit") {
            // Rank order is [2, 1, 0]; 48 fits in 100, 48+60 does not.
            Gib g = build_gib(imp, *part, 100, 1);
            CHECK(g.ics_set.test(2));
            CHECK(!g.ics_set.test(1));
            CHECK(!g.ics_set.test(0));
        }
        SUBCASE("budget zero defers nothing") {
            Gib g = build_gib(imp, *part, 0, 1);
            CHECK(g.ics_set.popcount() == 0);
        }
        SUBCASE("budget of the whole model defers everything") {
            Gib g = build_gib(imp, *part, part->total_bytes(), 1);
            CHECK(g.ics_set.popcount() == 3);
        }
    }

    TEST_CASE("build_gib is monotone in the budget and respects it") {
        Rng rng(77);
        for (int trial = 0; trial < 30; ++trial) {
            size_t layers = 1 + rng.next_below(10);
            std::vector<size_t> counts;
            for (size_t l = 0; l < layers; ++l) counts.push_back(1 + rng.next_below(64));
            auto part = make_partition(counts);
            LayerImportance imp;
            for (size_t l = 0; l < layers; ++l) imp.scores.push_back(rng.uniform(0, 10));
            uint64_t b1 = rng.next_below(part->total_bytes() + 1);
            uint64_t b2 = b1 + rng.next_below(part->total_bytes() + 1);
            Gib g1 = build_gib(imp, *part, b1, 0);
            Gib g2 = build_gib(imp, *part, b2, 0);
            CHECK(layer_bytes(g1.ics_set, *part) <= b1);
            CHECK(layer_bytes(g2.ics_set, *part) <= b2);
            for (size_t l = 0; l < layers; ++l) {
                if (g1.ics_set.test(static_cast<int>(l))) {
                    CHECK(g2.ics_set.test(static_cast<int>(l)));
                }
            }
        }
    }

    TEST_CASE("gib wire format") {
        SUBCASE("1000 layers stay under 1 KB") {
            Gib g;
            g.ics_set = LayerSet::all(1000);
            g.iteration_tag = 42;
            auto bytes = gib_encode(g, 1000);
            CHECK(bytes.size() == 133);
            CHECK(bytes.size() < 1024);
        }
        SUBCASE("empty bitmap encodes to zero bytes") {
            Gib g;
            g.ics_set = LayerSet::none(8);
            auto bytes = gib_encode(g, 8);
            REQUIRE(bytes.size() == 9);
            CHECK(bytes[8] == 0x00);
        }
        SUBCASE("bits 0 and 3 give 0x09") {
            Gib g;
            g.ics_set = LayerSet::none(8);
            g.ics_set.set(0);
            g.ics_set.set(3);
            auto bytes = gib_encode(g, 8);
            CHECK(bytes[8] == 0x09);
        }
        SUBCASE("decode rejects truncation") {
            Gib g;
            g.ics_set = LayerSet::all(64);
            auto bytes = gib_encode(g, 64);
            bytes.pop_back();
            CHECK_THROWS_AS(gib_decode(bytes), FormatError);
            CHECK_THROWS_AS(gib_decode(std::vector<uint8_t>{1, 2, 3}), FormatError);
        }
    }

    TEST_CASE("encode/decode round trip for every layer count up to 1000") {
        Rng rng(123);
        for (size_t layers = 1; layers <= 1000; ++layers) {
            Gib g;
            g.ics_set = LayerSet::none(layers);
            g.iteration_tag = static_cast<uint32_t>(layers);
            for (size_t k = 0; k < layers; ++k) {
                if (rng.next_below(2)) g.ics_set.set(static_cast<int>(k));
            }
            Gib back = gib_decode(gib_encode(g, layers));
            REQUIRE(back == g);
        }
    }
}
