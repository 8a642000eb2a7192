#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "pslab/learner.hpp"
#include "pslab/rng.hpp"

using namespace pslab;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("learner") {
    TEST_CASE("synthetic blobs are balanced and deterministic") {
        Dataset ds = synth_dataset(1, 100, 2, 2, 4.0);
        CHECK(ds.n == 100);
        CHECK(ds.d == 2);
        size_t ones = 0;
        for (int l : ds.labels) ones += static_cast<size_t>(l);
        CHECK(ones >= 45);
        CHECK(ones <= 55);

        Dataset again = synth_dataset(1, 100, 2, 2, 4.0);
        CHECK(std::memcmp(ds.features.data(), again.features.data(),
                          ds.features.size() * sizeof(float)) == 0);
        CHECK(ds.labels == again.labels);

        Dataset one_class = synth_dataset(2, 10, 3, 1, 4.0);
        for (int l : one_class.labels) CHECK(l == 0);
    }

    TEST_CASE("csv loading") {
        std::string path = temp_path("pslab_test_ds.csv");
        {
            std::FILE* f = std::fopen(path.c_str(), "w");
            std::fputs("0.1,0.2,0\n0.3,0.4,1\n", f);
            std::fclose(f);
        }
        Dataset ds = load_csv(path);
        CHECK(ds.n == 2);
        CHECK(ds.d == 2);
        CHECK(ds.labels == std::vector<int>{0, 1});
        std::filesystem::remove(path);
    }

    TEST_CASE("csv errors name the line") {
        std::string path = temp_path("pslab_bad_ds.csv");
        {
            std::FILE* f = std::fopen(path.c_str(), "w");
            std::fputs("abc,0.2,0\n", f);
            std::fclose(f);
        }
        // The only row is consumed as a header, leaving an empty dataset.
        CHECK_THROWS_AS(load_csv(path), ParseError);
        {
            std::FILE* f = std::fopen(path.c_str(), "w");
            std::fputs("0.5,oops,0\n", f);
            std::fclose(f);
        }
        try {
            load_csv(path);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find(":1:") != std::string::npos);
        }
        {
            std::FILE* f = std::fopen(path.c_str(), "w");
            std::fclose(f);
        }
        CHECK_THROWS_AS(load_csv(path), ParseError);
        std::filesystem::remove(path);
    }

    TEST_CASE("csv round trip preserves float values") {
        Dataset ds = synth_dataset(9, 50, 3, 2, 5.0);
        std::string path = temp_path("pslab_rt_ds.csv");
        save_csv(ds, path);
        Dataset back = load_csv(path);
        REQUIRE(back.n == ds.n);
        REQUIRE(back.d == ds.d);
        CHECK(std::memcmp(back.features.data(), ds.features.data(),
                          ds.features.size() * sizeof(float)) == 0);
        CHECK(back.labels == ds.labels);
        std::filesystem::remove(path);
    }

    TEST_CASE("epoch shuffling is a permutation that changes across epochs") {
        CHECK(shuffle_epoch(1, 7, 1, 0) == std::vector<size_t>{0});

        auto perm = shuffle_epoch(1000, 7, 1, 0);
        std::set<size_t> seen(perm.begin(), perm.end());
        CHECK(seen.size() == 1000);

        auto next_epoch = shuffle_epoch(1000, 7, 2, 0);
        CHECK(perm != next_epoch);
        auto other_worker = shuffle_epoch(1000, 7, 1, 1);
        CHECK(perm != other_worker);
        CHECK(perm == shuffle_epoch(1000, 7, 1, 0));
    }

    TEST_CASE("init_params layout and determinism") {
        MlpSpec spec{{2, 3, 2}, Activation::relu, Loss::softmax_cross_entropy};
        ParamVector p = init_params(spec, 5);
        REQUIRE(p.part->layer_count() == 4);
        CHECK(p.part->layer(0).count == 6);
        CHECK(p.part->layer(1).count == 3);
        CHECK(p.part->layer(2).count == 6);
        CHECK(p.part->layer(3).count == 2);
        // Biases exactly zero.
        for (size_t i = 6; i < 9; ++i) CHECK(p.values[i] == 0.0f);
        for (size_t i = 15; i < 17; ++i) CHECK(p.values[i] == 0.0f);

        ParamVector q = init_params(spec, 5);
        CHECK(std::memcmp(p.values.data(), q.values.data(), p.values.size() * sizeof(float)) ==
              0);
    }

    TEST_CASE("one-neuron closed form: loss and gradient of (wx - y)^2") {
        MlpSpec spec{{1, 1}, Activation::relu, Loss::mse};
        ParamVector p = init_params(spec, 1);
        p.values[0] = 1.0f;  // w
        p.values[1] = 0.0f;  // b
        Dataset ds;
        ds.n = 1;
        ds.d = 1;
        ds.classes = 1;
        ds.features = {2.0f};
        ds.labels = {0};
        auto fb = forward_backward(spec, p, ds, {0});
        CHECK(fb.loss == doctest::Approx(4.0));
        CHECK(fb.grad.values[0] == doctest::Approx(8.0));
        CHECK(fb.grad.values[1] == doctest::Approx(4.0));

        GradVector fd = finite_diff_grad(spec, p, ds, {0}, 1e-4);
        CHECK(fd.values[0] == doctest::Approx(8.0).epsilon(1e-6));
        CHECK(fd.values[1] == doctest::Approx(4.0).epsilon(1e-6));
    }

    TEST_CASE("zero input with zero biases gives zero first-layer weight gradients") {
        MlpSpec spec{{3, 4, 2}, Activation::relu, Loss::softmax_cross_entropy};
        ParamVector p = init_params(spec, 3);
        Dataset ds;
        ds.n = 2;
        ds.d = 3;
        ds.classes = 2;
        ds.features.assign(6, 0.0f);
        ds.labels = {0, 1};
        auto fb = forward_backward(spec, p, ds, {0, 1});
        for (size_t i = 0; i < 12; ++i) CHECK(fb.grad.values[i] == 0.0f);
    }

    TEST_CASE("flat relu region has zero finite-difference gradient") {
        MlpSpec spec{{1, 1, 1}, Activation::relu, Loss::mse};
        ParamVector p = init_params(spec, 1);
        p.values[0] = 1.0f;   // w0
        p.values[1] = -5.0f;  // b0: pre-activation stays negative near x=1
        p.values[2] = 2.0f;   // w1
        p.values[3] = 0.0f;   // b1
        Dataset ds;
        ds.n = 1;
        ds.d = 1;
        ds.classes = 1;
        ds.features = {1.0f};
        ds.labels = {0};
        GradVector fd = finite_diff_grad(spec, p, ds, {0}, 1e-4);
        CHECK(fd.values[0] == 0.0f);  // dL/dw0: relu clamps the path
        CHECK(fd.values[2] == 0.0f);  // dL/dw1: activation is exactly zero
    }

    TEST_CASE("analytic gradient matches central differences on random instances") {
        double worst = 0.0;
        for (uint64_t trial = 0; trial < 10; ++trial) {
            Rng rng(derive_seed(50, 1, trial));
            MlpSpec spec;
            spec.widths = {2 + static_cast<int>(rng.next_below(3)),
                           2 + static_cast<int>(rng.next_below(4)),
                           2 + static_cast<int>(rng.next_below(3))};
            spec.activation = trial % 2 ? Activation::tanh : Activation::relu;
            spec.loss = trial % 3 ? Loss::softmax_cross_entropy : Loss::mse;
            Dataset ds = synth_dataset(trial, 16, static_cast<size_t>(spec.widths[0]),
                                       static_cast<size_t>(spec.widths.back()), 2.0);
            ParamVector p = init_params(spec, trial + 100);
            Batch batch = {0, 3, 7, 11};
            GradVector a = forward_backward(spec, p, ds, batch).grad;
            GradVector f = finite_diff_grad(spec, p, ds, batch, 1e-4);
            for (size_t k = 0; k < a.values.size(); ++k) {
                double rel = std::abs(static_cast<double>(a.values[k]) - f.values[k]) /
                             std::max(1e-6, std::abs(static_cast<double>(f.values[k])));
                worst = std::max(worst, rel);
            }
        }
        CHECK(worst < 1e-4);
    }

    TEST_CASE("sgd_delta and the learning-rate schedule") {
        auto part = make_partition({2});
        GradVector g{part, {2.0f, -4.0f}};
        GradVector d = sgd_delta(g, 0.1);
        CHECK(d.values[0] == doctest::Approx(-0.2));
        CHECK(d.values[1] == doctest::Approx(0.4));

        CHECK(lr_at_epoch(0.1, 1) == doctest::Approx(0.1));
        CHECK(lr_at_epoch(0.1, 9) == doctest::Approx(0.1));
        CHECK(lr_at_epoch(0.1, 10) == doctest::Approx(0.05));
        CHECK(lr_at_epoch(0.1, 20) == doctest::Approx(0.025));

        GradVector zero{part, {0.0f, 0.0f}};
        GradVector dz = sgd_delta(zero, 0.5);
        CHECK(dz.values == std::vector<float>{0.0f, 0.0f});
    }

    TEST_CASE("evaluation: single correct sample scores 1.0") {
        MlpSpec spec{{2, 2}, Activation::relu, Loss::softmax_cross_entropy};
        ParamVector p = init_params(spec, 2);
        p.values = {1.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f};  // identity weights
        Dataset ds;
        ds.n = 1;
        ds.d = 2;
        ds.classes = 2;
        ds.features = {3.0f, 0.0f};
        ds.labels = {0};
        CHECK(evaluate(spec, p, ds) == 1.0);
    }

    TEST_CASE("random parameters score near chance on balanced data") {
        Dataset ds = synth_dataset(3, 1000, 4, 2, 6.0);
        MlpSpec spec{{4, 8, 2}, Activation::relu, Loss::softmax_cross_entropy};
        double acc = evaluate(spec, init_params(spec, 999), ds);
        CHECK(acc > 0.4);
        CHECK(acc < 0.6);
    }

    TEST_CASE("single-worker training reaches 95% on separable blobs") {
        Dataset ds = synth_dataset(4, 256, 4, 2, 6.0);
        MlpSpec spec{{4, 16, 2}, Activation::relu, Loss::softmax_cross_entropy};
        ParamVector p = init_params(spec, 4);
        double lr0 = 0.1;
        bool reached = false;
        for (uint64_t epoch = 1; epoch <= 200 && !reached; ++epoch) {
            auto perm = shuffle_epoch(ds.n, 4, epoch, 0);
            for (size_t at = 0; at < ds.n; at += 32) {
                Batch batch(perm.begin() + static_cast<ptrdiff_t>(at),
                            perm.begin() + static_cast<ptrdiff_t>(std::min(at + 32, ds.n)));
                auto fb = forward_backward(spec, p, ds, batch);
                apply_delta(p, sgd_delta(fb.grad, lr_at_epoch(lr0, epoch)), 1.0f);
            }
            reached = evaluate(spec, p, ds) >= 0.95;
        }
        CHECK(reached);
    }
}
