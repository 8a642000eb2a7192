#include "pslab/checks.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pslab/learner.hpp"
#include "pslab/protocol.hpp"
#include "pslab/rng.hpp"
#include "pslab/runner.hpp"

namespace pslab {

uint64_t fnv1a64(const void* data, size_t bytes) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

uint64_t params_checksum(const ParamVector& p) {
    return fnv1a64(p.values.data(), p.values.size() * sizeof(float));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

ExperimentConfig small_mlp_config() {
    ExperimentConfig cfg;
    cfg.workers = 8;
    cfg.workload = WorkloadKind::mlp;
    cfg.model_widths = {8, 32, 4};
    cfg.dataset_n = 512;
    cfg.dataset_d = 8;
    cfg.dataset_classes = 4;
    cfg.dataset_sep = 6.0;
    cfg.batch = 16;
    cfg.tc_ms = 1.0;
    cfg.bandwidth_gbps = 10.0;
    cfg.latency_us = 100.0;
    cfg.lr = 0.05;
    cfg.seed = 7;
    return cfg;
}

// N = 8, 25 MB model, 10 Gbps, t_c = 0.25 s; element counts stay desk-scale
// while bytes-per-element carries the wire weight.
ExperimentConfig timing_config(SyncModel sync) {
    ExperimentConfig cfg;
    cfg.sync = sync;
    cfg.workers = 8;
    cfg.workload = WorkloadKind::synth;
    cfg.synth_layer_elems.assign(10, 2500);  // 10 x 2500 elems x 1000 B = 25 MB
    cfg.bytes_per_element = 1000;
    cfg.synth_iters_per_epoch = 50;
    cfg.epochs = 1;
    cfg.tc_ms = 250.0;
    cfg.bandwidth_gbps = 10.0;
    cfg.latency_us = 100.0;
    cfg.batch = 64;
    cfg.seed = 11;
    if (sync == SyncModel::osp) {
        cfg.sgu_fixed_budget = 20'000'000;  // deferred 80% => barrier fraction 0.2
    }
    return cfg;
}

}  // namespace

CheckResult check_degeneration_equivalence() {
    CheckResult res{"degeneration-equivalence", false, ""};
    const uint64_t kIters = 50;

    auto run_checksums = [&](SyncModel sync) {
        ExperimentConfig cfg = small_mlp_config();
        cfg.sync = sync;
        cfg.epochs = 13;  // 13 epochs x 4 iters/epoch >= 50 iterations
        if (sync == SyncModel::osp) cfg.sgu_fixed_budget = 0;
        std::vector<uint64_t> global_sums;
        std::map<std::pair<uint64_t, int>, uint64_t> worker_sums;
        RunHooks hooks;
        hooks.on_iteration_resolved = [&](uint64_t it, const ParamVector& g) {
            if (it < kIters) global_sums.push_back(params_checksum(g));
        };
        hooks.on_worker_synced = [&](uint64_t it, int w, const ParamVector& p) {
            if (it < kIters) worker_sums[{it, w}] = params_checksum(p);
        };
        run_experiment(cfg, hooks);
        return std::make_pair(global_sums, worker_sums);
    };

    auto [osp_global, osp_workers] = run_checksums(SyncModel::osp);
    auto [bsp_global, bsp_workers] = run_checksums(SyncModel::bsp);

    if (osp_global.size() < kIters || bsp_global.size() < kIters) {
        res.detail = "runs completed fewer than 50 iterations";
        return res;
    }
    for (uint64_t i = 0; i < kIters; ++i) {
        if (osp_global[i] != bsp_global[i]) {
            res.detail = "global checksum diverges at iteration " + std::to_string(i);
            return res;
        }
    }
    if (osp_workers != bsp_workers) {
        res.detail = "worker checksums diverge";
        return res;
    }
    res.pass = true;
    res.detail = "50 iterations, N=8: global and worker checksums bitwise identical";
    return res;
}

CheckResult check_gradient_conservation() {
    CheckResult res{"gradient-conservation", false, ""};
    ExperimentConfig cfg = small_mlp_config();
    cfg.sync = SyncModel::osp;
    cfg.epochs = 25;  // 100 iterations
    cfg.straggler_mult = {1.0, 1.3, 1.0, 1.0, 1.1, 1.0, 1.0, 1.0};
    cfg.sgu_fixed_budget = static_cast<int64_t>(
        mlp_partition(MlpSpec{cfg.model_widths, cfg.activation, cfg.loss_fn})->total_bytes() / 2);

    ParamVector expected = init_params(MlpSpec{cfg.model_widths, cfg.activation, cfg.loss_fn},
                                       cfg.seed);
    std::map<uint64_t, std::vector<float>> expected_at;
    uint64_t mismatches = 0;
    uint64_t corrections_seen = 0;

    RunHooks hooks;
    hooks.on_delta_resolved = [&](uint64_t it, const LayerPayload& delta) {
        apply_delta(expected, delta, 1.0f);  // ascending layer order
        expected_at[it] = expected.values;
    };
    hooks.on_iteration_resolved = [&](uint64_t it, const ParamVector& g) {
        auto ref = expected_at.find(it);
        if (ref == expected_at.end() ||
            std::memcmp(g.values.data(), ref->second.data(),
                        ref->second.size() * sizeof(float)) != 0) {
            ++mismatches;
        }
    };
    hooks.on_worker_corrected = [&](uint64_t it, int, const ParamVector& p) {
        ++corrections_seen;
        auto ref = expected_at.find(it);
        if (ref == expected_at.end() ||
            std::memcmp(p.values.data(), ref->second.data(),
                        ref->second.size() * sizeof(float)) != 0) {
            ++mismatches;
        }
    };
    RunResult rr = run_experiment(cfg, hooks);
    uint64_t iters = rr.log.size();

    if (iters < 100) {
        res.detail = "only " + std::to_string(iters) + " iterations completed";
        return res;
    }
    uint64_t expected_corrections = iters * static_cast<uint64_t>(cfg.workers);
    if (corrections_seen < expected_corrections) {
        res.detail = "corrections observed " + std::to_string(corrections_seen) + " < " +
                     std::to_string(expected_corrections);
        return res;
    }
    if (mismatches != 0) {
        res.detail = std::to_string(mismatches) + " exactness violations";
        return res;
    }
    res.pass = true;
    res.detail = std::to_string(iters) + " iterations: workers and server match P0 + sum of " +
                 "aggregated deltas exactly";
    return res;
}

CheckResult check_gradient_oracle() {
    CheckResult res{"gradient-oracle", false, ""};
    double worst = 0.0;
    for (uint64_t trial = 0; trial < 10; ++trial) {
        Rng rng(derive_seed(1234, 99, trial));
        MlpSpec spec;
        size_t depth = 2 + trial % 2;
        spec.widths.push_back(2 + static_cast<int>(rng.next_below(4)));
        for (size_t l = 0; l < depth; ++l) {
            spec.widths.push_back(2 + static_cast<int>(rng.next_below(5)));
        }
        spec.activation = (trial % 2 == 0) ? Activation::relu : Activation::tanh;
        spec.loss = (trial % 3 == 0) ? Loss::mse : Loss::softmax_cross_entropy;
        size_t classes = static_cast<size_t>(spec.widths.back());
        Dataset ds = synth_dataset(trial + 5, 32, static_cast<size_t>(spec.widths.front()),
                                   classes, 3.0);
        ParamVector params = init_params(spec, trial + 17);
        Batch batch;
        for (size_t i = 0; i < 8; ++i) batch.push_back(rng.next_below(ds.n));

        GradVector analytic = forward_backward(spec, params, ds, batch).grad;
        GradVector fd = finite_diff_grad(spec, params, ds, batch, 1e-4);
        for (size_t k = 0; k < analytic.values.size(); ++k) {
            double a = analytic.values[k];
            double f = fd.values[k];
            double rel = std::abs(a - f) / std::max(1e-6, std::abs(f));
            worst = std::max(worst, rel);
        }
    }
    res.pass = worst < 1e-4;
    res.detail = "max relative error " + format_double(worst) + " over 10 instances";
    return res;
}

CheckResult check_aggregation_oracle() {
    CheckResult res{"aggregation-oracle", false, ""};
    Rng rng(4242);
    uint64_t mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        size_t n_workers = 1 + rng.next_below(6);
        size_t n_layers = 1 + rng.next_below(5);
        std::vector<size_t> counts;
        for (size_t l = 0; l < n_layers; ++l) counts.push_back(1 + rng.next_below(7));
        std::vector<double> weights;
        for (size_t w = 0; w < n_workers; ++w) weights.push_back(0.1 + rng.next_double());

        std::vector<LayerPayload> payloads(n_workers);
        for (size_t w = 0; w < n_workers; ++w) {
            for (size_t l = 0; l < n_layers; ++l) {
                std::vector<float> vals(counts[l]);
                for (auto& v : vals) v = static_cast<float>(rng.uniform(-2.0, 2.0));
                payloads[w].emplace(static_cast<int>(l), std::move(vals));
            }
        }
        std::vector<const LayerPayload*> ptrs;
        for (const auto& p : payloads) ptrs.push_back(&p);
        LayerPayload got = aggregate(ptrs, weights);

        // Brute force, same fixed order: ascending worker id, double sums.
        double wsum = 0.0;
        for (double w : weights) wsum += w;
        for (size_t l = 0; l < n_layers; ++l) {
            for (size_t e = 0; e < counts[l]; ++e) {
                double acc = 0.0;
                for (size_t w = 0; w < n_workers; ++w) {
                    acc += weights[w] *
                           static_cast<double>(payloads[w].at(static_cast<int>(l))[e]);
                }
                float want = static_cast<float>(acc / wsum);
                float have = got.at(static_cast<int>(l))[e];
                if (std::memcmp(&want, &have, sizeof(float)) != 0) ++mismatches;
            }
        }
    }
    res.pass = mismatches == 0;
    res.detail = mismatches == 0 ? "50 random trials, bitwise equal to brute force"
                                 : std::to_string(mismatches) + " mismatches";
    return res;
}

namespace {

struct TimingOutcome {
    double bst_steady_min = 0.0;
    double bst_steady_max = 0.0;
    double throughput = 0.0;
    uint64_t iterations = 0;
};

// Steady state spans every iteration past the full-sync bootstrap; a single
// straggling barrier anywhere would show up in the max.
TimingOutcome run_timing(SyncModel sync) {
    ExperimentConfig cfg = timing_config(sync);
    RunResult rr = run_experiment(cfg);
    TimingOutcome out;
    out.iterations = rr.log.size();
    const auto& recs = rr.log.records();
    out.bst_steady_min = recs[1].bst;
    out.bst_steady_max = recs[1].bst;
    for (size_t i = 1; i < recs.size(); ++i) {
        out.bst_steady_min = std::min(out.bst_steady_min, recs[i].bst);
        out.bst_steady_max = std::max(out.bst_steady_max, recs[i].bst);
    }
    out.throughput = rr.summary.throughput;
    return out;
}

}  // namespace

CheckResult check_timing_closed_form() {
    CheckResult res{"timing-closed-form", false, ""};
    const double n = 8, m = 25e6, b = 1.25e9, lat = 100e-6, agg = 0.0, f = 0.2;

    TimingOutcome bsp = run_timing(SyncModel::bsp);
    double bsp_expected = n * m / b + agg + n * m / b + 2 * lat;
    double bsp_err = std::max(std::abs(bsp.bst_steady_min - bsp_expected),
                              std::abs(bsp.bst_steady_max - bsp_expected)) /
                     bsp_expected;

    TimingOutcome osp = run_timing(SyncModel::osp);
    double osp_expected = 2 * n * f * m / b + agg + 2 * lat;
    double osp_err = std::max(std::abs(osp.bst_steady_min - osp_expected),
                              std::abs(osp.bst_steady_max - osp_expected)) /
                     osp_expected;

    res.pass = bsp_err < 0.01 && osp_err < 0.01;
    res.detail = "bsp bst " + format_double(bsp.bst_steady_max) + " vs " +
                 format_double(bsp_expected) + " (err " + format_double(bsp_err) +
                 "), osp bst " + format_double(osp.bst_steady_max) + " vs " +
                 format_double(osp_expected) + " (err " + format_double(osp_err) +
                 "), all 49 steady iterations within tolerance";
    return res;
}

CheckResult check_throughput_reproduction() {
    CheckResult res{"throughput-reproduction", false, ""};
    const double n = 8, m = 25e6, b = 1.25e9, lat = 100e-6, tc = 0.25, f = 0.2;

    TimingOutcome bsp = run_timing(SyncModel::bsp);
    TimingOutcome osp = run_timing(SyncModel::osp);
    double ratio = osp.throughput / bsp.throughput;
    double closed_bsp_iter = tc + 2 * n * m / b + 2 * lat;
    double closed_osp_iter = tc + 2 * n * f * m / b + 2 * lat;
    double closed_ratio = closed_bsp_iter / closed_osp_iter;
    double rel_err = std::abs(ratio - closed_ratio) / closed_ratio;

    res.pass = ratio >= 1.5 && rel_err < 0.05;
    res.detail = "osp/bsp throughput " + format_double(ratio) + ", closed form " +
                 format_double(closed_ratio) + " (iteration times " +
                 format_double(closed_bsp_iter) + " vs " + format_double(closed_osp_iter) +
                 "), deviation " + format_double(rel_err);
    return res;
}

CheckResult check_accuracy_preservation() {
    CheckResult res{"accuracy-preservation", false, ""};
    auto top1_for = [&](SyncModel sync, uint64_t seed) {
        ExperimentConfig cfg;
        cfg.sync = sync;
        cfg.workers = 8;
        cfg.model_widths = {16, 64, 64, 4};
        cfg.dataset_n = 1600;
        cfg.dataset_d = 16;
        cfg.dataset_classes = 4;
        cfg.dataset_sep = 6.0;
        cfg.batch = 32;
        cfg.epochs = 20;
        cfg.lr = 0.1;
        cfg.tc_ms = 10.0;
        cfg.bandwidth_gbps = 10.0;
    cfg.latency_us = 100.0;
        cfg.seed = seed;
        return run_experiment(cfg).summary.top1;
    };
    double bsp_mean = 0.0, osp_mean = 0.0;
    const uint64_t seeds[] = {3, 5, 8, 13, 21};
    for (uint64_t s : seeds) {
        bsp_mean += top1_for(SyncModel::bsp, s);
        osp_mean += top1_for(SyncModel::osp, s);
    }
    bsp_mean /= 5.0;
    osp_mean /= 5.0;
    double gap = std::abs(osp_mean - bsp_mean);
    res.pass = gap <= 0.01 && bsp_mean > 0.8;
    res.detail = "bsp mean top1 " + format_double(bsp_mean) + ", osp mean top1 " +
                 format_double(osp_mean) + ", gap " + format_double(gap) + " (bound 0.01)";
    return res;
}

CheckResult check_tuning_schedule() {
    CheckResult res{"tuning-schedule", false, ""};
    ExperimentConfig cfg;
    cfg.sync = SyncModel::osp;
    cfg.workers = 4;
    cfg.workload = WorkloadKind::synth;
    cfg.synth_layer_elems.assign(8, 512);
    cfg.bytes_per_element = 4;
    cfg.synth_iters_per_epoch = 10;
    cfg.epochs = 6;
    cfg.tc_ms = 5.0;
    cfg.bandwidth_gbps = 10.0;
    cfg.latency_us = 100.0;
    cfg.seed = 3;

    RunResult rr = run_experiment(cfg);
    uint64_t model_bytes = 8 * 512 * 4;
    uint64_t u_max = compute_umax(cfg.net(), cfg.t_c_seconds(), cfg.workers, model_bytes);
    uint64_t cap = std::min<uint64_t>(u_max, model_bytes * 8 / 10);

    uint64_t previous = 0;
    bool ok = true;
    std::string why;
    for (const auto& rec : rr.log.records()) {
        if (rec.iteration < cfg.synth_iters_per_epoch && rec.sgu_budget_bytes != 0) {
            ok = false;
            why = "nonzero budget in epoch 1";
            break;
        }
        if (rec.sgu_budget_bytes < previous) {
            ok = false;
            why = "budget decreased at iteration " + std::to_string(rec.iteration);
            break;
        }
        if (rec.sgu_budget_bytes > cap) {
            ok = false;
            why = "budget exceeds cap at iteration " + std::to_string(rec.iteration);
            break;
        }
        previous = rec.sgu_budget_bytes;
    }
    uint64_t last = rr.log.records().back().sgu_budget_bytes;
    if (ok && last == 0) {
        ok = false;
        why = "budget never opened";
    }
    res.pass = ok;
    res.detail = ok ? "budget zero at epoch 1, non-decreasing, final " + std::to_string(last) +
                          " <= cap " + std::to_string(cap)
                    : why;
    return res;
}

CheckResult check_gib_wire_bound() {
    CheckResult res{"gib-wire-bound", false, ""};
    Rng rng(99);
    for (size_t layers = 1; layers <= 1000; ++layers) {
        Gib g;
        g.ics_set = LayerSet::none(layers);
        g.iteration_tag = static_cast<uint32_t>(layers * 7 + 1);
        for (size_t k = 0; k < layers; ++k) {
            if (rng.next_below(2)) g.ics_set.set(static_cast<int>(k));
        }
        auto bytes = gib_encode(g, layers);
        if (layers == 1000 && bytes.size() > 1024) {
            res.detail = "1000-layer gib is " + std::to_string(bytes.size()) + " bytes";
            return res;
        }
        Gib back = gib_decode(bytes);
        if (!(back == g)) {
            res.detail = "round trip failed at " + std::to_string(layers) + " layers";
            return res;
        }
    }
    res.pass = true;
    res.detail = "1000-layer gib is " + std::to_string(gib_encoded_size(1000)) +
                 " bytes; round trip exact for 1..1000 layers";
    return res;
}

CheckResult check_determinism(const std::string& scratch_dir) {
    CheckResult res{"determinism", false, ""};
    ExperimentConfig cfg = small_mlp_config();
    cfg.sync = SyncModel::osp;
    cfg.epochs = 5;
    cfg.trace = true;
    cfg.out_dir = scratch_dir + "/det";
    std::filesystem::create_directories(cfg.out_dir);

    RunResult first = run_experiment(cfg);
    std::string csv1 = read_file(cfg.out_dir + "/metrics.csv");
    std::string json1 = read_file(cfg.out_dir + "/summary.json");
    RunResult second = run_experiment(cfg);
    std::string csv2 = read_file(cfg.out_dir + "/metrics.csv");
    std::string json2 = read_file(cfg.out_dir + "/summary.json");

    if (first.trace != second.trace) {
        res.detail = "event traces differ";
        return res;
    }
    if (csv1 != csv2 || csv1.empty()) {
        res.detail = "metrics.csv differs between reruns";
        return res;
    }
    if (json1 != json2 || json1.empty()) {
        res.detail = "summary.json differs between reruns";
        return res;
    }
    res.pass = true;
    res.detail = "rerun byte-identical: trace " + std::to_string(first.trace.size()) +
                 " B, csv " + std::to_string(csv1.size()) + " B";
    return res;
}

std::vector<CheckResult> run_all_checks(const std::string& scratch_dir) {
    std::vector<CheckResult> out;
    out.push_back(check_degeneration_equivalence());
    out.push_back(check_gradient_conservation());
    out.push_back(check_gradient_oracle());
    out.push_back(check_aggregation_oracle());
    out.push_back(check_timing_closed_form());
    out.push_back(check_throughput_reproduction());
    out.push_back(check_accuracy_preservation());
    out.push_back(check_tuning_schedule());
    out.push_back(check_gib_wire_bound());
    out.push_back(check_determinism(scratch_dir));
    return out;
}

}  // namespace pslab
