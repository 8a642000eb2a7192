#include <cstdio>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "pslab/checks.hpp"
#include "pslab/config.hpp"
#include "pslab/runner.hpp"

namespace {

struct FlagBag {
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> overrides;
};

// Every flag funnels into the same key/value setter the config file uses, so
// precedence and validation live in one place.
void add_config_flags(CLI::App* app, FlagBag& bag) {
    app->add_option("--config", bag.config_file, "config file (key = value lines)");
    auto opt = [app, &bag](const std::string& flag, const std::string& key,
                           const std::string& help) {
        app->add_option_function<std::string>(
               flag, [&bag, key](const std::string& v) { bag.overrides.emplace_back(key, v); },
               help)
            ->type_name("VAL");
    };
    opt("--sync", "sync", "synchronization model: bsp|asp|ssp|r2sp|osp");
    opt("--workers", "workers", "number of workers");
    opt("--bandwidth-gbps", "bandwidth_gbps", "PS link bandwidth in Gbit/s");
    opt("--latency-us", "latency_us", "one-way link latency in microseconds");
    opt("--loss-rate", "loss_rate", "expected loss rate in [0,1)");
    opt("--tc-ms", "tc_ms", "per-iteration compute time in milliseconds");
    opt("--model-widths", "model_widths", "mlp widths, e.g. 16,64,64,4");
    opt("--batch", "batch", "batch size per worker");
    opt("--epochs", "epochs", "epoch cap");
    opt("--seed", "seed", "root seed");
    opt("--ssp-staleness", "ssp_staleness", "max iteration gap for ssp");
    opt("--chunk-period-ms", "chunk_period_ms", "deferred-sync chunk period (default tc/4)");
    opt("--eq5-literal", "eq5_literal", "use the literal budget-bound formula");
    opt("--out", "out", "output directory");
    opt("--workload", "workload", "mlp | synth");
    opt("--synth-layer-elems", "synth_layer_elems", "synthetic layer sizes, e.g. 2500x10");
    opt("--bytes-per-element", "bytes_per_element", "wire bytes per element");
    opt("--synth-iters-per-epoch", "synth_iters_per_epoch", "iterations per synthetic epoch");
    opt("--dataset-n", "dataset_n", "synthetic dataset rows");
    opt("--dataset-d", "dataset_d", "synthetic feature count");
    opt("--dataset-classes", "dataset_classes", "synthetic class count");
    opt("--dataset-sep", "dataset_sep", "synthetic class separation");
    opt("--dataset-csv", "dataset_csv", "CSV dataset path (features..., label)");
    opt("--eval-fraction", "eval_fraction", "held-out fraction for accuracy");
    opt("--jitter", "jitter", "compute-time jitter fraction");
    opt("--straggler-mult", "straggler_mult", "per-worker compute multipliers, e.g. 1,1.5,1");
    opt("--agg-delay-ms", "agg_delay_ms", "server aggregation delay");
    opt("--gib-calc-delay-ms", "gib_calc_delay_ms", "bitmap build delay");
    opt("--gib-push-negligible", "gib_push_negligible", "deliver bitmaps instantly");
    opt("--sgu-fixed-budget", "sgu_fixed_budget", "pin the deferred-byte budget (bytes)");
    opt("--umax-measured", "umax_measured", "re-measure the budget bound each epoch");
    opt("--lr", "lr", "initial learning rate");
    opt("--activation", "activation", "relu | tanh");
    opt("--loss", "loss", "ce | mse");
    opt("--trace", "trace", "dump the event trace");
}

pslab::ExperimentConfig resolve(const FlagBag& bag) {
    auto parsed = pslab::parse_config(bag.config_file, bag.overrides);
    if (!parsed.overridden.empty()) {
        std::string note = "# overridden by flags:";
        for (const auto& k : parsed.overridden) note += " " + k;
        std::cerr << note << "\n";
    }
    return parsed.cfg;
}

int cmd_run(const FlagBag& bag) {
    pslab::ExperimentConfig cfg = resolve(bag);
    if (cfg.out_dir.empty()) cfg.out_dir = "out/run";
    pslab::RunResult res = pslab::run_experiment(cfg);
    std::cout << "sync=" << pslab::sync_model_name(cfg.sync)
              << " iterations=" << res.log.size()
              << " sim_time=" << pslab::format_double(res.log.records().back().sim_time_end)
              << " throughput=" << pslab::format_double(res.summary.throughput)
              << " top1=" << pslab::format_double(res.summary.top1)
              << " mean_bst=" << pslab::format_double(res.summary.mean_bst) << "\n";
    std::cout << "wrote " << cfg.out_dir << "/metrics.csv and summary.json\n";
    return 0;
}

int cmd_compare(const FlagBag& bag, const std::string& models_csv) {
    pslab::ExperimentConfig cfg = resolve(bag);
    if (cfg.out_dir.empty()) cfg.out_dir = "out/compare";
    std::vector<pslab::SyncModel> models;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            models.push_back(pslab::sync_model_from_name(cur));
            cur.clear();
        }
    };
    for (char c : models_csv) {
        if (c == ',') {
            flush();
        } else if (c != ' ') {
            cur += c;
        }
    }
    flush();
    if (models.empty()) {
        models = {pslab::SyncModel::asp, pslab::SyncModel::bsp, pslab::SyncModel::r2sp,
                  pslab::SyncModel::osp};
    }
    auto rows = pslab::run_comparison(cfg, models);
    pslab::emit_report(rows, cfg.out_dir + "/comparison.csv", std::cout);
    std::cout << "wrote " << cfg.out_dir << "/comparison.csv\n";
    return 0;
}

int cmd_check(const std::string& scratch) {
    auto results = pslab::run_all_checks(scratch);
    bool all = true;
    for (const auto& r : results) {
        std::printf("[%s] %-26s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        all = all && r.pass;
    }
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pslab: a desk-scale laboratory for parameter-server synchronization"};
    app.require_subcommand(1);

    FlagBag run_bag;
    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_config_flags(run, run_bag);

    FlagBag cmp_bag;
    std::string models_csv;
    CLI::App* cmp = app.add_subcommand("compare", "sweep synchronization models, shared seed");
    add_config_flags(cmp, cmp_bag);
    cmp->add_option("--models", models_csv, "comma list of models (default asp,bsp,r2sp,osp)");

    std::string scratch = "out/check";
    CLI::App* chk = app.add_subcommand("check", "run the invariant and oracle suites");
    chk->add_option("--scratch", scratch, "scratch directory for determinism checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_bag);
        if (cmp->parsed()) return cmd_compare(cmp_bag, models_csv);
        if (chk->parsed()) return cmd_check(scratch);
    } catch (const pslab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
