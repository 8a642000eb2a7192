#include "pslab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pslab {

const char* sync_model_name(SyncModel m) {
    switch (m) {
        case SyncModel::bsp: return "bsp";
        case SyncModel::asp: return "asp";
        case SyncModel::ssp: return "ssp";
        case SyncModel::r2sp: return "r2sp";
        case SyncModel::osp: return "osp";
    }
    return "?";
}

SyncModel sync_model_from_name(const std::string& name) {
    if (name == "bsp") return SyncModel::bsp;
    if (name == "asp") return SyncModel::asp;
    if (name == "ssp") return SyncModel::ssp;
    if (name == "r2sp") return SyncModel::r2sp;
    if (name == "osp") return SyncModel::osp;
    throw ConfigError("sync: unknown model '" + name + "' (bsp|asp|ssp|r2sp|osp)");
}

namespace {

double to_double(const std::string& key, const std::string& v) {
    double out;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

int64_t to_int(const std::string& key, const std::string& v) {
    int64_t out;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T, typename Conv>
std::vector<T> to_list(const std::string& key, const std::string& v, Conv conv) {
    std::vector<T> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(conv(key, cur));
            cur.clear();
        }
    };
    for (char c : v) {
        if (c == ',') {
            flush();
        } else if (c != ' ') {
            cur += c;
        }
    }
    flush();
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
    return out;
}

std::string list_to_string(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string list_to_string(const std::vector<size_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string num_to_string(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string list_to_string(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num_to_string(v[i]);
    return s;
}

}  // namespace

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "sync") {
        cfg.sync = sync_model_from_name(value);
    } else if (key == "workers") {
        cfg.workers = static_cast<int>(to_int(key, value));
    } else if (key == "workload") {
        if (value == "mlp") {
            cfg.workload = WorkloadKind::mlp;
        } else if (value == "synth") {
            cfg.workload = WorkloadKind::synth;
        } else {
            throw ConfigError("workload: expected mlp or synth, got '" + value + "'");
        }
    } else if (key == "model_widths") {
        cfg.model_widths = to_list<int>(key, value, [](const std::string& k, const std::string& s) {
            return static_cast<int>(to_int(k, s));
        });
    } else if (key == "activation") {
        if (value == "relu") {
            cfg.activation = Activation::relu;
        } else if (value == "tanh") {
            cfg.activation = Activation::tanh;
        } else {
            throw ConfigError("activation: expected relu or tanh");
        }
    } else if (key == "loss") {
        if (value == "ce") {
            cfg.loss_fn = Loss::softmax_cross_entropy;
        } else if (value == "mse") {
            cfg.loss_fn = Loss::mse;
        } else {
            throw ConfigError("loss: expected ce or mse");
        }
    } else if (key == "synth_layer_elems") {
        cfg.synth_layer_elems =
            to_list<size_t>(key, value, [](const std::string& k, const std::string& s) {
                return static_cast<size_t>(to_int(k, s));
            });
    } else if (key == "bytes_per_element") {
        cfg.bytes_per_element = static_cast<uint32_t>(to_int(key, value));
    } else if (key == "synth_iters_per_epoch") {
        cfg.synth_iters_per_epoch = static_cast<uint64_t>(to_int(key, value));
    } else if (key == "dataset_n") {
        cfg.dataset_n = static_cast<size_t>(to_int(key, value));
    } else if (key == "dataset_d") {
        cfg.dataset_d = static_cast<size_t>(to_int(key, value));
    } else if (key == "dataset_classes") {
        cfg.dataset_classes = static_cast<size_t>(to_int(key, value));
    } else if (key == "dataset_sep") {
        cfg.dataset_sep = to_double(key, value);
    } else if (key == "dataset_csv") {
        cfg.dataset_csv = value;
    } else if (key == "eval_fraction") {
        cfg.eval_fraction = to_double(key, value);
    } else if (key == "bandwidth_gbps") {
        cfg.bandwidth_gbps = to_double(key, value);
    } else if (key == "latency_us") {
        cfg.latency_us = to_double(key, value);
    } else if (key == "loss_rate") {
        cfg.loss_rate = to_double(key, value);
    } else if (key == "tc_ms") {
        cfg.tc_ms = to_double(key, value);
    } else if (key == "jitter") {
        cfg.jitter = to_double(key, value);
    } else if (key == "straggler_mult") {
        cfg.straggler_mult = to_list<double>(key, value, to_double);
    } else if (key == "agg_delay_ms") {
        cfg.agg_delay_ms = to_double(key, value);
    } else if (key == "gib_calc_delay_ms") {
        cfg.gib_calc_delay_ms = to_double(key, value);
    } else if (key == "gib_push_negligible") {
        cfg.gib_push_negligible = to_bool(key, value);
    } else if (key == "ssp_staleness") {
        cfg.ssp_staleness = static_cast<int>(to_int(key, value));
    } else if (key == "chunk_period_ms") {
        cfg.chunk_period_ms = to_double(key, value);
    } else if (key == "eq5_literal") {
        cfg.eq5_literal = to_bool(key, value);
    } else if (key == "sgu_fixed_budget") {
        cfg.sgu_fixed_budget = to_int(key, value);
    } else if (key == "umax_measured") {
        cfg.umax_measured = to_bool(key, value);
    } else if (key == "lr") {
        cfg.lr = to_double(key, value);
    } else if (key == "batch") {
        cfg.batch = static_cast<int>(to_int(key, value));
    } else if (key == "epochs") {
        cfg.epochs = static_cast<int>(to_int(key, value));
    } else if (key == "seed") {
        cfg.seed = static_cast<uint64_t>(to_int(key, value));
    } else if (key == "out") {
        cfg.out_dir = value;
    } else if (key == "trace") {
        cfg.trace = to_bool(key, value);
    } else {
        throw ConfigError("unknown key '" + key + "'");
    }
}

void ExperimentConfig::validate() const {
    if (workers < 1) throw ConfigError("workers: must be at least 1");
    if (workload == WorkloadKind::mlp) {
        if (model_widths.size() < 2) throw ConfigError("model_widths: need input and output");
        for (int w : model_widths) {
            if (w <= 0) throw ConfigError("model_widths: widths must be positive");
        }
        if (dataset_csv.empty()) {
            if (dataset_n == 0 || dataset_d == 0 || dataset_classes == 0) {
                throw ConfigError("dataset_n/dataset_d/dataset_classes: must be positive");
            }
        }
        if (eval_fraction < 0 || eval_fraction >= 1) {
            throw ConfigError("eval_fraction: must be in [0, 1)");
        }
        if (batch < 1) throw ConfigError("batch: must be at least 1");
    } else {
        if (synth_layer_elems.empty()) {
            throw ConfigError("synth_layer_elems: synth workload needs layer sizes");
        }
        for (size_t c : synth_layer_elems) {
            if (c == 0) throw ConfigError("synth_layer_elems: layer sizes must be positive");
        }
        if (synth_iters_per_epoch < 1) {
            throw ConfigError("synth_iters_per_epoch: must be at least 1");
        }
    }
    if (bytes_per_element == 0) throw ConfigError("bytes_per_element: must be positive");
    try {
        net().validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("bandwidth_gbps/latency_us/loss_rate: ") + e.what());
    }
    if (tc_ms < 0) throw ConfigError("tc_ms: must be non-negative");
    if (jitter < 0 || jitter >= 1) throw ConfigError("jitter: must be in [0, 1)");
    if (!straggler_mult.empty() && straggler_mult.size() != static_cast<size_t>(workers)) {
        throw ConfigError("straggler_mult: need one multiplier per worker");
    }
    for (double m : straggler_mult) {
        if (m < 1.0) throw ConfigError("straggler_mult: multipliers must be >= 1");
    }
    if (agg_delay_ms < 0 || gib_calc_delay_ms < 0) {
        throw ConfigError("agg_delay_ms/gib_calc_delay_ms: must be non-negative");
    }
    if (sync == SyncModel::ssp && ssp_staleness < 0) {
        throw ConfigError("ssp_staleness: must be non-negative");
    }
    if (lr <= 0) throw ConfigError("lr: must be positive");
    if (epochs < 1) throw ConfigError("epochs: must be at least 1");
}

std::string ExperimentConfig::echo() const {
    std::ostringstream os;
    os << "sync = " << sync_model_name(sync) << '\n';
    os << "workers = " << workers << '\n';
    os << "workload = " << (workload == WorkloadKind::mlp ? "mlp" : "synth") << '\n';
    os << "model_widths = " << list_to_string(model_widths) << '\n';
    os << "activation = " << (activation == Activation::relu ? "relu" : "tanh") << '\n';
    os << "loss = " << (loss_fn == Loss::softmax_cross_entropy ? "ce" : "mse") << '\n';
    if (!synth_layer_elems.empty()) {
        os << "synth_layer_elems = " << list_to_string(synth_layer_elems) << '\n';
    }
    os << "bytes_per_element = " << bytes_per_element << '\n';
    os << "synth_iters_per_epoch = " << synth_iters_per_epoch << '\n';
    if (!dataset_csv.empty()) {
        os << "dataset_csv = " << dataset_csv << '\n';
    } else {
        os << "dataset_n = " << dataset_n << '\n';
        os << "dataset_d = " << dataset_d << '\n';
        os << "dataset_classes = " << dataset_classes << '\n';
        os << "dataset_sep = " << num_to_string(dataset_sep) << '\n';
    }
    os << "eval_fraction = " << num_to_string(eval_fraction) << '\n';
    os << "bandwidth_gbps = " << num_to_string(bandwidth_gbps) << '\n';
    os << "latency_us = " << num_to_string(latency_us) << '\n';
    os << "loss_rate = " << num_to_string(loss_rate) << '\n';
    os << "tc_ms = " << num_to_string(tc_ms) << '\n';
    os << "jitter = " << num_to_string(jitter) << '\n';
    if (!straggler_mult.empty()) os << "straggler_mult = " << list_to_string(straggler_mult) << '\n';
    os << "agg_delay_ms = " << num_to_string(agg_delay_ms) << '\n';
    os << "gib_calc_delay_ms = " << num_to_string(gib_calc_delay_ms) << '\n';
    os << "gib_push_negligible = " << (gib_push_negligible ? "true" : "false") << '\n';
    os << "ssp_staleness = " << ssp_staleness << '\n';
    os << "chunk_period_ms = " << num_to_string(chunk_period_ms) << '\n';
    os << "eq5_literal = " << (eq5_literal ? "true" : "false") << '\n';
    os << "sgu_fixed_budget = " << sgu_fixed_budget << '\n';
    os << "umax_measured = " << (umax_measured ? "true" : "false") << '\n';
    os << "lr = " << num_to_string(lr) << '\n';
    os << "batch = " << batch << '\n';
    os << "epochs = " << epochs << '\n';
    os << "seed = " << seed << '\n';
    if (!out_dir.empty()) os << "out = " << out_dir << '\n';
    os << "trace = " << (trace ? "true" : "false") << '\n';
    return os.str();
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    ExperimentConfig cfg;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            size_t x = s.find_first_not_of(" \t\r");
            size_t y = s.find_last_not_of(" \t\r");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ParsedConfig parse_config(
    const std::string& file_path,
    const std::vector<std::pair<std::string, std::string>>& flag_overrides) {
    ParsedConfig out;
    if (!file_path.empty()) out.cfg = load_config_file(file_path);
    for (const auto& [key, value] : flag_overrides) {
        set_key(out.cfg, key, value);
        out.overridden.push_back(key);
    }
    out.cfg.validate();
    return out;
}

std::vector<std::string> config_keys() {
    return {"sync",          "workers",        "workload",
            "model_widths",  "activation",     "loss",
            "synth_layer_elems", "bytes_per_element", "synth_iters_per_epoch",
            "dataset_n",     "dataset_d",      "dataset_classes",
            "dataset_sep",   "dataset_csv",    "eval_fraction",
            "bandwidth_gbps", "latency_us",    "loss_rate",
            "tc_ms",         "jitter",         "straggler_mult",
            "agg_delay_ms",  "gib_calc_delay_ms", "gib_push_negligible",
            "ssp_staleness", "chunk_period_ms", "eq5_literal",
            "sgu_fixed_budget", "umax_measured", "lr",
            "batch",
            "epochs",        "seed",           "out",
            "trace"};
}

}  // namespace pslab
