#include "pslab/learner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pslab/rng.hpp"

namespace pslab {

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
    for (int w : widths) {
        if (w <= 0) throw ConfigError("mlp widths must be positive");
    }
}

Dataset synth_dataset(uint64_t seed, size_t n, size_t d, size_t classes, double separation) {
    if (n == 0 || d == 0 || classes == 0) {
        throw ConfigError("synthetic dataset needs n, d, classes > 0");
    }
    Rng rng(derive_seed(seed, seed_purpose::kDataset));
    Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.classes = classes;
    ds.features.resize(n * d);
    ds.labels.resize(n);
    // Centers sit `separation` apart along axis 0; unit-variance noise.
    for (size_t i = 0; i < n; ++i) {
        int label = static_cast<int>(i % classes);
        ds.labels[i] = label;
        for (size_t j = 0; j < d; ++j) {
            double center = (j == 0) ? separation * static_cast<double>(label) : 0.0;
            ds.features[i * d + j] = static_cast<float>(center + rng.normal());
        }
    }
    // Shuffle rows so shards are not class-striped.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);
    Dataset out = ds;
    for (size_t i = 0; i < n; ++i) {
        out.labels[i] = ds.labels[order[i]];
        std::copy(ds.row(order[i]), ds.row(order[i]) + d, out.features.begin() + i * d);
    }
    return out;
}

namespace {

bool parse_double(const std::string& field, double& out) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    for (auto& f : fields) {
        size_t a = f.find_first_not_of(" \t");
        size_t b = f.find_last_not_of(" \t");
        f = (a == std::string::npos) ? std::string() : f.substr(a, b - a + 1);
    }
    return fields;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Dataset ds;
    std::string line;
    size_t line_no = 0;
    bool first_data_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (!first_data_seen) {
            double probe;
            if (!parse_double(fields[0], probe)) continue;  // header row
            if (fields.size() < 2) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": need at least one feature and a label column");
            }
            ds.d = fields.size() - 1;
            first_data_seen = true;
        }
        if (fields.size() != ds.d + 1) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(ds.d + 1) + " columns, got " +
                             std::to_string(fields.size()));
        }
        for (size_t j = 0; j < ds.d; ++j) {
            double v;
            if (!parse_double(fields[j], v)) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": non-numeric feature '" + fields[j] + "'");
            }
            ds.features.push_back(static_cast<float>(v));
        }
        double lv;
        if (!parse_double(fields[ds.d], lv) || lv != std::floor(lv)) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": non-integer label '" +
                             fields[ds.d] + "'");
        }
        if (lv < 0) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": negative label");
        }
        ds.labels.push_back(static_cast<int>(lv));
        ++ds.n;
    }
    if (ds.n == 0) throw ParseError(path + ": empty dataset");
    ds.classes = static_cast<size_t>(*std::max_element(ds.labels.begin(), ds.labels.end())) + 1;
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    char buf[64];
    for (size_t i = 0; i < ds.n; ++i) {
        std::string line;
        for (size_t j = 0; j < ds.d; ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, ds.features[i * ds.d + j]);
            (void)ec;
            line.append(buf, ptr);
            line += ',';
        }
        line += std::to_string(ds.labels[i]);
        line += '\n';
        out << line;
    }
    if (!out) throw IoError("write failed for " + path);
}

std::vector<size_t> shuffle_epoch(size_t n, uint64_t seed, uint64_t epoch, uint64_t worker_id) {
    if (n == 0) throw ConfigError("cannot shuffle an empty index range");
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t{0});
    Rng rng(derive_seed(seed, seed_purpose::kShuffle, epoch, worker_id));
    rng.shuffle(perm);
    return perm;
}

PartitionPtr mlp_partition(const MlpSpec& spec, uint32_t bytes_per_element) {
    spec.validate();
    std::vector<size_t> counts;
    for (size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        size_t in = static_cast<size_t>(spec.widths[l]);
        size_t out = static_cast<size_t>(spec.widths[l + 1]);
        counts.push_back(in * out);  // weight matrix, row-major out x in
        counts.push_back(out);       // bias
    }
    return make_partition(counts, bytes_per_element);
}

ParamVector init_params(const MlpSpec& spec, uint64_t seed, PartitionPtr part) {
    if (!part) part = mlp_partition(spec);
    if (part->total_count() != mlp_partition(spec)->total_count()) {
        throw ShapeError("partition does not match the mlp layout");
    }
    ParamVector params = zeros_params(part);
    Rng rng(derive_seed(seed, seed_purpose::kParamInit));
    size_t at = 0;
    for (size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        size_t in = static_cast<size_t>(spec.widths[l]);
        size_t out = static_cast<size_t>(spec.widths[l + 1]);
        double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (size_t k = 0; k < in * out; ++k) {
            params.values[at++] = static_cast<float>(rng.uniform(-limit, limit));
        }
        at += out;  // biases stay zero
    }
    return params;
}

namespace {

struct LayerView {
    const float* w;  // out x in, row-major
    const float* b;
    size_t in;
    size_t out;
};

std::vector<LayerView> layer_views(const MlpSpec& spec, const ParamVector& params) {
    std::vector<LayerView> views;
    size_t at = 0;
    for (size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        size_t in = static_cast<size_t>(spec.widths[l]);
        size_t out = static_cast<size_t>(spec.widths[l + 1]);
        LayerView v{params.values.data() + at, params.values.data() + at + in * out, in, out};
        views.push_back(v);
        at += in * out + out;
    }
    if (at != params.values.size()) {
        throw ShapeError("params do not match the mlp partition");
    }
    return views;
}

double act_forward(Activation a, double z) {
    return a == Activation::relu ? (z > 0 ? z : 0.0) : std::tanh(z);
}

double act_backward(Activation a, double z, double activated) {
    return a == Activation::relu ? (z > 0 ? 1.0 : 0.0) : 1.0 - activated * activated;
}

// Loss for one sample given output-layer values; fills dloss/dz when dz is
// non-null. MSE targets are one-hot except for width-1 outputs, where the
// label is used as a plain numeric target.
double sample_loss(const MlpSpec& spec, const std::vector<double>& z, int label,
                   std::vector<double>* dz) {
    size_t k = z.size();
    if (spec.loss == Loss::softmax_cross_entropy) {
        double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        double logsum = std::log(sum) + zmax;
        size_t y = static_cast<size_t>(label);
        if (y >= k) throw ShapeError("label exceeds output width");
        double loss = logsum - z[y];
        if (dz) {
            for (size_t c = 0; c < k; ++c) {
                double p = std::exp(z[c] - logsum);
                (*dz)[c] = p - (c == y ? 1.0 : 0.0);
            }
        }
        return loss;
    }
    double loss = 0.0;
    for (size_t c = 0; c < k; ++c) {
        double target = (k == 1) ? static_cast<double>(label)
                                 : (static_cast<size_t>(label) == c ? 1.0 : 0.0);
        double diff = z[c] - target;
        loss += diff * diff;
        if (dz) (*dz)[c] = 2.0 * diff;
    }
    return loss;
}

void check_batch(const Dataset& ds, const Batch& batch) {
    if (batch.empty()) throw ShapeError("batch is empty");
    for (size_t i : batch) {
        if (i >= ds.n) throw ShapeError("batch row index out of range");
    }
}

}  // namespace

double batch_loss(const MlpSpec& spec, const ParamVector& params, const Dataset& ds,
                  const Batch& batch) {
    spec.validate();
    check_batch(ds, batch);
    auto views = layer_views(spec, params);
    size_t depth = views.size();
    std::vector<std::vector<double>> acts(depth + 1);
    double total = 0.0;
    for (size_t bi : batch) {
        acts[0].assign(ds.row(bi), ds.row(bi) + ds.d);
        for (size_t l = 0; l < depth; ++l) {
            const LayerView& v = views[l];
            acts[l + 1].assign(v.out, 0.0);
            for (size_t o = 0; o < v.out; ++o) {
                double z = static_cast<double>(v.b[o]);
                const float* wrow = v.w + o * v.in;
                for (size_t i = 0; i < v.in; ++i) {
                    z += static_cast<double>(wrow[i]) * acts[l][i];
                }
                acts[l + 1][o] = (l + 1 < depth) ? act_forward(spec.activation, z) : z;
            }
        }
        total += sample_loss(spec, acts[depth], ds.labels[bi], nullptr);
    }
    double mean = total / static_cast<double>(batch.size());
    if (!std::isfinite(mean)) throw NumericError("loss is not finite");
    return mean;
}

ForwardBackwardResult forward_backward(const MlpSpec& spec, const ParamVector& params,
                                       const Dataset& ds, const Batch& batch) {
    spec.validate();
    check_batch(ds, batch);
    auto views = layer_views(spec, params);
    size_t depth = views.size();

    std::vector<double> grad_acc(params.values.size(), 0.0);
    std::vector<std::vector<double>> pre(depth + 1);   // pre-activations
    std::vector<std::vector<double>> acts(depth + 1);  // post-activations
    std::vector<std::vector<double>> delta(depth + 1);

    double total_loss = 0.0;
    for (size_t bi : batch) {
        acts[0].assign(ds.row(bi), ds.row(bi) + ds.d);
        for (size_t l = 0; l < depth; ++l) {
            const LayerView& v = views[l];
            pre[l + 1].assign(v.out, 0.0);
            acts[l + 1].assign(v.out, 0.0);
            for (size_t o = 0; o < v.out; ++o) {
                double z = static_cast<double>(v.b[o]);
                const float* wrow = v.w + o * v.in;
                for (size_t i = 0; i < v.in; ++i) {
                    z += static_cast<double>(wrow[i]) * acts[l][i];
                }
                pre[l + 1][o] = z;
                acts[l + 1][o] = (l + 1 < depth) ? act_forward(spec.activation, z) : z;
            }
        }
        delta[depth].assign(views[depth - 1].out, 0.0);
        total_loss += sample_loss(spec, acts[depth], ds.labels[bi], &delta[depth]);

        size_t at = params.values.size();
        for (size_t l = depth; l-- > 0;) {
            const LayerView& v = views[l];
            at -= v.in * v.out + v.out;
            double* dw = grad_acc.data() + at;
            double* db = grad_acc.data() + at + v.in * v.out;
            if (l > 0) delta[l].assign(v.in, 0.0);
            for (size_t o = 0; o < v.out; ++o) {
                double dz = delta[l + 1][o];
                db[o] += dz;
                double* dwrow = dw + o * v.in;
                const float* wrow = v.w + o * v.in;
                for (size_t i = 0; i < v.in; ++i) {
                    dwrow[i] += dz * acts[l][i];
                    if (l > 0) delta[l][i] += dz * static_cast<double>(wrow[i]);
                }
            }
            if (l > 0) {
                for (size_t i = 0; i < v.in; ++i) {
                    delta[l][i] *= act_backward(spec.activation, pre[l][i], acts[l][i]);
                }
            }
        }
    }

    ForwardBackwardResult res;
    res.loss = total_loss / static_cast<double>(batch.size());
    if (!std::isfinite(res.loss)) throw NumericError("loss is not finite");
    res.grad = zeros_grads(params.part);
    double inv = 1.0 / static_cast<double>(batch.size());
    for (size_t k = 0; k < grad_acc.size(); ++k) {
        double g = grad_acc[k] * inv;
        if (!std::isfinite(g)) throw NumericError("gradient is not finite");
        res.grad.values[k] = static_cast<float>(g);
    }
    return res;
}

GradVector finite_diff_grad(const MlpSpec& spec, const ParamVector& params, const Dataset& ds,
                            const Batch& batch, double eps) {
    if (eps <= 0) throw ConfigError("finite-difference eps must be positive");
    GradVector grad = zeros_grads(params.part);
    ParamVector probe = params;
    for (size_t k = 0; k < params.values.size(); ++k) {
        float original = params.values[k];
        float up_v = static_cast<float>(static_cast<double>(original) + eps);
        float down_v = static_cast<float>(static_cast<double>(original) - eps);
        probe.values[k] = up_v;
        double up = batch_loss(spec, probe, ds, batch);
        probe.values[k] = down_v;
        double down = batch_loss(spec, probe, ds, batch);
        probe.values[k] = original;
        // Divide by the realized perturbation: the stored values are rounded
        // to the element type, and 2*eps would misstate the step size.
        double step = static_cast<double>(up_v) - static_cast<double>(down_v);
        grad.values[k] = static_cast<float>((up - down) / step);
    }
    return grad;
}

GradVector sgd_delta(const GradVector& grad, double learning_rate) {
    if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
    GradVector delta = grad;
    for (float& v : delta.values) {
        v = static_cast<float>(-learning_rate * static_cast<double>(v));
    }
    return delta;
}

double lr_at_epoch(double initial_lr, uint64_t epoch) {
    if (epoch < 1) throw ConfigError("epochs are 1-based");
    return std::ldexp(initial_lr, -static_cast<int>(epoch / 10));
}

double evaluate(const MlpSpec& spec, const ParamVector& params, const Dataset& ds) {
    spec.validate();
    if (ds.n == 0) throw ShapeError("cannot evaluate on an empty dataset");
    auto views = layer_views(spec, params);
    size_t depth = views.size();
    std::vector<std::vector<double>> acts(depth + 1);
    size_t correct = 0;
    for (size_t r = 0; r < ds.n; ++r) {
        acts[0].assign(ds.row(r), ds.row(r) + ds.d);
        for (size_t l = 0; l < depth; ++l) {
            const LayerView& v = views[l];
            acts[l + 1].assign(v.out, 0.0);
            for (size_t o = 0; o < v.out; ++o) {
                double z = static_cast<double>(v.b[o]);
                const float* wrow = v.w + o * v.in;
                for (size_t i = 0; i < v.in; ++i) {
                    z += static_cast<double>(wrow[i]) * acts[l][i];
                }
                acts[l + 1][o] = (l + 1 < depth) ? act_forward(spec.activation, z) : z;
            }
        }
        const auto& out = acts[depth];
        size_t best = 0;
        for (size_t c = 1; c < out.size(); ++c) {
            if (out[c] > out[best]) best = c;  // ties keep the lower id
        }
        if (static_cast<int>(best) == ds.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.n);
}

}  // namespace pslab
