#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pslab/param.hpp"

namespace pslab {

enum class Activation { relu, tanh };
enum class Loss { softmax_cross_entropy, mse };

struct MlpSpec {
    std::vector<int> widths;  // input, hidden..., output
    Activation activation = Activation::relu;
    Loss loss = Loss::softmax_cross_entropy;

    void validate() const;
    size_t num_linear_layers() const { return widths.size() - 1; }
};

struct Dataset {
    size_t n = 0;
    size_t d = 0;
    size_t classes = 0;
    std::vector<float> features;  // n x d row-major
    std::vector<int> labels;      // class ids in [0, classes)

    const float* row(size_t i) const { return features.data() + i * d; }
};

// Row indices into a dataset.
using Batch = std::vector<size_t>;

// Gaussian blobs, one center per class, centers spaced `separation` apart
// along the first axis. Labels are exactly balanced; row order is shuffled.
Dataset synth_dataset(uint64_t seed, size_t n, size_t d, size_t classes, double separation);

// CSV with d numeric feature columns then one integer label column. A header
// row is detected by a non-numeric first field.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

// Deterministic permutation of [0, n), keyed by (seed, epoch, worker).
std::vector<size_t> shuffle_epoch(size_t n, uint64_t seed, uint64_t epoch, uint64_t worker_id);

// One partition layer per weight matrix and per bias vector, in network
// order: W0, b0, W1, b1, ...
PartitionPtr mlp_partition(const MlpSpec& spec, uint32_t bytes_per_element = 4);

// Glorot-uniform weights, zero biases. A caller-supplied partition must
// match the spec's layer element counts.
ParamVector init_params(const MlpSpec& spec, uint64_t seed, PartitionPtr part = nullptr);

struct ForwardBackwardResult {
    double loss = 0.0;
    GradVector grad;
};

// Mean loss over the batch and the analytic gradient of that mean.
// Intermediate math runs in double; results are stored in the vectors'
// 32-bit element type.
ForwardBackwardResult forward_backward(const MlpSpec& spec, const ParamVector& params,
                                       const Dataset& ds, const Batch& batch);

// Loss only (shared by forward_backward and the finite-difference oracle).
double batch_loss(const MlpSpec& spec, const ParamVector& params, const Dataset& ds,
                  const Batch& batch);

// Central differences (L(p + eps e_k) - L(p - eps e_k)) / (2 eps). Goes
// through batch_loss only, never the backprop path.
GradVector finite_diff_grad(const MlpSpec& spec, const ParamVector& params, const Dataset& ds,
                            const Batch& batch, double eps = 1e-4);

// Elementwise -lr * grad.
GradVector sgd_delta(const GradVector& grad, double learning_rate);

// Initial rate halved every 10 epochs; epochs are 1-based.
double lr_at_epoch(double initial_lr, uint64_t epoch);

// Top-1 accuracy; argmax ties break toward the lowest class id.
double evaluate(const MlpSpec& spec, const ParamVector& params, const Dataset& ds);

}  // namespace pslab
