#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pslab/param.hpp"

namespace pslab {

// Per-layer importance scores; index is the layer id.
struct LayerImportance {
    std::vector<double> scores;
};

// Sum of |g_j * p_j| over each layer. Scores are non-negative and scale
// linearly with either input, so any positive rescaling of the gradients
// leaves the ranking unchanged.
LayerImportance pgp_layer_importance(const ParamVector& params, const GradVector& grads);

// Layer ids sorted ascending by score, ties broken by lower id.
std::vector<int> rank_layers(const LayerImportance& imp);

// Which layers are deferred to in-computation sync. The complement is the
// set synchronized at the iteration barrier.
struct Gib {
    LayerSet ics_set;
    uint32_t iteration_tag = 0;

    bool operator==(const Gib& other) const {
        return ics_set == other.ics_set && iteration_tag == other.iteration_tag;
    }
};

// Walk layers from least important up, adding each while the cumulative byte
// size stays within budget; stop at the first layer that does not fit.
Gib build_gib(const LayerImportance& imp, const LayerPartition& part, uint64_t budget_bytes,
              uint32_t iteration_tag);

// Wire format: iteration_tag (4B LE), layer_count (4B LE), then
// ceil(layer_count / 8) bitmap bytes; bit (k % 8) of byte (k / 8) marks
// layer k as deferred.
std::vector<uint8_t> gib_encode(const Gib& g, size_t layer_count);
Gib gib_decode(std::span<const uint8_t> buf);

uint64_t gib_encoded_size(size_t layer_count);

}  // namespace pslab
