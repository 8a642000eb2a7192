#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "pslab/errors.hpp"

namespace pslab {

struct LayerInfo {
    int layer_id = 0;
    size_t offset = 0;
    size_t count = 0;
};

// Immutable description of how a flat parameter vector splits into named
// layers. Layer ids are dense from 0 and offsets are contiguous in id order.
class LayerPartition {
public:
    static LayerPartition make(const std::vector<size_t>& layer_counts,
                               uint32_t bytes_per_element = 4);

    size_t layer_count() const { return layers_.size(); }
    size_t total_count() const { return total_count_; }
    uint32_t bytes_per_element() const { return bytes_per_element_; }
    uint64_t total_bytes() const { return static_cast<uint64_t>(total_count_) * bytes_per_element_; }

    const LayerInfo& layer(int id) const;
    uint64_t layer_bytes(int id) const {
        return static_cast<uint64_t>(layer(id).count) * bytes_per_element_;
    }

private:
    std::vector<LayerInfo> layers_;
    size_t total_count_ = 0;
    uint32_t bytes_per_element_ = 4;
};

// Partitions are shared read-only between every vector, engine and worker.
using PartitionPtr = std::shared_ptr<const LayerPartition>;

PartitionPtr make_partition(const std::vector<size_t>& layer_counts,
                            uint32_t bytes_per_element = 4);

// Bitmap of layer ids against a fixed layer count.
class LayerSet {
public:
    LayerSet() = default;
    explicit LayerSet(size_t layer_count) : bits_(layer_count, false) {}

    static LayerSet none(size_t layer_count) { return LayerSet(layer_count); }
    static LayerSet all(size_t layer_count) {
        LayerSet s(layer_count);
        s.bits_.assign(layer_count, true);
        return s;
    }

    size_t layer_count() const { return bits_.size(); }
    size_t popcount() const;
    bool empty() const { return popcount() == 0; }

    void set(int id, bool value = true);
    bool test(int id) const;

    LayerSet complement() const;

    bool operator==(const LayerSet& other) const { return bits_ == other.bits_; }

private:
    std::vector<bool> bits_;
};

// Flat value storage over a partition. Values are 32-bit floats: payloads
// travel the wire as 4-byte IEEE-754 elements, so keeping storage in the wire
// type makes slice/merge/encode round trips and cross-engine comparisons
// bit-exact.
struct ParamVector {
    PartitionPtr part;
    std::vector<float> values;
};

struct GradVector {
    PartitionPtr part;
    std::vector<float> values;
};

// Wire representation of a layer-sparse gradient: layer_id -> values.
// std::map keeps layer order ascending, which fixes summation/merge order.
using LayerPayload = std::map<int, std::vector<float>>;

ParamVector zeros_params(PartitionPtr part);
GradVector zeros_grads(PartitionPtr part);

LayerPayload slice_layers(const ParamVector& v, const LayerSet& s);
LayerPayload slice_layers(const GradVector& v, const LayerSet& s);

void merge_payload(ParamVector& v, const LayerPayload& p);
void merge_payload(GradVector& v, const LayerPayload& p);

// p' = p + scale * d, elementwise in ascending index order.
void apply_delta(ParamVector& p, const GradVector& d, float scale);
// Payload form touches only the listed layers.
void apply_delta(ParamVector& p, const LayerPayload& d, float scale);

uint64_t layer_bytes(const LayerSet& s, const LayerPartition& part);
uint64_t payload_value_bytes(const LayerPayload& p, const LayerPartition& part);

void check_same_shape(const ParamVector& a, const GradVector& b);

}  // namespace pslab
