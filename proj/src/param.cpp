#include "pslab/param.hpp"

#include <cmath>
#include <string>

namespace pslab {

LayerPartition LayerPartition::make(const std::vector<size_t>& layer_counts,
                                    uint32_t bytes_per_element) {
    if (layer_counts.empty()) {
        throw PartitionError("partition needs at least one layer");
    }
    if (bytes_per_element == 0) {
        throw PartitionError("bytes_per_element must be positive");
    }
    LayerPartition part;
    part.bytes_per_element_ = bytes_per_element;
    part.layers_.reserve(layer_counts.size());
    size_t offset = 0;
    for (size_t i = 0; i < layer_counts.size(); ++i) {
        if (layer_counts[i] == 0) {
            throw PartitionError("layer " + std::to_string(i) + " has zero elements");
        }
        part.layers_.push_back({static_cast<int>(i), offset, layer_counts[i]});
        offset += layer_counts[i];
    }
    part.total_count_ = offset;
    return part;
}

const LayerInfo& LayerPartition::layer(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= layers_.size()) {
        throw LayerError("layer id " + std::to_string(id) + " out of range (have " +
                         std::to_string(layers_.size()) + " layers)");
    }
    return layers_[static_cast<size_t>(id)];
}

PartitionPtr make_partition(const std::vector<size_t>& layer_counts, uint32_t bytes_per_element) {
    return std::make_shared<const LayerPartition>(
        LayerPartition::make(layer_counts, bytes_per_element));
}

size_t LayerSet::popcount() const {
    size_t n = 0;
    for (bool b : bits_) n += b ? 1 : 0;
    return n;
}

void LayerSet::set(int id, bool value) {
    if (id < 0 || static_cast<size_t>(id) >= bits_.size()) {
        throw LayerError("layer id " + std::to_string(id) + " outside bitmap of " +
                         std::to_string(bits_.size()) + " layers");
    }
    bits_[static_cast<size_t>(id)] = value;
}

bool LayerSet::test(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= bits_.size()) {
        throw LayerError("layer id " + std::to_string(id) + " outside bitmap of " +
                         std::to_string(bits_.size()) + " layers");
    }
    return bits_[static_cast<size_t>(id)];
}

LayerSet LayerSet::complement() const {
    LayerSet out(bits_.size());
    for (size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = !bits_[i];
    return out;
}

ParamVector zeros_params(PartitionPtr part) {
    ParamVector v;
    v.values.assign(part->total_count(), 0.0f);
    v.part = std::move(part);
    return v;
}

GradVector zeros_grads(PartitionPtr part) {
    GradVector v;
    v.values.assign(part->total_count(), 0.0f);
    v.part = std::move(part);
    return v;
}

namespace {

template <typename Vec>
LayerPayload slice_impl(const Vec& v, const LayerSet& s) {
    if (s.layer_count() != v.part->layer_count()) {
        throw LayerError("layer set covers " + std::to_string(s.layer_count()) +
                         " layers, partition has " + std::to_string(v.part->layer_count()));
    }
    LayerPayload out;
    for (size_t id = 0; id < s.layer_count(); ++id) {
        if (!s.test(static_cast<int>(id))) continue;
        const LayerInfo& info = v.part->layer(static_cast<int>(id));
        out.emplace(info.layer_id,
                    std::vector<float>(v.values.begin() + static_cast<ptrdiff_t>(info.offset),
                                       v.values.begin() +
                                           static_cast<ptrdiff_t>(info.offset + info.count)));
    }
    return out;
}

template <typename Vec>
void merge_impl(Vec& v, const LayerPayload& p) {
    for (const auto& [id, vals] : p) {
        const LayerInfo& info = v.part->layer(id);
        if (vals.size() != info.count) {
            throw ShapeError("payload layer " + std::to_string(id) + " has " +
                             std::to_string(vals.size()) + " values, expected " +
                             std::to_string(info.count));
        }
        std::copy(vals.begin(), vals.end(), v.values.begin() + static_cast<ptrdiff_t>(info.offset));
    }
}

}  // namespace

LayerPayload slice_layers(const ParamVector& v, const LayerSet& s) { return slice_impl(v, s); }
LayerPayload slice_layers(const GradVector& v, const LayerSet& s) { return slice_impl(v, s); }

void merge_payload(ParamVector& v, const LayerPayload& p) { merge_impl(v, p); }
void merge_payload(GradVector& v, const LayerPayload& p) { merge_impl(v, p); }

void apply_delta(ParamVector& p, const GradVector& d, float scale) {
    if (p.values.size() != d.values.size()) {
        throw ShapeError("delta length " + std::to_string(d.values.size()) +
                         " does not match param length " + std::to_string(p.values.size()));
    }
    for (size_t i = 0; i < p.values.size(); ++i) {
        p.values[i] += scale * d.values[i];
    }
}

void apply_delta(ParamVector& p, const LayerPayload& d, float scale) {
    for (const auto& [id, vals] : d) {
        const LayerInfo& info = p.part->layer(id);
        if (vals.size() != info.count) {
            throw ShapeError("delta for layer " + std::to_string(id) + " has " +
                             std::to_string(vals.size()) + " values, expected " +
                             std::to_string(info.count));
        }
        float* dst = p.values.data() + info.offset;
        for (size_t i = 0; i < info.count; ++i) {
            dst[i] += scale * vals[i];
        }
    }
}

uint64_t layer_bytes(const LayerSet& s, const LayerPartition& part) {
    if (s.layer_count() != part.layer_count()) {
        throw LayerError("layer set size does not match partition");
    }
    uint64_t total = 0;
    for (size_t id = 0; id < s.layer_count(); ++id) {
        if (s.test(static_cast<int>(id))) total += part.layer_bytes(static_cast<int>(id));
    }
    return total;
}

uint64_t payload_value_bytes(const LayerPayload& p, const LayerPartition& part) {
    uint64_t total = 0;
    for (const auto& [id, vals] : p) {
        (void)vals;
        total += part.layer_bytes(id);
    }
    return total;
}

void check_same_shape(const ParamVector& a, const GradVector& b) {
    if (a.values.size() != b.values.size()) {
        throw ShapeError("param/grad length mismatch: " + std::to_string(a.values.size()) +
                         " vs " + std::to_string(b.values.size()));
    }
}

}  // namespace pslab
