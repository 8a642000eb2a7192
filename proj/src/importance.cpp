#include "pslab/importance.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace pslab {

LayerImportance pgp_layer_importance(const ParamVector& params, const GradVector& grads) {
    check_same_shape(params, grads);
    if (params.part->layer_count() != grads.part->layer_count()) {
        throw ShapeError("param/grad partitions disagree on layer count");
    }
    LayerImportance imp;
    imp.scores.resize(params.part->layer_count(), 0.0);
    for (size_t id = 0; id < imp.scores.size(); ++id) {
        const LayerInfo& info = params.part->layer(static_cast<int>(id));
        double sum = 0.0;
        for (size_t j = info.offset; j < info.offset + info.count; ++j) {
            sum += std::abs(static_cast<double>(grads.values[j]) *
                            static_cast<double>(params.values[j]));
        }
        imp.scores[id] = sum;
    }
    return imp;
}

std::vector<int> rank_layers(const LayerImportance& imp) {
    std::vector<int> order(imp.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (imp.scores[static_cast<size_t>(a)] != imp.scores[static_cast<size_t>(b)]) {
            return imp.scores[static_cast<size_t>(a)] < imp.scores[static_cast<size_t>(b)];
        }
        return a < b;
    });
    return order;
}

Gib build_gib(const LayerImportance& imp, const LayerPartition& part, uint64_t budget_bytes,
              uint32_t iteration_tag) {
    if (imp.scores.size() != part.layer_count()) {
        throw ShapeError("importance covers " + std::to_string(imp.scores.size()) +
                         " layers, partition has " + std::to_string(part.layer_count()));
    }
    Gib gib;
    gib.ics_set = LayerSet::none(part.layer_count());
    gib.iteration_tag = iteration_tag;
    uint64_t used = 0;
    for (int id : rank_layers(imp)) {
        uint64_t sz = part.layer_bytes(id);
        if (used + sz > budget_bytes) break;  // prefix rule: stop at first misfit
        gib.ics_set.set(id);
        used += sz;
    }
    return gib;
}

uint64_t gib_encoded_size(size_t layer_count) { return 8 + (layer_count + 7) / 8; }

namespace {

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32le(std::span<const uint8_t> buf, size_t at) {
    return static_cast<uint32_t>(buf[at]) | (static_cast<uint32_t>(buf[at + 1]) << 8) |
           (static_cast<uint32_t>(buf[at + 2]) << 16) | (static_cast<uint32_t>(buf[at + 3]) << 24);
}

}  // namespace

std::vector<uint8_t> gib_encode(const Gib& g, size_t layer_count) {
    if (g.ics_set.layer_count() != layer_count) {
        throw ShapeError("gib bitmap covers " + std::to_string(g.ics_set.layer_count()) +
                         " layers, expected " + std::to_string(layer_count));
    }
    std::vector<uint8_t> out;
    out.reserve(gib_encoded_size(layer_count));
    put_u32le(out, g.iteration_tag);
    put_u32le(out, static_cast<uint32_t>(layer_count));
    out.resize(gib_encoded_size(layer_count), 0);
    for (size_t k = 0; k < layer_count; ++k) {
        if (g.ics_set.test(static_cast<int>(k))) {
            out[8 + k / 8] |= static_cast<uint8_t>(1u << (k % 8));
        }
    }
    return out;
}

Gib gib_decode(std::span<const uint8_t> buf) {
    if (buf.size() < 8) {
        throw FormatError("gib buffer truncated: " + std::to_string(buf.size()) + " bytes");
    }
    uint32_t tag = get_u32le(buf, 0);
    uint32_t layer_count = get_u32le(buf, 4);
    if (buf.size() < gib_encoded_size(layer_count)) {
        throw FormatError("gib bitmap truncated: need " +
                          std::to_string(gib_encoded_size(layer_count)) + " bytes, have " +
                          std::to_string(buf.size()));
    }
    Gib g;
    g.iteration_tag = tag;
    g.ics_set = LayerSet::none(layer_count);
    for (size_t k = 0; k < layer_count; ++k) {
        if (buf[8 + k / 8] & (1u << (k % 8))) {
            g.ics_set.set(static_cast<int>(k));
        }
    }
    return g;
}

}  // namespace pslab
