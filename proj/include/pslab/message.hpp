#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pslab/importance.hpp"
#include "pslab/param.hpp"

namespace pslab {

enum class MsgKind : uint8_t {
    PushImportant = 0,
    PushIcsChunk = 1,
    PullImportant = 2,
    IcsGlobalChunk = 3,
    GibUpdate = 4,
    LossReport = 5,
    PushFull = 6,
    PullFull = 7,
};

const char* msg_kind_name(MsgKind k);

struct Message {
    MsgKind kind = MsgKind::PushFull;
    uint32_t iteration = 0;
    int from_worker = -1;  // -1 = server
    LayerPayload payload;
    std::optional<Gib> gib;
    // Rank companion for GibUpdate: deferred layers ordered least important
    // first. Carried in memory; a byte transport would need a side channel
    // (see README notes on the wire formats).
    std::vector<int> ics_rank_order;
    double scalar = 0.0;  // LossReport value
};

// Simulated size. Gradient payloads count value bytes (layer count times
// bytes_per_element); the GIB counts its encoded size; loss reports are one
// scalar. Headers are not modeled.
uint64_t message_size_bytes(const Message& msg, const LayerPartition& part);

// Canonical byte encoding for payload-carrying messages:
//   kind (1B), iteration (4B LE), layer_entries (2B LE), then per layer
//   layer_id (4B LE), count (4B LE), values (4B LE IEEE-754 each).
std::vector<uint8_t> encode_payload_message(const Message& msg);
Message decode_payload_message(std::span<const uint8_t> buf);

}  // namespace pslab
