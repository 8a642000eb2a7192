#include "pslab/message.hpp"

#include <cstring>

namespace pslab {

const char* msg_kind_name(MsgKind k) {
    switch (k) {
        case MsgKind::PushImportant: return "PushImportant";
        case MsgKind::PushIcsChunk: return "PushIcsChunk";
        case MsgKind::PullImportant: return "PullImportant";
        case MsgKind::IcsGlobalChunk: return "IcsGlobalChunk";
        case MsgKind::GibUpdate: return "GibUpdate";
        case MsgKind::LossReport: return "LossReport";
        case MsgKind::PushFull: return "PushFull";
        case MsgKind::PullFull: return "PullFull";
    }
    return "?";
}

uint64_t message_size_bytes(const Message& msg, const LayerPartition& part) {
    switch (msg.kind) {
        case MsgKind::GibUpdate:
            return gib_encoded_size(part.layer_count());
        case MsgKind::LossReport:
            return 8;
        default:
            return payload_value_bytes(msg.payload, part);
    }
}

namespace {

void put_u16le(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

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

std::vector<uint8_t> encode_payload_message(const Message& msg) {
    if (msg.payload.size() > 0xffff) {
        throw FormatError("payload has too many layers for the wire format");
    }
    std::vector<uint8_t> out;
    out.push_back(static_cast<uint8_t>(msg.kind));
    put_u32le(out, msg.iteration);
    put_u16le(out, static_cast<uint16_t>(msg.payload.size()));
    for (const auto& [id, vals] : msg.payload) {
        put_u32le(out, static_cast<uint32_t>(id));
        put_u32le(out, static_cast<uint32_t>(vals.size()));
        for (float v : vals) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32le(out, bits);
        }
    }
    return out;
}

Message decode_payload_message(std::span<const uint8_t> buf) {
    if (buf.size() < 7) throw FormatError("message header truncated");
    Message msg;
    msg.kind = static_cast<MsgKind>(buf[0]);
    msg.iteration = get_u32le(buf, 1);
    uint16_t entries = static_cast<uint16_t>(buf[5] | (buf[6] << 8));
    size_t at = 7;
    for (uint16_t e = 0; e < entries; ++e) {
        if (buf.size() < at + 8) throw FormatError("layer entry header truncated");
        uint32_t id = get_u32le(buf, at);
        uint32_t count = get_u32le(buf, at + 4);
        at += 8;
        if (buf.size() < at + static_cast<size_t>(count) * 4) {
            throw FormatError("layer values truncated");
        }
        std::vector<float> vals(count);
        for (uint32_t i = 0; i < count; ++i) {
            uint32_t bits = get_u32le(buf, at);
            std::memcpy(&vals[i], &bits, 4);
            at += 4;
        }
        msg.payload.emplace(static_cast<int>(id), std::move(vals));
    }
    if (at != buf.size()) throw FormatError("trailing bytes after message payload");
    return msg;
}

}  // namespace pslab
