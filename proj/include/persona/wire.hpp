#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "persona/errors.hpp"
#include "persona/model.hpp"

namespace persona {

/// In-process device-cloud wire format. Little-endian throughout:
///   header  = magic "PEDT" | version u16 | message-type u16 | payload-len u32
///   upload  = device_id u32 | count u32 | item ids u32 each
///   download= group u16 | layer count u16 | per layer: rows u16, cols u16,
///             f32 weights row-major
namespace wire {

constexpr char kMagic[4] = {'P', 'E', 'D', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kUploadType = 1;
constexpr std::uint16_t kDownloadType = 2;
constexpr std::size_t kHeaderSize = 12;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw protocol_error("wire: truncated message");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

inline void put_header(std::vector<std::uint8_t>& buf, std::uint16_t type, std::uint32_t payload_len) {
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u16(buf, kVersion);
    put_u16(buf, type);
    put_u32(buf, payload_len);
}

inline std::uint16_t check_header(Reader& r, std::uint16_t expect_type) {
    r.need(kHeaderSize);
    if (std::memcmp(r.buf.data(), kMagic, 4) != 0) throw protocol_error("wire: bad magic");
    r.pos = 4;
    const std::uint16_t version = r.u16();
    if (version != kVersion)
        throw protocol_error("wire: unsupported version " + std::to_string(version));
    const std::uint16_t type = r.u16();
    if (type != expect_type) throw protocol_error("wire: unexpected message type");
    const std::uint32_t len = r.u32();
    if (r.pos + len != r.buf.size()) throw protocol_error("wire: payload length mismatch");
    return type;
}

}  // namespace detail

struct UploadMessage {
    std::uint32_t device_id = 0;
    std::vector<std::uint32_t> window;
};

inline std::vector<std::uint8_t> encode_upload(const UploadMessage& m) {
    std::vector<std::uint8_t> buf;
    const std::uint32_t payload = 8 + 4 * static_cast<std::uint32_t>(m.window.size());
    detail::put_header(buf, kUploadType, payload);
    detail::put_u32(buf, m.device_id);
    detail::put_u32(buf, static_cast<std::uint32_t>(m.window.size()));
    for (auto id : m.window) detail::put_u32(buf, id);
    return buf;
}

inline UploadMessage decode_upload(const std::vector<std::uint8_t>& buf) {
    detail::Reader r{buf};
    detail::check_header(r, kUploadType);
    UploadMessage m;
    m.device_id = r.u32();
    const std::uint32_t count = r.u32();
    m.window.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) m.window.push_back(r.u32());
    return m;
}

struct DownloadMessage {
    std::uint16_t group = 0;
    AdaptiveLayerSet weights;
};

inline std::vector<std::uint8_t> encode_download(const DownloadMessage& m) {
    std::vector<std::uint8_t> buf;
    std::uint32_t payload = 4;
    for (const auto& l : m.weights.layers) payload += 4 + 4 * static_cast<std::uint32_t>(l.size());
    detail::put_header(buf, kDownloadType, payload);
    detail::put_u16(buf, m.group);
    detail::put_u16(buf, static_cast<std::uint16_t>(m.weights.layers.size()));
    for (const auto& l : m.weights.layers) {
        detail::put_u16(buf, static_cast<std::uint16_t>(l.rows()));
        detail::put_u16(buf, static_cast<std::uint16_t>(l.cols()));
        for (std::size_t i = 0; i < l.size(); ++i)
            detail::put_f32(buf, static_cast<float>(l.at(i)));
    }
    return buf;
}

inline DownloadMessage decode_download(const std::vector<std::uint8_t>& buf) {
    detail::Reader r{buf};
    detail::check_header(r, kDownloadType);
    DownloadMessage m;
    m.group = r.u16();
    const std::uint16_t layers = r.u16();
    std::vector<Matrix> ls;
    for (std::uint16_t n = 0; n < layers; ++n) {
        const std::uint16_t rows = r.u16();
        const std::uint16_t cols = r.u16();
        Matrix w(rows, cols);
        for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = static_cast<double>(r.f32());
        ls.push_back(std::move(w));
    }
    m.weights = AdaptiveLayerSet(std::move(ls));
    return m;
}

/// Accounted message sizes used in SyncRecords: 8 bytes per uploaded item
/// (id + sequence slot) and 4 bytes per downloaded weight, plus a 16-byte
/// header each.
inline std::size_t upload_accounting(std::size_t window_len) { return 8 * window_len + 16; }

inline std::size_t download_accounting(const AdaptiveLayerSet& weights) {
    std::size_t floats = 0;
    for (const auto& l : weights.layers) floats += l.size();
    return 4 * floats + 16;
}

}  // namespace wire
}  // namespace persona
