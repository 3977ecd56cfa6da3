#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "persona/config.hpp"
#include "persona/editor.hpp"
#include "persona/errors.hpp"
#include "persona/kmeans.hpp"
#include "persona/matrix.hpp"
#include "persona/model.hpp"
#include "persona/prototypes.hpp"

namespace persona {

/// Versioned binary checkpoint: config snapshot, named f32 parameter blobs
/// with shapes, partition map, trailing content checksum. Little-endian.
struct Checkpoint {
    static constexpr std::uint16_t kVersion = 1;

    std::string config_text;
    std::vector<std::pair<std::string, Matrix>> blobs;
    std::vector<std::uint32_t> partition_assignments;
    std::uint32_t partition_groups = 0;
};

namespace ckpt_detail {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back(v >> 8);
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw io_error("checkpoint: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = buf[pos] | (buf[pos + 1] << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
};

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace ckpt_detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    using namespace ckpt_detail;
    std::vector<std::uint8_t> b;
    b.insert(b.end(), kMagic, kMagic + 4);
    put_u16(b, Checkpoint::kVersion);
    put_u32(b, static_cast<std::uint32_t>(c.config_text.size()));
    b.insert(b.end(), c.config_text.begin(), c.config_text.end());
    put_u32(b, static_cast<std::uint32_t>(c.blobs.size()));
    for (const auto& [name, m] : c.blobs) {
        put_u16(b, static_cast<std::uint16_t>(name.size()));
        b.insert(b.end(), name.begin(), name.end());
        put_u32(b, static_cast<std::uint32_t>(m.rows()));
        put_u32(b, static_cast<std::uint32_t>(m.cols()));
        for (std::size_t i = 0; i < m.size(); ++i) {
            const float f = static_cast<float>(m.at(i));
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(b, bits);
        }
    }
    put_u32(b, c.partition_groups);
    put_u32(b, static_cast<std::uint32_t>(c.partition_assignments.size()));
    for (auto a : c.partition_assignments) put_u32(b, a);
    put_u64(b, fnv1a(b.data(), b.size()));
    return b;
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& buf) {
    using namespace ckpt_detail;
    if (buf.size() < 4 + 2 + 8) throw io_error("checkpoint: truncated file");
    const std::uint64_t stored = [&] {
        Reader tail{buf, buf.size() - 8};
        return tail.u64();
    }();
    if (fnv1a(buf.data(), buf.size() - 8) != stored)
        throw io_error("checkpoint: checksum mismatch (corrupt or truncated)");
    Reader r{buf};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw io_error("checkpoint: bad magic");
    r.pos = 4;
    const std::uint16_t version = r.u16();
    if (version != Checkpoint::kVersion)
        throw io_error("checkpoint: incompatible version " + std::to_string(version));
    Checkpoint c;
    const std::uint32_t cfg_len = r.u32();
    r.need(cfg_len);
    c.config_text.assign(buf.begin() + r.pos, buf.begin() + r.pos + cfg_len);
    r.pos += cfg_len;
    const std::uint32_t nblobs = r.u32();
    for (std::uint32_t i = 0; i < nblobs; ++i) {
        const std::uint16_t name_len = r.u16();
        r.need(name_len);
        std::string name(buf.begin() + r.pos, buf.begin() + r.pos + name_len);
        r.pos += name_len;
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        Matrix m(rows, cols);
        for (std::size_t j = 0; j < m.size(); ++j) {
            const std::uint32_t bits = r.u32();
            float f;
            std::memcpy(&f, &bits, 4);
            m.at(j) = static_cast<double>(f);
        }
        c.blobs.emplace_back(std::move(name), std::move(m));
    }
    c.partition_groups = r.u32();
    const std::uint32_t nassign = r.u32();
    for (std::uint32_t i = 0; i < nassign; ++i) c.partition_assignments.push_back(r.u32());
    return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    const auto bytes = serialize_checkpoint(c);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("checkpoint: cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("checkpoint: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(buf);
}

namespace ckpt_detail {

inline void add_tensors(Checkpoint& c, const std::string& prefix,
                        const std::vector<const ParamTensor*>& tensors) {
    for (const auto* t : tensors) c.blobs.emplace_back(prefix + t->name, t->value);
}

inline void add_adaptive(Checkpoint& c, const std::string& prefix, const AdaptiveLayerSet& base) {
    for (std::size_t n = 0; n < base.layers.size(); ++n)
        c.blobs.emplace_back(prefix + "base." + std::to_string(n), base.layers[n]);
}

}  // namespace ckpt_detail

inline Checkpoint checkpoint_from_prototype_set(const PrototypeSet& set, const std::string& config_text) {
    Checkpoint c;
    c.config_text = config_text;
    ckpt_detail::add_tensors(c, "global.", set.global.backbone->tensors());
    ckpt_detail::add_adaptive(c, "global.", set.global.base);
    ckpt_detail::add_tensors(c, "global.", set.global.editor.tensors());
    for (std::size_t j = 0; j < set.groups.size(); ++j) {
        const std::string prefix = "group" + std::to_string(j) + ".";
        ckpt_detail::add_adaptive(c, prefix, set.groups[j].base);
        ckpt_detail::add_tensors(c, prefix, set.groups[j].editor.tensors());
    }
    Matrix trained(1, 1 + set.groups.size());
    trained.at(0) = set.global.editor.trained ? 1.0 : 0.0;
    for (std::size_t j = 0; j < set.groups.size(); ++j)
        trained.at(1 + j) = set.groups[j].editor.trained ? 1.0 : 0.0;
    c.blobs.emplace_back("meta.editor_trained", std::move(trained));
    c.partition_groups = static_cast<std::uint32_t>(set.partition.group_count);
    for (auto a : set.partition.assignments)
        c.partition_assignments.push_back(static_cast<std::uint32_t>(a));
    return c;
}

/// Rebuilds a servable PrototypeSet from a checkpoint; architecture comes
/// from the embedded config snapshot.
inline PrototypeSet prototype_set_from_checkpoint(const Checkpoint& c) {
    const RunConfig cfg = parse_config_text(c.config_text);
    auto find_ptr = [&](const std::string& name) -> const Matrix* {
        for (const auto& [n, m] : c.blobs)
            if (n == name) return &m;
        return nullptr;
    };
    auto find = [&](const std::string& name) -> const Matrix& {
        if (const Matrix* m = find_ptr(name)) return *m;
        throw io_error("checkpoint: missing blob " + name);
    };
    const Matrix& emb = find("global.backbone.embeddings");
    const std::uint32_t vocab = static_cast<std::uint32_t>(emb.rows());

    auto load_into = [&](const std::string& prefix, std::vector<const ParamTensor*> tensors) {
        for (const auto* t : tensors) {
            const Matrix& m = find(prefix + t->name);
            if (!m.same_shape(t->value)) throw io_error("checkpoint: shape mismatch for " + t->name);
            const_cast<ParamTensor*>(t)->value = m;
        }
    };
    auto load_adaptive = [&](const std::string& prefix, std::size_t layer_count) {
        std::vector<Matrix> ls;
        for (std::size_t n = 0; n < layer_count; ++n)
            ls.push_back(find(prefix + "base." + std::to_string(n)));
        return AdaptiveLayerSet(std::move(ls));
    };

    auto backbone = std::make_shared<Backbone>(cfg.backbone_spec(vocab), 0);
    load_into("global.", backbone->tensors());

    const Matrix* trained = find_ptr("meta.editor_trained");
    auto trained_flag = [&](std::size_t idx) {
        return trained == nullptr || (idx < trained->size() && trained->at(idx) != 0.0);
    };

    PrototypeSet set;
    set.global.backbone = backbone;
    set.global.base = load_adaptive("global.", cfg.adaptive_layers);
    EditorSpec espec{cfg.editor_dim, cfg.threshold, cfg.clkt};
    set.global.editor = EditorNetwork(espec, vocab, set.global.base, 0);
    load_into("global.", set.global.editor.tensors());
    set.global.editor.trained = trained_flag(0);

    for (std::size_t j = 0; find_ptr("group" + std::to_string(j) + ".base.0") != nullptr; ++j) {
        const std::string prefix = "group" + std::to_string(j) + ".";
        PrototypeModel g;
        g.backbone = backbone;
        g.base = load_adaptive(prefix, cfg.adaptive_layers);
        g.editor = EditorNetwork(espec, vocab, g.base, 0);
        load_into(prefix, g.editor.tensors());
        g.editor.trained = trained_flag(1 + j);
        set.groups.push_back(std::move(g));
    }
    set.partition.group_count = c.partition_groups;
    for (auto a : c.partition_assignments) set.partition.assignments.push_back(a);
    return set;
}

}  // namespace persona
