#include <gtest/gtest.h>

#include <filesystem>
#include <memory>
#include <random>

#include "persona/checkpoint.hpp"
#include "persona/prototypes.hpp"

using namespace persona;
namespace fs = std::filesystem;

namespace {

// Set built to match RunConfig defaults (embed 16, d_e 16, 2 adaptive layers)
// so reconstruction from the config snapshot matches the saved shapes.
PrototypeSet make_set(std::size_t groups, const RunConfig& cfg, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    const std::uint32_t vocab = 40;
    auto backbone = std::make_shared<const Backbone>(cfg.backbone_spec(vocab), seed);
    PrototypeSet set;
    set.global.backbone = backbone;
    set.global.base = AdaptiveLayerSet::random(cfg.embed_dim, cfg.adaptive_widths(), rng);
    set.global.editor = EditorNetwork(EditorSpec{cfg.editor_dim, cfg.threshold, cfg.clkt}, vocab,
                                      set.global.base, rng());
    set.global.editor.trained = true;
    for (std::size_t j = 0; j < groups; ++j) {
        PrototypeModel g;
        g.backbone = backbone;
        g.base = AdaptiveLayerSet::random(cfg.embed_dim, cfg.adaptive_widths(), rng);
        g.editor = EditorNetwork(EditorSpec{cfg.editor_dim, cfg.threshold, cfg.clkt}, vocab, g.base,
                                 rng());
        g.editor.trained = true;
        set.groups.push_back(std::move(g));
    }
    set.partition.group_count = groups;
    for (std::size_t i = 0; i < 17; ++i) set.partition.assignments.push_back(i % groups);
    return set;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveByteIdentical) {
    RunConfig cfg;
    PrototypeSet set = make_set(3, cfg);
    Checkpoint ck = checkpoint_from_prototype_set(set, config_to_text(cfg));
    const auto bytes1 = serialize_checkpoint(ck);
    Checkpoint loaded = deserialize_checkpoint(bytes1);
    const auto bytes2 = serialize_checkpoint(loaded);
    EXPECT_EQ(bytes1, bytes2);
}

TEST(Checkpoint, FileRoundTrip) {
    RunConfig cfg;
    PrototypeSet set = make_set(2, cfg);
    const auto path = (fs::temp_directory_path() / "persona_ckpt_test.bin").string();
    Checkpoint ck = checkpoint_from_prototype_set(set, config_to_text(cfg));
    save_checkpoint(path, ck);
    Checkpoint loaded = load_checkpoint(path);
    EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(ck));
    fs::remove(path);
    EXPECT_THROW(load_checkpoint(path), io_error);
}

TEST(Checkpoint, BehavioralEquivalenceAfterReload) {
    RunConfig cfg;
    PrototypeSet set = make_set(4, cfg);
    PrototypeSet back = prototype_set_from_checkpoint(
        deserialize_checkpoint(serialize_checkpoint(
            checkpoint_from_prototype_set(set, config_to_text(cfg)))));
    ASSERT_EQ(back.group_count(), set.group_count());
    EXPECT_EQ(back.partition.assignments, set.partition.assignments);
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::uint32_t> item(0, 39);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint32_t> w;
        for (int i = 0; i < 6; ++i) w.push_back(item(rng));
        AssignmentResult a = dynamic_assign(set, w);
        AssignmentResult b = dynamic_assign(back, w);
        EXPECT_EQ(a.chosen_group, b.chosen_group);
        ASSERT_EQ(a.norms.size(), b.norms.size());
        // checkpoints store f32; compare at that precision
        for (std::size_t j = 0; j < a.norms.size(); ++j) EXPECT_NEAR(a.norms[j], b.norms[j], 1e-4);
    }
}

TEST(Checkpoint, CorruptionDetected) {
    RunConfig cfg;
    PrototypeSet set = make_set(1, cfg);
    auto bytes = serialize_checkpoint(checkpoint_from_prototype_set(set, config_to_text(cfg)));
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x01;
    EXPECT_THROW(deserialize_checkpoint(flipped), io_error);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 5);
    EXPECT_THROW(deserialize_checkpoint(truncated), io_error);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad_magic), io_error);
}

TEST(Checkpoint, VersionMismatchReported) {
    RunConfig cfg;
    auto bytes = serialize_checkpoint(checkpoint_from_prototype_set(make_set(1, cfg), config_to_text(cfg)));
    bytes[4] = 99;  // version field
    // re-stamp the checksum so only the version is wrong
    const std::uint64_t h = ckpt_detail::fnv1a(bytes.data(), bytes.size() - 8);
    for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = (h >> (8 * i)) & 0xff;
    try {
        deserialize_checkpoint(bytes);
        FAIL() << "expected io_error";
    } catch (const io_error& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
}

TEST(Checkpoint, MinimalEmptyStateRoundTrips) {
    Checkpoint empty;
    auto bytes = serialize_checkpoint(empty);
    Checkpoint back = deserialize_checkpoint(bytes);
    EXPECT_TRUE(back.blobs.empty());
    EXPECT_TRUE(back.config_text.empty());
    EXPECT_EQ(back.partition_groups, 0u);
}

TEST(Checkpoint, TrainedFlagsSurvive) {
    RunConfig cfg;
    PrototypeSet set = make_set(2, cfg);
    set.global.editor.trained = false;
    PrototypeSet back = prototype_set_from_checkpoint(
        deserialize_checkpoint(serialize_checkpoint(
            checkpoint_from_prototype_set(set, config_to_text(cfg)))));
    EXPECT_FALSE(back.global.editor.trained);
    EXPECT_TRUE(back.groups[0].editor.trained);
}

TEST(Checkpoint, MissingBlobReported) {
    RunConfig cfg;
    Checkpoint ck = checkpoint_from_prototype_set(make_set(1, cfg), config_to_text(cfg));
    ck.blobs.erase(ck.blobs.begin());  // drop the backbone embeddings
    EXPECT_THROW(prototype_set_from_checkpoint(ck), io_error);
}
