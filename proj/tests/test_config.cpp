#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "persona/config.hpp"

using namespace persona;

TEST(Config, DefaultsValidateAndRunReferenceExperimentShape) {
    RunConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_DOUBLE_EQ(cfg.threshold, 1.0);
    EXPECT_EQ(cfg.groups, 5u);
    EXPECT_TRUE(cfg.clkt);
    EXPECT_EQ(cfg.seeds.size(), 5u);
    // final adaptive width matches the embedding so scores are dot products
    auto widths = cfg.adaptive_widths();
    ASSERT_EQ(widths.size(), cfg.adaptive_layers);
    EXPECT_EQ(widths.back(), cfg.embed_dim);
}

TEST(Config, EmptyTextYieldsDefaults) {
    RunConfig cfg = parse_config_text("");
    EXPECT_DOUBLE_EQ(cfg.threshold, RunConfig{}.threshold);
    EXPECT_EQ(cfg.groups, RunConfig{}.groups);
}

TEST(Config, ParsesKeysCommentsAndWhitespace) {
    RunConfig cfg = parse_config_text(
        "# experiment\n"
        "threshold = 0.5\n"
        "  groups=10  # trailing comment\n"
        "clkt = off\n"
        "seeds = 7, 8,9\n"
        "pooling = gru_lite\n"
        "\n");
    EXPECT_DOUBLE_EQ(cfg.threshold, 0.5);
    EXPECT_EQ(cfg.groups, 10u);
    EXPECT_FALSE(cfg.clkt);
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{7, 8, 9}));
    EXPECT_EQ(cfg.pooling, "gru_lite");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config_text("thresold = 1.0\n"), config_error);
    EXPECT_THROW(parse_config_text("threshold = banana\n"), config_error);
    EXPECT_THROW(parse_config_text("clkt = maybe\n"), config_error);
    EXPECT_THROW(parse_config_text("just a line\n"), config_error);
    EXPECT_THROW(parse_config_text("threshold = 0\n"), config_error);   // validate()
    EXPECT_THROW(parse_config_text("groups = 0\n"), config_error);
    EXPECT_THROW(parse_config_text("pooling = wavelet\n"), config_error);
    EXPECT_THROW(parse_config_text("seeds = \n"), config_error);        // empty seed list
}

TEST(Config, ErrorNamesOffendingLine) {
    try {
        parse_config_text("threshold = 1.0\nnonsense\n");
        FAIL() << "expected config_error";
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(Config, SnapshotRoundTrips) {
    RunConfig cfg;
    cfg.threshold = 0.25;
    cfg.groups = 7;
    cfg.clkt = false;
    cfg.seeds = {11, 13};
    cfg.dataset_path = "data/events.csv";
    cfg.peakedness = 0.875;
    RunConfig back = parse_config_text(config_to_text(cfg));
    EXPECT_DOUBLE_EQ(back.threshold, cfg.threshold);
    EXPECT_EQ(back.groups, cfg.groups);
    EXPECT_EQ(back.clkt, cfg.clkt);
    EXPECT_EQ(back.seeds, cfg.seeds);
    EXPECT_EQ(back.dataset_path, cfg.dataset_path);
    EXPECT_DOUBLE_EQ(back.peakedness, cfg.peakedness);
    // snapshot of a snapshot is stable
    EXPECT_EQ(config_to_text(back), config_to_text(cfg));
}

TEST(Config, LoadFromFile) {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "persona_cfg_test.cfg";
    {
        std::ofstream out(path);
        out << "window = 15\nsync_every = 3\n";
    }
    RunConfig cfg = load_config(path.string());
    EXPECT_EQ(cfg.window, 15u);
    EXPECT_EQ(cfg.sync_every, 3u);
    fs::remove(path);
    EXPECT_THROW(load_config(path.string()), io_error);
}
