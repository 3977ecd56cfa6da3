#include <gtest/gtest.h>

#include <memory>

#include "persona/data.hpp"
#include "persona/training.hpp"

using namespace persona;

namespace {

std::vector<TrainingExample> tiny_examples(std::uint64_t seed = 1) {
    MixtureSpec spec = MixtureSpec::make_default(3, 6, 10, 4, 24, 0.9, 0.0, seed);
    SyntheticDataset ds = gen_synthetic(spec);
    return make_training_windows(ds.log, 6, 3, seed);
}

BackboneSpec tiny_backbone() {
    BackboneSpec s;
    s.vocab_size = 60;
    s.embed_dim = 8;
    s.hidden_dim = 8;
    s.pooling = Pooling::mean;
    return s;
}

TrainConfig tiny_cfg(std::size_t epochs = 3) { return TrainConfig{epochs, 16, 0.01, 3, 1, 3}; }

}  // namespace

TEST(TrainGlobal, LossDecreasesAndStaysFinite) {
    auto exs = tiny_examples();
    TrainReport report;
    GlobalModel gm = train_global_dam(exs, tiny_backbone(), {6, 8}, tiny_cfg(4), &report);
    ASSERT_EQ(report.train_loss.size(), 4u);
    EXPECT_LT(report.train_loss.back(), report.train_loss.front());
    for (double l : report.train_loss) EXPECT_TRUE(std::isfinite(l));
    EXPECT_EQ(gm.base_adaptive.size(), 2u);
    EXPECT_EQ(gm.adaptive_set().out_dim(), 8u);
}

TEST(TrainGlobal, DeterministicPerSeed) {
    auto exs = tiny_examples();
    TrainReport a, b;
    train_global_dam(exs, tiny_backbone(), {8}, tiny_cfg(2), &a);
    train_global_dam(exs, tiny_backbone(), {8}, tiny_cfg(2), &b);
    EXPECT_EQ(a.param_checksum, b.param_checksum);
    TrainConfig other = tiny_cfg(2);
    other.seed = 2;
    TrainReport c;
    train_global_dam(exs, tiny_backbone(), {8}, other, &c);
    EXPECT_NE(a.param_checksum, c.param_checksum);
}

TEST(TrainGlobal, EarlyStoppingRespectsPatience) {
    auto exs = tiny_examples();
    std::vector<TrainingExample> val(exs.begin(), exs.begin() + 10);
    TrainConfig cfg = tiny_cfg(50);
    cfg.early_stop_patience = 1;
    TrainReport report;
    train_global_dam(exs, tiny_backbone(), {8}, cfg, &report, val);
    EXPECT_LT(report.train_loss.size(), 50u);  // stopped before the epoch cap
    EXPECT_EQ(report.val_metric.size(), report.train_loss.size());
}

TEST(TrainGlobal, EmptyExamplesThrow) {
    EXPECT_THROW(train_global_dam({}, tiny_backbone(), {8}, tiny_cfg()), invalid_input_error);
}

TEST(TrainEditor, OnlyEditorParametersMove) {
    auto exs = tiny_examples();
    GlobalModel gm = train_global_dam(exs, tiny_backbone(), {6, 8}, tiny_cfg(2));
    Backbone backbone = std::move(gm.backbone);
    AdaptiveLayerSet base = gm.adaptive_set();
    const std::uint64_t backbone_before = fnv_checksum(backbone.tensors());

    EditorNetwork editor(EditorSpec{8, 1.0, true}, 60, base, 1);
    const std::uint64_t editor_before = fnv_checksum(editor.tensors());
    EXPECT_FALSE(editor.trained);
    TrainReport report = train_editor(editor, backbone, base, exs, tiny_cfg(2));
    EXPECT_TRUE(editor.trained);
    EXPECT_EQ(fnv_checksum(backbone.tensors()), backbone_before);   // frozen
    EXPECT_NE(fnv_checksum(editor.tensors()), editor_before);       // trained
    EXPECT_EQ(report.train_loss.size(), 2u);
    EXPECT_TRUE(std::isfinite(report.train_loss.back()));
}

TEST(TrainEditor, ClktOffLeavesTransitionParamsUntouched) {
    auto exs = tiny_examples();
    GlobalModel gm = train_global_dam(exs, tiny_backbone(), {8}, tiny_cfg(1));
    Backbone backbone = std::move(gm.backbone);
    AdaptiveLayerSet base = gm.adaptive_set();
    EditorNetwork editor(EditorSpec{8, 1.0, false}, 60, base, 1);
    const Matrix tz_before = editor.tz_e.value;
    train_editor(editor, backbone, base, exs, tiny_cfg(1));
    EXPECT_EQ(editor.tz_e.value, tz_before);
}

TEST(FinetuneGroup, LeavesGlobalsIntactAndRetrainsEditor) {
    auto exs = tiny_examples();
    GlobalModel gm = train_global_dam(exs, tiny_backbone(), {6, 8}, tiny_cfg(2));
    Backbone backbone = std::move(gm.backbone);
    AdaptiveLayerSet base = gm.adaptive_set();
    EditorNetwork editor(EditorSpec{8, 1.0, true}, 60, base, 1);
    train_editor(editor, backbone, base, exs, tiny_cfg(1));

    const std::uint64_t backbone_before = fnv_checksum(backbone.tensors());
    const AdaptiveLayerSet base_before = base;
    const std::uint64_t editor_before = fnv_checksum(editor.tensors());

    std::vector<TrainingExample> group(exs.begin(), exs.begin() + 20);
    GroupModel g = finetune_group(backbone, base, editor, group, tiny_cfg(2));
    EXPECT_EQ(fnv_checksum(backbone.tensors()), backbone_before);
    for (std::size_t n = 0; n < base.layers.size(); ++n)
        EXPECT_EQ(base.layers[n], base_before.layers[n]);          // global prototype untouched
    EXPECT_EQ(fnv_checksum(editor.tensors()), editor_before);      // global editor untouched
    bool base_moved = false;
    for (std::size_t n = 0; n < base.layers.size(); ++n)
        if (!(g.base.layers[n] == base.layers[n])) base_moved = true;
    EXPECT_TRUE(base_moved);
    EXPECT_NE(fnv_checksum(g.editor.tensors()), editor_before);
    EXPECT_TRUE(g.editor.trained);
}

TEST(FinetuneGroup, ZeroEpochsIsNoOp) {
    auto exs = tiny_examples();
    GlobalModel gm = train_global_dam(exs, tiny_backbone(), {8}, tiny_cfg(1));
    Backbone backbone = std::move(gm.backbone);
    AdaptiveLayerSet base = gm.adaptive_set();
    EditorNetwork editor(EditorSpec{8, 1.0, true}, 60, base, 1);
    TrainConfig cfg = tiny_cfg(0);
    GroupModel g = finetune_group(backbone, base, editor, exs, cfg);
    for (std::size_t n = 0; n < base.layers.size(); ++n) EXPECT_EQ(g.base.layers[n], base.layers[n]);
}

TEST(FinetuneDevice, ImprovesLossOnItsWindowAndMeasuresTime) {
    auto exs = tiny_examples();
    GlobalModel gm = train_global_dam(exs, tiny_backbone(), {8}, tiny_cfg(1));
    Backbone backbone = std::move(gm.backbone);
    AdaptiveLayerSet base = gm.adaptive_set();
    std::vector<TrainingExample> window(exs.begin(), exs.begin() + 5);
    FinetuneResult r1 = finetune_on_device_baseline(backbone, base, window, tiny_cfg(1));
    FinetuneResult r10 = finetune_on_device_baseline(backbone, base, window, tiny_cfg(10));
    EXPECT_GT(r1.wall_clock_seconds, 0.0);
    EXPECT_LT(r10.final_loss, r1.final_loss);
    EXPECT_TRUE(r10.adaptive.same_shapes(base));
}

TEST(Checksum, SensitiveToValuesAndShapes) {
    ParamTensor a(Matrix(2, 2, 1.0), "a");
    ParamTensor b(Matrix(2, 2, 1.0), "b");
    EXPECT_EQ(fnv_checksum({&a}), fnv_checksum({&b}));
    b.value.at(3) = 1.0000001;
    EXPECT_NE(fnv_checksum({&a}), fnv_checksum({&b}));
    ParamTensor c(Matrix(4, 1, 1.0), "c");  // same data, different shape
    EXPECT_NE(fnv_checksum({&a}), fnv_checksum({&c}));
}

TEST(TrainConfigValidate, RejectsBadValues) {
    TrainConfig cfg = tiny_cfg();
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = tiny_cfg();
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), config_error);
}
