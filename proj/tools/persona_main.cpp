// Command-line front end: staged training commands over a checkpoint file,
// plus canned experiment recipes (conditions, sweeps, latency contrast).
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "persona/checkpoint.hpp"
#include "persona/config.hpp"
#include "persona/harness.hpp"
#include "persona/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace persona;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string out_dir;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Config file (key = value lines)");
    cmd->add_option("--set", opts.overrides, "Override a config key, e.g. --set threshold=0.5");
    cmd->add_option("--out", opts.out_dir, "Output directory (overrides config)");
    cmd->add_option("--seed", opts.seed, "Use this single seed instead of the config seed list");
}

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_config(opts.config_path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw config_error("--set expects key=value, got '" + kv + "'");
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (const char* env = std::getenv("PERSONA_OUTPUT_DIR")) cfg.output_dir = env;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(opts.seed)};
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& artifacts) {
    json m;
    m["command"] = command;
    m["seeds"] = cfg.seeds;
    m["config"] = config_to_text(cfg);
    m["artifacts"] = artifacts;
    std::ofstream out(out_path(cfg, "manifest.json"));
    if (!out) throw io_error("cannot write manifest in " + cfg.output_dir);
    out << m.dump(2) << "\n";
}

void write_train_report(const TrainReport& r, const std::string& phase, const std::string& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw io_error("cannot open " + path);
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
        json j;
        j["phase"] = phase;
        j["epoch"] = e;
        j["train_loss"] = r.train_loss[e];
        if (e < r.val_metric.size()) j["val_ndcg5"] = r.val_metric[e];
        out << j.dump() << "\n";
    }
    json fin;
    fin["phase"] = phase;
    fin["wall_clock_seconds"] = r.wall_clock_seconds;
    fin["param_checksum"] = r.param_checksum;
    out << fin.dump() << "\n";
}

void save_set(const RunConfig& cfg, const PrototypeSet& set) {
    save_checkpoint(out_path(cfg, "model.ckpt"), checkpoint_from_prototype_set(set, config_to_text(cfg)));
}

PrototypeSet load_set(const RunConfig& cfg) {
    return prototype_set_from_checkpoint(load_checkpoint(out_path(cfg, "model.ckpt")));
}

TrainConfig phase_cfg(const RunConfig& cfg, std::size_t epochs, double lr, std::uint64_t seed) {
    return TrainConfig{epochs, cfg.batch_size, lr, cfg.negatives, seed, cfg.patience};
}

int cmd_gen_data(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.seeds.front();
    SyntheticDataset ds = generate_dataset(cfg, seed);
    save_csv(ds.log, out_path(cfg, "events.csv"));
    save_labels_csv(ds.labels, out_path(cfg, "labels.csv"));
    write_manifest(cfg, "gen-data", {"events.csv", "labels.csv"});
    std::cout << "wrote " << ds.log.devices.size() << " devices, " << ds.log.total_events()
              << " events, vocab " << ds.log.vocab_size << "\n";
    return 0;
}

int cmd_train_dam(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.seeds.front();
    PreparedData data = prepare_data(cfg, seed);
    std::vector<TrainingExample> train, val;
    persona::detail::split_train_val(data.history_examples, seed, train, val);
    TrainReport report;
    GlobalModel gm = train_global_dam(train, cfg.backbone_spec(data.vocab), cfg.adaptive_widths(),
                                      phase_cfg(cfg, cfg.dam_epochs, cfg.dam_lr, seed), &report, val);
    PrototypeSet set;
    set.global.backbone = std::make_shared<const Backbone>(std::move(gm.backbone));
    set.global.base = gm.adaptive_set();
    set.global.editor = EditorNetwork(EditorSpec{cfg.editor_dim, cfg.threshold, cfg.clkt},
                                      data.vocab, set.global.base, seed);
    save_set(cfg, set);
    write_train_report(report, "dam", out_path(cfg, "train_report.jsonl"));
    write_manifest(cfg, "train-dam", {"model.ckpt", "train_report.jsonl"});
    std::cout << "trained global model on " << train.size() << " examples, final loss "
              << (report.train_loss.empty() ? 0.0 : report.train_loss.back()) << "\n";
    return 0;
}

int cmd_train_editor(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.seeds.front();
    PrototypeSet set = load_set(cfg);
    PreparedData data = prepare_data(cfg, seed);
    TrainReport report =
        train_editor(set.global.editor, *set.global.backbone, set.global.base,
                     data.history_examples, phase_cfg(cfg, cfg.editor_epochs, cfg.editor_lr, seed));
    save_set(cfg, set);
    write_train_report(report, "editor", out_path(cfg, "train_report.jsonl"));
    write_manifest(cfg, "train-editor", {"model.ckpt", "train_report.jsonl"});
    std::cout << "trained editor, final loss "
              << (report.train_loss.empty() ? 0.0 : report.train_loss.back()) << "\n";
    return 0;
}

int cmd_partition(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.seeds.front();
    PrototypeSet set = load_set(cfg);
    PreparedData data = prepare_data(cfg, seed);
    std::vector<std::vector<std::uint32_t>> windows;
    for (const auto& ex : data.history_examples) windows.push_back(ex.window);
    const auto edits = compute_history_edits(set.global, windows);
    set.partition = kmeans(edits, std::min<std::size_t>(cfg.groups, edits.size()), seed);
    save_set(cfg, set);
    {
        std::ofstream out(out_path(cfg, "partition.csv"));
        if (!out) throw io_error("cannot write partition.csv");
        out << "sample_index,device_id,group\n";
        for (std::size_t i = 0; i < set.partition.assignments.size(); ++i)
            out << i << ',' << data.history_examples[i].device_id << ','
                << set.partition.assignments[i] << '\n';
    }
    write_manifest(cfg, "partition", {"model.ckpt", "partition.csv"});
    std::cout << "partitioned " << edits.size() << " samples into " << set.partition.group_count
              << " groups, inertia " << set.partition.inertia << "\n";
    return 0;
}

int cmd_build_groups(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.seeds.front();
    PrototypeSet set = load_set(cfg);
    if (set.partition.assignments.empty())
        throw lifecycle_error("build-groups: run the partition command first");
    PreparedData data = prepare_data(cfg, seed);
    set = build_groups(std::move(set.global), set.partition, data.history_examples,
                       phase_cfg(cfg, cfg.group_epochs, cfg.group_lr, seed));
    save_set(cfg, set);
    write_manifest(cfg, "build-groups", {"model.ckpt"});
    std::cout << "built " << set.group_count() << " group prototypes\n";
    return 0;
}

int cmd_simulate(const RunConfig& cfg) {
    const std::uint64_t seed = cfg.seeds.front();
    PrototypeSet set = load_set(cfg);
    PreparedData data = prepare_data(cfg, seed);
    const SimPolicy policy = make_policy(cfg, seed);
    auto sessions = make_sessions(data.split.history, data.split.realtime, set, policy);
    SimulationResult sim = run_simulation(set, sessions, policy);
    {
        std::ofstream out(out_path(cfg, "sync_records.jsonl"));
        if (!out) throw io_error("cannot write sync_records.jsonl");
        for (const auto& r : sim.sync_records) {
            json j;
            j["device_id"] = r.device_id;
            j["event_index"] = r.event_index;
            j["chosen_group"] = r.chosen_group;
            j["edit_norm"] = r.edit_norm;
            j["upload_bytes"] = r.upload_bytes;
            j["download_bytes"] = r.download_bytes;
            j["cloud_latency_seconds"] = r.cloud_latency_seconds;
            out << j.dump() << "\n";
        }
    }
    std::vector<RankedPrediction> preds;
    for (const auto& dl : sim.device_logs)
        preds.insert(preds.end(), dl.predictions.begin(), dl.predictions.end());
    emit_report({compute_metrics(preds, "persona_m", seed)}, out_path(cfg, "metrics_rows.csv"),
                out_path(cfg, "metrics_summary.csv"));
    write_manifest(cfg, "simulate", {"sync_records.jsonl", "metrics_rows.csv", "metrics_summary.csv"});
    std::cout << "simulated " << sessions.size() << " devices, " << sim.sync_records.size()
              << " syncs, " << preds.size() << " scored events\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::vector<std::string>& condition_names) {
    std::vector<Condition> conditions;
    for (const auto& n : condition_names) conditions.push_back(condition_from_string(n));
    auto reports = run_conditions_experiment(cfg, conditions);
    emit_report(reports, out_path(cfg, "metrics_rows.csv"), out_path(cfg, "metrics_summary.csv"));
    write_manifest(cfg, "eval", {"metrics_rows.csv", "metrics_summary.csv"});
    for (const auto& r : reports)
        std::cout << r.condition << " seed=" << r.seed << " auc=" << r.auc << " hr5=" << r.hr5
                  << " ndcg5=" << r.ndcg5 << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& axis_name) {
    const SweepAxis axis = sweep_axis_from_string(axis_name);
    auto reports = run_sweep(cfg, axis);
    emit_report(reports, out_path(cfg, "sweep_rows.csv"), out_path(cfg, "sweep_summary.csv"),
                axis.name);
    write_manifest(cfg, "sweep --axis " + axis.name, {"sweep_rows.csv", "sweep_summary.csv"});
    for (const auto& r : reports)
        std::cout << axis.name << "=" << r.sweep_value << " " << r.condition << " seed=" << r.seed
                  << " hr5=" << r.hr5 << " ndcg5=" << r.ndcg5 << "\n";
    return 0;
}

int cmd_latency(const RunConfig& cfg, std::size_t requests) {
    const std::uint64_t seed = cfg.seeds.front();
    PipelineResult pipe = run_training_pipeline(cfg, seed);
    std::vector<std::vector<std::uint32_t>> windows;
    for (const auto& [dev, events] : pipe.split.realtime.devices) {
        std::vector<std::uint32_t> w;
        for (const auto& e : events) {
            w.push_back(e.item);
            if (w.size() > cfg.window) w.erase(w.begin());
            if (w.size() == cfg.window) windows.push_back(w);
            if (windows.size() >= requests) break;
        }
        if (windows.size() >= requests) break;
    }
    if (windows.size() < requests)
        throw data_error("latency: only " + std::to_string(windows.size()) + " windows available");
    TrainConfig ft{10, cfg.batch_size, cfg.group_lr, cfg.negatives, seed, cfg.patience};
    LatencyRatioResult res = latency_ratio_experiment(pipe.set, windows, ft);
    json j;
    j["requests"] = windows.size();
    j["median_serve_seconds"] = res.median_serve_seconds;
    j["median_finetune_seconds"] = res.median_finetune_seconds;
    j["ratio"] = res.ratio;
    std::ofstream out(out_path(cfg, "latency.json"));
    if (!out) throw io_error("cannot write latency.json");
    out << j.dump(2) << "\n";
    write_manifest(cfg, "latency", {"latency.json"});
    std::cout << "serve median " << res.median_serve_seconds << "s, finetune median "
              << res.median_finetune_seconds << "s, ratio " << res.ratio << "x\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prototype-based parameter editing: training, simulation, and experiments"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::vector<std::string> conditions{"baseline", "persona_s", "persona_m"};
    std::string axis;
    std::size_t latency_requests = 200;

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic shifting-preference dataset");
    auto* dam = app.add_subcommand("train-dam", "Train the global backbone and adaptive weights");
    auto* ted = app.add_subcommand("train-editor", "Train the editor against the global prototype");
    auto* part = app.add_subcommand("partition", "Cluster historical edits into groups");
    auto* build = app.add_subcommand("build-groups", "Fine-tune one prototype per group");
    auto* sim = app.add_subcommand("simulate", "Run the device-cloud simulation from a checkpoint");
    auto* eval = app.add_subcommand("eval", "Train and score conditions over the seed list");
    eval->add_option("--conditions", conditions,
                     "Conditions: baseline persona_s persona_m finetune group_finetune");
    auto* sweep = app.add_subcommand("sweep", "Run an ablation sweep");
    sweep->add_option("--axis", axis, "Axis: threshold | groups | clkt | prototype")->required();
    auto* lat = app.add_subcommand("latency", "Contrast serve latency vs on-device fine-tuning");
    lat->add_option("--requests", latency_requests, "Number of serve requests to measure");

    for (CLI::App* c : {gen, dam, ted, part, build, sim, eval, sweep, lat}) add_common(c, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const RunConfig cfg = resolve_config(opts);
        if (gen->parsed()) return cmd_gen_data(cfg);
        if (dam->parsed()) return cmd_train_dam(cfg);
        if (ted->parsed()) return cmd_train_editor(cfg);
        if (part->parsed()) return cmd_partition(cfg);
        if (build->parsed()) return cmd_build_groups(cfg);
        if (sim->parsed()) return cmd_simulate(cfg);
        if (eval->parsed()) return cmd_eval(cfg, conditions);
        if (sweep->parsed()) return cmd_sweep(cfg, axis);
        if (lat->parsed()) return cmd_latency(cfg, latency_requests);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
