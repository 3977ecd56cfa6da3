#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "persona/errors.hpp"
#include "persona/model.hpp"

namespace persona {

/// Every tunable in one place. Parsed from `key = value` text; unknown keys
/// are rejected. An empty file runs the reference experiment.
struct RunConfig {
    // editing
    double threshold = 1.0;       // T
    std::size_t groups = 5;       // N_M
    bool clkt = true;
    std::size_t editor_dim = 16;  // d_e

    // architecture
    std::string pooling = "mean";
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 16;
    std::size_t adaptive_layers = 2;  // N_l
    std::size_t adaptive_hidden = 12;

    // protocol
    std::size_t window = 10;      // W
    std::size_t sync_every = 5;   // K

    // training
    std::size_t dam_epochs = 6;
    double dam_lr = 0.02;
    std::size_t editor_epochs = 4;
    double editor_lr = 0.002;
    std::size_t group_epochs = 2;
    double group_lr = 0.005;
    std::size_t group_editor_epochs = 2;
    double group_editor_lr = 0.002;
    double group_editor_penalty = 0.01;
    double editor_head_gain = 1.0;
    std::size_t batch_size = 32;
    std::size_t negatives = 4;
    std::size_t eval_negatives = 49;
    std::size_t patience = 3;

    // data
    std::string dataset_path;     // empty -> synthetic mixture
    std::size_t archetypes = 5;
    std::size_t clusters = 10;
    std::size_t items_per_cluster = 30;
    std::size_t devices_per_archetype = 12;
    std::size_t sequence_length = 60;
    double peakedness = 0.9;
    double persistence = 0.5;
    double shift_fraction = 0.5;
    double history_fraction = 0.6;

    // run control
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string output_dir = "out";
    std::size_t threads = 1;

    std::vector<std::size_t> adaptive_widths() const {
        std::vector<std::size_t> w(adaptive_layers > 0 ? adaptive_layers - 1 : 0, adaptive_hidden);
        w.push_back(embed_dim);  // final width must match embedding dim for scoring
        return w;
    }

    BackboneSpec backbone_spec(std::uint32_t vocab) const {
        BackboneSpec spec;
        spec.vocab_size = vocab;
        spec.embed_dim = embed_dim;
        spec.hidden_dim = hidden_dim;
        spec.pooling = pooling_from_string(pooling);
        return spec;
    }

    void validate() const {
        if (!(threshold > 0.0)) throw config_error("config: threshold must be > 0");
        if (groups < 1) throw config_error("config: groups must be >= 1");
        if (adaptive_layers < 1) throw config_error("config: adaptive_layers must be >= 1");
        if (window < 1) throw config_error("config: window must be >= 1");
        if (seeds.empty()) throw config_error("config: need at least one seed");
        pooling_from_string(pooling);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(std::stoull(tok));
    }
    return out;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    throw config_error("config: bad boolean value '" + s + "'");
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "threshold") cfg.threshold = std::stod(value);
        else if (key == "groups") cfg.groups = std::stoul(value);
        else if (key == "clkt") cfg.clkt = detail::parse_bool(value);
        else if (key == "editor_dim") cfg.editor_dim = std::stoul(value);
        else if (key == "pooling") cfg.pooling = value;
        else if (key == "embed_dim") cfg.embed_dim = std::stoul(value);
        else if (key == "hidden_dim") cfg.hidden_dim = std::stoul(value);
        else if (key == "adaptive_layers") cfg.adaptive_layers = std::stoul(value);
        else if (key == "adaptive_hidden") cfg.adaptive_hidden = std::stoul(value);
        else if (key == "window") cfg.window = std::stoul(value);
        else if (key == "sync_every") cfg.sync_every = std::stoul(value);
        else if (key == "dam_epochs") cfg.dam_epochs = std::stoul(value);
        else if (key == "dam_lr") cfg.dam_lr = std::stod(value);
        else if (key == "editor_epochs") cfg.editor_epochs = std::stoul(value);
        else if (key == "editor_lr") cfg.editor_lr = std::stod(value);
        else if (key == "group_epochs") cfg.group_epochs = std::stoul(value);
        else if (key == "group_lr") cfg.group_lr = std::stod(value);
        else if (key == "group_editor_epochs") cfg.group_editor_epochs = std::stoul(value);
        else if (key == "group_editor_lr") cfg.group_editor_lr = std::stod(value);
        else if (key == "group_editor_penalty") cfg.group_editor_penalty = std::stod(value);
        else if (key == "editor_head_gain") cfg.editor_head_gain = std::stod(value);
        else if (key == "batch_size") cfg.batch_size = std::stoul(value);
        else if (key == "negatives") cfg.negatives = std::stoul(value);
        else if (key == "eval_negatives") cfg.eval_negatives = std::stoul(value);
        else if (key == "patience") cfg.patience = std::stoul(value);
        else if (key == "dataset_path") cfg.dataset_path = value;
        else if (key == "archetypes") cfg.archetypes = std::stoul(value);
        else if (key == "clusters") cfg.clusters = std::stoul(value);
        else if (key == "items_per_cluster") cfg.items_per_cluster = std::stoul(value);
        else if (key == "devices_per_archetype") cfg.devices_per_archetype = std::stoul(value);
        else if (key == "sequence_length") cfg.sequence_length = std::stoul(value);
        else if (key == "peakedness") cfg.peakedness = std::stod(value);
        else if (key == "persistence") cfg.persistence = std::stod(value);
        else if (key == "shift_fraction") cfg.shift_fraction = std::stod(value);
        else if (key == "history_fraction") cfg.history_fraction = std::stod(value);
        else if (key == "seeds") cfg.seeds = detail::parse_seed_list(value);
        else if (key == "output_dir") cfg.output_dir = value;
        else if (key == "threads") cfg.threads = std::stoul(value);
        else throw config_error("config: unknown key '" + key + "'");
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        throw config_error("config: bad value for key '" + key + "': " + value);
    }
}

inline RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config: line " + std::to_string(lineno) + ": expected key = value");
        apply_config_entry(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

inline std::string config_to_text(const RunConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "threshold = " << cfg.threshold << "\n";
    out << "groups = " << cfg.groups << "\n";
    out << "clkt = " << (cfg.clkt ? "true" : "false") << "\n";
    out << "editor_dim = " << cfg.editor_dim << "\n";
    out << "pooling = " << cfg.pooling << "\n";
    out << "embed_dim = " << cfg.embed_dim << "\n";
    out << "hidden_dim = " << cfg.hidden_dim << "\n";
    out << "adaptive_layers = " << cfg.adaptive_layers << "\n";
    out << "adaptive_hidden = " << cfg.adaptive_hidden << "\n";
    out << "window = " << cfg.window << "\n";
    out << "sync_every = " << cfg.sync_every << "\n";
    out << "dam_epochs = " << cfg.dam_epochs << "\n";
    out << "dam_lr = " << cfg.dam_lr << "\n";
    out << "editor_epochs = " << cfg.editor_epochs << "\n";
    out << "editor_lr = " << cfg.editor_lr << "\n";
    out << "group_epochs = " << cfg.group_epochs << "\n";
    out << "group_lr = " << cfg.group_lr << "\n";
    out << "group_editor_epochs = " << cfg.group_editor_epochs << "\n";
    out << "group_editor_lr = " << cfg.group_editor_lr << "\n";
    out << "group_editor_penalty = " << cfg.group_editor_penalty << "\n";
    out << "editor_head_gain = " << cfg.editor_head_gain << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "negatives = " << cfg.negatives << "\n";
    out << "eval_negatives = " << cfg.eval_negatives << "\n";
    out << "patience = " << cfg.patience << "\n";
    if (!cfg.dataset_path.empty()) out << "dataset_path = " << cfg.dataset_path << "\n";
    out << "archetypes = " << cfg.archetypes << "\n";
    out << "clusters = " << cfg.clusters << "\n";
    out << "items_per_cluster = " << cfg.items_per_cluster << "\n";
    out << "devices_per_archetype = " << cfg.devices_per_archetype << "\n";
    out << "sequence_length = " << cfg.sequence_length << "\n";
    out << "peakedness = " << cfg.peakedness << "\n";
    out << "persistence = " << cfg.persistence << "\n";
    out << "shift_fraction = " << cfg.shift_fraction << "\n";
    out << "history_fraction = " << cfg.history_fraction << "\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        out << (i ? "," : "") << cfg.seeds[i];
    out << "\n";
    out << "output_dir = " << cfg.output_dir << "\n";
    out << "threads = " << cfg.threads << "\n";
    return out.str();
}

}  // namespace persona
