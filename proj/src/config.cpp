#include "mp3net/config.hpp"

#include "mp3net/errors.hpp"
#include "mp3net/fft.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mp3net {

namespace pt = boost::property_tree;

void AppConfig::validate() const {
    if (sample_rate_hz <= 0) throw ConfigError("sample_rate must be positive");
    if (mdct_bands < 8 || !is_power_of_two(mdct_bands)) throw ConfigError("mdct_bands must be a power of two >= 8");
    if (noise_scale < 0.0) throw ConfigError("noise_scale must be non-negative");
    if (!(psychoacoustics.alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(db_floor < 0.0)) throw ConfigError("db_floor must be negative");
    try {
        model.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    if (model.output_bands() != mdct_bands) {
        throw ConfigError("model output has " + std::to_string(model.output_bands()) + " bands but mdct_bands is " +
                          std::to_string(mdct_bands));
    }
    train.validate();
    if (dataset.source == DatasetSource::kSyntheticTones && dataset.size == 0) {
        throw ConfigError("data size must be positive");
    }
    if (dataset.source == DatasetSource::kWavDirectory && dataset.directory.empty()) {
        throw ConfigError("data directory is required when synthetic = none");
    }
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"general", {"seed", "out_dir"}},
        {"audio", {"sample_rate", "mdct_bands"}},
        {"psychoacoustics", {"alpha", "db_reference", "noise_scale"}},
        {"display", {"db_floor", "png"}},
        {"model",
         {"latent_dim", "num_blocks", "seed_blocks", "seed_bands", "channels", "output_channels", "leaky_slope"}},
        {"train",
         {"learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon", "n_critic", "gp_lambda", "drift_epsilon",
          "batch_size", "iterations", "checkpoint_every", "frozen_blocks"}},
        {"data", {"synthetic", "directory", "size", "hop_blocks"}},
    };
    return keys;
}

template <class T>
void read(const pt::ptree& tree, const std::string& key, T& out) {
    const auto value = tree.get_optional<std::string>(key);
    if (!value) return;
    try {
        out = tree.get<T>(key);
    } catch (const pt::ptree_bad_data&) {
        throw ConfigError("invalid value for " + key + ": '" + *value + "'");
    }
}

// Boost accepts negative input for unsigned targets by wrapping; reject it explicitly.
void read_size(const pt::ptree& tree, const std::string& key, std::size_t& out) {
    long long v = static_cast<long long>(out);
    read(tree, key, v);
    if (v < 0) throw ConfigError(key + " must be non-negative");
    out = static_cast<std::size_t>(v);
}

std::vector<std::size_t> read_list(const pt::ptree& tree, const std::string& key) {
    std::vector<std::size_t> out;
    const auto value = tree.get_optional<std::string>(key);
    if (!value) return out;
    std::stringstream ss(*value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto first = item.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const auto last = item.find_last_not_of(" \t");
        const std::string token = item.substr(first, last - first + 1);
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size() || token.front() == '-') {
            throw ConfigError("invalid list entry for " + key + ": '" + token + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

}  // namespace

AppConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }

    for (const auto& [section, body] : tree) {
        auto it = known_keys().find(section);
        if (it == known_keys().end()) {
            if (body.empty()) throw ConfigError("key '" + section + "' outside any section");
            throw ConfigError("unknown section [" + section + "]");
        }
        for (const auto& [key, value] : body) {
            if (!it->second.contains(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
        }
    }

    AppConfig cfg;
    std::string out_dir;
    read(tree, "general.seed", cfg.seed);
    read(tree, "general.out_dir", out_dir);
    read(tree, "audio.sample_rate", cfg.sample_rate_hz);
    read_size(tree, "audio.mdct_bands", cfg.mdct_bands);
    read(tree, "psychoacoustics.alpha", cfg.psychoacoustics.alpha);
    read(tree, "psychoacoustics.db_reference", cfg.psychoacoustics.db_reference);
    read(tree, "psychoacoustics.noise_scale", cfg.noise_scale);
    read(tree, "display.db_floor", cfg.db_floor);
    read(tree, "display.png", cfg.png);

    ModelConfig& m = cfg.model;
    read_size(tree, "model.latent_dim", m.latent_dim);
    read_size(tree, "model.num_blocks", m.num_blocks);
    read_size(tree, "model.seed_blocks", m.seed_blocks);
    read_size(tree, "model.seed_bands", m.seed_bands);
    m.channels = read_list(tree, "model.channels");
    read_size(tree, "model.output_channels", m.output_channels);
    read(tree, "model.leaky_slope", m.leaky_slope);

    TrainConfig& t = cfg.train;
    read(tree, "train.learning_rate", t.learning_rate);
    read(tree, "train.adam_beta1", t.adam_beta1);
    read(tree, "train.adam_beta2", t.adam_beta2);
    read(tree, "train.adam_epsilon", t.adam_epsilon);
    read_size(tree, "train.n_critic", t.n_critic);
    read(tree, "train.gp_lambda", t.gp_lambda);
    read(tree, "train.drift_epsilon", t.drift_epsilon);
    read_size(tree, "train.batch_size", t.batch_size);
    read_size(tree, "train.iterations", t.iterations);
    read_size(tree, "train.checkpoint_every", t.checkpoint_every);
    t.frozen_blocks = read_list(tree, "train.frozen_blocks");
    t.rng_seed = cfg.seed;
    t.noise_scale = cfg.noise_scale;

    std::string synthetic = "tones";
    std::string directory;
    read(tree, "data.synthetic", synthetic);
    read(tree, "data.directory", directory);
    read_size(tree, "data.size", cfg.dataset.size);
    read_size(tree, "data.hop_blocks", cfg.dataset.hop_blocks);
    if (synthetic == "tones") {
        cfg.dataset.source = DatasetSource::kSyntheticTones;
    } else if (synthetic == "none") {
        cfg.dataset.source = DatasetSource::kWavDirectory;
    } else {
        throw ConfigError("data.synthetic must be 'tones' or 'none', got '" + synthetic + "'");
    }
    if (!directory.empty()) {
        std::filesystem::path p(directory);
        cfg.dataset.directory = p.is_absolute() ? p : base_dir / p;
    }
    if (!out_dir.empty()) {
        std::filesystem::path p(out_dir);
        cfg.out_dir = p.is_absolute() ? p : base_dir / p;
    } else {
        cfg.out_dir = base_dir / cfg.out_dir;
    }

    cfg.validate();
    return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

ToneConfig tone_config_for(const AppConfig& cfg) {
    ToneConfig t;
    t.sample_rate_hz = cfg.sample_rate_hz;
    t.frames = cfg.model.output_blocks() * cfg.model.output_bands();
    t.channels = static_cast<int>(cfg.model.output_channels);
    return t;
}

}  // namespace mp3net
