#pragma once

#include "mp3net/model.hpp"
#include "mp3net/psychoacoustics.hpp"
#include "mp3net/synth.hpp"
#include "mp3net/train.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace mp3net {

enum class DatasetSource { kSyntheticTones, kWavDirectory };

struct DatasetConfig {
    DatasetSource source = DatasetSource::kSyntheticTones;
    std::filesystem::path directory;  // kWavDirectory only; resolved against the config file's folder
    std::size_t size = 64;            // number of synthetic tones
    std::size_t hop_blocks = 0;       // slicing hop for WAV corpora in blocks, 0 = segment length
};

struct AppConfig {
    int sample_rate_hz = 22016;
    std::size_t mdct_bands = 128;
    double noise_scale = 1.0;
    double db_floor = -100.0;
    bool png = false;
    std::uint64_t seed = 0;
    PsychoacousticConfig psychoacoustics;
    ModelConfig model;
    TrainConfig train;
    DatasetConfig dataset;
    std::filesystem::path out_dir = "out";

    // Throws ConfigError.
    void validate() const;
};

// Grammar (INI): `[section]` headers, `key = value` lines, `;` or `#` comments. Sections and keys:
//
//   [general]          seed, out_dir
//   [audio]            sample_rate, mdct_bands
//   [psychoacoustics]  alpha, db_reference, noise_scale
//   [display]          db_floor, png
//   [model]            latent_dim, num_blocks, seed_blocks, seed_bands, channels (comma list),
//                      output_channels, leaky_slope
//   [train]            learning_rate, adam_beta1, adam_beta2, adam_epsilon, n_critic, gp_lambda,
//                      drift_epsilon, batch_size, iterations, checkpoint_every, frozen_blocks (comma list)
//   [data]             synthetic = tones | none, directory, size, hop_blocks
//
// Unknown sections or keys are errors. The train seed and noise scale follow [general] seed and
// [psychoacoustics] noise_scale. Relative paths are resolved against the file's directory.
AppConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path);

// ToneConfig whose segment length matches the model output (blocks * bands samples).
ToneConfig tone_config_for(const AppConfig& cfg);

}  // namespace mp3net
