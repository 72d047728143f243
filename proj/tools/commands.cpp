#include "commands.hpp"

#include "mp3net/audio_io.hpp"
#include "mp3net/config.hpp"
#include "mp3net/errors.hpp"
#include "mp3net/mdct.hpp"
#include "mp3net/model.hpp"
#include "mp3net/psychoacoustics.hpp"
#include "mp3net/spectral.hpp"
#include "mp3net/synth.hpp"
#include "mp3net/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <optional>
#include <ostream>
#include <regex>

namespace mp3net::cli {

namespace fs = std::filesystem;

namespace {

bool verbose() {
    const char* v = std::getenv("MP3NET_VERBOSE");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
}

AppConfig config_or_default(const std::string& path) {
    return path.empty() ? AppConfig{} : load_config(path);
}

struct Input {
    AudioBuffer audio;  // at the configured rate, zero-padded to whole blocks
    std::size_t frames = 0;  // length before padding
};

Input load_input(const fs::path& path, const AppConfig& cfg) {
    AudioBuffer buf = read_wav(path);
    if (buf.sample_rate_hz() != cfg.sample_rate_hz) buf = resample(buf, cfg.sample_rate_hz);
    Input in;
    in.frames = buf.frames();
    const std::size_t n = cfg.mdct_bands;
    const std::size_t padded = std::max<std::size_t>(1, (in.frames + n - 1) / n) * n;
    auto channels = buf.samples();
    for (auto& ch : channels) ch.resize(padded, 0.0);
    in.audio = AudioBuffer(std::move(channels), cfg.sample_rate_hz);
    return in;
}

AudioBuffer trim(const AudioBuffer& buf, std::size_t frames) {
    auto channels = buf.samples();
    for (auto& ch : channels) ch.resize(frames);
    return AudioBuffer(std::move(channels), buf.sample_rate_hz());
}

std::string channel_suffix(std::size_t c) { return c == 0 ? "" : "_ch" + std::to_string(c); }

// ─── analyze ────────────────────────────────────────────────────────────────

int analyze(const AppConfig& cfg, const fs::path& wav, const fs::path& out_dir, std::ostream& out) {
    const Input in = load_input(wav, cfg);
    const MdctTensor tensor = mdct_forward(in.audio, cfg.mdct_bands, vorbis_window(cfg.mdct_bands));
    Spectrogram spec = spectrogram(tensor);
    spec.db_floor = cfg.db_floor;
    const MaskingThresholds thresholds = compute_thresholds(tensor, cfg.psychoacoustics);

    fs::create_directories(out_dir);
    for (std::size_t c = 0; c < tensor.channels(); ++c) {
        const std::string s = channel_suffix(c);
        to_db_image(spec, out_dir / ("spectrogram" + s + ".pgm"), c);
        signed_db_image(tensor, out_dir / ("signed_amplitudes" + s + ".pgm"), cfg.db_floor, c);
        if (cfg.png) {
            to_db_image(spec, out_dir / ("spectrogram" + s + ".png"), c);
            signed_db_image(tensor, out_dir / ("signed_amplitudes" + s + ".png"), cfg.db_floor, c);
        }
        write_tonality_csv(thresholds, tensor.bands(), tensor.sample_rate_hz(), c, out_dir / ("tonality" + s + ".csv"));
        write_thresholds_csv(thresholds, c, out_dir / ("thresholds" + s + ".csv"));
    }

    const auto totals = spec.channels.front().band_totals();
    const auto peak = static_cast<std::size_t>(std::max_element(totals.begin(), totals.end()) - totals.begin());
    out << "blocks " << tensor.blocks() << ", bands " << tensor.bands() << ", channels " << tensor.channels() << '\n';
    out << "dominant band " << peak << " [" << tensor.band_lower_hz(peak) << ", "
        << tensor.band_lower_hz(peak) + tensor.band_width_hz() << ") Hz\n";
    out << "mean tonality " << std::setprecision(4) << thresholds.mean_tonality() << '\n';
    return kOk;
}

// ─── roundtrip ──────────────────────────────────────────────────────────────

int roundtrip(const AppConfig& cfg, const fs::path& wav, const fs::path& out_wav, double noise, std::ostream& out) {
    const Input in = load_input(wav, cfg);
    const WindowFn window = vorbis_window(cfg.mdct_bands);
    const MdctTensor tensor = mdct_forward(in.audio, cfg.mdct_bands, window);
    const MdctTensor noisy = psychoacoustic_noise(tensor, noise, cfg.seed, cfg.psychoacoustics);

    if (out_wav.has_parent_path()) fs::create_directories(out_wav.parent_path());
    write_wav(trim(mdct_inverse(noisy, window), in.frames), out_wav);

    // Per Bark band, summed over blocks, channels and member bins.
    const BarkPartition partition = bark_partition(cfg.sample_rate_hz, cfg.mdct_bands);
    const MaskingThresholds t = compute_thresholds(tensor, cfg.psychoacoustics);
    const std::size_t bands = partition.band_mid_hz.size();
    std::vector<double> measured(bands, 0.0);
    std::vector<double> threshold(bands, 0.0);
    for (std::size_t m = 0; m < tensor.blocks(); ++m)
        for (std::size_t c = 0; c < tensor.channels(); ++c)
            for (std::size_t k = 0; k < tensor.bands(); ++k) {
                const std::size_t j = partition.bin_to_band[k];
                const double d = noisy.at(m, k, c) - tensor.at(m, k, c);
                measured[j] += d * d;
                threshold[j] += t.combined[t.index(m, c, j)];
            }

    const double predicted_scale = 0.25 * noise * noise;
    out << "bark_band  lo_hz  hi_hz  noise_power  predicted  threshold  noise/predicted  NTR_dB\n";
    std::size_t flagged = 0;
    for (std::size_t j = 0; j < bands; ++j) {
        if (partition.band_first_bin[j] == partition.band_end_bin[j]) continue;
        const double predicted = predicted_scale * threshold[j];
        char line[200];
        const double ratio = predicted > 0.0 ? measured[j] / predicted : 0.0;
        const double ntr_db = threshold[j] > 0.0 && measured[j] > 0.0 ? 10.0 * std::log10(measured[j] / threshold[j])
                                                                        : -INFINITY;
        std::snprintf(line, sizeof line, "%9zu  %5.0f  %5.0f  %11.4e  %9.3e  %9.3e  %15.3f  %6.1f", j,
                      partition.band_edges_hz[j], partition.band_edges_hz[j + 1], measured[j], predicted,
                      threshold[j], ratio, ntr_db);
        out << line;
        if (measured[j] > threshold[j]) {
            out << "  ABOVE THRESHOLD";
            ++flagged;
        }
        out << '\n';
    }
    out << flagged << " band(s) above threshold\n";
    return kOk;
}

// ─── reduce ─────────────────────────────────────────────────────────────────

int reduce(const AppConfig& cfg, const fs::path& wav, int folds, const fs::path& out_dir, std::ostream& out) {
    if (folds < 0) throw ConfigError("--folds must be non-negative");
    const Input in = load_input(wav, cfg);
    const MdctTensor tensor = mdct_forward(in.audio, cfg.mdct_bands, vorbis_window(cfg.mdct_bands));
    Spectrogram spec = spectrogram(tensor);
    spec.db_floor = cfg.db_floor;
    const ReducedSpectrogram reduced = reduce_spectrogram(spec, folds);

    fs::create_directories(out_dir);
    for (std::size_t l = 0; l < reduced.levels.size(); ++l) {
        const Spectrogram& level = reduced.levels[l];
        to_db_image(level, out_dir / ("level_" + std::to_string(l) + ".pgm"));
        if (cfg.png) to_db_image(level, out_dir / ("level_" + std::to_string(l) + ".png"));
        const Grid& g = level.channels.front();
        const auto totals = g.band_totals();
        const auto peak = std::max_element(totals.begin(), totals.end());
        const double total = g.total();
        out << "level " << l << ": " << g.blocks << " x " << g.bands << ", dominant band "
            << (peak - totals.begin()) << " holds " << std::setprecision(4)
            << (total > 0.0 ? 100.0 * *peak / total : 0.0) << "% of energy\n";
    }
    return kOk;
}

// ─── shapes ─────────────────────────────────────────────────────────────────

std::pair<std::size_t, std::size_t> parse_seed(const std::string& s) {
    static const std::regex re(R"(^\s*(\d+)\s*(?:x|X|×|\*)\s*(\d+)\s*$)");
    std::smatch match;
    if (!std::regex_match(s, match, re)) throw ConfigError("--seed must look like MxN, got '" + s + "'");
    return {std::stoull(match[1].str()), std::stoull(match[2].str())};
}

void print_report(const std::string& title, const std::vector<StageReport>& rows, std::ostream& out) {
    out << title << '\n';
    std::size_t total = 0;
    for (const auto& r : rows) {
        total += r.parameters;
        char line[160];
        std::snprintf(line, sizeof line, "  %-18s %12zu  %s", r.stage.c_str(), r.parameters,
                      (std::to_string(r.blocks) + " × " + std::to_string(r.bands) + " × " +
                       std::to_string(r.channels))
                          .c_str());
        out << line << '\n';
    }
    out << "  total parameters " << total << '\n';
}

int shapes(ModelConfig model, std::size_t blocks, const std::string& seed, std::size_t latent, std::ostream& out) {
    const auto [m0, n0] = parse_seed(seed);
    model.num_blocks = blocks;
    model.seed_blocks = m0;
    model.seed_bands = n0;
    model.latent_dim = latent;
    model.channels.clear();
    try {
        model.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(e.what());
    }
    print_report("discriminator", discriminator_report(model), out);
    print_report("generator", generator_report(model), out);
    const auto& last = generator_report(model).back();
    out << last.blocks << " × " << last.bands << " × " << last.channels << '\n';
    return kOk;
}

// ─── train ──────────────────────────────────────────────────────────────────

std::vector<MdctTensor> wav_dataset(const AppConfig& cfg) {
    const DatasetConfig& d = cfg.dataset;
    if (!fs::is_directory(d.directory)) throw ConfigError("data directory not found: " + d.directory.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(d.directory)) {
        if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    const std::size_t segment = cfg.model.output_blocks() * cfg.model.output_bands();
    const std::size_t hop = d.hop_blocks == 0 ? segment : d.hop_blocks * cfg.mdct_bands;
    const WindowFn window = vorbis_window(cfg.mdct_bands);
    std::vector<MdctTensor> out;
    for (const auto& f : files) {
        AudioBuffer buf = read_wav(f);
        if (buf.sample_rate_hz() != cfg.sample_rate_hz) buf = resample(buf, cfg.sample_rate_hz);
        if (static_cast<std::size_t>(buf.channels()) != cfg.model.output_channels) {
            throw ConfigError(f.string() + " has " + std::to_string(buf.channels()) + " channel(s), model expects " +
                              std::to_string(cfg.model.output_channels));
        }
        for (const auto& s : slice_segments(buf, segment, hop)) out.push_back(mdct_forward(s, cfg.mdct_bands, window));
    }
    if (out.empty()) throw ConfigError("no training segments found in " + d.directory.string());
    return out;
}

int train_cmd(const fs::path& config_path, std::ostream& out) {
    const AppConfig cfg = load_config(config_path);
    const std::vector<MdctTensor> dataset =
        cfg.dataset.source == DatasetSource::kSyntheticTones
            ? tone_dataset(cfg.dataset.size, tone_config_for(cfg), cfg.mdct_bands, cfg.seed)
            : wav_dataset(cfg);

    TrainOptions options;
    options.sample_rate_hz = cfg.sample_rate_hz;
    options.psychoacoustics = cfg.psychoacoustics;
    options.out_dir = cfg.out_dir;
    if (verbose()) {
        options.on_iteration = [&out](const TrainingLogRow& r) {
            if (r.iteration % 100 == 0) {
                out << "iteration " << r.iteration << "  loss_D " << r.loss_d << "  loss_G " << r.loss_g
                    << "  W " << r.wasserstein << "  tau " << r.gen_tonality << std::endl;
            }
        };
    }
    const auto start = std::chrono::steady_clock::now();
    const TrainResult result = train(dataset, cfg.model, cfg.train, options);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    out << "trained " << result.log.size() << " iterations on " << dataset.size() << " segments in "
        << std::setprecision(3) << seconds << " s\n";
    if (!result.log.empty()) {
        const auto& last = result.log.back();
        out << "final loss_D " << last.loss_d << ", loss_G " << last.loss_g << ", tonality " << last.gen_tonality
            << '\n';
    }
    out << "checkpoint " << (cfg.out_dir / "checkpoint_final.mp3n").string() << '\n';
    return kOk;
}

// ─── sample ─────────────────────────────────────────────────────────────────

int sample_cmd(const fs::path& checkpoint_path, std::size_t count, const fs::path& out_dir, std::uint64_t seed,
               std::ostream& out) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    Generator gen(ck.model, 0);
    restore_parameters(gen.parameters(), ck);

    const auto start = std::chrono::steady_clock::now();
    const std::vector<MdctTensor> tensors = sample_generator(gen, count, seed, ck.sample_rate_hz);
    const WindowFn window = vorbis_window(ck.model.output_bands());
    std::vector<AudioBuffer> audio;
    for (const auto& t : tensors) audio.push_back(mdct_inverse(t, window));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < audio.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%03zu.wav", i);
        write_wav(audio[i], out_dir / name);
    }
    out << "wrote " << audio.size() << " sample(s) of " << audio.front().frames() << " frames at "
        << ck.sample_rate_hz << " Hz\n";
    out << "sampling wall time " << std::fixed << std::setprecision(3) << seconds << " s\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"MDCT analysis, psychoacoustic round trips and toy GAN training", "mp3net"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("-c,--config", config_path, "INI configuration file")->check(CLI::ExistingFile);

    std::string wav, out_dir, out_wav, checkpoint, seed_shape = "4x2";
    double noise = 1.0;
    int folds = 1;
    std::size_t blocks = 6, latent = 512, count = 8, output_channels = 2;
    std::uint64_t sample_seed = 0;

    auto* analyze_cmd = app.add_subcommand("analyze", "Spectrogram images, tonality and masking thresholds");
    analyze_cmd->add_option("wav", wav, "Input WAV")->required();
    analyze_cmd->add_option("out_dir", out_dir, "Output directory")->required();

    auto* roundtrip_cmd = app.add_subcommand("roundtrip", "MDCT, psychoacoustic noise, inverse MDCT");
    roundtrip_cmd->add_option("wav", wav, "Input WAV")->required();
    roundtrip_cmd->add_option("out_wav", out_wav, "Output WAV")->required();
    roundtrip_cmd->add_option("--noise", noise, "Noise scale c")->check(CLI::NonNegativeNumber);

    auto* reduce_cmd = app.add_subcommand("reduce", "Reduced spectrogram levels");
    reduce_cmd->add_option("wav", wav, "Input WAV")->required();
    reduce_cmd->add_option("out_dir", out_dir, "Output directory")->required();
    reduce_cmd->add_option("--folds", folds, "Number of octave folds");

    auto* shapes_cmd = app.add_subcommand("shapes", "Activation shapes and parameter counts");
    shapes_cmd->add_option("--blocks", blocks, "Model blocks");
    shapes_cmd->add_option("--seed", seed_shape, "Seed tensor MxN");
    shapes_cmd->add_option("--latent", latent, "Latent dimension");
    shapes_cmd->add_option("--channels", output_channels, "Output audio channels");

    auto* train_sub = app.add_subcommand("train", "Toy adversarial training");
    std::string train_config;
    train_sub->add_option("config", train_config, "Training configuration")->required()->check(CLI::ExistingFile);

    auto* sample_sub = app.add_subcommand("sample", "Draw WAVs from a checkpoint");
    sample_sub->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
    sample_sub->add_option("count", count, "Number of samples")->required()->check(CLI::PositiveNumber);
    sample_sub->add_option("out_dir", out_dir, "Output directory")->required();
    sample_sub->add_option("--seed", sample_seed, "Latent seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        if (*train_sub) return train_cmd(train_config, out);
        if (*sample_sub) return sample_cmd(checkpoint, count, out_dir, sample_seed, out);
        const AppConfig cfg = config_or_default(config_path);
        if (*analyze_cmd) return analyze(cfg, wav, out_dir, out);
        if (*roundtrip_cmd) return roundtrip(cfg, wav, out_wav, noise, out);
        if (*reduce_cmd) return reduce(cfg, wav, folds, out_dir, out);
        if (*shapes_cmd) {
            ModelConfig model = cfg.model;
            model.output_channels = output_channels;
            return shapes(model, blocks, seed_shape, latent, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const UnsupportedFormat& e) {
        err << "unsupported input: " << e.what() << '\n';
        return kParse;
    } catch (const DivergenceError& e) {
        err << "training diverged at iteration " << e.iteration() << ": " << e.what() << '\n';
        return kCompute;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << '\n';
        return kCompute;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kCompute;
    }
    return kUsage;
}

}  // namespace mp3net::cli
