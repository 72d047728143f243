#include "mp3net/psychoacoustics.hpp"

#include "mp3net/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace mp3net {

namespace {

// Zwicker critical-band boundaries in Hz.
constexpr std::array<double, 25> kZwickerEdges = {
    0,    100,  200,  300,  400,  510,  630,  770,  920,  1080,  1270,  1480,  1720,
    2000, 2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700, 9500, 12000, 15500};

constexpr double kMagnitudeFloor = 1e-12;

}  // namespace

BarkPartition bark_partition(int sample_rate_hz, std::size_t bands) {
    if (sample_rate_hz <= 0) throw ShapeError("sample rate must be positive");
    if (bands < 8) throw ShapeError("Bark partition needs N >= 8");

    const double nyquist = sample_rate_hz / 2.0;
    BarkPartition p;
    for (double e : kZwickerEdges) {
        if (e < nyquist) p.band_edges_hz.push_back(e);
    }
    p.band_edges_hz.push_back(nyquist);

    const std::size_t count = p.band_edges_hz.size() - 1;
    for (std::size_t j = 0; j < count; ++j) {
        p.band_mid_hz.push_back(0.5 * (p.band_edges_hz[j] + p.band_edges_hz[j + 1]));
    }

    p.bin_to_band.resize(bands);
    p.band_first_bin.assign(count, bands);
    p.band_end_bin.assign(count, 0);
    const double width = static_cast<double>(sample_rate_hz) / (2.0 * static_cast<double>(bands));
    std::size_t j = 0;
    for (std::size_t k = 0; k < bands; ++k) {
        const double centre = width * (static_cast<double>(k) + 0.5);
        while (j + 1 < count && centre >= p.band_edges_hz[j + 1]) ++j;
        p.bin_to_band[k] = j;
        p.band_first_bin[j] = std::min(p.band_first_bin[j], k);
        p.band_end_bin[j] = k + 1;
    }
    // Empty bands get an empty range at the position they would occupy.
    std::size_t next = 0;
    for (std::size_t b = 0; b < count; ++b) {
        if (p.band_end_bin[b] == 0) {
            p.band_first_bin[b] = next;
            p.band_end_bin[b] = next;
        }
        next = p.band_end_bin[b];
    }
    return p;
}

double absolute_threshold_db(double f) {
    return 3.64 * std::pow(f, -0.8) - 6.5 * std::exp(-0.6 * (f - 3.3) * (f - 3.3)) + 1e-3 * std::pow(f, 4.0);
}

std::vector<double> absolute_threshold(const BarkPartition& partition) {
    std::vector<double> out;
    out.reserve(partition.band_count());
    for (double mid : partition.band_mid_hz) out.push_back(std::pow(10.0, absolute_threshold_db(mid / 1000.0) / 10.0));
    return out;
}

std::vector<double> absolute_threshold_amplitude(const BarkPartition& partition, const PsychoacousticConfig& cfg) {
    auto out = absolute_threshold(partition);
    const double ref = std::pow(10.0, -cfg.db_reference / 10.0);
    for (double& v : out) v *= ref;
    return out;
}

double spreading_db(double d) {
    const double x = d + 0.474;
    return 15.81 + 7.5 * x - 17.5 * std::sqrt(1.0 + x * x);
}

double masking_offset_db(double tau, std::size_t band) {
    return tau * (14.5 + static_cast<double>(band)) + (1.0 - tau) * 5.5;
}

double tonality(std::span<const double> amplitudes) {
    if (amplitudes.empty()) return 0.0;
    double peak = kMagnitudeFloor;
    for (double a : amplitudes) peak = std::max(peak, std::abs(a));
    // Relative to the peak, a flat block is all ones and the ratio comes out exactly 1.
    double log_sum = 0.0;
    double sum = 0.0;
    for (double a : amplitudes) {
        const double mag = std::max(std::abs(a), kMagnitudeFloor) / peak;
        log_sum += std::log(mag);
        sum += mag;
    }
    const auto n = static_cast<double>(amplitudes.size());
    const double log10_ratio = log_sum / n / std::log(10.0) - std::log10(sum / n);
    const double tau = (10.0 / -60.0) * log10_ratio;
    return tau > 0.0 ? std::min(tau, 1.0) : 0.0;
}

std::vector<double> masking_threshold(std::span<const double> amplitudes, const BarkPartition& partition,
                                      double alpha) {
    if (alpha <= 0.0) throw ShapeError("masking exponent alpha must be positive");
    if (amplitudes.size() != partition.bins()) throw ShapeError("block length does not match Bark partition");

    const std::size_t bands = partition.band_count();
    std::vector<double> energy(bands, 0.0);
    for (std::size_t k = 0; k < amplitudes.size(); ++k) energy[partition.bin_to_band[k]] += amplitudes[k] * amplitudes[k];

    const double tau = tonality(amplitudes);
    std::vector<double> mask(bands, 0.0);
    for (std::size_t j = 0; j < bands; ++j) {
        const double offset = masking_offset_db(tau, j);
        double acc = 0.0;
        for (std::size_t i = 0; i < bands; ++i) {
            if (energy[i] <= 0.0) continue;
            const double spread = spreading_db(static_cast<double>(i) - static_cast<double>(j));
            acc += std::pow(energy[i], alpha) * std::pow(10.0, alpha / 10.0 * (spread - offset));
        }
        mask[j] = acc > 0.0 ? std::pow(acc, 1.0 / alpha) : 0.0;
    }
    return mask;
}

double MaskingThresholds::mean_tonality() const {
    if (tonality.empty()) return 0.0;
    return std::accumulate(tonality.begin(), tonality.end(), 0.0) / static_cast<double>(tonality.size());
}

std::vector<double> block_combined_threshold(std::span<const double> amplitudes, const BarkPartition& partition,
                                             const PsychoacousticConfig& cfg) {
    auto combined = masking_threshold(amplitudes, partition, cfg.alpha);
    const auto absolute = absolute_threshold_amplitude(partition, cfg);
    for (std::size_t j = 0; j < combined.size(); ++j) combined[j] = std::max(combined[j], absolute[j]);
    return combined;
}

MaskingThresholds compute_thresholds(const MdctTensor& tensor, const PsychoacousticConfig& cfg) {
    const auto partition = bark_partition(tensor.sample_rate_hz(), tensor.bands());
    MaskingThresholds out;
    out.blocks = tensor.blocks();
    out.channels = tensor.channels();
    out.bark_bands = partition.band_count();
    out.absolute = absolute_threshold_amplitude(partition, cfg);
    out.mask.resize(out.blocks * out.channels * out.bark_bands);
    out.combined.resize(out.mask.size());
    out.tonality.resize(out.blocks * out.channels);

    for (std::size_t m = 0; m < out.blocks; ++m) {
        for (std::size_t c = 0; c < out.channels; ++c) {
            const auto block = tensor.block(m, c);
            const auto mask = masking_threshold(block, partition, cfg.alpha);
            out.tonality[m * out.channels + c] = tonality(block);
            for (std::size_t j = 0; j < out.bark_bands; ++j) {
                out.mask[out.index(m, c, j)] = mask[j];
                out.combined[out.index(m, c, j)] = std::max(mask[j], out.absolute[j]);
            }
        }
    }
    return out;
}

std::vector<double> quantization_step(std::span<const double> combined, const BarkPartition& partition) {
    if (combined.size() != partition.band_count()) throw ShapeError("threshold count does not match Bark partition");
    std::vector<double> step(partition.bins());
    for (std::size_t k = 0; k < step.size(); ++k) step[k] = std::sqrt(std::max(0.0, combined[partition.bin_to_band[k]]));
    return step;
}

double quantize(double amplitude, double step) {
    if (step <= 0.0) return amplitude;
    return std::round(amplitude / step) * step;
}

void add_psychoacoustic_noise(std::span<double> values, std::size_t blocks, std::size_t bands, std::size_t channels,
                              int sample_rate_hz, double scale, std::uint64_t seed, const PsychoacousticConfig& cfg) {
    if (scale < 0.0) throw ShapeError("noise scale must be non-negative");
    if (values.size() != blocks * bands * channels) throw ShapeError("noise input has inconsistent shape");
    if (scale == 0.0) return;

    const auto partition = bark_partition(sample_rate_hz, bands);
    std::vector<double> block(bands);
    for (std::size_t m = 0; m < blocks; ++m) {
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t k = 0; k < bands; ++k) block[k] = values[(m * bands + k) * channels + c];
            const auto step = quantization_step(block_combined_threshold(block, partition, cfg), partition);

            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(c)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> normal(0.0, 1.0);
            for (std::size_t k = 0; k < bands; ++k) {
                values[(m * bands + k) * channels + c] += normal(rng) * scale * step[k] / 2.0;
            }
        }
    }
}

MdctTensor psychoacoustic_noise(const MdctTensor& tensor, double scale, std::uint64_t seed,
                                const PsychoacousticConfig& cfg) {
    MdctTensor out = tensor;
    add_psychoacoustic_noise(out.values(), out.blocks(), out.bands(), out.channels(), out.sample_rate_hz(), scale, seed,
                             cfg);
    return out;
}

void write_thresholds_csv(const MaskingThresholds& t, std::size_t channel, const std::filesystem::path& path) {
    if (channel >= t.channels) throw ShapeError("threshold dump channel out of range");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "block,bark_band,I_abs,I_mask,combined,tau\n";
    os.precision(17);
    for (std::size_t m = 0; m < t.blocks; ++m) {
        for (std::size_t j = 0; j < t.bark_bands; ++j) {
            os << m << ',' << j << ',' << t.absolute[j] << ',' << t.mask[t.index(m, channel, j)] << ','
               << t.combined[t.index(m, channel, j)] << ',' << t.tonality[m * t.channels + channel] << '\n';
        }
    }
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace mp3net
