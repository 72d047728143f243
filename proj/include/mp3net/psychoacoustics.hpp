#pragma once

#include "mp3net/mdct.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mp3net {

// Zwicker critical bands clipped to Nyquist, with MDCT bins assigned by centre frequency.
// Bands keep their table index even when no bin falls inside them.
struct BarkPartition {
    std::vector<double> band_edges_hz;        // band_count() + 1 ascending edges, first 0, last Nyquist
    std::vector<double> band_mid_hz;          // f_j
    std::vector<std::size_t> bin_to_band;     // size N
    std::vector<std::size_t> band_first_bin;  // [first, end) bin range per band
    std::vector<std::size_t> band_end_bin;

    std::size_t band_count() const noexcept { return band_mid_hz.size(); }
    std::size_t bins() const noexcept { return bin_to_band.size(); }
};

BarkPartition bark_partition(int sample_rate_hz, std::size_t bands);

struct PsychoacousticConfig {
    double alpha = 0.3;           // non-linear superposition exponent of the masking sum
    double db_reference = 96.0;   // dB SPL of an MDCT amplitude of 1.0 in one bin
};

// Threshold in quiet, L(f) in dB with f in kHz.
double absolute_threshold_db(double freq_khz);

// 10^(L(f_j)/10) per Bark band, in dB-SPL intensity units.
std::vector<double> absolute_threshold(const BarkPartition& partition);

// Same thresholds expressed in squared MDCT amplitude units via the dB reference.
std::vector<double> absolute_threshold_amplitude(const BarkPartition& partition, const PsychoacousticConfig& cfg);

// Spreading function between masker band i and maskee band j, in dB.
double spreading_db(double masker_minus_maskee);

// Tone-masking offset O_j in dB.
double masking_offset_db(double tonality, std::size_t band);

// Spectral-flatness tonality in [0, 1] over |A_k| floored at 1e-12. An all-zero block is 0.
double tonality(std::span<const double> amplitudes);

// Per-band masking intensity I_mask,j of one block in squared amplitude units.
// Tonality of the same block sets the offset.
std::vector<double> masking_threshold(std::span<const double> amplitudes, const BarkPartition& partition,
                                      double alpha);

// Thresholds for every (block, channel) of a tensor. Index helpers give the flat layout.
struct MaskingThresholds {
    std::size_t blocks = 0;
    std::size_t channels = 0;
    std::size_t bark_bands = 0;
    std::vector<double> absolute;   // per band, squared amplitude units
    std::vector<double> mask;       // (m, c, j)
    std::vector<double> combined;   // max(absolute, mask), (m, c, j)
    std::vector<double> tonality;   // (m, c)

    std::size_t index(std::size_t m, std::size_t c, std::size_t j) const { return (m * channels + c) * bark_bands + j; }
    double mean_tonality() const;
};

MaskingThresholds compute_thresholds(const MdctTensor& tensor, const PsychoacousticConfig& cfg = {});

// Combined threshold of a single block, per band.
std::vector<double> block_combined_threshold(std::span<const double> amplitudes, const BarkPartition& partition,
                                             const PsychoacousticConfig& cfg);

// Delta_k = sqrt(combined_j(k)) broadcast to member bins.
std::vector<double> quantization_step(std::span<const double> combined, const BarkPartition& partition);

// round(A / Delta) * Delta, identity where Delta is zero.
double quantize(double amplitude, double step);

// Adds N(0, (scale * Delta_k / 2)^2) to every amplitude, with Delta from each block's own thresholds.
// `values` is laid out (block, band, channel) like MdctTensor. Deterministic given the seed.
void add_psychoacoustic_noise(std::span<double> values, std::size_t blocks, std::size_t bands, std::size_t channels,
                              int sample_rate_hz, double scale, std::uint64_t seed,
                              const PsychoacousticConfig& cfg = {});

MdctTensor psychoacoustic_noise(const MdctTensor& tensor, double scale, std::uint64_t seed,
                                const PsychoacousticConfig& cfg = {});

// CSV with header block,bark_band,I_abs,I_mask,combined,tau for one channel.
void write_thresholds_csv(const MaskingThresholds& thresholds, std::size_t channel, const std::filesystem::path& path);

}  // namespace mp3net
