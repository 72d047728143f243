#pragma once

#include "mp3net/audio_io.hpp"
#include "mp3net/mdct.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mp3net {

// amplitude * sin(2 pi f t + phase), mono.
AudioBuffer sine(double freq_hz, double amplitude, std::size_t frames, int sample_rate_hz, double phase = 0.0);

// Sum of partials at f0 * (h + 1) with the given amplitudes, mono.
AudioBuffer harmonic_stack(double f0_hz, const std::vector<double>& amplitudes, std::size_t frames,
                           int sample_rate_hz);

// Gaussian white noise with the given standard deviation, mono.
AudioBuffer white_noise(double stddev, std::size_t frames, int sample_rate_hz, std::uint64_t seed);

struct ToneConfig {
    int sample_rate_hz = 22016;
    std::size_t frames = 1024;
    int channels = 1;
    double min_f0_hz = 110.0;
    double max_f0_hz = 880.0;
    int max_harmonics = 4;
    double peak = 0.5;
};

// Random fundamental (log-uniform in [min_f0, max_f0]), 1..max_harmonics partials with random
// gains, and a random attack/decay envelope. Stereo copies get independent phases.
AudioBuffer random_tone(const ToneConfig& cfg, std::mt19937_64& rng);

// `count` random tones transformed to MDCT tensors with `bands` bands.
std::vector<MdctTensor> tone_dataset(std::size_t count, const ToneConfig& cfg, std::size_t bands,
                                     std::uint64_t seed);

}  // namespace mp3net
