#include "mp3net/synth.hpp"

#include "mp3net/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mp3net {

AudioBuffer sine(double freq_hz, double amplitude, std::size_t frames, int sample_rate_hz, double phase) {
    std::vector<double> x(frames);
    const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
    for (std::size_t n = 0; n < frames; ++n) x[n] = amplitude * std::sin(w * static_cast<double>(n) + phase);
    return AudioBuffer(std::move(x), sample_rate_hz);
}

AudioBuffer harmonic_stack(double f0_hz, const std::vector<double>& amplitudes, std::size_t frames,
                           int sample_rate_hz) {
    std::vector<double> x(frames, 0.0);
    for (std::size_t h = 0; h < amplitudes.size(); ++h) {
        const double w = 2.0 * std::numbers::pi * f0_hz * static_cast<double>(h + 1) / sample_rate_hz;
        for (std::size_t n = 0; n < frames; ++n) x[n] += amplitudes[h] * std::sin(w * static_cast<double>(n));
    }
    return AudioBuffer(std::move(x), sample_rate_hz);
}

AudioBuffer white_noise(double stddev, std::size_t frames, int sample_rate_hz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    std::vector<double> x(frames);
    for (double& v : x) v = normal(rng);
    return AudioBuffer(std::move(x), sample_rate_hz);
}

AudioBuffer random_tone(const ToneConfig& cfg, std::mt19937_64& rng) {
    if (cfg.min_f0_hz <= 0.0 || cfg.max_f0_hz < cfg.min_f0_hz) throw ParseError("invalid tone frequency range");
    if (cfg.max_harmonics < 1) throw ParseError("max_harmonics must be at least 1");
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double f0 = cfg.min_f0_hz * std::pow(cfg.max_f0_hz / cfg.min_f0_hz, unit(rng));
    const int harmonics = std::uniform_int_distribution<int>(1, cfg.max_harmonics)(rng);
    std::vector<double> gains(static_cast<std::size_t>(harmonics));
    for (int h = 0; h < harmonics; ++h) gains[static_cast<std::size_t>(h)] = (h == 0 ? 1.0 : 0.2 + 0.8 * unit(rng)) / (h + 1);

    // Linear attack over up to 10% of the segment, then exponential decay.
    const double attack = 1.0 + 0.1 * unit(rng) * static_cast<double>(cfg.frames);
    const double decay_per_sample = 3.0 * unit(rng) / static_cast<double>(cfg.frames);
    std::vector<double> envelope(cfg.frames);
    for (std::size_t n = 0; n < cfg.frames; ++n) {
        const double t = static_cast<double>(n);
        envelope[n] = std::min(1.0, (t + 1.0) / attack) * std::exp(-decay_per_sample * t);
    }

    double norm = 0.0;
    for (double g : gains) norm += g;

    std::vector<std::vector<double>> channels;
    for (int c = 0; c < cfg.channels; ++c) {
        std::vector<double> x(cfg.frames, 0.0);
        for (int h = 0; h < harmonics; ++h) {
            const double f = f0 * (h + 1);
            if (f >= 0.5 * cfg.sample_rate_hz) break;
            const double phase = 2.0 * std::numbers::pi * unit(rng);
            const double w = 2.0 * std::numbers::pi * f / cfg.sample_rate_hz;
            const double g = gains[static_cast<std::size_t>(h)] / norm;
            for (std::size_t n = 0; n < cfg.frames; ++n) x[n] += g * std::sin(w * static_cast<double>(n) + phase);
        }
        for (std::size_t n = 0; n < cfg.frames; ++n) x[n] *= cfg.peak * envelope[n];
        channels.push_back(std::move(x));
    }
    return AudioBuffer(std::move(channels), cfg.sample_rate_hz);
}

std::vector<MdctTensor> tone_dataset(std::size_t count, const ToneConfig& cfg, std::size_t bands,
                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const WindowFn window = vorbis_window(bands);
    std::vector<MdctTensor> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(mdct_forward(random_tone(cfg, rng), bands, window));
    return out;
}

}  // namespace mp3net
