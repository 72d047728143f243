#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mp3net {

// Multichannel sampled signal. Samples nominally lie in [-1, 1].
class AudioBuffer {
public:
    AudioBuffer() = default;
    AudioBuffer(std::vector<std::vector<double>> channels, int sample_rate_hz);

    // Mono convenience constructor.
    AudioBuffer(std::vector<double> mono, int sample_rate_hz);

    static AudioBuffer silence(std::size_t frames, int channels, int sample_rate_hz);

    int sample_rate_hz() const noexcept { return sample_rate_hz_; }
    int channels() const noexcept { return static_cast<int>(samples_.size()); }
    std::size_t frames() const noexcept { return samples_.empty() ? 0 : samples_.front().size(); }

    const std::vector<double>& channel(int c) const { return samples_.at(static_cast<std::size_t>(c)); }
    std::vector<double>& channel(int c) { return samples_.at(static_cast<std::size_t>(c)); }
    const std::vector<std::vector<double>>& samples() const noexcept { return samples_; }

    bool operator==(const AudioBuffer&) const = default;

private:
    std::vector<std::vector<double>> samples_;
    int sample_rate_hz_ = 0;
};

enum class SampleFormat { kPcm16, kFloat32 };

// Reads RIFF/WAVE with PCM16 or IEEE float32 payload. Int16 is scaled by 1/32768.
// Throws ParseError for malformed containers, UnsupportedFormat for other codecs.
AudioBuffer read_wav(const std::filesystem::path& path);

// Writes PCM16 by default. PCM16 output clamps to [-1, 1 - 2^-15] and rounds to nearest.
void write_wav(const AudioBuffer& buf, const std::filesystem::path& path,
               SampleFormat format = SampleFormat::kPcm16);

// Band-limited rational-ratio resampling with a Kaiser-windowed sinc (beta 8,
// 64 taps per polyphase branch). Output length is floor(len * target / source).
AudioBuffer resample(const AudioBuffer& buf, int target_rate_hz);

// Fixed-length windows starting at 0, hop, 2*hop, ... ; trailing partial window dropped.
std::vector<AudioBuffer> slice_segments(const AudioBuffer& buf, std::size_t segment_samples,
                                        std::size_t hop);

}  // namespace mp3net
