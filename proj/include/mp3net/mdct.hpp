#pragma once

#include "mp3net/audio_io.hpp"
#include "mp3net/fft.hpp"

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace mp3net {

// MDCT amplitudes A_k(m) laid out (block m, band k, channel c) row-major.
class MdctTensor {
public:
    MdctTensor() = default;
    MdctTensor(std::size_t blocks, std::size_t bands, std::size_t channels, int sample_rate_hz);

    std::size_t blocks() const noexcept { return blocks_; }
    std::size_t bands() const noexcept { return bands_; }
    std::size_t channels() const noexcept { return channels_; }
    int sample_rate_hz() const noexcept { return sample_rate_hz_; }

    double& at(std::size_t m, std::size_t k, std::size_t c) { return values_[index(m, k, c)]; }
    double at(std::size_t m, std::size_t k, std::size_t c) const { return values_[index(m, k, c)]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    // Copy of one block of one channel, length bands().
    std::vector<double> block(std::size_t m, std::size_t c) const;

    // Lower edge of band k in Hz: f_s k / (2N).
    double band_lower_hz(std::size_t k) const;
    double band_width_hz() const;

    bool operator==(const MdctTensor&) const = default;

private:
    std::size_t index(std::size_t m, std::size_t k, std::size_t c) const { return (m * bands_ + k) * channels_ + c; }

    std::size_t blocks_ = 0;
    std::size_t bands_ = 0;
    std::size_t channels_ = 0;
    int sample_rate_hz_ = 0;
    std::vector<double> values_;
};

// Window of length 2N satisfying w_n = w_{2N-1-n} and w_n^2 + w_{n+N}^2 = 1.
struct WindowFn {
    std::vector<double> coefficients;

    std::size_t bands() const noexcept { return coefficients.size() / 2; }
};

// w_n = sin(pi/2 sin^2(pi/(2N) (n + 1/2))), n = 0..2N-1
WindowFn vorbis_window(std::size_t bands);

// How frames are laid over the signal ends.
//   kPeriodic:   frame m covers samples [mN, mN+2N) taken modulo the length; M = len/N frames.
//   kZeroPadded: one zero block is prepended and appended; M = len/N + 1 frames.
enum class Boundary { kPeriodic, kZeroPadded };

std::size_t mdct_frame_count(std::size_t samples, std::size_t bands, Boundary boundary);

// Direct O(M N^2) evaluation of the MDCT sum. Reference implementation.
MdctTensor mdct_forward_naive(const AudioBuffer& buf, std::size_t bands, const WindowFn& window,
                              Boundary boundary = Boundary::kPeriodic);

// O(M N log N) via folding to a DCT-IV evaluated with an N/2-point complex FFT.
MdctTensor mdct_forward_fast(const AudioBuffer& buf, std::size_t bands, const WindowFn& window,
                             Boundary boundary = Boundary::kPeriodic);

inline MdctTensor mdct_forward(const AudioBuffer& buf, std::size_t bands, const WindowFn& window,
                               Boundary boundary = Boundary::kPeriodic) {
    return mdct_forward_fast(buf, bands, window, boundary);
}

// Windowed TDAC overlap-add, y_n = (2/N) w_n sum_k A_k cos(...). Uses the fast DCT-IV.
AudioBuffer mdct_inverse(const MdctTensor& tensor, const WindowFn& window,
                         Boundary boundary = Boundary::kPeriodic);

// DCT-IV of length N, X_k = sum_n u_n cos(pi/N (n + 1/2)(k + 1/2)), through an N/2-point FFT.
class Dct4 {
public:
    explicit Dct4(std::size_t size);

    std::size_t size() const noexcept { return size_; }
    // `scratch` is resized to N/2 as needed; reuse it across calls to avoid allocation.
    void transform(std::span<const double> in, std::span<double> out,
                   std::vector<std::complex<double>>& scratch) const;

private:
    std::size_t size_;
    Fft fft_;
    std::vector<std::complex<double>> pre_;
    std::vector<std::complex<double>> post_;
};

// Binary cache format: "MDCT", version, M, N, C, sample rate (all u32 LE), then float64 (m, k, c).
void save_mdct(const MdctTensor& tensor, const std::filesystem::path& path);
MdctTensor load_mdct(const std::filesystem::path& path);

}  // namespace mp3net
