#pragma once

#include <complex>
#include <span>
#include <vector>

namespace mp3net {

// In-place iterative radix-2 FFT with precomputed twiddles. Size must be a power of two.
class Fft {
public:
    explicit Fft(std::size_t size);

    std::size_t size() const noexcept { return size_; }

    // X_k = sum_n x_n exp(-2 pi i n k / size)
    void forward(std::span<std::complex<double>> data) const;

private:
    std::size_t size_;
    std::vector<std::complex<double>> twiddles_;
    std::vector<std::size_t> bit_reverse_;
};

bool is_power_of_two(std::size_t n);

}  // namespace mp3net
