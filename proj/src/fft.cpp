#include "mp3net/fft.hpp"

#include "mp3net/errors.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace mp3net {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

Fft::Fft(std::size_t size) : size_(size), twiddles_(size / 2), bit_reverse_(size) {
    if (!is_power_of_two(size)) throw ShapeError("FFT size must be a power of two");
    for (std::size_t k = 0; k < size / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
        twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < size) ++bits;
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
        bit_reverse_[i] = r;
    }
}

void Fft::forward(std::span<std::complex<double>> data) const {
    if (data.size() != size_) throw ShapeError("FFT input has wrong length");
    for (std::size_t i = 0; i < size_; ++i) {
        if (i < bit_reverse_[i]) std::swap(data[i], data[bit_reverse_[i]]);
    }
    for (std::size_t len = 2; len <= size_; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = size_ / len;
        for (std::size_t start = 0; start < size_; start += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const std::complex<double> t = twiddles_[j * stride] * data[start + j + half];
                data[start + j + half] = data[start + j] - t;
                data[start + j] += t;
            }
        }
    }
}

}  // namespace mp3net
