#pragma once

#include "mp3net/mdct.hpp"
#include "mp3net/psychoacoustics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace mp3net {

// Dense blocks x bands grid of non-negative reals.
struct Grid {
    std::size_t blocks = 0;
    std::size_t bands = 0;
    std::vector<double> values;  // (m, k) row-major

    Grid() = default;
    Grid(std::size_t m, std::size_t n) : blocks(m), bands(n), values(m * n, 0.0) {}

    double& at(std::size_t m, std::size_t k) { return values[m * bands + k]; }
    double at(std::size_t m, std::size_t k) const { return values[m * bands + k]; }
    double total() const;
    // Energy per band summed over time.
    std::vector<double> band_totals() const;
};

struct Spectrogram {
    std::vector<Grid> channels;   // A_k(m)^2 per channel
    double db_floor = -100.0;     // display floor relative to the maximum, dB
};

struct ReducedSpectrogram {
    std::vector<Spectrogram> levels;  // levels[0] is the input, levels[l] after l folds
    int fold_count = 0;
};

Spectrogram spectrogram(const MdctTensor& tensor);

// One fold: average adjacent block pairs, then fold the top frequency half onto the second quarter.
Grid fold_octave(const Grid& grid);

// Applies `folds` successive folds. Requires M divisible by 2^folds and N divisible by 2^(folds+1).
ReducedSpectrogram reduce_spectrogram(const Spectrogram& spec, int folds);

// 8-bit grayscale raster, row 0 at the top.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

// 10 log10(A^2) mapped linearly onto [0, 255] over [max + db_floor, max]. Time runs along x,
// band 0 is the bottom row.
GrayImage render_db_image(const Spectrogram& spec, std::size_t channel = 0);

// Mid-grey (128) for zero; deviation of 127 * (dB above floor) / (dB range), upwards for positive.
GrayImage render_signed_image(const MdctTensor& tensor, double db_floor = -100.0, std::size_t channel = 0);

// Writes P5 PGM, or PNG when the path ends in ".png" and PNG support is compiled in.
void write_image(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);
bool png_supported() noexcept;

void to_db_image(const Spectrogram& spec, const std::filesystem::path& path, std::size_t channel = 0);
void signed_db_image(const MdctTensor& tensor, const std::filesystem::path& path, double db_floor = -100.0,
                     std::size_t channel = 0);

// CSV with header block_index,time_seconds,tau for one channel.
void write_tonality_csv(const MaskingThresholds& thresholds, std::size_t bands, int sample_rate_hz,
                        std::size_t channel, const std::filesystem::path& path);

}  // namespace mp3net
