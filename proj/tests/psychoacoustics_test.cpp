#include "mp3net/errors.hpp"
#include "mp3net/mdct.hpp"
#include "mp3net/psychoacoustics.hpp"
#include "mp3net/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace mp3net;

namespace {

// Direct transcription of the threshold-in-quiet polynomial.
double threshold_oracle(double f) {
    return 3.64 * std::pow(f, -0.8) - 6.5 * std::exp(-0.6 * (f - 3.3) * (f - 3.3)) + 0.001 * f * f * f * f;
}

std::vector<double> white_block(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
}

}  // namespace

TEST_SUITE("psychoacoustics") {

TEST_CASE("Bark partition at 22016 Hz and N = 128") {
    const BarkPartition p = bark_partition(22016, 128);
    CHECK(p.band_count() == 23);
    CHECK(p.band_edges_hz.front() == 0.0);
    CHECK(p.band_edges_hz[22] == 9500.0);
    CHECK(p.band_edges_hz.back() == 11008.0);
    CHECK(p.bin_to_band[0] == 0);
    // Bin centre 86 (k + 1/2): bin 1 is 129 Hz, band 1.
    CHECK(p.bin_to_band[1] == 1);
    CHECK(p.bin_to_band[127] == 22);
}

TEST_CASE("partition covers every bin exactly once") {
    for (std::size_t n : {8u, 16u, 64u, 128u, 512u}) {
        for (int rate : {8000, 22016, 44100}) {
            const BarkPartition p = bark_partition(rate, n);
            std::vector<int> hits(n, 0);
            for (std::size_t j = 0; j < p.band_count(); ++j) {
                CHECK(p.band_first_bin[j] <= p.band_end_bin[j]);
                for (std::size_t k = p.band_first_bin[j]; k < p.band_end_bin[j]; ++k) {
                    ++hits[k];
                    CHECK(p.bin_to_band[k] == j);
                }
            }
            for (int h : hits) CHECK(h == 1);
            const double width = rate / (2.0 * static_cast<double>(n));
            for (std::size_t k = 0; k < n; ++k) {
                const double centre = width * (static_cast<double>(k) + 0.5);
                const std::size_t j = p.bin_to_band[k];
                CHECK(centre >= p.band_edges_hz[j]);
                CHECK(centre < p.band_edges_hz[j + 1]);
            }
        }
    }
    CHECK_THROWS_AS(bark_partition(22016, 4), ShapeError);
}

TEST_CASE("44.1 kHz keeps a final band above 15.5 kHz") {
    const BarkPartition p = bark_partition(44100, 256);
    CHECK(p.band_count() == 25);
    CHECK(p.band_edges_hz[24] == 15500.0);
    CHECK(p.band_edges_hz.back() == 22050.0);
}

TEST_CASE("threshold in quiet anchors") {
    CHECK(absolute_threshold_db(1.0) == doctest::Approx(3.369).epsilon(0.0003));
    CHECK(std::abs(absolute_threshold_db(1.0) - 3.369) <= 0.001);
    CHECK(std::abs(absolute_threshold_db(3.3) - (-4.98)) <= 0.01);
    CHECK(std::abs(absolute_threshold_db(10.0) - 10.58) <= 0.01);
    for (double f : {1.0, 2.0, 5.0, 8.0}) CHECK(absolute_threshold_db(3.3) < absolute_threshold_db(f));
    for (double f = 0.05; f < 16.0; f *= 1.37) CHECK(absolute_threshold_db(f) == doctest::Approx(threshold_oracle(f)));
}

TEST_CASE("absolute threshold is constant per band and honours the dB reference") {
    const BarkPartition p = bark_partition(22016, 128);
    const auto spl = absolute_threshold(p);
    PsychoacousticConfig cfg;
    const auto amp = absolute_threshold_amplitude(p, cfg);
    for (std::size_t j = 0; j < p.band_count(); ++j) {
        CHECK(spl[j] == doctest::Approx(std::pow(10.0, threshold_oracle(p.band_mid_hz[j] / 1000.0) / 10.0)));
        CHECK(amp[j] == doctest::Approx(spl[j] * std::pow(10.0, -9.6)).epsilon(1e-9));
    }
}

TEST_CASE("spreading function at zero distance") {
    const double x = 0.474;
    const double oracle = 15.81 + 7.5 * x - 17.5 * std::sqrt(1.0 + x * x);
    CHECK(spreading_db(0.0) == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(std::abs(spreading_db(0.0)) <= 0.01);
    CHECK(spreading_db(0.0) == doctest::Approx(-0.0014).epsilon(0.05));
    // Falls off in both directions; with the argument i - j it is steeper for maskers below the maskee.
    CHECK(spreading_db(3.0) < spreading_db(1.0));
    CHECK(spreading_db(-3.0) < spreading_db(-1.0));
    CHECK(spreading_db(-2.0) < spreading_db(2.0));
}

TEST_CASE("masking offset interpolates between noise and tone") {
    CHECK(masking_offset_db(0.0, 7) == 5.5);
    CHECK(masking_offset_db(1.0, 7) == 21.5);
    CHECK(masking_offset_db(0.5, 0) == doctest::Approx(10.0));
}

TEST_CASE("tonality limits") {
    CHECK(tonality(std::vector<double>(128, 0.3)) == 0.0);
    CHECK(tonality(std::vector<double>(128, -2.0)) == 0.0);
    std::vector<double> single(128, 0.0);
    single[17] = 0.8;
    CHECK(tonality(single) == 1.0);
    CHECK(tonality(std::vector<double>(128, 0.0)) == 0.0);

    std::mt19937_64 rng(3);
    double mean = 0.0;
    for (int i = 0; i < 200; ++i) mean += tonality(white_block(128, rng));
    CHECK(mean / 200.0 <= 0.1);
}

TEST_CASE("tonality oracle and scale invariance") {
    const auto a = testing::random_vector(64, 42, -1.0, 1.0);
    double log_gm = 0.0, am = 0.0;
    for (double v : a) {
        log_gm += std::log(std::abs(v));
        am += std::abs(v);
    }
    const double ratio = std::exp(log_gm / 64.0) / (am / 64.0);
    const double oracle = std::clamp(-std::log10(ratio) / 6.0, 0.0, 1.0);
    CHECK(tonality(a) == doctest::Approx(oracle).epsilon(1e-12));
    for (double lambda : {1e-3, 0.5, 7.0, 1e4}) {
        std::vector<double> s = a;
        for (double& v : s) v *= lambda;
        CHECK(tonality(s) == doctest::Approx(tonality(a)).epsilon(1e-12));
    }
}

TEST_CASE("masking threshold of a zero block is zero") {
    const BarkPartition p = bark_partition(22016, 128);
    for (double v : masking_threshold(std::vector<double>(128, 0.0), p, 0.3)) CHECK(v == 0.0);
    CHECK_THROWS_AS(masking_threshold(std::vector<double>(64, 0.0), p, 0.3), ShapeError);
    CHECK_THROWS_AS(masking_threshold(std::vector<double>(128, 0.0), p, 0.0), ShapeError);
}

TEST_CASE("masking threshold matches a direct evaluation") {
    const BarkPartition p = bark_partition(22016, 64);
    const auto a = testing::random_vector(64, 8);
    const double alpha = 0.3;
    const double tau = tonality(a);
    std::vector<double> e(p.band_count(), 0.0);
    for (std::size_t k = 0; k < 64; ++k) e[p.bin_to_band[k]] += a[k] * a[k];
    const auto mask = masking_threshold(a, p, alpha);
    for (std::size_t j = 0; j < p.band_count(); ++j) {
        const double o = tau * (14.5 + static_cast<double>(j)) + (1.0 - tau) * 5.5;
        double acc = 0.0;
        for (std::size_t i = 0; i < p.band_count(); ++i) {
            const double d = static_cast<double>(i) - static_cast<double>(j) + 0.474;
            const double f = 15.81 + 7.5 * d - 17.5 * std::sqrt(1.0 + d * d);
            acc += std::pow(e[i], alpha) * std::pow(10.0, alpha / 10.0 * (f - o));
        }
        CHECK(mask[j] == doctest::Approx(std::pow(acc, 1.0 / alpha)).epsilon(1e-12));
    }
}

TEST_CASE("masking is homogeneous of degree two") {
    const BarkPartition p = bark_partition(22016, 128);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto a = testing::random_vector(128, seed);
        const auto base = masking_threshold(a, p, 0.3);
        for (double lambda : {2.0, 0.1, 13.0}) {
            std::vector<double> s = a;
            for (double& v : s) v *= lambda;
            const auto scaled = masking_threshold(s, p, 0.3);
            for (std::size_t j = 0; j < base.size(); ++j) {
                CHECK(scaled[j] == doctest::Approx(lambda * lambda * base[j]).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("combined threshold is the elementwise maximum") {
    const MdctTensor t = mdct_forward(harmonic_stack(440.0, {0.3, 0.1, 0.05}, 128 * 16, 22016), 128, vorbis_window(128));
    const MaskingThresholds th = compute_thresholds(t);
    CHECK(th.bark_bands == 23);
    CHECK(th.blocks == 16);
    for (std::size_t m = 0; m < th.blocks; ++m)
        for (std::size_t j = 0; j < th.bark_bands; ++j) {
            const std::size_t i = th.index(m, 0, j);
            CHECK(th.combined[i] == std::max(th.mask[i], th.absolute[j]));
        }
}

TEST_CASE("quantization arithmetic") {
    CHECK(quantize(3.7, 1.0) == 4.0);
    CHECK(quantize(3.7 * 0.25, 0.25) == doctest::Approx(1.0));
    CHECK(quantize(0.0, 0.7) == 0.0);
    CHECK(quantize(-1.234, 0.0) == -1.234);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> amp(-10.0, 10.0), step(1e-6, 3.0);
    for (int i = 0; i < 100000; ++i) {
        const double a = amp(rng);
        const double d = step(rng);
        REQUIRE(std::abs(a - quantize(a, d)) <= d / 2.0 + 1e-15);
    }
}

TEST_CASE("quantization step broadcasts sqrt of the band threshold") {
    const BarkPartition p = bark_partition(22016, 128);
    std::vector<double> combined(p.band_count());
    for (std::size_t j = 0; j < combined.size(); ++j) combined[j] = static_cast<double>((j + 1) * (j + 1));
    const auto step = quantization_step(combined, p);
    for (std::size_t k = 0; k < 128; ++k) CHECK(step[k] == static_cast<double>(p.bin_to_band[k] + 1));
    CHECK_THROWS_AS(quantization_step(std::vector<double>(3, 1.0), p), ShapeError);
}

TEST_CASE("noise layer is the identity at c = 0 and deterministic otherwise") {
    const MdctTensor t = mdct_forward(white_noise(0.1, 128 * 8, 22016, 4), 128, vorbis_window(128));
    CHECK(psychoacoustic_noise(t, 0.0, 9) == t);
    const MdctTensor a = psychoacoustic_noise(t, 1.0, 9);
    CHECK(a == psychoacoustic_noise(t, 1.0, 9));
    CHECK_FALSE(a == psychoacoustic_noise(t, 1.0, 10));
    CHECK_FALSE(a == t);
    CHECK_THROWS_AS(psychoacoustic_noise(t, -1.0, 9), ShapeError);
}

TEST_CASE("noise power follows (c Delta / 2)^2") {
    // 1024 blocks of a tone near 440 Hz with a whole number of cycles, so the wrapping last block is
    // as quiet as the rest and no single block dominates the band sums.
    const std::size_t blocks = 1024;
    const double f0 = 2618.0 * 22016.0 / (128.0 * blocks);
    const MdctTensor t = mdct_forward(sine(f0, 0.5, 128 * blocks, 22016), 128, vorbis_window(128));
    const BarkPartition p = bark_partition(22016, 128);
    for (double c : {1.0, 3.0}) {
        const MdctTensor noisy = psychoacoustic_noise(t, c, 77);
        std::vector<double> measured(p.band_count(), 0.0), predicted(p.band_count(), 0.0);
        for (std::size_t m = 0; m < blocks; ++m) {
            const auto step = quantization_step(block_combined_threshold(t.block(m, 0), p, {}), p);
            for (std::size_t k = 0; k < 128; ++k) {
                const double d = noisy.at(m, k, 0) - t.at(m, k, 0);
                measured[p.bin_to_band[k]] += d * d;
                predicted[p.bin_to_band[k]] += c * c * step[k] * step[k] / 4.0;
            }
        }
        for (std::size_t j = 0; j < p.band_count(); ++j) {
            CHECK(measured[j] / predicted[j] == doctest::Approx(1.0).epsilon(0.2));
        }
    }
}

TEST_CASE("threshold CSV layout") {
    testing::TempDir dir;
    const MdctTensor t = mdct_forward(sine(440.0, 0.5, 128 * 4, 22016), 128, vorbis_window(128));
    const MaskingThresholds th = compute_thresholds(t);
    write_thresholds_csv(th, 0, dir / "t.csv");
    std::istringstream is(testing::read_file(dir / "t.csv"));
    std::string line;
    std::getline(is, line);
    CHECK(line == "block,bark_band,I_abs,I_mask,combined,tau");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 4 * 23);
    CHECK_THROWS_AS(write_thresholds_csv(th, 1, dir / "x.csv"), ShapeError);
}

}  // TEST_SUITE
