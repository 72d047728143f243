#include "mp3net/mdct.hpp"

#include "mp3net/errors.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

namespace mp3net {

MdctTensor::MdctTensor(std::size_t blocks, std::size_t bands, std::size_t channels, int sample_rate_hz)
    : blocks_(blocks), bands_(bands), channels_(channels), sample_rate_hz_(sample_rate_hz),
      values_(blocks * bands * channels, 0.0) {}

std::vector<double> MdctTensor::block(std::size_t m, std::size_t c) const {
    std::vector<double> out(bands_);
    for (std::size_t k = 0; k < bands_; ++k) out[k] = at(m, k, c);
    return out;
}

double MdctTensor::band_width_hz() const {
    return static_cast<double>(sample_rate_hz_) / (2.0 * static_cast<double>(bands_));
}

double MdctTensor::band_lower_hz(std::size_t k) const { return band_width_hz() * static_cast<double>(k); }

WindowFn vorbis_window(std::size_t bands) {
    if (bands < 1) throw ShapeError("window needs at least one band");
    const std::size_t len = 2 * bands;
    WindowFn w;
    w.coefficients.resize(len);
    for (std::size_t n = 0; n < bands; ++n) {
        const double s = std::sin(std::numbers::pi / static_cast<double>(len) * (static_cast<double>(n) + 0.5));
        const double v = std::sin(0.5 * std::numbers::pi * s * s);
        // Mirror so the symmetry holds bit-exactly.
        w.coefficients[n] = v;
        w.coefficients[len - 1 - n] = v;
    }
    return w;
}

namespace {

void check_args(const AudioBuffer& buf, std::size_t bands, const WindowFn& window) {
    if (!is_power_of_two(bands) || bands < 8) throw ShapeError("MDCT band count must be a power of two >= 8");
    if (window.coefficients.size() != 2 * bands) throw ShapeError("window length must be 2N");
    if (buf.frames() == 0 || buf.frames() % bands != 0) {
        throw ShapeError("signal length " + std::to_string(buf.frames()) + " is not a positive multiple of N = " +
                         std::to_string(bands));
    }
}

// Signal extended so that frame m reads ext[mN, mN + 2N).
std::vector<double> extend(const std::vector<double>& x, std::size_t bands, Boundary boundary) {
    std::vector<double> ext;
    if (boundary == Boundary::kPeriodic) {
        ext.reserve(x.size() + bands);
        ext.assign(x.begin(), x.end());
        ext.insert(ext.end(), x.begin(), x.begin() + static_cast<std::ptrdiff_t>(bands));
    } else {
        ext.assign(x.size() + 2 * bands, 0.0);
        std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(bands));
    }
    return ext;
}

}  // namespace

std::size_t mdct_frame_count(std::size_t samples, std::size_t bands, Boundary boundary) {
    const std::size_t blocks = samples / bands;
    return boundary == Boundary::kPeriodic ? blocks : blocks + 1;
}

MdctTensor mdct_forward_naive(const AudioBuffer& buf, std::size_t bands, const WindowFn& window, Boundary boundary) {
    check_args(buf, bands, window);
    const std::size_t frames = mdct_frame_count(buf.frames(), bands, boundary);
    const auto channels = static_cast<std::size_t>(buf.channels());
    MdctTensor out(frames, bands, channels, buf.sample_rate_hz());

    const auto n_d = static_cast<double>(bands);
    std::vector<double> basis(2 * bands * bands);
    for (std::size_t n = 0; n < 2 * bands; ++n) {
        for (std::size_t k = 0; k < bands; ++k) {
            basis[n * bands + k] = std::cos(std::numbers::pi / n_d * (static_cast<double>(n) + 0.5 + n_d / 2.0) *
                                            (static_cast<double>(k) + 0.5));
        }
    }

    for (std::size_t c = 0; c < channels; ++c) {
        const auto ext = extend(buf.channel(static_cast<int>(c)), bands, boundary);
        for (std::size_t m = 0; m < frames; ++m) {
            for (std::size_t k = 0; k < bands; ++k) {
                double acc = 0.0;
                for (std::size_t n = 0; n < 2 * bands; ++n) {
                    acc += ext[m * bands + n] * window.coefficients[n] * basis[n * bands + k];
                }
                out.at(m, k, c) = acc;
            }
        }
    }
    return out;
}

Dct4::Dct4(std::size_t size) : size_(size), fft_(size / 2), pre_(size / 2), post_(size / 2) {
    if (size < 2 || !is_power_of_two(size)) throw ShapeError("DCT-IV size must be a power of two >= 2");
    const auto n_d = static_cast<double>(size);
    for (std::size_t n = 0; n < size / 2; ++n) {
        const double a = -std::numbers::pi * (4.0 * static_cast<double>(n) + 1.0) / (4.0 * n_d);
        const double b = -std::numbers::pi * static_cast<double>(n) / n_d;
        pre_[n] = {std::cos(a), std::sin(a)};
        post_[n] = {std::cos(b), std::sin(b)};
    }
}

void Dct4::transform(std::span<const double> in, std::span<double> out,
                     std::vector<std::complex<double>>& scratch) const {
    const std::size_t half = size_ / 2;
    scratch.resize(half);
    for (std::size_t n = 0; n < half; ++n) {
        scratch[n] = std::complex<double>(in[2 * n], in[size_ - 1 - 2 * n]) * pre_[n];
    }
    fft_.forward(scratch);
    for (std::size_t n = 0; n < half; ++n) {
        const std::complex<double> y = scratch[n] * post_[n];
        out[2 * n] = y.real();
        out[size_ - 1 - 2 * n] = -y.imag();
    }
}

MdctTensor mdct_forward_fast(const AudioBuffer& buf, std::size_t bands, const WindowFn& window, Boundary boundary) {
    check_args(buf, bands, window);
    const std::size_t frames = mdct_frame_count(buf.frames(), bands, boundary);
    const auto channels = static_cast<std::size_t>(buf.channels());
    MdctTensor out(frames, bands, channels, buf.sample_rate_hz());

    const Dct4 dct(bands);
    const std::size_t h = bands / 2;
    const auto& w = window.coefficients;
    std::vector<double> folded(bands);
    std::vector<double> coeffs(bands);
    std::vector<std::complex<double>> scratch;

    for (std::size_t c = 0; c < channels; ++c) {
        const auto ext = extend(buf.channel(static_cast<int>(c)), bands, boundary);
        for (std::size_t m = 0; m < frames; ++m) {
            const double* z = ext.data() + m * bands;
            // Windowed quarters (a, b, c, d) fold to (-c_r - d, a - b_r).
            for (std::size_t i = 0; i < h; ++i) {
                const std::size_t cr = bands + h - 1 - i;
                const std::size_t d = bands + h + i;
                folded[i] = -z[cr] * w[cr] - z[d] * w[d];
                const std::size_t br = bands - 1 - i;
                folded[h + i] = z[i] * w[i] - z[br] * w[br];
            }
            dct.transform(folded, coeffs, scratch);
            for (std::size_t k = 0; k < bands; ++k) out.at(m, k, c) = coeffs[k];
        }
    }
    return out;
}

AudioBuffer mdct_inverse(const MdctTensor& tensor, const WindowFn& window, Boundary boundary) {
    const std::size_t bands = tensor.bands();
    if (window.coefficients.size() != 2 * bands) throw ShapeError("window length must be 2N");
    if (bands < 2 || !is_power_of_two(bands)) throw ShapeError("MDCT band count must be a power of two");
    const std::size_t frames = tensor.blocks();
    if (frames == 0 || tensor.channels() == 0) throw ShapeError("empty MDCT tensor");
    if (boundary == Boundary::kZeroPadded && frames < 2) throw ShapeError("zero-padded MDCT needs at least 2 frames");
    const std::size_t samples = boundary == Boundary::kPeriodic ? frames * bands : (frames - 1) * bands;

    const Dct4 dct(bands);
    const std::size_t h = bands / 2;
    const double scale = 2.0 / static_cast<double>(bands);
    const auto& w = window.coefficients;
    std::vector<double> coeffs(bands);
    std::vector<double> v(bands);
    std::vector<std::complex<double>> scratch;

    std::vector<std::vector<double>> channels;
    for (std::size_t c = 0; c < tensor.channels(); ++c) {
        std::vector<double> acc((frames + 1) * bands, 0.0);
        for (std::size_t m = 0; m < frames; ++m) {
            for (std::size_t k = 0; k < bands; ++k) coeffs[k] = tensor.at(m, k, c);
            dct.transform(coeffs, v, scratch);
            // Unfold (v1, v2) to (v2, -v2_r, -v1_r, -v1), then window.
            double* y = acc.data() + m * bands;
            for (std::size_t i = 0; i < h; ++i) {
                y[i] += scale * w[i] * v[h + i];
                y[h + i] -= scale * w[h + i] * v[bands - 1 - i];
                y[bands + i] -= scale * w[bands + i] * v[h - 1 - i];
                y[bands + h + i] -= scale * w[bands + h + i] * v[i];
            }
        }
        std::vector<double> x(samples);
        if (boundary == Boundary::kPeriodic) {
            std::copy_n(acc.begin(), samples, x.begin());
            for (std::size_t i = 0; i < bands; ++i) x[i] += acc[samples + i];
        } else {
            std::copy_n(acc.begin() + static_cast<std::ptrdiff_t>(bands), samples, x.begin());
        }
        channels.push_back(std::move(x));
    }
    return AudioBuffer(std::move(channels), tensor.sample_rate_hz());
}

// ─── Serialization ──────────────────────────────────────────────────────────

namespace {

constexpr std::uint32_t kMdctVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError("truncated MDCT header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof u);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw ParseError("truncated MDCT payload");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, sizeof v);
    return v;
}

}  // namespace

void save_mdct(const MdctTensor& tensor, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("MDCT", 4);
    put_u32(os, kMdctVersion);
    put_u32(os, static_cast<std::uint32_t>(tensor.blocks()));
    put_u32(os, static_cast<std::uint32_t>(tensor.bands()));
    put_u32(os, static_cast<std::uint32_t>(tensor.channels()));
    put_u32(os, static_cast<std::uint32_t>(tensor.sample_rate_hz()));
    for (double v : tensor.values()) put_f64(os, v);
    if (!os) throw IoError("write failed: " + path.string());
}

MdctTensor load_mdct(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MDCT", 4) != 0) throw ParseError(path.string() + ": bad magic");
    if (get_u32(is) != kMdctVersion) throw UnsupportedFormat(path.string() + ": unknown MDCT cache version");
    const std::uint32_t blocks = get_u32(is);
    const std::uint32_t bands = get_u32(is);
    const std::uint32_t channels = get_u32(is);
    const std::uint32_t rate = get_u32(is);
    MdctTensor t(blocks, bands, channels, static_cast<int>(rate));
    for (double& v : t.values()) v = get_f64(is);
    return t;
}

}  // namespace mp3net
