#include "mp3net/audio_io.hpp"

#include "mp3net/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

namespace mp3net {

AudioBuffer::AudioBuffer(std::vector<std::vector<double>> channels, int sample_rate_hz)
    : samples_(std::move(channels)), sample_rate_hz_(sample_rate_hz) {
    if (sample_rate_hz_ <= 0) throw ShapeError("sample rate must be positive");
    if (samples_.empty() || samples_.size() > 2) throw ShapeError("AudioBuffer needs 1 or 2 channels");
    for (const auto& ch : samples_) {
        if (ch.size() != samples_.front().size()) throw ShapeError("channels differ in length");
    }
}

AudioBuffer::AudioBuffer(std::vector<double> mono, int sample_rate_hz)
    : AudioBuffer(std::vector<std::vector<double>>{std::move(mono)}, sample_rate_hz) {}

AudioBuffer AudioBuffer::silence(std::size_t frames, int channels, int sample_rate_hz) {
    return AudioBuffer(std::vector<std::vector<double>>(static_cast<std::size_t>(channels),
                                                        std::vector<double>(frames, 0.0)),
                       sample_rate_hz);
}

// ─── WAV ────────────────────────────────────────────────────────────────────

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t block_align = 0;
    std::uint16_t bits = 0;
};

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw ParseError(path.string() + ": not a RIFF/WAVE file");
    }

    FmtChunk fmt;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* hdr = bytes.data() + pos;
        const std::uint32_t size = le32(hdr + 4);
        const std::size_t body = pos + 8;
        if (size > bytes.size() - body) throw ParseError(path.string() + ": chunk overruns file");

        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (size < 16) throw ParseError(path.string() + ": fmt chunk too short");
            const unsigned char* f = bytes.data() + body;
            fmt.format = le16(f);
            fmt.channels = le16(f + 2);
            fmt.sample_rate = le32(f + 4);
            fmt.block_align = le16(f + 12);
            fmt.bits = le16(f + 14);
            if (fmt.format == kFormatExtensible) {
                if (size < 40) throw ParseError(path.string() + ": extensible fmt chunk too short");
                fmt.format = le16(f + 24);  // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = bytes.data() + body;
            data_size = size;
        }
        // Chunks are word aligned.
        pos = body + size + (size & 1U);
    }

    if (!have_fmt) throw ParseError(path.string() + ": missing fmt chunk");
    if (data == nullptr) throw ParseError(path.string() + ": missing data chunk");
    if (fmt.channels < 1 || fmt.channels > 2) {
        throw UnsupportedFormat(path.string() + ": " + std::to_string(fmt.channels) + " channels");
    }
    if (fmt.sample_rate == 0) throw ParseError(path.string() + ": zero sample rate");

    const bool pcm16 = fmt.format == kFormatPcm && fmt.bits == 16;
    const bool float32 = fmt.format == kFormatFloat && fmt.bits == 32;
    if (!pcm16 && !float32) {
        throw UnsupportedFormat(path.string() + ": format " + std::to_string(fmt.format) + " with " +
                                std::to_string(fmt.bits) + " bits per sample");
    }
    const std::size_t bytes_per_sample = fmt.bits / 8U;
    const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
    if (fmt.block_align != frame_bytes) throw ParseError(path.string() + ": inconsistent block align");
    if (data_size % frame_bytes != 0) {
        throw ParseError(path.string() + ": data chunk is not a whole number of frames");
    }

    const std::size_t frames = data_size / frame_bytes;
    std::vector<std::vector<double>> channels(fmt.channels, std::vector<double>(frames));
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < fmt.channels; ++c) {
            const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                channels[c][i] = static_cast<std::int16_t>(le16(p)) / 32768.0;
            } else {
                const std::uint32_t bits = le32(p);
                float v;
                std::memcpy(&v, &bits, sizeof v);
                channels[c][i] = v;
            }
        }
    }
    return AudioBuffer(std::move(channels), static_cast<int>(fmt.sample_rate));
}

void write_wav(const AudioBuffer& buf, const std::filesystem::path& path, SampleFormat format) {
    const auto channels = static_cast<std::uint16_t>(buf.channels());
    const std::uint16_t bits = format == SampleFormat::kPcm16 ? 16 : 32;
    const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
    const std::size_t data_bytes = buf.frames() * block_align;
    if (data_bytes > 0xFFFFFFFFULL - 36) throw IoError(path.string() + ": audio too long for RIFF");

    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put32(out, static_cast<std::uint32_t>(36 + data_bytes));
    out += "WAVEfmt ";
    put32(out, 16);
    put16(out, format == SampleFormat::kPcm16 ? kFormatPcm : kFormatFloat);
    put16(out, channels);
    put32(out, static_cast<std::uint32_t>(buf.sample_rate_hz()));
    put32(out, static_cast<std::uint32_t>(buf.sample_rate_hz()) * block_align);
    put16(out, block_align);
    put16(out, bits);
    out += "data";
    put32(out, static_cast<std::uint32_t>(data_bytes));

    constexpr double kMaxPcm = 1.0 - 1.0 / 32768.0;
    for (std::size_t i = 0; i < buf.frames(); ++i) {
        for (int c = 0; c < buf.channels(); ++c) {
            const double v = buf.channel(c)[i];
            if (format == SampleFormat::kPcm16) {
                const double clamped = std::clamp(v, -1.0, kMaxPcm);
                const auto q = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
                put16(out, static_cast<std::uint16_t>(q));
            } else {
                const float f = static_cast<float>(v);
                std::uint32_t u;
                std::memcpy(&u, &f, sizeof u);
                put32(out, u);
            }
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

// ─── Resampling ─────────────────────────────────────────────────────────────

namespace {

constexpr double kKaiserBeta = 8.0;
constexpr int kTapsPerBranch = 64;
// Places the end of the Kaiser transition band (beta 8, 64 taps) at the lower Nyquist.
constexpr double kRolloff = 0.91;
constexpr std::int64_t kMaxTablePhases = 8192;

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

class SincKernel {
public:
    // `scale` = min(1, target/source); all times are in source samples.
    explicit SincKernel(double scale)
        : cutoff_(0.5 * scale * kRolloff),
          half_width_(0.5 * kTapsPerBranch / scale),
          norm_(1.0 / std::cyl_bessel_i(0.0, kKaiserBeta)) {}

    double half_width() const { return half_width_; }

    double operator()(double t) const {
        const double r = t / half_width_;
        if (r <= -1.0 || r >= 1.0) return 0.0;
        const double window = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) * norm_;
        return 2.0 * cutoff_ * sinc(2.0 * cutoff_ * t) * window;
    }

private:
    double cutoff_;
    double half_width_;
    double norm_;
};

}  // namespace

AudioBuffer resample(const AudioBuffer& buf, int target_rate_hz) {
    if (target_rate_hz <= 0) throw ShapeError("target sample rate must be positive");
    const int source_rate = buf.sample_rate_hz();
    if (target_rate_hz == source_rate) return buf;

    const std::int64_t g = std::gcd(static_cast<std::int64_t>(source_rate), static_cast<std::int64_t>(target_rate_hz));
    const std::int64_t up = target_rate_hz / g;    // output samples per `down` input samples
    const std::int64_t down = source_rate / g;

    const SincKernel kernel(std::min(1.0, static_cast<double>(up) / static_cast<double>(down)));
    const auto reach = static_cast<std::int64_t>(std::ceil(kernel.half_width()));
    const std::int64_t taps = 2 * reach;

    // Phase p covers output instants at fractional source offset p/up; tap d sits at base + d - reach + 1.
    std::vector<double> table;
    const bool tabulated = up <= kMaxTablePhases;
    if (tabulated) {
        table.resize(static_cast<std::size_t>(up * taps));
        for (std::int64_t p = 0; p < up; ++p) {
            const double frac = static_cast<double>(p) / static_cast<double>(up);
            for (std::int64_t d = 0; d < taps; ++d) {
                table[static_cast<std::size_t>(p * taps + d)] = kernel(frac - static_cast<double>(d - reach + 1));
            }
        }
    }

    const auto in_len = static_cast<std::int64_t>(buf.frames());
    const std::int64_t out_len = in_len * up / down;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(buf.channels()),
                                         std::vector<double>(static_cast<std::size_t>(out_len)));
    std::vector<double> weights(static_cast<std::size_t>(taps));

    for (std::int64_t j = 0; j < out_len; ++j) {
        const std::int64_t base = (j * down) / up;
        const std::int64_t phase = (j * down) % up;
        if (tabulated) {
            std::copy_n(table.begin() + phase * taps, taps, weights.begin());
        } else {
            const double frac = static_cast<double>(phase) / static_cast<double>(up);
            for (std::int64_t d = 0; d < taps; ++d) {
                weights[static_cast<std::size_t>(d)] = kernel(frac - static_cast<double>(d - reach + 1));
            }
        }
        const std::int64_t first = base - reach + 1;
        const std::int64_t lo = std::max<std::int64_t>(0, first);
        const std::int64_t hi = std::min(in_len, first + taps);
        for (int c = 0; c < buf.channels(); ++c) {
            const auto& x = buf.channel(c);
            double acc = 0.0;
            for (std::int64_t i = lo; i < hi; ++i) {
                acc += x[static_cast<std::size_t>(i)] * weights[static_cast<std::size_t>(i - first)];
            }
            out[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] = acc;
        }
    }
    return AudioBuffer(std::move(out), target_rate_hz);
}

std::vector<AudioBuffer> slice_segments(const AudioBuffer& buf, std::size_t segment_samples, std::size_t hop) {
    if (segment_samples == 0 || hop == 0) throw ShapeError("segment length and hop must be positive");
    std::vector<AudioBuffer> segments;
    for (std::size_t start = 0; start + segment_samples <= buf.frames(); start += hop) {
        std::vector<std::vector<double>> chans;
        for (const auto& ch : buf.samples()) {
            chans.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(start),
                               ch.begin() + static_cast<std::ptrdiff_t>(start + segment_samples));
        }
        segments.emplace_back(std::move(chans), buf.sample_rate_hz());
    }
    return segments;
}

}  // namespace mp3net
