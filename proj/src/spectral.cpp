#include "mp3net/spectral.hpp"

#include "mp3net/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#ifdef MP3NET_HAVE_PNG
#include <png.h>
#endif

namespace mp3net {

double Grid::total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

std::vector<double> Grid::band_totals() const {
    std::vector<double> out(bands, 0.0);
    for (std::size_t m = 0; m < blocks; ++m) {
        for (std::size_t k = 0; k < bands; ++k) out[k] += at(m, k);
    }
    return out;
}

Spectrogram spectrogram(const MdctTensor& tensor) {
    Spectrogram spec;
    for (std::size_t c = 0; c < tensor.channels(); ++c) {
        Grid g(tensor.blocks(), tensor.bands());
        for (std::size_t m = 0; m < tensor.blocks(); ++m) {
            for (std::size_t k = 0; k < tensor.bands(); ++k) {
                const double a = tensor.at(m, k, c);
                g.at(m, k) = a * a;
            }
        }
        spec.channels.push_back(std::move(g));
    }
    return spec;
}

Grid fold_octave(const Grid& in) {
    if (in.blocks % 2 != 0 || in.bands % 4 != 0) {
        throw ShapeError("octave fold needs an even block count and a band count divisible by 4 (got " +
                         std::to_string(in.blocks) + " x " + std::to_string(in.bands) + ")");
    }
    Grid blurred(in.blocks / 2, in.bands);
    for (std::size_t m = 0; m < blurred.blocks; ++m) {
        for (std::size_t k = 0; k < in.bands; ++k) blurred.at(m, k) = 0.5 * (in.at(2 * m, k) + in.at(2 * m + 1, k));
    }

    const std::size_t half = in.bands / 2;
    const std::size_t quarter = in.bands / 4;
    Grid out(blurred.blocks, half);
    for (std::size_t m = 0; m < out.blocks; ++m) {
        for (std::size_t k = 0; k < half; ++k) {
            double v = blurred.at(m, k);
            if (k >= quarter) v += blurred.at(m, 2 * k) + blurred.at(m, 2 * k + 1);
            out.at(m, k) = v;
        }
    }
    return out;
}

ReducedSpectrogram reduce_spectrogram(const Spectrogram& spec, int folds) {
    if (folds < 0) throw ShapeError("fold count must be non-negative");
    ReducedSpectrogram out;
    out.fold_count = folds;
    out.levels.push_back(spec);
    if (spec.channels.empty()) return out;

    const std::size_t time_div = std::size_t{1} << folds;
    const std::size_t band_div = std::size_t{1} << (folds + 1);
    const auto& g0 = spec.channels.front();
    if (folds > 0 && (g0.blocks % time_div != 0 || g0.bands % band_div != 0)) {
        throw ShapeError(std::to_string(folds) + " folds need the block count divisible by " +
                         std::to_string(time_div) + " and the band count divisible by " + std::to_string(band_div) +
                         " (spectrogram is " + std::to_string(g0.blocks) + " x " + std::to_string(g0.bands) + ")");
    }
    for (int l = 0; l < folds; ++l) {
        Spectrogram next;
        next.db_floor = spec.db_floor;
        for (const auto& g : out.levels.back().channels) next.channels.push_back(fold_octave(g));
        out.levels.push_back(std::move(next));
    }
    return out;
}

// ─── Images ─────────────────────────────────────────────────────────────────

namespace {

double to_db(double intensity) { return 10.0 * std::log10(intensity); }

}  // namespace

GrayImage render_db_image(const Spectrogram& spec, std::size_t channel) {
    if (channel >= spec.channels.size()) throw ShapeError("spectrogram channel out of range");
    const Grid& g = spec.channels[channel];
    GrayImage img{g.blocks, g.bands, std::vector<std::uint8_t>(g.blocks * g.bands, 0)};

    const double peak = g.values.empty() ? 0.0 : *std::max_element(g.values.begin(), g.values.end());
    if (peak <= 0.0) return img;
    const double top = to_db(peak);
    const double bottom = top + spec.db_floor;
    const double floor_intensity = std::pow(10.0, bottom / 10.0);

    for (std::size_t m = 0; m < g.blocks; ++m) {
        for (std::size_t k = 0; k < g.bands; ++k) {
            const double db = to_db(std::max(g.at(m, k), floor_intensity));
            const double t = top > bottom ? (db - bottom) / (top - bottom) : 1.0;
            const std::size_t row = g.bands - 1 - k;
            img.pixels[row * img.width + m] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
        }
    }
    return img;
}

GrayImage render_signed_image(const MdctTensor& tensor, double db_floor, std::size_t channel) {
    if (channel >= tensor.channels()) throw ShapeError("tensor channel out of range");
    GrayImage img{tensor.blocks(), tensor.bands(), std::vector<std::uint8_t>(tensor.blocks() * tensor.bands(), 128)};

    double peak = 0.0;
    for (std::size_t m = 0; m < tensor.blocks(); ++m) {
        for (std::size_t k = 0; k < tensor.bands(); ++k) peak = std::max(peak, std::abs(tensor.at(m, k, channel)));
    }
    if (peak <= 0.0) return img;
    const double top = 20.0 * std::log10(peak);
    const double bottom = top + db_floor;

    for (std::size_t m = 0; m < tensor.blocks(); ++m) {
        for (std::size_t k = 0; k < tensor.bands(); ++k) {
            const double a = tensor.at(m, k, channel);
            long deviation = 0;
            if (a != 0.0) {
                const double db = 20.0 * std::log10(std::abs(a));
                const double t = std::clamp((db - bottom) / (top - bottom), 0.0, 1.0);
                deviation = std::lround(127.0 * t);
            }
            const long value = a >= 0.0 ? 128 + deviation : 128 - deviation;
            img.pixels[(tensor.bands() - 1 - k) * img.width + m] = static_cast<std::uint8_t>(value);
        }
    }
    return img;
}

bool png_supported() noexcept {
#ifdef MP3NET_HAVE_PNG
    return true;
#else
    return false;
#endif
}

namespace {

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

#ifdef MP3NET_HAVE_PNG
void write_png(const GrayImage& image, const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (fp == nullptr) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG encoding failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}
#endif

}  // namespace

void write_image(const GrayImage& image, const std::filesystem::path& path) {
    if (path.extension() == ".png") {
#ifdef MP3NET_HAVE_PNG
        write_png(image, path);
        return;
#else
        throw UnsupportedFormat("built without PNG support: " + path.string());
#endif
    }
    write_pgm(image, path);
}

GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::string magic;
    GrayImage img;
    int maxval = 0;
    is >> magic >> img.width >> img.height >> maxval;
    if (magic != "P5" || maxval != 255 || !is) throw ParseError(path.string() + ": not an 8-bit P5 PGM");
    is.get();
    img.pixels.resize(img.width * img.height);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
        throw ParseError(path.string() + ": truncated PGM");
    }
    return img;
}

void to_db_image(const Spectrogram& spec, const std::filesystem::path& path, std::size_t channel) {
    write_image(render_db_image(spec, channel), path);
}

void signed_db_image(const MdctTensor& tensor, const std::filesystem::path& path, double db_floor,
                     std::size_t channel) {
    write_image(render_signed_image(tensor, db_floor, channel), path);
}

void write_tonality_csv(const MaskingThresholds& t, std::size_t bands, int sample_rate_hz, std::size_t channel,
                        const std::filesystem::path& path) {
    if (channel >= t.channels) throw ShapeError("tonality channel out of range");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "block_index,time_seconds,tau\n";
    os.precision(17);
    for (std::size_t m = 0; m < t.blocks; ++m) {
        const double time = static_cast<double>(m * bands) / static_cast<double>(sample_rate_hz);
        os << m << ',' << time << ',' << t.tonality[m * t.channels + channel] << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace mp3net
