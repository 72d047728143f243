#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace mp3net::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::uint64_t counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("mp3net_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Little-endian RIFF/WAVE assembled byte by byte, independent of the library writer.
struct WavBytes {
    std::vector<std::uint8_t> bytes;

    void u16(std::uint16_t v) {
        bytes.push_back(static_cast<std::uint8_t>(v));
        bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void tag(const char* t) { bytes.insert(bytes.end(), t, t + 4); }

    static WavBytes make(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                         const std::vector<std::uint8_t>& data) {
        WavBytes w;
        const std::uint16_t align = static_cast<std::uint16_t>(channels * bits / 8);
        w.tag("RIFF");
        w.u32(static_cast<std::uint32_t>(36 + data.size() + (data.size() % 2)));
        w.tag("WAVE");
        w.tag("fmt ");
        w.u32(16);
        w.u16(format);
        w.u16(channels);
        w.u32(rate);
        w.u32(rate * align);
        w.u16(align);
        w.u16(bits);
        w.tag("data");
        w.u32(static_cast<std::uint32_t>(data.size()));
        w.bytes.insert(w.bytes.end(), data.begin(), data.end());
        if (data.size() % 2) w.bytes.push_back(0);
        return w;
    }
};

}  // namespace mp3net::testing
