#include "commands.hpp"
#include "mp3net/audio_io.hpp"
#include "mp3net/mdct.hpp"
#include "mp3net/spectral.hpp"
#include "mp3net/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <chrono>
#include <regex>
#include <sstream>

using namespace mp3net;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "mp3net");
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
}

std::vector<std::vector<std::string>> csv_rows(const std::filesystem::path& p) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& line : lines_of(testing::read_file(p))) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    testing::write_bytes(p, std::vector<std::uint8_t>(text.begin(), text.end()));
}

const char* kTinyTrain = R"([general]
seed = 3
out_dir = run
[audio]
mdct_bands = 8
[model]
latent_dim = 4
num_blocks = 1
seed_blocks = 1
seed_bands = 4
channels = 4, 4
output_channels = 1
[train]
iterations = 100
batch_size = 2
[data]
synthetic = tones
size = 8
)";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("analyze a 440 Hz tone") {
    testing::TempDir dir;
    write_wav(sine(440.0, 0.5, 22016, 22016), dir / "tone.wav");
    const Result r = run_cli({"analyze", (dir / "tone.wav").string(), (dir / "out").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("dominant band 5 [430, 516) Hz") != std::string::npos);
    for (const char* f : {"spectrogram.pgm", "signed_amplitudes.pgm", "tonality.csv", "thresholds.csv"}) {
        CHECK(std::filesystem::exists(dir / "out" / f));
    }
    const auto img = read_pgm(dir / "out" / "spectrogram.pgm");
    CHECK(img.width == 172);
    CHECK(img.height == 128);
    const auto rows = csv_rows(dir / "out" / "thresholds.csv");
    CHECK(rows.size() == 1 + 172 * 23);
}

TEST_CASE("analyze resamples other rates") {
    testing::TempDir dir;
    write_wav(sine(440.0, 0.5, 44100, 44100), dir / "tone.wav");
    const Result r = run_cli({"analyze", (dir / "tone.wav").string(), (dir / "out").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("dominant band 5 ") != std::string::npos);
}

TEST_CASE("analyze a silent file") {
    testing::TempDir dir;
    write_wav(AudioBuffer::silence(2048, 2, 22016), dir / "quiet.wav");
    const Result r = run_cli({"analyze", (dir / "quiet.wav").string(), (dir / "out").string()});
    REQUIRE(r.code == 0);
    const auto rows = csv_rows(dir / "out" / "tonality.csv");
    REQUIRE(rows.size() == 17);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][2]) == 0.0);
    CHECK(std::filesystem::exists(dir / "out" / "tonality_ch1.csv"));
}

TEST_CASE("analyze reports missing and malformed input as parse errors") {
    testing::TempDir dir;
    Result r = run_cli({"analyze", (dir / "missing.wav").string(), (dir / "out").string()});
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
    write_text(dir / "junk.wav", "not a wave file");
    r = run_cli({"analyze", (dir / "junk.wav").string(), (dir / "out").string()});
    CHECK(r.code == 2);
}

TEST_CASE("usage errors") {
    CHECK(run_cli({}).code == 1);
    CHECK(run_cli({"frobnicate"}).code == 1);
    CHECK(run_cli({"analyze"}).code == 1);
    CHECK(run_cli({"-c", "/nonexistent/config.ini", "shapes"}).code == 1);
    testing::TempDir dir;
    write_text(dir / "bad.ini", "[model]\nlatent_dim = lots\n");
    write_wav(sine(440.0, 0.5, 1024, 22016), dir / "tone.wav");
    CHECK(run_cli({"-c", (dir / "bad.ini").string(), "analyze", (dir / "tone.wav").string(), (dir / "o").string()})
              .code == 1);
}

TEST_CASE("roundtrip without noise reproduces the input") {
    testing::TempDir dir;
    const AudioBuffer in({testing::random_vector(3000, 1, -0.5, 0.5), testing::random_vector(3000, 2, -0.5, 0.5)},
                         22016);
    write_wav(in, dir / "in.wav");
    const Result r = run_cli({"roundtrip", (dir / "in.wav").string(), (dir / "out.wav").string(), "--noise", "0"});
    REQUIRE(r.code == 0);
    const AudioBuffer a = read_wav(dir / "in.wav"), b = read_wav(dir / "out.wav");
    REQUIRE(b.frames() == 3000);
    REQUIRE(b.channels() == 2);
    double worst = 0.0;
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 3000; ++i) worst = std::max(worst, std::abs(a.channel(c)[i] - b.channel(c)[i]));
    CHECK(worst <= 1e-10 + std::ldexp(1.0, -15));
    CHECK(r.out.find("0 band(s) above threshold") != std::string::npos);
}

TEST_CASE("roundtrip noise report") {
    testing::TempDir dir;
    write_wav(harmonic_stack(440.0, {0.3, 0.1, 0.05}, 22016 * 2, 22016), dir / "in.wav");

    const Result one = run_cli({"roundtrip", (dir / "in.wav").string(), (dir / "one.wav").string(), "--noise", "1"});
    REQUIRE(one.code == 0);
    // Rows: band lo hi noise predicted threshold ratio ntr
    const std::regex row(R"(^\s*(\d+)\s+\d+\s+\d+\s+(\S+)\s+(\S+)\s+(\S+)\s+(\S+)\s+(\S+).*$)");
    std::size_t bands = 0;
    for (const auto& line : lines_of(one.out)) {
        std::smatch m;
        if (!std::regex_match(line, m, row)) continue;
        ++bands;
        CHECK(std::stod(m[5].str()) <= 1.2);
        CHECK(std::stod(m[5].str()) >= 0.8);
    }
    CHECK(bands == 23);
    CHECK(one.out.find("0 band(s) above threshold") != std::string::npos);

    const Result loud =
        run_cli({"roundtrip", (dir / "in.wav").string(), (dir / "loud.wav").string(), "--noise", "100"});
    REQUIRE(loud.code == 0);
    CHECK(loud.out.find("ABOVE THRESHOLD") != std::string::npos);
    CHECK(loud.out.find("23 band(s) above threshold") != std::string::npos);
}

TEST_CASE("reduce") {
    testing::TempDir dir;
    write_wav(harmonic_stack(1741.5, {0.4, 0.2, 0.0, 0.1}, 128 * 64, 22016), dir / "h.wav");
    Result r = run_cli({"analyze", (dir / "h.wav").string(), (dir / "a").string()});
    REQUIRE(r.code == 0);
    r = run_cli({"reduce", (dir / "h.wav").string(), (dir / "r0").string(), "--folds", "0"});
    REQUIRE(r.code == 0);
    CHECK(testing::read_file(dir / "r0" / "level_0.pgm") == testing::read_file(dir / "a" / "spectrogram.pgm"));

    r = run_cli({"reduce", (dir / "h.wav").string(), (dir / "r2").string(), "--folds", "2"});
    REQUIRE(r.code == 0);
    CHECK(std::filesystem::exists(dir / "r2" / "level_2.pgm"));
    const std::regex level2(R"(level 2: 16 x 32, dominant band (\d+) holds ([0-9.]+)% of energy)");
    std::smatch m;
    REQUIRE(std::regex_search(r.out, m, level2));
    CHECK(std::stod(m[2].str()) >= 70.0);

    r = run_cli({"reduce", (dir / "h.wav").string(), (dir / "r9").string(), "--folds", "9"});
    CHECK(r.code == 3);
    CHECK(r.err.find("divisible") != std::string::npos);
}

TEST_CASE("shapes") {
    Result r = run_cli({"shapes", "--blocks", "6", "--seed", "4x2", "--latent", "512"});
    REQUIRE(r.code == 0);
    auto lines = lines_of(r.out);
    CHECK(lines.back() == "16384 × 128 × 2");

    r = run_cli({"shapes", "--blocks", "5", "--seed", "1x4"});
    REQUIRE(r.code == 0);
    CHECK(lines_of(r.out).back() == "1024 × 128 × 2");

    r = run_cli({"shapes", "--blocks", "0", "--seed", "4x2"});
    REQUIRE(r.code == 0);
    CHECK(lines_of(r.out).back() == "4 × 2 × 2");

    CHECK(run_cli({"shapes", "--seed", "4by2"}).code == 1);
    CHECK(run_cli({"shapes", "--blocks", "3", "--seed", "4x3"}).code == 1);
    CHECK(run_cli({"shapes", "--latent", "0"}).code == 1);
}

TEST_CASE("train and sample") {
    testing::TempDir dir;
    write_text(dir / "tiny.ini", kTinyTrain);
    Result r = run_cli({"train", (dir / "tiny.ini").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("trained 100 iterations") != std::string::npos);
    const auto ckpt = dir / "run" / "checkpoint_final.mp3n";
    REQUIRE(std::filesystem::exists(ckpt));
    CHECK(csv_rows(dir / "run" / "training_log.csv").size() == 101);

    const auto start = std::chrono::steady_clock::now();
    r = run_cli({"sample", ckpt.string(), "8", (dir / "samples").string(), "--seed", "5"});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE(r.code == 0);
    CHECK(seconds < 5.0);
    CHECK(r.out.find("sampling wall time") != std::string::npos);
    for (int i = 0; i < 8; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%03d.wav", i);
        const AudioBuffer s = read_wav(dir / "samples" / name);
        CHECK(s.frames() == 4 * 8);
        CHECK(s.sample_rate_hz() == 22016);
    }
}

TEST_CASE("train error paths") {
    testing::TempDir dir;
    write_text(dir / "bad.ini", "[train]\nbatch_size = 0\n");
    CHECK(run_cli({"train", (dir / "bad.ini").string()}).code == 1);
    CHECK(run_cli({"train", (dir / "missing.ini").string()}).code == 1);
    std::string nodata = kTinyTrain;
    nodata.replace(nodata.find("synthetic = tones"), 17, "synthetic = none\ndirectory = nowhere");
    write_text(dir / "nodata.ini", nodata);
    CHECK(run_cli({"train", (dir / "nodata.ini").string()}).code == 1);
    CHECK(run_cli({"sample", (dir / "bad.ini").string(), "2", (dir / "s").string()}).code == 2);
}

}  // TEST_SUITE
