#pragma once

#include "mp3net/autodiff.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mp3net {

inline constexpr std::size_t kMaxFeatureChannels = 512;

struct ModelConfig {
    std::size_t latent_dim = 512;
    std::size_t num_blocks = 6;
    std::size_t seed_blocks = 4;   // M0
    std::size_t seed_bands = 2;    // N0
    // Feature channels per depth, depth 0 being the seed tensor and depth num_blocks the last
    // generator block. Empty selects the default schedule.
    std::vector<std::size_t> channels;
    std::size_t output_channels = 2;
    double leaky_slope = 0.2;

    std::size_t output_blocks() const;  // M0 * 4^num_blocks
    std::size_t output_bands() const;   // N0 * 2^num_blocks
    std::vector<std::size_t> channel_schedule() const;
    // Throws ShapeError on an inconsistent configuration.
    void validate() const;
};

// min(512, 32 * 2^(num_blocks - d)) at depth d.
std::vector<std::size_t> default_channel_schedule(std::size_t num_blocks);

struct Parameter {
    std::string name;
    ad::Var var;
    std::size_t depth = 0;  // model block index, 0 for layers outside the blocks
    bool trainable = true;
};

struct ConvLayer {
    ad::Var weight;
    ad::Var bias;
    ad::ConvGeometry geometry;
};

// Kernel (8,3) stride (4,1): quadruples or quarters the block count.
ad::ConvGeometry time_resampling_geometry();
// Kernel (1,4) stride (1,2): doubles or halves the band count.
ad::ConvGeometry octave_geometry();
ad::ConvGeometry same_geometry_3x3();
ad::ConvGeometry pointwise_geometry();

struct GeneratorBlockParams {
    ConvLayer upsample;  // transposed, time x4
    ConvLayer refine;    // 3x3
    ConvLayer octave;    // transposed, bands x2 from the top octave
    ConvLayer balance;   // 1x1, no activation
};

struct DiscriminatorBlockParams {
    ConvLayer octave;      // bands /2 on the top half
    ConvLayer balance;     // 1x1, no activation
    ConvLayer refine;      // 3x3
    ConvLayer downsample;  // time /4
};

// B x M x N x C -> B x 4M x 2N x C'. The top octave [N/2, N) of the time-upsampled tensor seeds N new bands.
ad::Var generator_block(const ad::Var& x, const GeneratorBlockParams& p, double slope);

// B x 4M x 2N x C -> B x M x N x C'. The top N bands are halved and summed onto bands [N/2, N).
ad::Var discriminator_block(const ad::Var& x, const DiscriminatorBlockParams& p, double slope);

// Appends the batch-averaged per-element standard deviation as one constant channel.
ad::Var minibatch_stddev(const ad::Var& x);

class Generator {
public:
    Generator(const ModelConfig& cfg, std::uint64_t seed);
    Generator(const Generator&) = delete;
    Generator& operator=(const Generator&) = delete;
    Generator(Generator&&) = default;
    Generator& operator=(Generator&&) = default;

    // z: B x 1 x 1 x latent_dim -> B x M_out x N_out x output_channels, linear output.
    ad::Var forward(const ad::Var& z) const;

    const ModelConfig& config() const noexcept { return cfg_; }
    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }

private:
    ModelConfig cfg_;
    std::vector<Parameter> params_;
    ConvLayer dense_;
    std::vector<GeneratorBlockParams> blocks_;
    ConvLayer to_output_;
};

class Discriminator {
public:
    Discriminator(const ModelConfig& cfg, std::uint64_t seed);
    Discriminator(const Discriminator&) = delete;
    Discriminator& operator=(const Discriminator&) = delete;
    Discriminator(Discriminator&&) = default;
    Discriminator& operator=(Discriminator&&) = default;

    // x: B x M_out x N_out x output_channels -> B x 1 x 1 x 1 scores.
    ad::Var forward(const ad::Var& x) const;

    const ModelConfig& config() const noexcept { return cfg_; }
    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }

private:
    ModelConfig cfg_;
    std::vector<Parameter> params_;
    ConvLayer from_input_;
    std::vector<DiscriminatorBlockParams> blocks_;  // blocks_[d-1] maps depth d to d-1
    ConvLayer dense_;
};

std::size_t parameter_count(const std::vector<Parameter>& params);

// Activation shapes and parameter counts, computed without allocating the model.
struct StageReport {
    std::string stage;
    std::size_t blocks = 0;
    std::size_t bands = 0;
    std::size_t channels = 0;
    std::size_t parameters = 0;
};

std::vector<StageReport> generator_report(const ModelConfig& cfg);
std::vector<StageReport> discriminator_report(const ModelConfig& cfg);

}  // namespace mp3net
