#include "mp3net/model.hpp"

#include "mp3net/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mp3net {

using ad::ConvGeometry;
using ad::Var;

ConvGeometry time_resampling_geometry() { return ConvGeometry{8, 3, 4, 1, 2, 1}; }
ConvGeometry octave_geometry() { return ConvGeometry{1, 4, 1, 2, 0, 1}; }
ConvGeometry same_geometry_3x3() { return ConvGeometry{3, 3, 1, 1, 1, 1}; }
ConvGeometry pointwise_geometry() { return ConvGeometry{}; }

std::vector<std::size_t> default_channel_schedule(std::size_t num_blocks) {
    std::vector<std::size_t> out(num_blocks + 1);
    for (std::size_t d = 0; d <= num_blocks; ++d) {
        const std::size_t shift = num_blocks - d;
        out[d] = shift >= 5 ? kMaxFeatureChannels : std::min<std::size_t>(kMaxFeatureChannels, 32U << shift);
    }
    return out;
}

std::size_t ModelConfig::output_blocks() const {
    std::size_t m = seed_blocks;
    for (std::size_t i = 0; i < num_blocks; ++i) m *= 4;
    return m;
}

std::size_t ModelConfig::output_bands() const { return seed_bands << num_blocks; }

std::vector<std::size_t> ModelConfig::channel_schedule() const {
    return channels.empty() ? default_channel_schedule(num_blocks) : channels;
}

void ModelConfig::validate() const {
    if (latent_dim == 0) throw ShapeError("latent_dim must be positive");
    if (seed_blocks == 0 || seed_bands == 0) throw ShapeError("seed shape must be positive");
    if (num_blocks > 0 && seed_bands % 2 != 0) {
        throw ShapeError("seed band count must be even when model blocks are present");
    }
    if (num_blocks > 16) throw ShapeError("too many model blocks");
    if (output_channels == 0) throw ShapeError("output_channels must be positive");
    const auto schedule = channel_schedule();
    if (schedule.size() != num_blocks + 1) {
        throw ShapeError("channel schedule needs num_blocks + 1 = " + std::to_string(num_blocks + 1) + " entries");
    }
    for (std::size_t c : schedule) {
        if (c == 0 || c > kMaxFeatureChannels) throw ShapeError("feature channels must lie in [1, 512]");
    }
    if (leaky_slope < 0.0 || leaky_slope >= 1.0) throw ShapeError("leaky slope must lie in [0, 1)");
}

// ─── Blocks ─────────────────────────────────────────────────────────────────

namespace {

Var apply(const ConvLayer& layer, const Var& x) {
    return ad::add_bias(ad::conv2d(x, layer.weight, layer.geometry), layer.bias);
}

Var apply_transposed(const ConvLayer& layer, const Var& x, std::size_t out_m, std::size_t out_n) {
    return ad::add_bias(ad::conv2d_transpose(x, layer.weight, layer.geometry, out_m, out_n), layer.bias);
}

}  // namespace

Var generator_block(const Var& x, const GeneratorBlockParams& p, double slope) {
    const std::size_t m = x.shape().m;
    const std::size_t n = x.shape().n;
    if (n % 2 != 0) throw ShapeError("generator block needs an even band count, got " + x.shape().to_string());

    Var h = ad::leaky_relu(apply_transposed(p.upsample, x, 4 * m, n), slope);
    h = ad::leaky_relu(apply(p.refine, h), slope);

    const Var top = ad::slice_bands(h, n / 2, n);
    Var octave = ad::leaky_relu(apply_transposed(p.octave, top, 4 * m, n), slope);
    octave = apply(p.balance, octave);
    return ad::concat_bands(h, octave);
}

Var discriminator_block(const Var& x, const DiscriminatorBlockParams& p, double slope) {
    const std::size_t two_n = x.shape().n;
    if (two_n % 4 != 0 || x.shape().m % 4 != 0) {
        throw ShapeError("discriminator block needs blocks divisible by 4 and bands divisible by 4, got " +
                         x.shape().to_string());
    }
    const std::size_t n = two_n / 2;

    const Var low = ad::slice_bands(x, 0, n);
    const Var top = ad::slice_bands(x, n, two_n);
    Var octave = ad::leaky_relu(apply(p.octave, top), slope);
    octave = apply(p.balance, octave);
    const Var merged =
        ad::concat_bands(ad::slice_bands(low, 0, n / 2), ad::add(ad::slice_bands(low, n / 2, n), octave));

    Var h = ad::leaky_relu(apply(p.refine, merged), slope);
    return ad::leaky_relu(apply(p.downsample, h), slope);
}

Var minibatch_stddev(const Var& x) {
    const Shape4 s = x.shape();
    const double inv_b = 1.0 / static_cast<double>(s.b);
    // Centre on the first sample so that a constant batch gives exact zeros.
    const Var shifted = ad::sub(x, ad::broadcast_to(ad::slice(x, 0, 0, 1), s));
    const Var mean = ad::scale(ad::reduce_sum(shifted, {true, false, false, false}), inv_b);
    const Var centred = ad::sub(shifted, ad::broadcast_to(mean, s));
    const Var variance = ad::scale(ad::reduce_sum(ad::square(centred), {true, false, false, false}), inv_b);
    const Var stddev = ad::mean_all(ad::sqrt(variance));
    return ad::concat(x, ad::broadcast_to(stddev, Shape4{s.b, s.m, s.n, 1}), 3);
}

// ─── Parameter construction ─────────────────────────────────────────────────

namespace {

class LayerFactory {
public:
    LayerFactory(std::uint64_t seed, std::string prefix, std::vector<Parameter>& out)
        : rng_(seed), prefix_(std::move(prefix)), out_(out) {}

    // Weight (km, kn, ci, co) ~ N(0, 1/fan_in); bias over `bias_channels`, zero.
    ConvLayer make(const std::string& name, const ConvGeometry& g, std::size_t ci, std::size_t co,
                   std::size_t bias_channels, double fan_in, std::size_t depth) {
        Tensor w(Shape4{g.kernel_m, g.kernel_n, ci, co});
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(fan_in));
        for (double& v : w.data()) v = normal(rng_);
        ConvLayer layer{Var(std::move(w), true), Var(Tensor(Shape4{1, 1, 1, bias_channels}), true), g};
        out_.push_back({prefix_ + name + ".weight", layer.weight, depth, true});
        out_.push_back({prefix_ + name + ".bias", layer.bias, depth, true});
        return layer;
    }

    ConvLayer conv(const std::string& name, const ConvGeometry& g, std::size_t ci, std::size_t co, std::size_t depth) {
        return make(name, g, ci, co, co, static_cast<double>(g.kernel_m * g.kernel_n * ci), depth);
    }

    // Transposed layer mapping `ci` input channels to `co` output channels.
    ConvLayer transposed(const std::string& name, const ConvGeometry& g, std::size_t ci, std::size_t co,
                         std::size_t depth) {
        const double fan_in =
            static_cast<double>(g.kernel_m * g.kernel_n * ci) / static_cast<double>(g.stride_m * g.stride_n);
        return make(name, g, co, ci, co, fan_in, depth);
    }

private:
    std::mt19937_64 rng_;
    std::string prefix_;
    std::vector<Parameter>& out_;
};

}  // namespace

Generator::Generator(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const auto ch = cfg_.channel_schedule();
    LayerFactory f(seed, "generator.", params_);
    const std::size_t seed_features = cfg_.seed_blocks * cfg_.seed_bands * ch[0];
    dense_ = f.conv("dense", pointwise_geometry(), cfg_.latent_dim, seed_features, 0);
    for (std::size_t d = 1; d <= cfg_.num_blocks; ++d) {
        const std::string p = "block" + std::to_string(d) + ".";
        GeneratorBlockParams b;
        b.upsample = f.transposed(p + "upsample", time_resampling_geometry(), ch[d - 1], ch[d], d);
        b.refine = f.conv(p + "refine", same_geometry_3x3(), ch[d], ch[d], d);
        b.octave = f.transposed(p + "octave", octave_geometry(), ch[d], ch[d], d);
        b.balance = f.conv(p + "balance", pointwise_geometry(), ch[d], ch[d], d);
        blocks_.push_back(std::move(b));
    }
    to_output_ = f.conv("to_output", pointwise_geometry(), ch[cfg_.num_blocks], cfg_.output_channels, 0);
}

Var Generator::forward(const Var& z) const {
    if (z.shape().m != 1 || z.shape().n != 1 || z.shape().c != cfg_.latent_dim) {
        throw ShapeError("generator expects B x 1 x 1 x " + std::to_string(cfg_.latent_dim) + " latents, got " +
                         z.shape().to_string());
    }
    const auto ch = cfg_.channel_schedule();
    Var h = ad::add_bias(ad::conv2d(z, dense_.weight, dense_.geometry), dense_.bias);
    h = ad::leaky_relu(ad::reshape(h, Shape4{z.shape().b, cfg_.seed_blocks, cfg_.seed_bands, ch[0]}),
                       cfg_.leaky_slope);
    for (const auto& block : blocks_) h = generator_block(h, block, cfg_.leaky_slope);
    return apply(to_output_, h);
}

Discriminator::Discriminator(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const auto ch = cfg_.channel_schedule();
    LayerFactory f(seed, "discriminator.", params_);
    from_input_ = f.conv("from_input", pointwise_geometry(), cfg_.output_channels, ch[cfg_.num_blocks], 0);
    blocks_.resize(cfg_.num_blocks);
    for (std::size_t d = cfg_.num_blocks; d >= 1; --d) {
        const std::string p = "block" + std::to_string(d) + ".";
        const std::size_t ci = ch[d] + (d == 1 ? 1 : 0);
        DiscriminatorBlockParams b;
        b.octave = f.conv(p + "octave", octave_geometry(), ci, ci, d);
        b.balance = f.conv(p + "balance", pointwise_geometry(), ci, ci, d);
        b.refine = f.conv(p + "refine", same_geometry_3x3(), ci, ci, d);
        b.downsample = f.conv(p + "downsample", time_resampling_geometry(), ci, ch[d - 1], d);
        blocks_[d - 1] = std::move(b);
    }
    const std::size_t features = cfg_.seed_blocks * cfg_.seed_bands * (ch[0] + (cfg_.num_blocks == 0 ? 1 : 0));
    dense_ = f.conv("dense", pointwise_geometry(), features, 1, 0);
}

Var Discriminator::forward(const Var& x) const {
    const Shape4& s = x.shape();
    if (s.m != cfg_.output_blocks() || s.n != cfg_.output_bands() || s.c != cfg_.output_channels) {
        throw ShapeError("discriminator expects B x " + std::to_string(cfg_.output_blocks()) + " x " +
                         std::to_string(cfg_.output_bands()) + " x " + std::to_string(cfg_.output_channels) +
                         ", got " + s.to_string());
    }
    Var h = ad::leaky_relu(apply(from_input_, x), cfg_.leaky_slope);
    for (std::size_t d = cfg_.num_blocks; d >= 1; --d) {
        if (d == 1) h = minibatch_stddev(h);
        h = discriminator_block(h, blocks_[d - 1], cfg_.leaky_slope);
    }
    if (cfg_.num_blocks == 0) h = minibatch_stddev(h);
    return ad::dense(h, dense_.weight, dense_.bias);
}

std::size_t parameter_count(const std::vector<Parameter>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.var.value().size();
    return n;
}

// ─── Reports ────────────────────────────────────────────────────────────────

namespace {

std::size_t conv_params(const ConvGeometry& g, std::size_t ci, std::size_t co, std::size_t bias) {
    return g.kernel_m * g.kernel_n * ci * co + bias;
}

}  // namespace

std::vector<StageReport> generator_report(const ModelConfig& cfg) {
    cfg.validate();
    const auto ch = cfg.channel_schedule();
    std::vector<StageReport> rows;
    std::size_t m = cfg.seed_blocks;
    std::size_t n = cfg.seed_bands;
    rows.push_back({"latent", 1, 1, cfg.latent_dim, 0});
    rows.push_back({"seed", m, n, ch[0], conv_params(pointwise_geometry(), cfg.latent_dim, m * n * ch[0], m * n * ch[0])});
    for (std::size_t d = 1; d <= cfg.num_blocks; ++d) {
        const std::size_t c = ch[d];
        const std::size_t params = conv_params(time_resampling_geometry(), ch[d - 1], c, c) +
                                   conv_params(same_geometry_3x3(), c, c, c) + conv_params(octave_geometry(), c, c, c) +
                                   conv_params(pointwise_geometry(), c, c, c);
        m *= 4;
        n *= 2;
        rows.push_back({"block " + std::to_string(d), m, n, c, params});
    }
    rows.push_back({"output", m, n, cfg.output_channels,
                    conv_params(pointwise_geometry(), ch[cfg.num_blocks], cfg.output_channels, cfg.output_channels)});
    return rows;
}

std::vector<StageReport> discriminator_report(const ModelConfig& cfg) {
    cfg.validate();
    const auto ch = cfg.channel_schedule();
    std::vector<StageReport> rows;
    std::size_t m = cfg.output_blocks();
    std::size_t n = cfg.output_bands();
    rows.push_back({"input", m, n, cfg.output_channels, 0});
    rows.push_back({"from_input", m, n, ch[cfg.num_blocks],
                    conv_params(pointwise_geometry(), cfg.output_channels, ch[cfg.num_blocks], ch[cfg.num_blocks])});
    for (std::size_t d = cfg.num_blocks; d >= 1; --d) {
        const std::size_t ci = ch[d] + (d == 1 ? 1 : 0);
        if (d == 1) rows.push_back({"minibatch stddev", m, n, ci, 0});
        const std::size_t params = conv_params(octave_geometry(), ci, ci, ci) +
                                   conv_params(pointwise_geometry(), ci, ci, ci) +
                                   conv_params(same_geometry_3x3(), ci, ci, ci) +
                                   conv_params(time_resampling_geometry(), ci, ch[d - 1], ch[d - 1]);
        m /= 4;
        n /= 2;
        rows.push_back({"block " + std::to_string(d), m, n, ch[d - 1], params});
    }
    std::size_t c = ch[0];
    if (cfg.num_blocks == 0) {
        ++c;
        rows.push_back({"minibatch stddev", m, n, c, 0});
    }
    rows.push_back({"score", 1, 1, 1, conv_params(pointwise_geometry(), m * n * c, 1, 1)});
    return rows;
}

}  // namespace mp3net
