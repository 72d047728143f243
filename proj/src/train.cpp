#include "mp3net/train.hpp"

#include "mp3net/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace mp3net {

using ad::Var;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
    if (n_critic < 1) throw ConfigError("n_critic must be at least 1");
    if (gp_lambda < 0.0 || drift_epsilon < 0.0 || noise_scale < 0.0) {
        throw ConfigError("gp_lambda, drift_epsilon and noise_scale must be non-negative");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

Var add_noise_layer(const Var& x, double scale, int sample_rate_hz, std::uint64_t seed,
                    const PsychoacousticConfig& cfg) {
    if (scale == 0.0) return x;
    const Shape4& s = x.shape();
    const std::size_t item = s.m * s.n * s.c;
    Tensor noise(s);
    std::vector<double> values(item);
    for (std::size_t b = 0; b < s.b; ++b) {
        std::copy_n(x.value().data().begin() + static_cast<std::ptrdiff_t>(b * item), item, values.begin());
        std::vector<double> noisy = values;
        add_psychoacoustic_noise(noisy, s.m, s.n, s.c, sample_rate_hz, scale, splitmix64(seed + b), cfg);
        for (std::size_t i = 0; i < item; ++i) noise[b * item + i] = noisy[i] - values[i];
    }
    return ad::add(x, ad::constant(std::move(noise)));
}

namespace {

double mean_value(const Var& v) {
    const auto& d = v.value().data();
    double s = 0.0;
    for (double x : d) s += x;
    return s / static_cast<double>(d.size());
}

}  // namespace

WganLosses wgan_gp_losses(const Var& real, const Var& fake, const Critic& critic, const LossConfig& cfg,
                          std::mt19937_64& rng) {
    if (real.shape() != fake.shape()) {
        throw ShapeError("real and fake batches differ: " + real.shape().to_string() + " vs " +
                         fake.shape().to_string());
    }
    const Var real_n = add_noise_layer(real, cfg.noise_scale, cfg.sample_rate_hz, rng(), cfg.psychoacoustics);
    const Var fake_n = add_noise_layer(fake, cfg.noise_scale, cfg.sample_rate_hz, rng(), cfg.psychoacoustics);

    const Var d_real = critic(real_n);
    const Var d_fake = critic(fake_n);

    // Interpolate between the noisy batches, one u per sample.
    const Shape4& s = real.shape();
    const std::size_t item = s.m * s.n * s.c;
    Tensor interp(s);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t b = 0; b < s.b; ++b) {
        const double u = uniform(rng);
        for (std::size_t i = 0; i < item; ++i) {
            const std::size_t k = b * item + i;
            interp[k] = u * real_n.value()[k] + (1.0 - u) * fake_n.value()[k];
        }
    }
    const Var x_hat(std::move(interp), true);
    const Var d_hat = critic(x_hat);
    const Var grad_x = ad::grad(ad::sum_all(d_hat), {x_hat}, true).front();
    const Var norms = ad::sqrt(ad::reduce_sum(ad::square(grad_x), {false, true, true, true}));
    const Var penalty = ad::mean_all(ad::square(ad::add_scalar(norms, -1.0)));
    const Var drift = ad::mean_all(ad::square(d_real));

    WganLosses out;
    const Var critic_gap = ad::sub(ad::mean_all(d_fake), ad::mean_all(d_real));
    out.loss_d = ad::add(ad::add(critic_gap, ad::scale(penalty, cfg.gp_lambda)), ad::scale(drift, cfg.drift_epsilon));
    out.loss_g = ad::scale(ad::mean_all(d_fake), -1.0);
    out.d_real = mean_value(d_real);
    out.d_fake = mean_value(d_fake);
    out.gradient_penalty = penalty.value()[0];
    out.drift = drift.value()[0];
    return out;
}

Var generator_loss(const Var& fake, const Critic& critic, const LossConfig& cfg, std::mt19937_64& rng) {
    const Var fake_n = add_noise_layer(fake, cfg.noise_scale, cfg.sample_rate_hz, rng(), cfg.psychoacoustics);
    return ad::scale(ad::mean_all(critic(fake_n)), -1.0);
}

// ─── Adam ───────────────────────────────────────────────────────────────────

Adam::Adam(std::vector<Parameter>& params, double learning_rate, double beta1, double beta2, double epsilon)
    : params_(params), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    for (const auto& p : params_) {
        m_.emplace_back(p.var.value().size(), 0.0);
        v_.emplace_back(p.var.value().size(), 0.0);
    }
}

void Adam::step(const std::vector<Var>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("Adam: gradient count does not match parameters");
    ++t_;
    const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].trainable) continue;
        auto& theta = params_[i].var.mutable_value().data();
        const auto& g = grads[i].value().data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            theta[k] -= lr_ * (m[k] / correction1) / (std::sqrt(v[k] / correction2) + eps_);
        }
    }
}

// ─── Batches ────────────────────────────────────────────────────────────────

Tensor stack_batch(const std::vector<MdctTensor>& tensors) {
    if (tensors.empty()) throw ShapeError("cannot stack an empty batch");
    const auto& first = tensors.front();
    Tensor out(Shape4{tensors.size(), first.blocks(), first.bands(), first.channels()});
    const std::size_t item = first.values().size();
    for (std::size_t b = 0; b < tensors.size(); ++b) {
        const auto& t = tensors[b];
        if (t.blocks() != first.blocks() || t.bands() != first.bands() || t.channels() != first.channels()) {
            throw ShapeError("batch items differ in shape");
        }
        std::copy(t.values().begin(), t.values().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * item));
    }
    return out;
}

std::vector<MdctTensor> unstack_batch(const Tensor& batch, int sample_rate_hz) {
    const Shape4& s = batch.shape();
    std::vector<MdctTensor> out;
    const std::size_t item = s.m * s.n * s.c;
    for (std::size_t b = 0; b < s.b; ++b) {
        MdctTensor t(s.m, s.n, s.c, sample_rate_hz);
        std::copy_n(batch.data().begin() + static_cast<std::ptrdiff_t>(b * item), item, t.values().begin());
        out.push_back(std::move(t));
    }
    return out;
}

double batch_tonality(const Tensor& batch) {
    const Shape4& s = batch.shape();
    std::vector<double> block(s.n);
    double total = 0.0;
    for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t m = 0; m < s.m; ++m)
            for (std::size_t c = 0; c < s.c; ++c) {
                for (std::size_t n = 0; n < s.n; ++n) block[n] = batch.at(b, m, n, c);
                total += tonality(block);
            }
    return total / static_cast<double>(s.b * s.m * s.c);
}

void write_training_log(const std::vector<TrainingLogRow>& log, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "iteration,loss_D,loss_G,wasserstein_estimate,gen_tonality\n";
    os.precision(17);
    for (const auto& r : log) {
        os << r.iteration << ',' << r.loss_d << ',' << r.loss_g << ',' << r.wasserstein << ',' << r.gen_tonality
           << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

// ─── Training loop ──────────────────────────────────────────────────────────

namespace {

std::vector<Var> parameter_vars(const std::vector<Parameter>& params) {
    std::vector<Var> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.var);
    return out;
}

void freeze(std::vector<Parameter>& params, const std::vector<std::size_t>& depths) {
    const std::set<std::size_t> frozen(depths.begin(), depths.end());
    for (auto& p : params) {
        if (p.depth != 0 && frozen.contains(p.depth)) p.trainable = false;
    }
}

Var sample_latents(std::size_t batch, std::size_t latent_dim, std::mt19937_64& rng) {
    Tensor z(Shape4{batch, 1, 1, latent_dim});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : z.data()) v = normal(rng);
    return ad::constant(std::move(z));
}

Var sample_real(const std::vector<Tensor>& data, std::size_t batch, std::mt19937_64& rng) {
    const Shape4& item = data.front().shape();
    Tensor out(Shape4{batch, item.m, item.n, item.c});
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    const std::size_t len = item.size();
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& src = data[pick(rng)].data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * len));
    }
    return ad::constant(std::move(out));
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, std::size_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "checkpoint_%06zu.mp3n", iteration);
    return dir / buf;
}

}  // namespace

TrainResult train(const std::vector<MdctTensor>& dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const TrainOptions& options) {
    train_cfg.validate();
    model_cfg.validate();
    if (dataset.empty()) throw ShapeError("training dataset is empty");

    std::vector<Tensor> data;
    for (const auto& t : dataset) {
        if (t.blocks() != model_cfg.output_blocks() || t.bands() != model_cfg.output_bands() ||
            t.channels() != model_cfg.output_channels) {
            throw ShapeError("dataset tensor " + std::to_string(t.blocks()) + " x " + std::to_string(t.bands()) +
                             " x " + std::to_string(t.channels()) + " does not match model output " +
                             std::to_string(model_cfg.output_blocks()) + " x " +
                             std::to_string(model_cfg.output_bands()) + " x " +
                             std::to_string(model_cfg.output_channels));
        }
        Tensor item(Shape4{1, t.blocks(), t.bands(), t.channels()});
        std::copy(t.values().begin(), t.values().end(), item.data().begin());
        data.push_back(std::move(item));
    }

    TrainResult result{Generator(model_cfg, splitmix64(train_cfg.rng_seed ^ 0x67656EULL)),
                       Discriminator(model_cfg, splitmix64(train_cfg.rng_seed ^ 0x646973ULL)),
                       {}};
    Generator& gen = result.generator;
    Discriminator& disc = result.discriminator;
    freeze(gen.parameters(), train_cfg.frozen_blocks);
    freeze(disc.parameters(), train_cfg.frozen_blocks);

    Adam opt_g(gen.parameters(), train_cfg.learning_rate, train_cfg.adam_beta1, train_cfg.adam_beta2,
               train_cfg.adam_epsilon);
    Adam opt_d(disc.parameters(), train_cfg.learning_rate, train_cfg.adam_beta1, train_cfg.adam_beta2,
               train_cfg.adam_epsilon);
    const auto g_vars = parameter_vars(gen.parameters());
    const auto d_vars = parameter_vars(disc.parameters());

    const LossConfig loss_cfg{train_cfg.gp_lambda, train_cfg.drift_epsilon, train_cfg.noise_scale,
                              options.sample_rate_hz, options.psychoacoustics};
    const Critic critic = [&disc](const Var& x) { return disc.forward(x); };
    std::mt19937_64 rng(train_cfg.rng_seed);

    if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

    for (std::size_t it = 0; it < train_cfg.iterations; ++it) {
        TrainingLogRow row;
        row.iteration = it;

        for (std::size_t k = 0; k < train_cfg.n_critic; ++k) {
            const Var real = sample_real(data, train_cfg.batch_size, rng);
            Var fake;
            {
                ad::NoGradGuard no_grad;
                fake = gen.forward(sample_latents(train_cfg.batch_size, model_cfg.latent_dim, rng));
            }
            const WganLosses losses = wgan_gp_losses(real, fake, critic, loss_cfg, rng);
            row.loss_d = losses.loss_d.value()[0];
            row.wasserstein = losses.wasserstein();
            if (!std::isfinite(row.loss_d)) throw DivergenceError(it, "critic loss diverged");
            opt_d.step(ad::grad(losses.loss_d, d_vars));
        }

        const Var fake = gen.forward(sample_latents(train_cfg.batch_size, model_cfg.latent_dim, rng));
        row.gen_tonality = batch_tonality(fake.value());
        const Var loss_g = generator_loss(fake, critic, loss_cfg, rng);
        row.loss_g = loss_g.value()[0];
        if (!std::isfinite(row.loss_g)) throw DivergenceError(it, "generator loss diverged");
        opt_g.step(ad::grad(loss_g, g_vars));

        result.log.push_back(row);
        if (options.on_iteration) options.on_iteration(row);
        if (options.out_dir && train_cfg.checkpoint_every > 0 && (it + 1) % train_cfg.checkpoint_every == 0) {
            save_checkpoint(checkpoint_name(*options.out_dir, it + 1), gen, disc, options.sample_rate_hz);
        }
    }

    if (options.out_dir) {
        save_checkpoint(*options.out_dir / "checkpoint_final.mp3n", gen, disc, options.sample_rate_hz);
        write_training_log(result.log, *options.out_dir / "training_log.csv");
    }
    return result;
}

// ─── Checkpoints ────────────────────────────────────────────────────────────

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        os_.write(reinterpret_cast<const char*>(b), 4);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, sizeof u);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        os_.write(reinterpret_cast<const char*>(b), 8);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    std::ostream& os_;
};

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    double f64() {
        unsigned char b[8];
        read(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &u, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > 4096) throw ParseError("checkpoint: implausible name length");
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

private:
    void read(void* dst, std::size_t n) {
        if (!is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
            throw ParseError("checkpoint: unexpected end of file");
        }
    }
    std::istream& is_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Generator& generator, const Discriminator& discriminator,
                     int sample_rate_hz) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    Writer w(os);
    os.write("MP3N", 4);
    w.u32(kCheckpointVersion);

    const ModelConfig& cfg = generator.config();
    w.u32(static_cast<std::uint32_t>(cfg.latent_dim));
    w.u32(static_cast<std::uint32_t>(cfg.num_blocks));
    w.u32(static_cast<std::uint32_t>(cfg.seed_blocks));
    w.u32(static_cast<std::uint32_t>(cfg.seed_bands));
    w.u32(static_cast<std::uint32_t>(cfg.output_channels));
    const auto schedule = cfg.channel_schedule();
    w.u32(static_cast<std::uint32_t>(schedule.size()));
    for (std::size_t c : schedule) w.u32(static_cast<std::uint32_t>(c));
    w.f64(cfg.leaky_slope);
    w.u32(static_cast<std::uint32_t>(sample_rate_hz));

    const auto& gp = generator.parameters();
    const auto& dp = discriminator.parameters();
    w.u32(static_cast<std::uint32_t>(gp.size() + dp.size()));
    for (const auto* set : {&gp, &dp}) {
        for (const auto& p : *set) {
            w.str(p.name);
            const Shape4& s = p.var.shape();
            w.u32(static_cast<std::uint32_t>(s.b));
            w.u32(static_cast<std::uint32_t>(s.m));
            w.u32(static_cast<std::uint32_t>(s.n));
            w.u32(static_cast<std::uint32_t>(s.c));
            for (double v : p.var.value().data()) w.f64(v);
        }
    }
    if (!os) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MP3N", 4) != 0) throw ParseError(path.string() + ": bad magic");
    Reader r(is);
    if (r.u32() != kCheckpointVersion) throw UnsupportedFormat(path.string() + ": unknown checkpoint version");

    Checkpoint ck;
    ck.model.latent_dim = r.u32();
    ck.model.num_blocks = r.u32();
    ck.model.seed_blocks = r.u32();
    ck.model.seed_bands = r.u32();
    ck.model.output_channels = r.u32();
    const std::uint32_t depths = r.u32();
    if (depths > 64) throw ParseError(path.string() + ": implausible channel schedule");
    for (std::uint32_t i = 0; i < depths; ++i) ck.model.channels.push_back(r.u32());
    ck.model.leaky_slope = r.f64();
    ck.sample_rate_hz = static_cast<int>(r.u32());
    ck.model.validate();

    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        Shape4 s;
        s.b = r.u32();
        s.m = r.u32();
        s.n = r.u32();
        s.c = r.u32();
        if (s.size() > (std::size_t{1} << 32)) throw ParseError(path.string() + ": implausible tensor size");
        Tensor t(s);
        for (double& v : t.data()) v = r.f64();
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

void restore_parameters(std::vector<Parameter>& params, const Checkpoint& checkpoint) {
    for (auto& p : params) {
        auto it = std::find_if(checkpoint.tensors.begin(), checkpoint.tensors.end(),
                               [&](const auto& entry) { return entry.first == p.name; });
        if (it == checkpoint.tensors.end()) throw ParseError("checkpoint is missing " + p.name);
        if (it->second.shape() != p.var.shape()) throw ShapeError("checkpoint shape mismatch for " + p.name);
        p.var.mutable_value() = it->second;
    }
}

std::vector<MdctTensor> sample_generator(const Generator& generator, std::size_t count, std::uint64_t seed,
                                         int sample_rate_hz) {
    ad::NoGradGuard no_grad;
    std::mt19937_64 rng(seed);
    const Var z = sample_latents(count, generator.config().latent_dim, rng);
    return unstack_batch(generator.forward(z).value(), sample_rate_hz);
}

}  // namespace mp3net
