#pragma once

#include "mp3net/mdct.hpp"
#include "mp3net/model.hpp"
#include "mp3net/psychoacoustics.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mp3net {

struct TrainConfig {
    double learning_rate = 1e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.9;
    double adam_epsilon = 1e-8;
    std::size_t n_critic = 2;        // critic updates per generator update
    double gp_lambda = 10.0;
    double drift_epsilon = 1e-3;
    std::size_t batch_size = 8;
    double noise_scale = 1.0;        // c in the psychoacoustic noise layer
    std::uint64_t rng_seed = 0;
    std::size_t iterations = 100;    // generator updates
    std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint
    std::vector<std::size_t> frozen_blocks;  // model block depths excluded from updates

    void validate() const;
};

using Critic = std::function<ad::Var(const ad::Var&)>;

struct LossConfig {
    double gp_lambda = 10.0;
    double drift_epsilon = 1e-3;
    double noise_scale = 1.0;
    int sample_rate_hz = 22016;
    PsychoacousticConfig psychoacoustics;
};

// x + psychoacoustic noise of x, with the noise treated as a constant offset.
// Each batch item draws from its own seed derived from `seed`.
ad::Var add_noise_layer(const ad::Var& x, double scale, int sample_rate_hz, std::uint64_t seed,
                        const PsychoacousticConfig& cfg);

struct WganLosses {
    ad::Var loss_d;
    ad::Var loss_g;
    double d_real = 0.0;            // E[D(real)]
    double d_fake = 0.0;            // E[D(fake)]
    double gradient_penalty = 0.0;  // E[(|grad D(x_hat)| - 1)^2], unscaled
    double drift = 0.0;             // E[D(real)^2], unscaled

    double wasserstein() const { return d_real - d_fake; }
};

// loss_D = E[D(f)] - E[D(r)] + lambda E[(|grad D(x_hat)|_2 - 1)^2] + eps E[D(r)^2], loss_G = -E[D(f)],
// with r, f passed through the noise layer and x_hat = u r + (1 - u) f, u ~ U[0, 1] per sample.
WganLosses wgan_gp_losses(const ad::Var& real, const ad::Var& fake, const Critic& critic, const LossConfig& cfg,
                          std::mt19937_64& rng);

// -E[D(noise(fake))] only; cheaper than the full loss for generator steps.
ad::Var generator_loss(const ad::Var& fake, const Critic& critic, const LossConfig& cfg, std::mt19937_64& rng);

class Adam {
public:
    Adam(std::vector<Parameter>& params, double learning_rate, double beta1, double beta2, double epsilon);

    // grads[i] belongs to params[i]; frozen parameters are skipped.
    void step(const std::vector<ad::Var>& grads);

private:
    std::vector<Parameter>& params_;
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

struct TrainingLogRow {
    std::size_t iteration = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    double wasserstein = 0.0;
    double gen_tonality = 0.0;
};

struct TrainOptions {
    int sample_rate_hz = 22016;
    PsychoacousticConfig psychoacoustics;
    std::optional<std::filesystem::path> out_dir;  // checkpoints and training_log.csv
    std::function<void(const TrainingLogRow&)> on_iteration;
};

struct TrainResult {
    Generator generator;
    Discriminator discriminator;
    std::vector<TrainingLogRow> log;
};

// Deterministic given train_cfg.rng_seed. Throws ShapeError when a tensor does not match the model
// output shape and DivergenceError when a loss becomes non-finite.
TrainResult train(const std::vector<MdctTensor>& dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const TrainOptions& options = {});

// Mean spectral-flatness tonality over all blocks and channels of a batch laid out B x M x N x C.
double batch_tonality(const Tensor& batch);

Tensor stack_batch(const std::vector<MdctTensor>& tensors);
std::vector<MdctTensor> unstack_batch(const Tensor& batch, int sample_rate_hz);

void write_training_log(const std::vector<TrainingLogRow>& log, const std::filesystem::path& path);

// ─── Checkpoints ────────────────────────────────────────────────────────────

struct Checkpoint {
    ModelConfig model;
    int sample_rate_hz = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

// "MP3N", version, model config echo, sample rate, then named float64 tensors (generator first).
void save_checkpoint(const std::filesystem::path& path, const Generator& generator, const Discriminator& discriminator,
                     int sample_rate_hz);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void restore_parameters(std::vector<Parameter>& params, const Checkpoint& checkpoint);

// Draws z ~ N(0, I) and runs the generator without recording a graph.
std::vector<MdctTensor> sample_generator(const Generator& generator, std::size_t count, std::uint64_t seed,
                                         int sample_rate_hz);

}  // namespace mp3net
