#include "mp3net/errors.hpp"
#include "mp3net/synth.hpp"
#include "mp3net/train.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace mp3net;
using ad::Var;
using testing::random_tensor;

namespace {

// One output block of 4 x 8 x 1: the noise layer needs at least 8 bands.
ModelConfig toy_model() {
    ModelConfig cfg;
    cfg.latent_dim = 4;
    cfg.num_blocks = 1;
    cfg.seed_blocks = 1;
    cfg.seed_bands = 4;
    cfg.channels = {3, 2};
    cfg.output_channels = 1;
    return cfg;
}

TrainConfig toy_train(std::size_t iterations) {
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.batch_size = 3;
    cfg.rng_seed = 7;
    return cfg;
}

std::vector<MdctTensor> toy_data(std::size_t count) {
    ToneConfig tc;
    tc.frames = 4 * 8;
    return tone_dataset(count, tc, 8, 1);
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("linear critic has a closed-form loss") {
    // D(x) = <w, x> per sample: the input gradient is w everywhere, so the penalty is (|w| - 1)^2.
    const Shape4 s{3, 4, 8, 1};
    const Tensor w = random_tensor(Shape4{1, 1, 32, 1}, 1);
    const Var wv(w);
    const Critic critic = [&](const Var& x) { return ad::dense(x, wv, ad::constant(Tensor(Shape4{1, 1, 1, 1}))); };
    const Tensor real = random_tensor(s, 2), fake = random_tensor(s, 3);
    LossConfig cfg;
    cfg.noise_scale = 0.0;
    std::mt19937_64 rng(4);
    const WganLosses l = wgan_gp_losses(Var(real), Var(fake), critic, cfg, rng);

    double e_real = 0.0, e_fake = 0.0, drift = 0.0;
    for (std::size_t b = 0; b < 3; ++b) {
        double dr = 0.0, df = 0.0;
        for (std::size_t i = 0; i < 32; ++i) {
            dr += w[i] * real[b * 32 + i];
            df += w[i] * fake[b * 32 + i];
        }
        e_real += dr / 3.0;
        e_fake += df / 3.0;
        drift += dr * dr / 3.0;
    }
    const double norm = std::sqrt(dot(w, w));
    const double gp = (norm - 1.0) * (norm - 1.0);
    CHECK(l.d_real == doctest::Approx(e_real).epsilon(1e-12));
    CHECK(l.d_fake == doctest::Approx(e_fake).epsilon(1e-12));
    CHECK(l.gradient_penalty == doctest::Approx(gp).epsilon(1e-12));
    CHECK(l.drift == doctest::Approx(drift).epsilon(1e-12));
    CHECK(l.loss_d.value()[0] == doctest::Approx(e_fake - e_real + 10.0 * gp + 1e-3 * drift).epsilon(1e-12));
    CHECK(l.loss_g.value()[0] == doctest::Approx(-e_fake).epsilon(1e-12));
    CHECK(l.wasserstein() == doctest::Approx(e_real - e_fake).epsilon(1e-12));
}

TEST_CASE("a zero critic pays exactly lambda") {
    const Critic zero = [](const Var& x) { return ad::reduce_sum(ad::scale(x, 0.0), {false, true, true, true}); };
    const Shape4 s{2, 4, 8, 1};
    LossConfig cfg;
    cfg.gp_lambda = 3.0;
    std::mt19937_64 rng(1);
    const WganLosses l = wgan_gp_losses(Var(random_tensor(s, 1)), Var(random_tensor(s, 2)), zero, cfg, rng);
    CHECK(l.drift == 0.0);
    CHECK(l.gradient_penalty == 1.0);
    CHECK(l.loss_d.value()[0] == 3.0);
}

TEST_CASE("penalty parameter gradient matches finite differences") {
    // 53-parameter critic: 3x3 conv to 2 channels, squared leaky activation, dense to a score.
    const ad::ConvGeometry g{3, 3, 1, 1, 1, 1};
    std::vector<Var> params{Var(random_tensor(Shape4{3, 3, 1, 2}, 10, -0.5, 0.5), true),
                            Var(random_tensor(Shape4{1, 1, 1, 2}, 11, -0.1, 0.1), true),
                            Var(random_tensor(Shape4{1, 1, 64, 1}, 12, -0.5, 0.5), true),
                            Var(random_tensor(Shape4{1, 1, 1, 1}, 13, -0.1, 0.1), true)};
    std::size_t count = 0;
    for (const auto& p : params) count += p.value().size();
    CHECK(count <= 100);
    const Critic critic = [&](const Var& x) {
        const Var h = ad::leaky_relu(ad::add_bias(ad::conv2d(x, params[0], g), params[1]), 0.2);
        return ad::dense(ad::square(h), params[2], params[3]);
    };
    const Shape4 s{3, 4, 8, 1};
    const Var real(random_tensor(s, 14)), fake(random_tensor(s, 15));
    LossConfig cfg;
    cfg.drift_epsilon = 0.0;

    SUBCASE("penalty alone, real equal to fake") {
        auto f = [&] {
            std::mt19937_64 rng(16);
            return wgan_gp_losses(real, real, critic, cfg, rng).loss_d;
        };
        const auto r = testing::check_gradient_inplace(f, params);
        CHECK(r.relative_error <= 1e-3);
        CHECK(r.analytic_norm > 0.0);
    }
    SUBCASE("full critic loss with noise") {
        cfg.drift_epsilon = 1e-3;
        auto f = [&] {
            std::mt19937_64 rng(17);
            return wgan_gp_losses(real, fake, critic, cfg, rng).loss_d;
        };
        CHECK(testing::check_gradient_inplace(f, params).relative_error <= 1e-3);
    }
}

TEST_CASE("noise layer is a constant offset") {
    const Shape4 s{2, 4, 8, 1};
    const Var x(random_tensor(s, 1), true);
    const Var y = add_noise_layer(x, 1.0, 22016, 5, {});
    CHECK_FALSE(y.value() == x.value());
    const auto g = ad::grad(ad::sum_all(y), {x});
    for (double v : g[0].value().data()) CHECK(v == 1.0);
    CHECK(add_noise_layer(x, 0.0, 22016, 5, {}).value() == x.value());
    CHECK(add_noise_layer(x, 1.0, 22016, 5, {}).value() == y.value());
}

TEST_CASE("Adam first step is lr times the gradient sign") {
    std::vector<Parameter> params{{"p", Var(Tensor(Shape4{1, 1, 1, 3}, {1.0, 2.0, 3.0}), true), 0, true},
                                  {"q", Var(Tensor(Shape4{1, 1, 1, 1}, {5.0}), true), 1, false}};
    Adam adam(params, 0.1, 0.5, 0.9, 1e-8);
    const Tensor g(Shape4{1, 1, 1, 3}, {0.5, -2.0, 0.0});
    adam.step({ad::constant(g), ad::constant(Tensor(Shape4{1, 1, 1, 1}, 1.0))});
    const auto& v = params[0].var.value();
    CHECK(v[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    CHECK(v[1] == doctest::Approx(2.0 + 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
    CHECK(v[2] == 3.0);
    CHECK(params[1].var.value()[0] == 5.0);
}

TEST_CASE("Adam second step follows the bias-corrected moments") {
    std::vector<Parameter> params{{"p", Var(Tensor(Shape4{1, 1, 1, 1}, {0.0}), true), 0, true}};
    Adam adam(params, 0.01, 0.5, 0.9, 1e-8);
    adam.step({ad::constant(Tensor(Shape4{1, 1, 1, 1}, 1.0))});
    adam.step({ad::constant(Tensor(Shape4{1, 1, 1, 1}, 3.0))});
    const double m = 0.5 * 0.5 * 1.0 + 0.5 * 3.0, v = 0.9 * 0.1 * 1.0 + 0.1 * 9.0;
    const double expected = -0.01 * (1.0 / (1.0 + 1e-8)) - 0.01 * (m / 0.75) / (std::sqrt(v / 0.19) + 1e-8);
    CHECK(params[0].var.value()[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("one training iteration runs and logs") {
    testing::TempDir dir;
    TrainOptions opts;
    opts.out_dir = dir.path();
    const TrainResult r = train(toy_data(6), toy_model(), toy_train(1), opts);
    REQUIRE(r.log.size() == 1);
    CHECK(std::isfinite(r.log[0].loss_d));
    CHECK(std::isfinite(r.log[0].loss_g));
    CHECK(std::filesystem::exists(dir / "checkpoint_final.mp3n"));
    std::istringstream is(testing::read_file(dir / "training_log.csv"));
    std::string header;
    std::getline(is, header);
    CHECK(header == "iteration,loss_D,loss_G,wasserstein_estimate,gen_tonality");
}

TEST_CASE("training is deterministic in its seed") {
    testing::TempDir a, b, c;
    TrainConfig cfg = toy_train(5);
    cfg.checkpoint_every = 2;
    for (const auto* dir : {&a, &b}) {
        TrainOptions opts;
        opts.out_dir = dir->path();
        train(toy_data(6), toy_model(), cfg, opts);
    }
    CHECK(testing::read_file(a / "checkpoint_final.mp3n") == testing::read_file(b / "checkpoint_final.mp3n"));
    CHECK(testing::read_file(a / "checkpoint_000004.mp3n") == testing::read_file(b / "checkpoint_000004.mp3n"));
    CHECK(testing::read_file(a / "training_log.csv") == testing::read_file(b / "training_log.csv"));

    cfg.rng_seed = 8;
    TrainOptions opts;
    opts.out_dir = c.path();
    train(toy_data(6), toy_model(), cfg, opts);
    CHECK(testing::read_file(a / "checkpoint_final.mp3n") != testing::read_file(c / "checkpoint_final.mp3n"));
}

TEST_CASE("mismatched data is a shape error") {
    ToneConfig tc;
    tc.frames = 8 * 8;
    CHECK_THROWS_AS(train(tone_dataset(2, tc, 8, 1), toy_model(), toy_train(1)), ShapeError);
    CHECK_THROWS_AS(train({}, toy_model(), toy_train(1)), ShapeError);
}

TEST_CASE("non-finite data diverges") {
    auto data = toy_data(2);
    for (auto& t : data) t.at(1, 2, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg = toy_train(3);
    cfg.noise_scale = 0.0;
    CHECK_THROWS_AS(train(data, toy_model(), cfg), DivergenceError);
}

TEST_CASE("invalid hyper-parameters") {
    TrainConfig cfg = toy_train(1);
    cfg.n_critic = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_train(1);
    cfg.adam_beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_train(1);
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(train(toy_data(2), toy_model(), cfg), ConfigError);
}

TEST_CASE("frozen blocks keep their weights") {
    TrainConfig cfg = toy_train(3);
    cfg.frozen_blocks = {1};
    const TrainResult r = train(toy_data(4), toy_model(), cfg);
    // Zero iterations returns the initial weights for the same seed.
    cfg.iterations = 0;
    const TrainResult init = train(toy_data(4), toy_model(), cfg);
    std::size_t frozen = 0, moved = 0;
    for (std::size_t i = 0; i < r.generator.parameters().size(); ++i) {
        const auto& p = r.generator.parameters()[i];
        const bool same = p.var.value() == init.generator.parameters()[i].var.value();
        if (p.depth == 1) {
            CHECK(same);
            ++frozen;
        } else if (!same) {
            ++moved;
        }
    }
    CHECK(frozen > 0);
    CHECK(moved > 0);
}

TEST_CASE("checkpoint round-trip") {
    testing::TempDir dir;
    const ModelConfig mc = toy_model();
    Generator g(mc, 3);
    const Discriminator d(mc, 4);
    save_checkpoint(dir / "c.mp3n", g, d, 22016);
    const Checkpoint ck = load_checkpoint(dir / "c.mp3n");
    CHECK(ck.sample_rate_hz == 22016);
    CHECK(ck.model.latent_dim == mc.latent_dim);
    CHECK(ck.model.channels == mc.channels);
    CHECK(ck.tensors.size() == g.parameters().size() + d.parameters().size());

    Generator h(ck.model, 99);
    restore_parameters(h.parameters(), ck);
    const Var z(random_tensor(Shape4{2, 1, 1, 4}, 5));
    CHECK(h.forward(z).value() == g.forward(z).value());

    const auto samples = sample_generator(h, 3, 11, 22016);
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].blocks() == 4);
    CHECK(samples[0].bands() == 8);
    CHECK(samples == sample_generator(h, 3, 11, 22016));

    testing::write_bytes(dir / "bad.mp3n", {'M', 'P', '3', 'X', 1, 0, 0, 0});
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.mp3n"), ParseError);
    const std::string bytes = testing::read_file(dir / "c.mp3n");
    testing::write_bytes(dir / "short.mp3n", std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 40));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.mp3n"), ParseError);
}

TEST_CASE("batch helpers") {
    const auto data = toy_data(3);
    const Tensor batch = stack_batch(data);
    CHECK(batch.shape() == Shape4{3, 4, 8, 1});
    CHECK(unstack_batch(batch, 22016) == data);
    Tensor flat(Shape4{2, 3, 8, 1}, 1.0);
    CHECK(batch_tonality(flat) == 0.0);
}

}  // TEST_SUITE
