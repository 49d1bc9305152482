#include "began/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "began/latent.hpp"

namespace began {

void EquilibriumController::update(double loss_real, double loss_fake_g) {
    if (loss_real < 0.0 || loss_fake_g < 0.0) {
        throw std::invalid_argument("update_k: losses must be non-negative");
    }
    k = std::clamp(k + lambda_k * (gamma * loss_real - loss_fake_g), 0.0, 1.0);
}

double wasserstein_lower_bound(const LossStats& stats) { return std::fabs(stats.m1 - stats.m2); }

Tensor autoencoder_loss(const Tensor& v, const Tensor& reconstruction, int eta) {
    if (v.shape() != reconstruction.shape()) {
        throw std::invalid_argument("autoencoder_loss: shape mismatch " + shape_str(v.shape()) + " vs " +
                                    shape_str(reconstruction.shape()));
    }
    if (eta != 1 && eta != 2) throw std::invalid_argument("autoencoder_loss: eta must be 1 or 2");
    Tensor diff = subtract(v, reconstruction);
    return mean_all(eta == 1 ? abs(diff) : square(diff));
}

Tensor discriminator_loss(const Tensor& loss_real, const Tensor& loss_fake_d, double k) {
    if (k < 0.0 || k > 1.0) throw std::invalid_argument("discriminator_loss: k must be in [0,1]");
    return subtract(loss_real, scalar_mul(loss_fake_d, k));
}

Tensor generator_loss(const Tensor& loss_fake_g) { return loss_fake_g; }

double global_measure(double loss_real, double loss_fake_g, double gamma) {
    return loss_real + std::fabs(gamma * loss_real - loss_fake_g);
}

namespace {

std::vector<const Tensor*> tracked_list(const EncoderParams& enc, const DecoderParams& dec) {
    std::vector<const Tensor*> out;
    visit_params(enc, "", [&](const std::string&, const Tensor& t) { out.push_back(&t); });
    visit_params(dec, "", [&](const std::string&, const Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<const Tensor*> tracked_list(const DecoderParams& dec) {
    std::vector<const Tensor*> out;
    visit_params(dec, "", [&](const std::string&, const Tensor& t) { out.push_back(&t); });
    return out;
}

}  // namespace

StepRecord train_step(ModelParams& params, AdamState& opt_d, AdamState& opt_g, EquilibriumController& ctrl,
                      const Tensor& real_batch, Rng& rng, int eta, long step, double carry, double lr) {
    const ArchConfig& arch = params.arch;
    const double k = ctrl.k;
    const int batch = real_batch.dim(0);

    Tensor z_d = sample_z(rng, batch, arch.n_z);
    Tensor z_g = sample_z(rng, batch, arch.n_z);

    Tape tape;
    EncoderParams enc_t = track(tape, params.encoder);
    DecoderParams dec_t = track(tape, params.decoder);
    DecoderParams gen_t = track(tape, params.generator);

    // L(x): gradient reaches theta_D only
    Tensor x_rec = discriminate(arch, enc_t, dec_t, real_batch, carry);
    Tensor loss_real = autoencoder_loss(real_batch, x_rec, eta);

    // L(G(z_D)): the generated batch is detached from theta_G
    Tensor g_d = generate(arch, params.generator, z_d, carry);
    Tensor gd_rec = discriminate(arch, enc_t, dec_t, g_d, carry);
    Tensor loss_fake_d = autoencoder_loss(g_d, gd_rec, eta);

    // L(G(z_G)): the discriminator forward is frozen, gradient reaches theta_G
    Tensor g_g = generate(arch, gen_t, z_g, carry);
    Tensor gg_rec = discriminate(arch, params.encoder, params.decoder, g_g, carry);
    Tensor loss_fake_g = autoencoder_loss(g_g, gg_rec, eta);

    Tensor l_d = discriminator_loss(loss_real, loss_fake_d, k);
    Tensor l_g = generator_loss(loss_fake_g);

    // The two objectives touch disjoint leaves, so one backward pass yields
    // dL_D/dtheta_D and dL_G/dtheta_G simultaneously.
    tape.backward(add(l_d, l_g));

    std::vector<Tensor*> d_params = discriminator_tensors(params);
    std::vector<Tensor*> g_params = generator_tensors(params);
    if (!opt_d.initialized()) opt_d.init(d_params);
    if (!opt_g.initialized()) opt_g.init(g_params);

    std::vector<const std::vector<double>*> d_grads;
    for (const Tensor* t : tracked_list(enc_t, dec_t)) d_grads.push_back(&tape.grad(*t));
    std::vector<const std::vector<double>*> g_grads;
    for (const Tensor* t : tracked_list(gen_t)) g_grads.push_back(&tape.grad(*t));

    adam_step(opt_d, d_params, d_grads, lr);
    adam_step(opt_g, g_params, g_grads, lr);

    ctrl.update(loss_real.value(), loss_fake_g.value());

    StepRecord rec;
    rec.step = step;
    rec.loss_real = loss_real.value();
    rec.loss_fake_d = loss_fake_d.value();
    rec.loss_fake_g = loss_fake_g.value();
    rec.k = k;
    rec.m_global = global_measure(rec.loss_real, rec.loss_fake_g, ctrl.gamma);
    rec.lr = lr;
    rec.carry = carry;
    return rec;
}

Checkpoint init_run(const RunConfig& cfg) {
    cfg.validate();
    Checkpoint st;
    st.params = build_models(cfg.arch, derive_seed(cfg.seed, 1));
    st.opt_d.init(discriminator_tensors(st.params));
    st.opt_g.init(generator_tensors(st.params));
    st.k = 0.0;
    st.step = 0;
    st.lr = cfg.lr;
    st.rng_train = Rng(derive_seed(cfg.seed, 2)).state();
    st.data_seed = derive_seed(cfg.seed, 3);
    st.stall_best = std::numeric_limits<double>::infinity();
    st.stall_since = 0;
    return st;
}

Checkpoint train_loop(const RunConfig& cfg, const Dataset& dataset, const TrainHooks& hooks,
                      const Checkpoint* resume) {
    cfg.validate();
    if (dataset.image_size() != cfg.arch.image_size || dataset.channels() != cfg.arch.channels) {
        throw std::invalid_argument("train_loop: dataset shape [" + std::to_string(dataset.channels()) + "," +
                                    std::to_string(dataset.image_size()) + "," + std::to_string(dataset.image_size()) +
                                    "] conflicts with configured image_size/channels");
    }

    Checkpoint st;
    if (resume) {
        if (!(resume->params.arch == cfg.arch)) {
            throw std::invalid_argument("train_loop: checkpoint architecture differs from config");
        }
        st = *resume;
    } else {
        st = init_run(cfg);
    }

    Rng rng(0);
    rng.set_state(st.rng_train);
    EquilibriumController ctrl{st.k, cfg.gamma, cfg.lambda_k};
    StallDetector stall(cfg.patience);
    stall.restore(st.stall_best, st.stall_since);
    Batcher batcher(dataset.size(), cfg.batch_size, st.data_seed);

    for (long s = st.step; s < cfg.steps; ++s) {
        const double carry =
            cfg.arch.use_vanishing_residuals ? carry_schedule(s, cfg.arch.carry_decay_steps) : 0.0;
        Tensor batch = next_batch(dataset, batcher, s);
        StepRecord rec;
        try {
            rec = train_step(st.params, st.opt_d, st.opt_g, ctrl, batch, rng, cfg.eta, s, carry, st.lr);
        } catch (const std::exception& e) {
            throw std::runtime_error("training aborted at step " + std::to_string(s) + ": " + e.what());
        }
        const double next_lr = stall.maybe_decay(rec.m_global, st.lr);
        if (hooks.metrics) hooks.metrics->write(rec);

        st.step = s + 1;
        st.k = ctrl.k;
        st.lr = next_lr;
        st.stall_best = stall.best();
        st.stall_since = stall.since();
        if (hooks.checkpoint_interval > 0 && st.step % hooks.checkpoint_interval == 0 && hooks.on_checkpoint) {
            st.rng_train = rng.state();
            hooks.on_checkpoint(st);
        }
    }
    st.rng_train = rng.state();
    return st;
}

}  // namespace began
