#pragma once

#include <functional>

#include "began/config.hpp"
#include "began/data.hpp"
#include "began/nn.hpp"
#include "began/optim.hpp"
#include "began/record.hpp"
#include "began/rng.hpp"
#include "began/tensor.hpp"

namespace began {

// Proportional controller for the equilibrium between the reconstruction of
// real samples and the discrimination of generated ones. k stays in [0,1];
// the fixed point is L(G(z_G)) = gamma * L(x).
struct EquilibriumController {
    double k = 0.0;
    double gamma = 0.5;
    double lambda_k = 0.001;

    void update(double loss_real, double loss_fake_g);
};

struct LossStats {
    double m1 = 0.0;  // mean loss on real samples
    double m2 = 0.0;  // mean loss on generated samples
};

// |m1 - m2|, the mean-gap lower bound on W1 between the loss distributions
double wasserstein_lower_bound(const LossStats& stats);

// mean over batch and pixels of |v - reconstruction|^eta, eta in {1,2}
Tensor autoencoder_loss(const Tensor& v, const Tensor& reconstruction, int eta);

// L_D = loss_real - k * loss_fake_d; k enters as a constant multiplier
Tensor discriminator_loss(const Tensor& loss_real, const Tensor& loss_fake_d, double k);

// L_G = loss_fake_g
Tensor generator_loss(const Tensor& loss_fake_g);

// L(x) + |gamma * L(x) - L(G(z_G))|
double global_measure(double loss_real, double loss_fake_g, double gamma);

// One training step: draws z_D and z_G, computes all three losses with the
// current k, applies one Adam step per network from the same forward
// quantities, then updates k from this step's L(x) and L(G(z_G)).
// Gradients never cross networks: the z_D batch is detached from the
// generator and the discriminator is frozen inside L_G.
StepRecord train_step(ModelParams& params, AdamState& opt_d, AdamState& opt_g, EquilibriumController& ctrl,
                      const Tensor& real_batch, Rng& rng, int eta, long step, double carry, double lr);

struct TrainHooks {
    MetricsCsv* metrics = nullptr;
    long checkpoint_interval = 0;
    std::function<void(const Checkpoint&)> on_checkpoint;
};

// Fresh state for a run (built parameters, zeroed moments, k = 0).
Checkpoint init_run(const RunConfig& cfg);

// Runs cfg.steps training steps (continuing from `resume` when given),
// applying the carry schedule and learning-rate decay on stalls. Emits one
// StepRecord per step; a resumed run reproduces the uninterrupted record
// stream bit-exactly.
Checkpoint train_loop(const RunConfig& cfg, const Dataset& dataset, const TrainHooks& hooks,
                      const Checkpoint* resume = nullptr);

}  // namespace began
