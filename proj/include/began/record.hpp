#pragma once

namespace began {

// Per-step telemetry. k is the controller value used in this step's
// discriminator loss; all fields are finite by construction.
struct StepRecord {
    long step = 0;
    double loss_real = 0.0;    // L(x)
    double loss_fake_d = 0.0;  // L(G(z_D))
    double loss_fake_g = 0.0;  // L(G(z_G))
    double k = 0.0;
    double m_global = 0.0;
    double lr = 0.0;
    double carry = 0.0;
};

}  // namespace began
