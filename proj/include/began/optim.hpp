#pragma once

#include <limits>
#include <vector>

#include "began/tensor.hpp"

namespace began {

// Adam with bias correction. One instance per network; instances never
// share arrays. Moments are kept in double regardless of tensor storage.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void init(const std::vector<Tensor*>& params);
    bool initialized() const { return !m.empty(); }
};

// One bias-corrected Adam update over all parameter tensors. grads[i] must
// match params[i] elementwise; a non-finite gradient aborts the step.
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads, double learning_rate);

// Halves the learning rate when the convergence measure has not improved by
// more than min_delta for `patience` consecutive observations.
class StallDetector {
  public:
    explicit StallDetector(long patience = 2000, double min_delta = 1e-6)
        : patience_(patience), min_delta_(min_delta) {}

    // feeds one M_global observation, returns the (possibly halved) rate
    double maybe_decay(double m_global, double learning_rate);

    double best() const { return best_; }
    long since() const { return since_; }
    void restore(double best, long since) {
        best_ = best;
        since_ = since;
    }

  private:
    long patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    long since_ = 0;
};

}  // namespace began
