#include "began/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace began {

void AdamState::init(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    t = 0;
    for (const Tensor* p : params) {
        m.emplace_back(static_cast<size_t>(p->size()), 0.0);
        v.emplace_back(static_cast<size_t>(p->size()), 0.0);
    }
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const std::vector<double>*>& grads, double learning_rate) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& g = *grads[i];
        const auto& old = params[i]->data();
        if (g.size() != old.size()) {
            throw std::invalid_argument("adam_step: gradient size mismatch at parameter " + std::to_string(i));
        }
        auto& mi = state.m[i];
        auto& vi = state.v[i];
        std::vector<real> next(old.size());
        for (size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j])) {
                throw std::runtime_error("adam_step: non-finite gradient at parameter " + std::to_string(i) +
                                         " index " + std::to_string(j));
            }
            mi[j] = state.beta1 * mi[j] + (1.0 - state.beta1) * g[j];
            vi[j] = state.beta2 * vi[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = mi[j] / bc1;
            const double vhat = vi[j] / bc2;
            next[j] = static_cast<real>(static_cast<double>(old[j]) -
                                        learning_rate * mhat / (std::sqrt(vhat) + state.eps));
        }
        *params[i] = Tensor(params[i]->shape(), std::move(next));
    }
}

double StallDetector::maybe_decay(double m_global, double learning_rate) {
    if (!std::isfinite(m_global)) throw std::invalid_argument("maybe_decay: non-finite convergence measure");
    if (m_global < best_ - min_delta_) {
        best_ = m_global;
        since_ = 0;
        return learning_rate;
    }
    since_ += 1;
    if (since_ >= patience_) {
        since_ = 0;
        return learning_rate / 2.0;
    }
    return learning_rate;
}

}  // namespace began
