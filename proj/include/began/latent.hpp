#pragma once

#include <vector>

#include "began/nn.hpp"
#include "began/rng.hpp"
#include "began/tensor.hpp"

namespace began {

// Point in the generator's input domain; every component stays in [-1,1].
class LatentPoint {
  public:
    explicit LatentPoint(std::vector<double> values);
    const std::vector<double>& values() const { return v_; }
    size_t dim() const { return v_.size(); }

  private:
    std::vector<double> v_;
};

// [batch, n_z] with i.i.d. uniform components in [-1,1)
Tensor sample_z(Rng& rng, int batch, int n_z);

Tensor to_tensor(const LatentPoint& z);  // [1, n_z]

struct EmbeddingResult {
    LatentPoint z_r;
    std::vector<double> error_trace;  // e_r before each update, then the final value
    double final_error = 0.0;
};

// Adam search for z_r minimizing e_r = mean |x_r - G(z_r)|; z is projected
// back into [-1,1] after every step and the best-so-far point is returned,
// so the final error never exceeds the initial one. x_r is [C,H,W].
EmbeddingResult embed_image(const ModelParams& params, const Tensor& x_r, int steps, double lr, Rng& rng,
                            int restarts = 1);

// inclusive linear interpolation with exact endpoints; count >= 2
std::vector<LatentPoint> interpolate(const LatentPoint& z_a, const LatentPoint& z_b, int count);

struct MirrorResult {
    EmbeddingResult embed_a;      // embedding of x_r
    EmbeddingResult embed_b;      // embedding of the horizontally flipped x_r
    std::vector<Tensor> frames;   // count decoded images, [C,H,W] each
};

MirrorResult mirror_interpolate(const ModelParams& params, const Tensor& x_r, int steps, double lr, int count,
                                Rng& rng);

}  // namespace began
