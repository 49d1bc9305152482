#include "began/latent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "began/optim.hpp"

namespace began {

LatentPoint::LatentPoint(std::vector<double> values) : v_(std::move(values)) {
    if (v_.empty()) throw std::invalid_argument("LatentPoint: empty vector");
    for (double x : v_) {
        if (!(x >= -1.0 && x <= 1.0)) throw std::invalid_argument("LatentPoint: component out of [-1,1]");
    }
}

Tensor sample_z(Rng& rng, int batch, int n_z) {
    if (batch < 1 || n_z < 1) throw std::invalid_argument("sample_z: batch and n_z must be >= 1");
    std::vector<real> v(static_cast<size_t>(batch) * n_z);
    for (auto& x : v) x = static_cast<real>(rng.uniform(-1.0, 1.0));
    return Tensor(Shape{batch, n_z}, std::move(v));
}

Tensor to_tensor(const LatentPoint& z) {
    std::vector<real> v(z.dim());
    for (size_t i = 0; i < z.dim(); ++i) v[i] = static_cast<real>(z.values()[i]);
    return Tensor(Shape{1, static_cast<int>(z.dim())}, std::move(v));
}

namespace {

double embedding_error(const ModelParams& params, const Tensor& target, const Tensor& z) {
    Tensor img = generate(params, z, 0.0);
    return mean_all(abs(subtract(target, img))).value();
}

// single search from one random initialization
EmbeddingResult embed_once(const ModelParams& params, const Tensor& target, int steps, double lr, Rng& rng) {
    const int n_z = params.arch.n_z;
    Tensor z = sample_z(rng, 1, n_z);

    AdamState opt;
    opt.init({&z});

    std::vector<double> trace;
    Tensor best_z = z;
    double best_e = embedding_error(params, target, z);

    for (int s = 0; s < steps; ++s) {
        Tape tape;
        Tensor zl = tape.leaf(z);
        Tensor img = generate(params.arch, params.generator, zl, 0.0);
        Tensor e = mean_all(abs(subtract(target, img)));
        const double ev = e.value();
        trace.push_back(ev);
        if (ev < best_e) {
            best_e = ev;
            best_z = z;
        }
        tape.backward(e);
        const std::vector<double>& g = tape.grad(zl);
        adam_step(opt, {&z}, {&g}, lr);

        // project back into the generator's input domain
        std::vector<real> pv(z.data());
        for (auto& x : pv) x = std::clamp(x, real(-1), real(1));
        z = Tensor(z.shape(), std::move(pv));
    }
    const double final_e = embedding_error(params, target, z);
    trace.push_back(final_e);
    if (final_e < best_e) {
        best_e = final_e;
        best_z = z;
    }

    std::vector<double> zv(best_z.data().size());
    for (size_t i = 0; i < zv.size(); ++i) zv[i] = static_cast<double>(best_z.data()[i]);
    return EmbeddingResult{LatentPoint(std::move(zv)), std::move(trace), best_e};
}

}  // namespace

EmbeddingResult embed_image(const ModelParams& params, const Tensor& x_r, int steps, double lr, Rng& rng,
                            int restarts) {
    if (x_r.ndim() != 3) throw std::invalid_argument("embed_image: x_r must be [C,H,W]");
    if (steps < 0 || restarts < 1) throw std::invalid_argument("embed_image: invalid steps/restarts");
    for (real v : x_r.data()) {
        if (v < real(-1) || v > real(1)) throw std::invalid_argument("embed_image: x_r outside pixel range [-1,1]");
    }
    Tensor target = reshape(x_r, {1, x_r.dim(0), x_r.dim(1), x_r.dim(2)});

    EmbeddingResult best = embed_once(params, target, steps, lr, rng);
    for (int r = 1; r < restarts; ++r) {
        EmbeddingResult cand = embed_once(params, target, steps, lr, rng);
        if (cand.final_error < best.final_error) best = std::move(cand);
    }
    return best;
}

std::vector<LatentPoint> interpolate(const LatentPoint& z_a, const LatentPoint& z_b, int count) {
    if (z_a.dim() != z_b.dim()) throw std::invalid_argument("interpolate: dimension mismatch");
    if (count < 2) throw std::invalid_argument("interpolate: count must be >= 2");
    std::vector<LatentPoint> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        if (i == 0) {
            out.push_back(z_a);
        } else if (i == count - 1) {
            out.push_back(z_b);
        } else {
            const double t = static_cast<double>(i) / static_cast<double>(count - 1);
            std::vector<double> v(z_a.dim());
            for (size_t j = 0; j < v.size(); ++j) {
                v[j] = std::clamp(z_a.values()[j] * (1.0 - t) + z_b.values()[j] * t, -1.0, 1.0);
            }
            out.emplace_back(std::move(v));
        }
    }
    return out;
}

MirrorResult mirror_interpolate(const ModelParams& params, const Tensor& x_r, int steps, double lr, int count,
                                Rng& rng) {
    MirrorResult res{embed_image(params, x_r, steps, lr, rng), embed_image(params, flip_horizontal(x_r), steps, lr, rng),
                     {}};
    for (const LatentPoint& z : interpolate(res.embed_a.z_r, res.embed_b.z_r, count)) {
        Tensor img = generate(params, to_tensor(z), 0.0);
        res.frames.push_back(reshape(img, {img.dim(1), img.dim(2), img.dim(3)}));
    }
    return res;
}

}  // namespace began
