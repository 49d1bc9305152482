#pragma once

// Finite-difference gradient checking against the tape: central differences
// at 64-bit with step 1e-5, relative error floored at 1e-3 magnitude.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "began/engine.hpp"
#include "began/latent.hpp"
#include "began/nn.hpp"
#include "began/rng.hpp"
#include "began/tensor.hpp"

namespace testutil {

using began::ArchConfig;
using began::ModelParams;
using began::Rng;
using began::Shape;
using began::Tape;
using began::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<began::real> v(static_cast<size_t>(began::shape_numel(shape)));
    for (auto& x : v) x = static_cast<began::real>(rng.uniform(lo, hi));
    return Tensor(shape, std::move(v));
}

// random values with |x| >= margin (keeps FD away from the |.| kink)
inline Tensor random_tensor_away_from_zero(const Shape& shape, Rng& rng, double margin = 0.2) {
    std::vector<began::real> v(static_cast<size_t>(began::shape_numel(shape)));
    for (auto& x : v) {
        double m = rng.uniform(margin, 1.0);
        x = static_cast<began::real>(rng.uniform() < 0.5 ? -m : m);
    }
    return Tensor(shape, std::move(v));
}

// Scalar loss over a set of input tensors. With a tape the inputs arrive as
// leaves; without one only the forward value is used.
using LossBuilder = std::function<Tensor(Tape*, const std::vector<Tensor>&)>;

struct GradCheckResult {
    double max_rel = 0.0;
    long coords = 0;
};

inline GradCheckResult finite_diff_check(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                         double step = 1e-5) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    Tensor loss = build(&tape, leaves);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const Tensor& l : leaves) analytic.push_back(tape.grad(l));

    GradCheckResult res;
    std::vector<Tensor> probe = inputs;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const auto& base = inputs[i].data();
        for (size_t j = 0; j < base.size(); ++j) {
            std::vector<began::real> v(base);
            v[j] = static_cast<began::real>(static_cast<double>(base[j]) + step);
            probe[i] = Tensor(inputs[i].shape(), v);
            const double fp = build(nullptr, probe).value();
            v[j] = static_cast<began::real>(static_cast<double>(base[j]) - step);
            probe[i] = Tensor(inputs[i].shape(), std::move(v));
            const double fm = build(nullptr, probe).value();
            const double fd = (fp - fm) / (2.0 * step);
            const double a = analytic[i][j];
            const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-3});
            res.max_rel = std::max(res.max_rel, rel);
            res.coords += 1;
        }
        probe[i] = inputs[i];
    }
    return res;
}

// loss = mean((f - c)^2) gives every output coordinate a random weight
inline Tensor weighted_scalarize(const Tensor& out, const Tensor& anchor) {
    return began::mean_all(began::square(began::subtract(out, anchor)));
}

struct SuiteResult {
    double max_rel = 0.0;
    long coords = 0;
    int cases = 0;

    void merge(const GradCheckResult& r) {
        max_rel = std::max(max_rel, r.max_rel);
        coords += r.coords;
        cases += 1;
    }
};

// Every differentiable primitive on `shapes_per_op` random small shapes.
inline SuiteResult op_gradient_suite(uint64_t seed, int shapes_per_op) {
    Rng rng(seed);
    SuiteResult suite;

    auto rnd_dim = [&](int lo, int hi) { return lo + static_cast<int>(rng.raw() % static_cast<uint64_t>(hi - lo + 1)); };
    auto image_shape = [&]() { return Shape{rnd_dim(1, 2), rnd_dim(1, 3), 2 * rnd_dim(1, 3), 2 * rnd_dim(1, 3)}; };

    for (int it = 0; it < shapes_per_op; ++it) {
        {  // conv2d_3x3 w.r.t. input, weights, bias
            Shape in = image_shape();
            const int cout = rnd_dim(1, 3);
            Tensor anchor = random_tensor({in[0], cout, in[2], in[3]}, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    return weighted_scalarize(began::conv2d_3x3(v[0], v[1], v[2]), anchor);
                },
                {random_tensor(in, rng), random_tensor({cout, in[1], 3, 3}, rng), random_tensor({cout}, rng)}));
        }
        {  // elu
            Shape in = image_shape();
            Tensor anchor = random_tensor(in, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) { return weighted_scalarize(began::elu(v[0]), anchor); },
                {random_tensor(in, rng, -2.0, 2.0)}));
        }
        {  // subsample2
            Shape in = image_shape();
            Tensor anchor = random_tensor({in[0], in[1], in[2] / 2, in[3] / 2}, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    return weighted_scalarize(began::subsample2(v[0]), anchor);
                },
                {random_tensor(in, rng)}));
        }
        {  // upsample_nearest2
            Shape in = image_shape();
            Tensor anchor = random_tensor({in[0], in[1], 2 * in[2], 2 * in[3]}, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    return weighted_scalarize(began::upsample_nearest2(v[0]), anchor);
                },
                {random_tensor(in, rng)}));
        }
        {  // fully_connected w.r.t. input, weights, bias
            const int b = rnd_dim(1, 3), nin = rnd_dim(1, 6), nout = rnd_dim(1, 5);
            Tensor anchor = random_tensor({b, nout}, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    return weighted_scalarize(began::fully_connected(v[0], v[1], v[2]), anchor);
                },
                {random_tensor({b, nin}, rng), random_tensor({nout, nin}, rng), random_tensor({nout}, rng)}));
        }
        {  // add / subtract / scalar_mul
            Shape in{rnd_dim(1, 4), rnd_dim(1, 4)};
            Tensor anchor = random_tensor(in, rng);
            const double c = rng.uniform(-2.0, 2.0);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    return weighted_scalarize(began::add(v[0], began::scalar_mul(began::subtract(v[1], v[0]), c)),
                                              anchor);
                },
                {random_tensor(in, rng), random_tensor(in, rng)}));
        }
        {  // abs, inputs kept away from the kink
            Shape in{rnd_dim(1, 4), rnd_dim(1, 4)};
            Tensor anchor = random_tensor(in, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) { return weighted_scalarize(began::abs(v[0]), anchor); },
                {random_tensor_away_from_zero(in, rng)}));
        }
        {  // square
            Shape in{rnd_dim(1, 4), rnd_dim(1, 4)};
            Tensor anchor = random_tensor(in, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) { return weighted_scalarize(began::square(v[0]), anchor); },
                {random_tensor(in, rng)}));
        }
        {  // mean over a random axis subset
            Shape in{rnd_dim(1, 3), rnd_dim(1, 3), rnd_dim(1, 3)};
            std::vector<int> axes;
            for (int a = 0; a < 3; ++a) {
                if (rng.raw() % 2 == 0) axes.push_back(a);
            }
            if (axes.empty()) axes.push_back(static_cast<int>(rng.raw() % 3));
            Shape out_shape;
            for (int a = 0; a < 3; ++a) {
                if (std::find(axes.begin(), axes.end(), a) == axes.end()) out_shape.push_back(in[static_cast<size_t>(a)]);
            }
            Tensor anchor = random_tensor(out_shape, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) { return weighted_scalarize(began::mean(v[0], axes), anchor); },
                {random_tensor(in, rng)}));
        }
        {  // concat_channels
            Shape a = image_shape();
            Shape b = a;
            b[1] = rnd_dim(1, 3);
            Tensor anchor = random_tensor({a[0], a[1] + b[1], a[2], a[3]}, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    return weighted_scalarize(began::concat_channels(v[0], v[1]), anchor);
                },
                {random_tensor(a, rng), random_tensor(b, rng)}));
        }
        {  // reshape
            const int b = rnd_dim(1, 3), c = rnd_dim(1, 3);
            Tensor anchor = random_tensor({b * c}, rng);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    return weighted_scalarize(began::reshape(v[0], {b * c}), anchor);
                },
                {random_tensor({b, c}, rng)}));
        }
    }
    return suite;
}

// Full L_D and L_G composites on tiny random models (random eta, carry,
// skip/residual flags); leaves are the updated network's parameters.
inline SuiteResult composite_gradient_suite(uint64_t seed, int configs) {
    Rng rng(seed);
    SuiteResult suite;

    for (int it = 0; it < configs; ++it) {
        ArchConfig arch;
        arch.image_size = 16;
        arch.channels = 1;
        arch.base_filters = 1 + static_cast<int>(rng.raw() % 2);
        arch.repeats_per_block = 1;
        arch.n_h = 2 + static_cast<int>(rng.raw() % 3);
        arch.n_z = 2 + static_cast<int>(rng.raw() % 3);
        arch.use_skip_connections = (rng.raw() % 2) == 0;
        arch.use_vanishing_residuals = (rng.raw() % 2) == 0;

        const int eta = 1 + static_cast<int>(rng.raw() % 2);
        const double carry = arch.use_vanishing_residuals ? 0.5 : 0.0;
        const double k = 0.35;
        const int batch = 1;

        ModelParams params = began::build_models(arch, rng.raw());
        Tensor x = random_tensor({batch, arch.channels, arch.image_size, arch.image_size}, rng);
        Tensor z_d = began::sample_z(rng, batch, arch.n_z);
        Tensor z_g = began::sample_z(rng, batch, arch.n_z);
        // fixed generator output for the L_D path (detached from theta_G)
        Tensor g_d = began::generate(params, z_d, carry);

        {  // L_D w.r.t. all discriminator parameters
            std::vector<Tensor> disc;
            for (Tensor* t : began::discriminator_tensors(params)) disc.push_back(*t);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    ModelParams p = params;
                    size_t i = 0;
                    for (Tensor* t : began::discriminator_tensors(p)) *t = v[i++];
                    Tensor lx = began::autoencoder_loss(x, began::discriminate(arch, p.encoder, p.decoder, x, carry), eta);
                    Tensor lf =
                        began::autoencoder_loss(g_d, began::discriminate(arch, p.encoder, p.decoder, g_d, carry), eta);
                    return began::discriminator_loss(lx, lf, k);
                },
                disc));
        }
        {  // L_G w.r.t. all generator parameters (gradient flows through frozen D)
            std::vector<Tensor> gen;
            for (Tensor* t : began::generator_tensors(params)) gen.push_back(*t);
            suite.merge(finite_diff_check(
                [&](Tape*, const std::vector<Tensor>& v) {
                    ModelParams p = params;
                    size_t i = 0;
                    for (Tensor* t : began::generator_tensors(p)) *t = v[i++];
                    Tensor g = began::generate(arch, p.generator, z_g, carry);
                    Tensor rec = began::discriminate(arch, params.encoder, params.decoder, g, carry);
                    return began::generator_loss(began::autoencoder_loss(g, rec, eta));
                },
                gen));
        }
    }
    return suite;
}

}  // namespace testutil
