#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "began/engine.hpp"
#include "began/latent.hpp"
#include "began/nn.hpp"
#include "began/rng.hpp"
#include "gradcheck.hpp"

using namespace began;

namespace {

ArchConfig small_arch(int image_size = 16, int n = 4, int n_h = 8, int n_z = 8) {
    ArchConfig a;
    a.image_size = image_size;
    a.channels = 1;
    a.base_filters = n;
    a.repeats_per_block = 2;
    a.n_h = n_h;
    a.n_z = n_z;
    return a;
}

bool same_values(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.size(); ++i) {
        if (a.data()[static_cast<size_t>(i)] != b.data()[static_cast<size_t>(i)]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("encoder filters grow linearly per resolution level") {
    ArchConfig a = small_arch(32, 8, 16, 16);
    ModelParams p = build_models(a, 1);
    REQUIRE(p.encoder.blocks.size() == 3);  // 32, 16, 8
    CHECK(p.encoder.blocks[0][0].weight.shape() == Shape{8, 1, 3, 3});
    CHECK(p.encoder.blocks[0][1].weight.shape() == Shape{8, 8, 3, 3});
    CHECK(p.encoder.blocks[1][0].weight.shape() == Shape{16, 8, 3, 3});
    CHECK(p.encoder.blocks[1][1].weight.shape() == Shape{16, 16, 3, 3});
    CHECK(p.encoder.blocks[2][0].weight.shape() == Shape{24, 16, 3, 3});
    CHECK(p.encoder.blocks[2][1].weight.shape() == Shape{24, 24, 3, 3});
    CHECK(p.encoder.to_hidden.weight.shape() == Shape{16, 8 * 8 * 24});
}

TEST_CASE("image_size 16 yields the minimum two resolution levels") {
    ArchConfig a = small_arch(16, 4);
    CHECK(a.levels() == 2);
    ModelParams p = build_models(a, 1);
    CHECK(p.encoder.blocks.size() == 2);
    CHECK(p.encoder.to_hidden.weight.shape() == Shape{8, 8 * 8 * 2 * 4});
}

TEST_CASE("builds with the same seed are bit-identical") {
    ArchConfig a = small_arch();
    ModelParams p1 = build_models(a, 42);
    ModelParams p2 = build_models(a, 42);
    auto n1 = named_params(p1);
    auto n2 = named_params(p2);
    REQUIRE(n1.size() == n2.size());
    for (size_t i = 0; i < n1.size(); ++i) {
        CHECK(n1[i].first == n2[i].first);
        CHECK(same_values(*n1[i].second, *n2[i].second));
    }
    ModelParams p3 = build_models(a, 43);
    CHECK_FALSE(same_values(*named_params(p3)[0].second, *n1[0].second));
}

TEST_CASE("invalid image sizes are rejected") {
    ArchConfig a = small_arch();
    a.image_size = 24;
    CHECK_THROWS_AS(build_models(a, 1), std::invalid_argument);
    a.image_size = 8;
    CHECK_THROWS_AS(build_models(a, 1), std::invalid_argument);
}

TEST_CASE("discriminate returns a reconstruction of the input shape") {
    ArchConfig a = small_arch();
    ModelParams p = build_models(a, 7);
    Rng rng(1);
    Tensor x = testutil::random_tensor({3, 1, 16, 16}, rng);
    Tensor y = discriminate(p, x, 0.0);
    CHECK(y.shape() == x.shape());
    CHECK_THROWS_AS(discriminate(p, Tensor::zeros({1, 1, 8, 8}), 0.0), std::invalid_argument);
}

TEST_CASE("with carry=1 residual-wrapped convolutions are bypassed") {
    ArchConfig a = small_arch();
    a.use_vanishing_residuals = true;
    ModelParams p = build_models(a, 7);
    Rng rng(2);
    Tensor x = testutil::random_tensor({2, 1, 16, 16}, rng);
    Tensor base = discriminate(p, x, 1.0);

    // every shape-preserving conv is residual-wrapped
    ModelParams q = p;
    q.encoder.blocks[0][1].weight = testutil::random_tensor(q.encoder.blocks[0][1].weight.shape(), rng);
    q.encoder.blocks[1][1].weight = testutil::random_tensor(q.encoder.blocks[1][1].weight.shape(), rng);
    q.decoder.blocks[0][0].weight = testutil::random_tensor(q.decoder.blocks[0][0].weight.shape(), rng);
    q.decoder.blocks[0][1].weight = testutil::random_tensor(q.decoder.blocks[0][1].weight.shape(), rng);
    q.decoder.blocks[1][0].weight = testutil::random_tensor(q.decoder.blocks[1][0].weight.shape(), rng);
    q.decoder.blocks[1][1].weight = testutil::random_tensor(q.decoder.blocks[1][1].weight.shape(), rng);
    Tensor perturbed = discriminate(q, x, 1.0);
    CHECK(same_values(base, perturbed));

    // at carry=0 the same perturbation must matter
    CHECK_FALSE(same_values(discriminate(p, x, 0.0), discriminate(q, x, 0.0)));
}

TEST_CASE("gradient of the reconstruction loss w.r.t. an encoder weight passes finite differences") {
    ArchConfig a = small_arch(16, 2, 3, 3);
    a.repeats_per_block = 1;
    ModelParams p = build_models(a, 9);
    Rng rng(3);
    Tensor x = testutil::random_tensor({1, 1, 16, 16}, rng);
    auto build = [&](Tape*, const std::vector<Tensor>& v) {
        ModelParams q = p;
        q.encoder.blocks[0][0].weight = v[0];
        return autoencoder_loss(x, discriminate(q, x, 0.0), 1);
    };
    auto res = testutil::finite_diff_check(build, {p.encoder.blocks[0][0].weight});
    CHECK(res.max_rel <= 1e-4);
}

TEST_CASE("generate produces image-shaped deterministic finite output") {
    ArchConfig a = small_arch();
    ModelParams p = build_models(a, 5);
    Rng rng(4);
    Tensor z = sample_z(rng, 2, a.n_z);
    Tensor img1 = generate(p, z, 0.0);
    Tensor img2 = generate(p, z, 0.0);
    CHECK(img1.shape() == Shape{2, 1, 16, 16});
    CHECK(same_values(img1, img2));

    Tensor z0 = Tensor::zeros({1, a.n_z});
    Tensor img0 = generate(p, z0, 0.0);
    for (real v : img0.data()) CHECK(std::isfinite(static_cast<double>(v)));

    Tensor bad = Tensor::full({1, a.n_z}, 1.5);
    CHECK_THROWS_AS(generate(p, bad, 0.0), std::invalid_argument);
}

TEST_CASE("residual_mix is the exact convex combination") {
    Tensor in = Tensor::full({2, 2}, 4.0);
    Tensor out = Tensor::zeros({2, 2});
    CHECK(same_values(residual_mix(in, out, 1.0), in));
    CHECK(same_values(residual_mix(in, out, 0.0), out));
    CHECK(residual_mix(in, out, 0.25).at({0, 0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(residual_mix(in, Tensor::zeros({2, 3}), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(residual_mix(in, out, 1.5), std::invalid_argument);
}

TEST_CASE("carry_schedule anneals linearly from one to zero") {
    CHECK(carry_schedule(0, 16000) == 1.0);
    CHECK(carry_schedule(16000, 16000) == 0.0);
    CHECK(carry_schedule(8000, 16000) == 0.5);
    CHECK(carry_schedule(20000, 16000) == 0.0);
    CHECK(carry_schedule(5, 0) == 0.0);
}

TEST_CASE("skip_concat upsamples h0 to the layer size and appends channels") {
    Rng rng(6);
    Tensor h0 = testutil::random_tensor({1, 3, 8, 8}, rng);

    Tensor t8 = testutil::random_tensor({1, 2, 8, 8}, rng);
    Tensor c8 = skip_concat(h0, t8);
    CHECK(c8.shape() == Shape{1, 5, 8, 8});
    CHECK(c8.at({0, 2, 3, 3}) == h0.at({0, 0, 3, 3}));

    Tensor t16 = testutil::random_tensor({1, 2, 16, 16}, rng);
    Tensor c16 = skip_concat(h0, t16);
    CHECK(c16.shape() == Shape{1, 5, 16, 16});
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) CHECK(c16.at({0, 2, 6 + y, 6 + x}) == h0.at({0, 0, 3, 3}));

    Tensor ca = skip_concat(Tensor::full({1, 1, 8, 8}, 0.33), t16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) CHECK(ca.at({0, 2, y, x}) == doctest::Approx(0.33));

    CHECK_THROWS_AS(skip_concat(h0, Tensor::zeros({1, 2, 12, 12})), std::invalid_argument);
}

TEST_CASE("generator conv stack mirrors the decoder shapes exactly") {
    ArchConfig a = small_arch(32, 4, 16, 8);  // N_h != N_z: projection widths differ
    ModelParams p = build_models(a, 11);
    REQUIRE(p.generator.blocks.size() == p.decoder.blocks.size());
    for (size_t lv = 0; lv < p.decoder.blocks.size(); ++lv) {
        REQUIRE(p.generator.blocks[lv].size() == p.decoder.blocks[lv].size());
        for (size_t r = 0; r < p.decoder.blocks[lv].size(); ++r) {
            CHECK(p.generator.blocks[lv][r].weight.shape() == p.decoder.blocks[lv][r].weight.shape());
            CHECK(p.generator.blocks[lv][r].bias.shape() == p.decoder.blocks[lv][r].bias.shape());
        }
    }
    CHECK(p.generator.to_image.weight.shape() == p.decoder.to_image.weight.shape());
    CHECK(p.generator.from_code.weight.shape() == Shape{8 * 8 * 4, a.n_z});
    CHECK(p.decoder.from_code.weight.shape() == Shape{8 * 8 * 4, a.n_h});
}

TEST_CASE("final encoder feature map is 8x8 for every supported size") {
    for (int size : {16, 32, 64}) {
        ArchConfig a = small_arch(size, 2, 4, 4);
        a.repeats_per_block = 1;
        ModelParams p = build_models(a, 3);
        const int last_filters = a.levels() * a.base_filters;
        CHECK(p.encoder.to_hidden.weight.dim(1) == 8 * 8 * last_filters);
        Tensor x = Tensor::zeros({1, 1, size, size});
        CHECK(discriminate(p, x, 0.0).shape() == Shape{1, 1, size, size});
    }
}

TEST_CASE("skip connections change only decoder input channel counts") {
    ArchConfig plain = small_arch(32, 4);
    ArchConfig skips = plain;
    skips.use_skip_connections = true;
    ModelParams p0 = build_models(plain, 13);
    ModelParams p1 = build_models(skips, 13);
    // first conv of each upsampled level widens, everything else matches
    for (size_t lv = 0; lv < p0.decoder.blocks.size(); ++lv) {
        for (size_t r = 0; r < p0.decoder.blocks[lv].size(); ++r) {
            const Shape s0 = p0.decoder.blocks[lv][r].weight.shape();
            const Shape s1 = p1.decoder.blocks[lv][r].weight.shape();
            if (lv > 0 && r == 0) {
                CHECK(s1 == Shape{s0[0], 2 * s0[1], 3, 3});
            } else {
                CHECK(s1 == s0);
            }
        }
    }
    Rng rng(8);
    Tensor z = sample_z(rng, 2, plain.n_z);
    CHECK(generate(p1, z, 0.0).shape() == generate(p0, z, 0.0).shape());
}
