#include "began/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "began/rng.hpp"

namespace began {

int ArchConfig::levels() const {
    int n = 1;
    for (int s = image_size; s > 8; s /= 2) ++n;
    return n;
}

void ArchConfig::validate() const {
    auto power_of_two = [](int v) { return v > 0 && (v & (v - 1)) == 0; };
    if (image_size < 16 || !power_of_two(image_size)) {
        throw std::invalid_argument("image_size must be a power of two >= 16, got " + std::to_string(image_size));
    }
    if (channels < 1) throw std::invalid_argument("channels must be >= 1");
    if (base_filters < 1) throw std::invalid_argument("base_filters must be >= 1");
    if (repeats_per_block < 1) throw std::invalid_argument("repeats_per_block must be >= 1");
    if (n_h < 1) throw std::invalid_argument("n_h must be >= 1");
    if (n_z < 1) throw std::invalid_argument("n_z must be >= 1");
    if (carry_decay_steps < 0) throw std::invalid_argument("carry_decay_steps must be >= 0");
}

namespace {

Tensor init_tensor(Shape shape, double fan_in, Rng& rng) {
    std::vector<real> v(static_cast<size_t>(shape_numel(shape)));
    const double scale = 1.0 / std::sqrt(fan_in);
    for (auto& x : v) x = static_cast<real>(rng.normal(0.0, scale));
    return Tensor(std::move(shape), std::move(v));
}

ConvLayer init_conv(int cout, int cin, Rng& rng) {
    return ConvLayer{init_tensor({cout, cin, 3, 3}, 9.0 * cin, rng), Tensor::zeros({cout})};
}

DenseLayer init_dense(int nout, int nin, Rng& rng) {
    return DenseLayer{init_tensor({nout, nin}, static_cast<double>(nin), rng), Tensor::zeros({nout})};
}

// Decoder conv-stack input widths; the first conv of an upsampled level sees
// 2n channels when skip connections are enabled.
int decoder_in_channels(const ArchConfig& arch, int level, int repeat) {
    if (repeat > 0 || level == 0) return arch.base_filters;
    return arch.use_skip_connections ? 2 * arch.base_filters : arch.base_filters;
}

DecoderParams build_decoder(const ArchConfig& arch, int code_dim, Rng& rng) {
    DecoderParams dec;
    const int n = arch.base_filters;
    dec.from_code = init_dense(8 * 8 * n, code_dim, rng);
    dec.blocks.resize(static_cast<size_t>(arch.levels()));
    for (int lv = 0; lv < arch.levels(); ++lv) {
        for (int r = 0; r < arch.repeats_per_block; ++r) {
            dec.blocks[static_cast<size_t>(lv)].push_back(init_conv(n, decoder_in_channels(arch, lv, r), rng));
        }
    }
    dec.to_image = init_conv(arch.channels, n, rng);
    return dec;
}

}  // namespace

ModelParams build_models(const ArchConfig& config, uint64_t rng_seed) {
    config.validate();
    Rng rng(rng_seed);

    ModelParams params;
    params.arch = config;

    const int n = config.base_filters;
    params.encoder.blocks.resize(static_cast<size_t>(config.levels()));
    for (int i = 0; i < config.levels(); ++i) {
        const int filters = (i + 1) * n;
        for (int r = 0; r < config.repeats_per_block; ++r) {
            const int cin = (r > 0) ? filters : (i == 0 ? config.channels : i * n);
            params.encoder.blocks[static_cast<size_t>(i)].push_back(init_conv(filters, cin, rng));
        }
    }
    params.encoder.to_hidden = init_dense(config.n_h, 8 * 8 * config.levels() * n, rng);

    params.decoder = build_decoder(config, config.n_h, rng);
    params.generator = build_decoder(config, config.n_z, rng);
    return params;
}

Tensor residual_mix(const Tensor& layer_in, const Tensor& layer_out, double carry) {
    if (layer_in.shape() != layer_out.shape()) {
        throw std::invalid_argument("residual_mix: shape mismatch " + shape_str(layer_in.shape()) + " vs " +
                                    shape_str(layer_out.shape()));
    }
    if (carry < 0.0 || carry > 1.0) {
        throw std::invalid_argument("residual_mix: carry must be in [0,1], got " + std::to_string(carry));
    }
    return add(scalar_mul(layer_in, carry), scalar_mul(layer_out, 1.0 - carry));
}

double carry_schedule(long step, long decay_steps) {
    if (step < 0) throw std::invalid_argument("carry_schedule: negative step");
    if (decay_steps <= 0) return 0.0;
    double c = 1.0 - static_cast<double>(step) / static_cast<double>(decay_steps);
    return c < 0.0 ? 0.0 : c;
}

Tensor skip_concat(const Tensor& h0, const Tensor& layer_out) {
    if (h0.ndim() != 4 || h0.dim(2) != 8 || h0.dim(3) != 8) {
        throw std::invalid_argument("skip_concat: h0 must be [b,n,8,8], got " + shape_str(h0.shape()));
    }
    if (layer_out.ndim() != 4 || layer_out.dim(2) != layer_out.dim(3)) {
        throw std::invalid_argument("skip_concat: layer_out must be square [b,c,s,s]");
    }
    int s = layer_out.dim(2);
    int cur = 8;
    Tensor up = h0;
    while (cur < s) {
        up = upsample_nearest2(up);
        cur *= 2;
    }
    if (cur != s) {
        throw std::invalid_argument("skip_concat: spatial size " + std::to_string(s) +
                                    " is not a power-of-two multiple of 8");
    }
    return concat_channels(layer_out, up);
}

namespace {

// conv + ELU, residual-mixed when the layer preserves its shape
Tensor conv_layer_forward(const Tensor& in, const ConvLayer& layer, const ArchConfig& arch, double carry) {
    Tensor out = elu(conv2d_3x3(in, layer.weight, layer.bias));
    const bool same_shape = layer.weight.dim(0) == layer.weight.dim(1);
    if (arch.use_vanishing_residuals && same_shape && carry > 0.0) {
        return residual_mix(in, out, carry);
    }
    return out;
}

}  // namespace

Tensor encode(const ArchConfig& arch, const EncoderParams& enc, const Tensor& x, double carry) {
    if (x.ndim() != 4 || x.dim(1) != arch.channels || x.dim(2) != arch.image_size || x.dim(3) != arch.image_size) {
        throw std::invalid_argument("encode: expected [b," + std::to_string(arch.channels) + "," +
                                    std::to_string(arch.image_size) + "," + std::to_string(arch.image_size) +
                                    "], got " + shape_str(x.shape()));
    }
    Tensor t = x;
    const int levels = arch.levels();
    for (int i = 0; i < levels; ++i) {
        for (const ConvLayer& layer : enc.blocks[static_cast<size_t>(i)]) {
            t = conv_layer_forward(t, layer, arch, carry);
        }
        if (i + 1 < levels) t = subsample2(t);
    }
    t = reshape(t, {t.dim(0), t.dim(1) * t.dim(2) * t.dim(3)});
    return fully_connected(t, enc.to_hidden.weight, enc.to_hidden.bias);
}

Tensor decode(const ArchConfig& arch, const DecoderParams& dec, const Tensor& code, double carry) {
    if (code.ndim() != 2) {
        throw std::invalid_argument("decode: code must be [b,dim], got " + shape_str(code.shape()));
    }
    const int n = arch.base_filters;
    Tensor t = fully_connected(code, dec.from_code.weight, dec.from_code.bias);
    t = reshape(t, {t.dim(0), n, 8, 8});
    const Tensor h0 = t;
    for (int lv = 0; lv < arch.levels(); ++lv) {
        if (lv > 0) {
            t = upsample_nearest2(t);
            if (arch.use_skip_connections) t = skip_concat(h0, t);
        }
        for (const ConvLayer& layer : dec.blocks[static_cast<size_t>(lv)]) {
            t = conv_layer_forward(t, layer, arch, carry);
        }
    }
    return conv2d_3x3(t, dec.to_image.weight, dec.to_image.bias);
}

Tensor discriminate(const ArchConfig& arch, const EncoderParams& enc, const DecoderParams& dec, const Tensor& x,
                    double carry) {
    return decode(arch, dec, encode(arch, enc, x, carry), carry);
}

Tensor discriminate(const ModelParams& params, const Tensor& x, double carry) {
    return discriminate(params.arch, params.encoder, params.decoder, x, carry);
}

Tensor generate(const ArchConfig& arch, const DecoderParams& gen, const Tensor& z, double carry) {
    if (z.ndim() != 2 || z.dim(1) != arch.n_z) {
        throw std::invalid_argument("generate: z must be [b," + std::to_string(arch.n_z) + "], got " +
                                    shape_str(z.shape()));
    }
    for (real v : z.data()) {
        if (v < real(-1) || v > real(1)) {
            throw std::invalid_argument("generate: z component out of [-1,1]");
        }
    }
    return decode(arch, gen, z, carry);
}

Tensor generate(const ModelParams& params, const Tensor& z, double carry) {
    return generate(params.arch, params.generator, z, carry);
}

namespace {

template <typename Enc, typename Fn>
void visit_encoder(Enc& p, const std::string& prefix, const Fn& fn) {
    for (size_t i = 0; i < p.blocks.size(); ++i) {
        for (size_t r = 0; r < p.blocks[i].size(); ++r) {
            const std::string base = prefix + ".b" + std::to_string(i) + ".c" + std::to_string(r);
            fn(base + ".w", p.blocks[i][r].weight);
            fn(base + ".b", p.blocks[i][r].bias);
        }
    }
    fn(prefix + ".fc.w", p.to_hidden.weight);
    fn(prefix + ".fc.b", p.to_hidden.bias);
}

template <typename Dec, typename Fn>
void visit_decoder(Dec& p, const std::string& prefix, const Fn& fn) {
    fn(prefix + ".fc.w", p.from_code.weight);
    fn(prefix + ".fc.b", p.from_code.bias);
    for (size_t i = 0; i < p.blocks.size(); ++i) {
        for (size_t r = 0; r < p.blocks[i].size(); ++r) {
            const std::string base = prefix + ".b" + std::to_string(i) + ".c" + std::to_string(r);
            fn(base + ".w", p.blocks[i][r].weight);
            fn(base + ".b", p.blocks[i][r].bias);
        }
    }
    fn(prefix + ".out.w", p.to_image.weight);
    fn(prefix + ".out.b", p.to_image.bias);
}

}  // namespace

void visit_params(EncoderParams& p, const std::string& prefix, const ParamVisitor& fn) {
    visit_encoder(p, prefix, fn);
}
void visit_params(DecoderParams& p, const std::string& prefix, const ParamVisitor& fn) {
    visit_decoder(p, prefix, fn);
}
void visit_params(const EncoderParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
    visit_encoder(p, prefix, fn);
}
void visit_params(const DecoderParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
    visit_decoder(p, prefix, fn);
}

std::vector<Tensor*> discriminator_tensors(ModelParams& params) {
    std::vector<Tensor*> out;
    visit_params(params.encoder, "d.enc", [&](const std::string&, Tensor& t) { out.push_back(&t); });
    visit_params(params.decoder, "d.dec", [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<Tensor*> generator_tensors(ModelParams& params) {
    std::vector<Tensor*> out;
    visit_params(params.generator, "g", [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> named_params(const ModelParams& params) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    visit_params(params.encoder, "d.enc", [&](const std::string& n, const Tensor& t) { out.emplace_back(n, &t); });
    visit_params(params.decoder, "d.dec", [&](const std::string& n, const Tensor& t) { out.emplace_back(n, &t); });
    visit_params(params.generator, "g", [&](const std::string& n, const Tensor& t) { out.emplace_back(n, &t); });
    return out;
}

EncoderParams track(Tape& tape, const EncoderParams& p) {
    EncoderParams out = p;
    visit_params(out, "", [&](const std::string&, Tensor& t) { t = tape.leaf(t); });
    return out;
}

DecoderParams track(Tape& tape, const DecoderParams& p) {
    DecoderParams out = p;
    visit_params(out, "", [&](const std::string&, Tensor& t) { t = tape.leaf(t); });
    return out;
}

}  // namespace began
