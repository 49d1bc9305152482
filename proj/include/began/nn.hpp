#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "began/tensor.hpp"

namespace began {

// Auto-encoder / generator layout. Resolution halves per encoder block down
// to a fixed 8x8 bottleneck; the decoder mirrors upward at constant width.
struct ArchConfig {
    int image_size = 16;   // power of two, >= 16
    int channels = 1;
    int base_filters = 8;  // n: encoder block i uses (i+1)*n filters, decoder uses n
    int repeats_per_block = 2;
    int n_h = 64;          // hidden state dimension
    int n_z = 64;          // latent dimension
    bool use_skip_connections = false;
    bool use_vanishing_residuals = false;
    int carry_decay_steps = 16000;

    // resolution levels between image_size and 8 inclusive
    int levels() const;
    void validate() const;

    bool operator==(const ArchConfig&) const = default;
};

struct ConvLayer {
    Tensor weight;  // [cout,cin,3,3]
    Tensor bias;    // [cout]
};

struct DenseLayer {
    Tensor weight;  // [nout,nin]
    Tensor bias;    // [nout]
};

struct EncoderParams {
    std::vector<std::vector<ConvLayer>> blocks;  // blocks[level][repeat]
    DenseLayer to_hidden;                        // flattened 8x8 map -> N_h
};

// Shared by the discriminator decoder and the generator: only the projection
// input width differs (N_h vs N_z); the conv stacks are shape-identical.
struct DecoderParams {
    DenseLayer from_code;                        // code -> 8*8*n
    std::vector<std::vector<ConvLayer>> blocks;  // blocks[level][repeat], 8x8 upward
    ConvLayer to_image;                          // n -> C, no activation
};

struct ModelParams {
    ArchConfig arch;
    EncoderParams encoder;
    DecoderParams decoder;    // encoder+decoder together form the discriminator
    DecoderParams generator;  // decoder-shaped, separate values
};

// Deterministic: two builds with the same seed are bit-identical.
ModelParams build_models(const ArchConfig& config, uint64_t rng_seed);

// carry * layer_in + (1-carry) * layer_out, shapes equal, carry in [0,1]
Tensor residual_mix(const Tensor& layer_in, const Tensor& layer_out, double carry);

// linear anneal 1 -> 0 over decay_steps; 0 everywhere if decay_steps == 0
double carry_schedule(long step, long decay_steps);

// h0 [b,n,8,8] upsampled (nearest-neighbor, repeatedly) to the spatial size
// of layer_out and appended on the channel axis.
Tensor skip_concat(const Tensor& h0, const Tensor& layer_out);

// Forward passes. Parameter structs may hold plain tensors or tape leaves;
// gradients flow to whatever is tracked.
Tensor encode(const ArchConfig& arch, const EncoderParams& enc, const Tensor& x, double carry);
Tensor decode(const ArchConfig& arch, const DecoderParams& dec, const Tensor& code, double carry);

Tensor discriminate(const ArchConfig& arch, const EncoderParams& enc, const DecoderParams& dec, const Tensor& x,
                    double carry);
Tensor discriminate(const ModelParams& params, const Tensor& x, double carry);

// z in [-1,1]^{N_z}; out-of-range values are rejected.
Tensor generate(const ArchConfig& arch, const DecoderParams& gen, const Tensor& z, double carry);
Tensor generate(const ModelParams& params, const Tensor& z, double carry);

// Fixed-order traversal used by the optimizer, checkpointing and tracking.
using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;
using ConstParamVisitor = std::function<void(const std::string& name, const Tensor& tensor)>;

void visit_params(EncoderParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(DecoderParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(const EncoderParams& p, const std::string& prefix, const ConstParamVisitor& fn);
void visit_params(const DecoderParams& p, const std::string& prefix, const ConstParamVisitor& fn);

// discriminator = encoder then decoder; generator separate
std::vector<Tensor*> discriminator_tensors(ModelParams& params);
std::vector<Tensor*> generator_tensors(ModelParams& params);
std::vector<std::pair<std::string, const Tensor*>> named_params(const ModelParams& params);

// leaf-tracked copies (cheap: storage is shared)
EncoderParams track(Tape& tape, const EncoderParams& p);
DecoderParams track(Tape& tape, const DecoderParams& p);

}  // namespace began
