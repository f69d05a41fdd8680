#pragma once

#include <optional>
#include <string>

#include "affssl/core/image.hpp"
#include "affssl/nn/losses.hpp"
#include "affssl/nn/nn.hpp"

namespace affssl {

enum class Method { kSimclr, kByol, kBarlowTwins };
Method parse_method(const std::string& id);
std::string method_name(Method m);

enum class AffineSource { kEncoder, kProjector };  // f vs g (Table-6 style ablation)

struct EncoderSpec {
    std::string arch = "conv4";  // conv4 runs at desk scale; resnet50 is a
                                 // config-level id for the paper profile
    int64_t dim = 64;            // representation dimension d
    int64_t width = 16;          // base channel count of the conv stack

    void validate() const;
};

struct HeadSpec {
    int64_t hidden = 512;
    int64_t out = 128;
    void validate() const;
};

// Builds the 4-block conv encoder: (conv3x3 relu avgpool2) x3 then a final
// conv + global average pool down to `dim` features.
nn::Net make_encoder(const EncoderSpec& spec);

struct RepresentationBundle {
    Tensor h1, h2;                // encoder outputs
    Tensor z1, z2;                // projector outputs
    std::optional<Tensor> p1, p2; // BYOL predictor outputs
    std::optional<Tensor> h1a, h2a;
    std::optional<Tensor> z1a, z2a;
};

// The full parameter set for one method; target networks only live for BYOL.
struct Networks {
    Method method = Method::kSimclr;
    EncoderSpec encoder_spec;
    HeadSpec head_spec;

    nn::Net encoder;     // f
    nn::Net projector;   // g
    nn::Net predictor;   // q (BYOL only; empty otherwise)
    nn::Net regressor;   // r (affine head; empty when module disabled)
    nn::Net target_encoder;
    nn::Net target_projector;
    nn::EmaState ema;

    bool has_predictor() const { return predictor.num_layers() > 0; }
    bool has_regressor() const { return regressor.num_layers() > 0; }
    bool has_target() const { return target_encoder.num_layers() > 0; }

    std::vector<nn::Param*> trainable_params();
    std::vector<nn::Param*> all_params();  // includes targets (for checkpoints)
    void zero_grads();
    int64_t trainable_param_count();
};

struct NetworksConfig {
    Method method = Method::kSimclr;
    EncoderSpec encoder;
    HeadSpec projector{512, 128};
    HeadSpec predictor{512, 128};
    int64_t regressor_hidden = 512;
    int64_t regressor_out = 6;  // active affine parameter count
    bool with_regressor = true;
    bool regressor_concat_input = false;  // doubles r's input dim
    AffineSource affine_source = AffineSource::kEncoder;
    double ema_tau = 0.99;
};

Networks build_networks(const NetworksConfig& cfg, uint64_t seed);

// Inference-path forward pass (no gradient caches).
RepresentationBundle forward_bundle(Networks& nets, const ImageBatch& x1, const ImageBatch& x2,
                                    const ImageBatch* x1a = nullptr,
                                    const ImageBatch* x2a = nullptr,
                                    AffineSource source = AffineSource::kEncoder);

inline const Tensor& image_to_tensor(const ImageBatch& img) { return img.data; }

}  // namespace affssl
