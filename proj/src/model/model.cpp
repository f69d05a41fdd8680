#include "affssl/model/model.hpp"

#include "affssl/core/errors.hpp"

namespace affssl {

Method parse_method(const std::string& id) {
    if (id == "simclr") return Method::kSimclr;
    if (id == "byol") return Method::kByol;
    if (id == "barlow_twins") return Method::kBarlowTwins;
    throw ConfigError("unknown method id: " + id);
}

std::string method_name(Method m) {
    switch (m) {
        case Method::kSimclr: return "simclr";
        case Method::kByol: return "byol";
        case Method::kBarlowTwins: return "barlow_twins";
    }
    return "?";
}

void EncoderSpec::validate() const {
    if (arch != "conv4" && arch != "resnet50")
        throw ConfigError("EncoderSpec: unknown architecture id: " + arch);
    if (dim <= 0) throw ConfigError("EncoderSpec: representation dim must be > 0");
    if (width <= 0) throw ConfigError("EncoderSpec: width must be > 0");
}

void HeadSpec::validate() const {
    if (hidden <= 0 || out <= 0) throw ConfigError("HeadSpec: dims must be > 0");
}

nn::Net make_encoder(const EncoderSpec& spec) {
    spec.validate();
    if (spec.arch != "conv4")
        throw ConfigError("encoder arch '" + spec.arch +
                          "' is config-expressible but not runnable in this build; use conv4");
    nn::Net net;
    const int64_t w = spec.width;
    net.add(std::make_unique<nn::Conv2d>(3, w, "enc.b1"));
    net.add(std::make_unique<nn::ReLU>());
    net.add(std::make_unique<nn::AvgPool2>());
    net.add(std::make_unique<nn::Conv2d>(w, 2 * w, "enc.b2"));
    net.add(std::make_unique<nn::ReLU>());
    net.add(std::make_unique<nn::AvgPool2>());
    net.add(std::make_unique<nn::Conv2d>(2 * w, 4 * w, "enc.b3"));
    net.add(std::make_unique<nn::ReLU>());
    net.add(std::make_unique<nn::AvgPool2>());
    net.add(std::make_unique<nn::Conv2d>(4 * w, spec.dim, "enc.b4"));
    net.add(std::make_unique<nn::ReLU>());
    net.add(std::make_unique<nn::GlobalAvgPool>());
    return net;
}

std::vector<nn::Param*> Networks::trainable_params() {
    std::vector<nn::Param*> out;
    for (nn::Net* net : {&encoder, &projector, &predictor, &regressor})
        for (nn::Param* p : net->params()) out.push_back(p);
    return out;
}

std::vector<nn::Param*> Networks::all_params() {
    std::vector<nn::Param*> out = trainable_params();
    for (nn::Net* net : {&target_encoder, &target_projector})
        for (nn::Param* p : net->params()) out.push_back(p);
    return out;
}

void Networks::zero_grads() {
    for (nn::Param* p : trainable_params()) p->g.zero();
}

int64_t Networks::trainable_param_count() {
    int64_t n = 0;
    for (nn::Param* p : trainable_params()) n += p->w.numel();
    return n;
}

Networks build_networks(const NetworksConfig& cfg, uint64_t seed) {
    cfg.encoder.validate();
    cfg.projector.validate();
    Networks nets;
    nets.method = cfg.method;
    nets.encoder_spec = cfg.encoder;
    nets.head_spec = cfg.projector;
    nets.ema.tau = cfg.ema_tau;

    nets.encoder = make_encoder(cfg.encoder);
    nets.encoder.init(mix_seed({seed, 1}));
    nets.projector = nn::make_mlp(cfg.encoder.dim, cfg.projector.hidden, cfg.projector.out, "proj");
    nets.projector.init(mix_seed({seed, 2}));

    if (cfg.method == Method::kByol) {
        cfg.predictor.validate();
        nets.predictor =
            nn::make_mlp(cfg.projector.out, cfg.predictor.hidden, cfg.predictor.out, "pred");
        nets.predictor.init(mix_seed({seed, 3}));
        nets.target_encoder = make_encoder(cfg.encoder);
        nets.target_encoder.copy_params_from(nets.encoder);
        nets.target_projector =
            nn::make_mlp(cfg.encoder.dim, cfg.projector.hidden, cfg.projector.out, "tproj");
        nets.target_projector.copy_params_from(nets.projector);
    }

    if (cfg.with_regressor) {
        if (cfg.regressor_out <= 0) throw ConfigError("regressor output dim must be > 0");
        const int64_t base =
            cfg.affine_source == AffineSource::kProjector ? cfg.projector.out : cfg.encoder.dim;
        const int64_t in = cfg.regressor_concat_input ? 2 * base : base;
        nets.regressor = nn::make_mlp(in, cfg.regressor_hidden, cfg.regressor_out, "reg");
        nets.regressor.init(mix_seed({seed, 4}));
    }
    return nets;
}

RepresentationBundle forward_bundle(Networks& nets, const ImageBatch& x1, const ImageBatch& x2,
                                    const ImageBatch* x1a, const ImageBatch* x2a,
                                    AffineSource source) {
    RepresentationBundle b;
    b.h1 = nets.encoder.forward(image_to_tensor(x1), nullptr);
    b.h2 = nets.encoder.forward(image_to_tensor(x2), nullptr);
    b.z1 = nets.projector.forward(b.h1, nullptr);
    b.z2 = nets.projector.forward(b.h2, nullptr);
    if (nets.has_predictor()) {
        b.p1 = nets.predictor.forward(b.z1, nullptr);
        b.p2 = nets.predictor.forward(b.z2, nullptr);
    }
    // affine views pass through the online/single encoder only
    if (x1a) {
        b.h1a = nets.encoder.forward(image_to_tensor(*x1a), nullptr);
        if (source == AffineSource::kProjector) b.z1a = nets.projector.forward(*b.h1a, nullptr);
    }
    if (x2a) {
        b.h2a = nets.encoder.forward(image_to_tensor(*x2a), nullptr);
        if (source == AffineSource::kProjector) b.z2a = nets.projector.forward(*b.h2a, nullptr);
    }
    return b;
}

}  // namespace affssl
