#include "affssl/train/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

namespace fs = std::filesystem;
using nlohmann::json;

namespace affssl {

void OptimizerConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("OptimizerConfig: lr must be > 0");
    if (batch_size < 2) throw ConfigError("OptimizerConfig: batch size must be >= 2");
    if (epochs < 1) throw ConfigError("OptimizerConfig: epochs must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("OptimizerConfig: weight decay must be >= 0");
    if (schedule != "cosine" && schedule != "constant")
        throw ConfigError("OptimizerConfig: unknown schedule " + schedule);
}

double cosine_lr(int64_t step, int64_t total_steps, double base_lr) {
    if (total_steps <= 0 || step < 0 || step > total_steps)
        throw ContractError("cosine_lr: need 0 <= step <= total_steps, total_steps > 0");
    return base_lr * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps)) / 2.0;
}

void Sgd::step(const std::vector<nn::Param*>& params, double lr, double momentum,
               double weight_decay) {
    if (buffers_.empty()) {
        buffers_.reserve(params.size());
        for (nn::Param* p : params) buffers_.emplace_back(p->w.shape());
    }
    if (buffers_.size() != params.size()) throw ContractError("Sgd: parameter count changed");
    for (size_t i = 0; i < params.size(); ++i) {
        nn::Param& p = *params[i];
        Tensor& v = buffers_[i];
        const double wd = p.decay ? weight_decay : 0.0;
        for (int64_t j = 0; j < p.w.numel(); ++j) {
            const double g = p.g[j] + wd * p.w[j];
            v[j] = momentum * v[j] + g;
            p.w[j] -= lr * v[j];
        }
    }
}

namespace {

struct SslGrads {
    double loss = 0.0;
    Tensor gz1, gz2;
};

SslGrads ssl_loss_and_grads(Networks& nets, const Tensor& z1, const Tensor& z2,
                            const LossHyper& lh, nn::NetCache* cq1, nn::NetCache* cq2,
                            const ImageBatch& x1, const ImageBatch& x2) {
    SslGrads out;
    switch (nets.method) {
        case Method::kSimclr: {
            auto r = nn::ntxent_loss(z1, z2, lh.ntxent_temperature);
            out.loss = r.value;
            out.gz1 = std::move(r.g1);
            out.gz2 = std::move(r.g2);
            return out;
        }
        case Method::kBarlowTwins: {
            auto r = nn::barlow_twins_loss(z1, z2, lh.barlow_lambda);
            out.loss = r.value;
            out.gz1 = std::move(r.g1);
            out.gz2 = std::move(r.g2);
            return out;
        }
        case Method::kByol: {
            Tensor p1 = nets.predictor.forward(z1, cq1);
            Tensor p2 = nets.predictor.forward(z2, cq2);
            Tensor z1t = nets.target_projector.forward(
                nets.target_encoder.forward(image_to_tensor(x1), nullptr), nullptr);
            Tensor z2t = nets.target_projector.forward(
                nets.target_encoder.forward(image_to_tensor(x2), nullptr), nullptr);
            auto r12 = nn::byol_loss(p1, z2t);
            auto r21 = nn::byol_loss(p2, z1t);
            out.loss = 0.5 * (r12.value + r21.value);
            r12.g1 *= 0.5;
            r21.g1 *= 0.5;
            out.gz1 = nets.predictor.backward(r12.g1, *cq1);
            out.gz2 = nets.predictor.backward(r21.g1, *cq2);
            return out;
        }
    }
    throw ContractError("ssl_loss_and_grads: unreachable");
}

}  // namespace

StepResult train_step(Networks& nets, Sgd& opt, const ImageBatch& x1, const ImageBatch& x2,
                      const AffineModuleConfig& affine, const LossHyper& lh, double lr,
                      const OptimizerConfig& opt_cfg, Rng& affine_rng) {
    nets.zero_grads();

    nn::NetCache c1f, c2f, c1g, c2g, cq1, cq2;
    Tensor h1 = nets.encoder.forward(image_to_tensor(x1), &c1f);
    Tensor h2 = nets.encoder.forward(image_to_tensor(x2), &c2f);
    Tensor z1 = nets.projector.forward(h1, &c1g);
    Tensor z2 = nets.projector.forward(h2, &c2g);

    SslGrads ssl = ssl_loss_and_grads(nets, z1, z2, lh, &cq1, &cq2, x1, x2);

    const bool run_branch = affine.enabled && affine.beta2 > 0.0;
    const double beta1 = affine.enabled ? affine.beta1 : 1.0;

    Tensor gz1 = ssl.gz1;
    gz1 *= beta1;
    Tensor gz2 = ssl.gz2;
    gz2 *= beta1;

    // Affine branch: per view, warped input -> encoder -> (projector) ->
    // aggregate with the matching online representation -> regress -> MSE.
    double l_affine = 0.0;
    int n_branches = 0;
    struct Branch {
        nn::NetCache cf, cg, cr;
        Tensor gsrc;     // gradient into the online h (source f) or z (source g)
        Tensor gbranch;  // gradient into the branch-side representation
        bool source_g = false;
        int view = 1;
    };
    std::vector<Branch> branches;

    if (run_branch) {
        const int views = affine.views == AffineViews::kBoth ? 2 : 1;
        const double w = affine.beta2 / static_cast<double>(views);
        for (int v = 1; v <= views; ++v) {
            const ImageBatch& xv = (v == 1) ? x1 : x2;
            const Tensor& hv = (v == 1) ? h1 : h2;
            const Tensor& zv = (v == 1) ? z1 : z2;
            AffineBranchInput prep = prepare_affine_branch(xv, affine, affine_rng);

            Branch br;
            br.view = v;
            br.source_g = affine.source == AffineSource::kProjector;
            Tensor ha = nets.encoder.forward(image_to_tensor(prep.warped), &br.cf);
            Tensor branch_repr = ha;
            if (br.source_g) branch_repr = nets.projector.forward(ha, &br.cg);
            const Tensor& src = br.source_g ? zv : hv;

            Tensor t = aggregate(src, branch_repr, affine.aggregation);
            Tensor pred = predict_phi(t, nets.regressor, &br.cr);
            Tensor gpred;
            const double l = affine_loss(prep.targets, pred, affine.normalize_targets, affine.mask,
                                         affine.ranges, &gpred);
            l_affine += l;
            ++n_branches;

            gpred *= w;
            Tensor gt = nets.regressor.backward(gpred, br.cr);
            aggregate_backward(gt, affine.aggregation, br.gsrc, br.gbranch);
            branches.push_back(std::move(br));
        }
        l_affine /= static_cast<double>(n_branches);
    }

    // fold source-side affine gradients into the z grads (source g) before
    // backing through the projector
    for (Branch& br : branches)
        if (br.source_g) ((br.view == 1) ? gz1 : gz2) += br.gsrc;

    Tensor gh1 = nets.projector.backward(gz1, c1g);
    Tensor gh2 = nets.projector.backward(gz2, c2g);

    for (Branch& br : branches) {
        if (!br.source_g) ((br.view == 1) ? gh1 : gh2) += br.gsrc;
        Tensor gha = br.source_g ? nets.projector.backward(br.gbranch, br.cg) : br.gbranch;
        nets.encoder.backward(gha, br.cf);
    }
    nets.encoder.backward(gh1, c1f);
    nets.encoder.backward(gh2, c2f);

    auto params = nets.trainable_params();
    opt.step(params, lr, opt_cfg.momentum, opt_cfg.weight_decay);

    if (nets.has_target()) {
        nn::ema_update(nets.encoder, nets.target_encoder, nets.ema);
        nn::ema_update(nets.projector, nets.target_projector, nets.ema);
    }

    StepResult res;
    res.l_ssl = ssl.loss;
    res.l_affine = l_affine;
    res.total = run_branch ? combined_loss(ssl.loss, l_affine, nullptr, affine)
                           : ssl.loss;
    if (!std::isfinite(res.total)) throw NumericError("train_step: non-finite loss");
    return res;
}

// ------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'A', 'F', 'S', 'S', 'L', 'C', 'K', '1'};

void write_u64(std::ostream& s, uint64_t v) { s.write(reinterpret_cast<const char*>(&v), 8); }
uint64_t read_u64(std::istream& s) {
    uint64_t v = 0;
    s.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void write_tensor(std::ostream& s, const Tensor& t) {
    write_u64(s, t.rank());
    for (int64_t d : t.shape()) write_u64(s, static_cast<uint64_t>(d));
    s.write(reinterpret_cast<const char*>(t.data()), t.numel() * 8);
}

Tensor read_tensor(std::istream& s) {
    const uint64_t rank = read_u64(s);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<int64_t>(read_u64(s));
    Tensor t(shape);
    s.read(reinterpret_cast<char*>(t.data()), t.numel() * 8);
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, Networks& nets, Sgd& opt, int64_t epoch,
                     uint64_t config_hash) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IngestionError("cannot write checkpoint: " + path);
        f.write(kMagic, 8);
        write_u64(f, config_hash);
        write_u64(f, static_cast<uint64_t>(epoch));
        auto params = nets.all_params();
        write_u64(f, params.size());
        for (nn::Param* p : params) {
            write_u64(f, p->name.size());
            f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
            write_tensor(f, p->w);
        }
        write_u64(f, opt.buffers().size());
        for (const Tensor& b : opt.buffers()) write_tensor(f, b);
        if (!f) throw IngestionError("short write on checkpoint: " + path);
    }
    // last-good checkpoint stays intact if the write above failed
    fs::rename(tmp, path);
}

int64_t load_checkpoint(const std::string& path, Networks& nets, Sgd* opt, uint64_t* config_hash) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot read checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw IngestionError("bad checkpoint magic in " + path);
    const uint64_t hash = read_u64(f);
    if (config_hash) *config_hash = hash;
    const int64_t epoch = static_cast<int64_t>(read_u64(f));
    auto params = nets.all_params();
    const uint64_t count = read_u64(f);
    if (count != params.size())
        throw IngestionError("checkpoint parameter count mismatch in " + path);
    for (nn::Param* p : params) {
        const uint64_t len = read_u64(f);
        std::string name(len, '\0');
        f.read(name.data(), static_cast<std::streamsize>(len));
        if (name != p->name) throw IngestionError("checkpoint layout mismatch at " + name);
        Tensor t = read_tensor(f);
        if (!t.same_shape(p->w)) throw IngestionError("checkpoint shape mismatch at " + name);
        p->w = std::move(t);
    }
    const uint64_t nbuf = read_u64(f);
    if (opt) {
        opt->buffers().clear();
        for (uint64_t i = 0; i < nbuf; ++i) opt->buffers().push_back(read_tensor(f));
    }
    if (!f) throw IngestionError("truncated checkpoint: " + path);
    return epoch;
}

// --------------------------------------------------------------------- fit

namespace {

json record_to_json(const MetricsRecord& r) {
    return json{{"epoch", r.epoch},   {"step", r.step}, {"l_ssl", r.l_ssl},
                {"l_affine", r.l_affine}, {"total", r.total}, {"lr", r.lr},
                {"seed", r.seed}, {"trial", r.trial},
                {"schema", 1}};
}

// keep only records from epochs before `next_epoch` (resume truncation)
void truncate_metrics(const std::string& path, int64_t next_epoch) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value("epoch", int64_t{0}) < next_epoch) keep.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

}  // namespace

FitResult fit(const TrainRunConfig& cfg, const Dataset& data, bool resume) {
    cfg.optimizer.validate();
    cfg.augment.validate();
    if (cfg.affine.enabled) cfg.affine.validate();
    if (cfg.run_dir.empty()) throw ConfigError("fit: run_dir must be set");
    fs::create_directories(cfg.run_dir);

    const int64_t n = static_cast<int64_t>(data.size());
    const int64_t steps_per_epoch = n / cfg.optimizer.batch_size;
    if (steps_per_epoch < 1)
        throw ConfigError("fit: dataset smaller than one batch");
    const int64_t total_steps = steps_per_epoch * cfg.optimizer.epochs;

    Networks nets = build_networks(cfg.networks, cfg.seed);
    Sgd opt;

    const std::string latest = (fs::path(cfg.run_dir) / "ckpt_latest.bin").string();
    const std::string metrics_path = (fs::path(cfg.run_dir) / "metrics.ndjson").string();

    int64_t start_epoch = 0;
    if (resume && fs::exists(latest)) {
        start_epoch = load_checkpoint(latest, nets, &opt) + 1;
        truncate_metrics(metrics_path, start_epoch);
    } else if (!resume) {
        std::ofstream clear(metrics_path, std::ios::trunc);
    }

    std::ofstream metrics(metrics_path, std::ios::app);
    if (!metrics) throw IngestionError("cannot open metrics file: " + metrics_path);

    int64_t steps_run = 0;
    for (int64_t epoch = start_epoch; epoch < cfg.optimizer.epochs; ++epoch) {
        std::vector<size_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng = make_rng({cfg.seed, stream::kShuffle, static_cast<uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<size_t> idx(order.begin() + s * cfg.optimizer.batch_size,
                                    order.begin() + (s + 1) * cfg.optimizer.batch_size);
            ImageBatch raw = data.get_batch(idx);
            Rng aug_rng = make_rng({cfg.seed, stream::kAugment, static_cast<uint64_t>(epoch),
                                    static_cast<uint64_t>(s)});
            auto [x1, x2] = make_views(raw, cfg.augment, aug_rng);

            const int64_t global_step = epoch * steps_per_epoch + s;
            double lr = cfg.optimizer.lr;
            if (cfg.optimizer.warmup_epochs > 0 && epoch < cfg.optimizer.warmup_epochs)
                lr = cfg.optimizer.lr * static_cast<double>(global_step + 1) /
                     static_cast<double>(cfg.optimizer.warmup_epochs * steps_per_epoch);
            else if (cfg.optimizer.schedule == "cosine")
                lr = cosine_lr(global_step, total_steps, cfg.optimizer.lr);

            Rng affine_rng = make_rng({cfg.seed, stream::kAffine, static_cast<uint64_t>(epoch),
                                       static_cast<uint64_t>(s)});
            StepResult res;
            try {
                res = train_step(nets, opt, x1, x2, cfg.affine, cfg.loss, lr, cfg.optimizer,
                                 affine_rng);
            } catch (const NumericError& e) {
                metrics << json{{"epoch", epoch}, {"step", global_step}, {"error", e.what()}}
                        << "\n";
                metrics.flush();
                throw;
            }

            MetricsRecord rec;
            rec.epoch = epoch;
            rec.step = global_step;
            rec.l_ssl = res.l_ssl;
            rec.l_affine = res.l_affine;
            rec.total = res.total;
            rec.lr = lr;
            rec.seed = cfg.seed;
            rec.trial = cfg.trial;
            metrics << record_to_json(rec) << "\n";
            ++steps_run;
        }
        metrics.flush();

        if (cfg.checkpoint_every > 0 &&
            ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.optimizer.epochs)) {
            const std::string epoch_path =
                (fs::path(cfg.run_dir) / ("ckpt_epoch_" + std::to_string(epoch + 1) + ".bin"))
                    .string();
            save_checkpoint(epoch_path, nets, opt, epoch, cfg.config_hash);
            save_checkpoint(latest, nets, opt, epoch, cfg.config_hash);
        }
    }

    FitResult out;
    out.checkpoint_path = latest;
    out.metrics_path = metrics_path;
    out.steps_run = steps_run;
    return out;
}

}  // namespace affssl
