#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "affssl/train/engine.hpp"
#include "support/synth_data.hpp"

using namespace affssl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("affssl_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

NetworksConfig tiny_networks(Method m) {
    NetworksConfig cfg;
    cfg.method = m;
    cfg.encoder = {"conv4", 8, 4};
    cfg.projector = {16, 8};
    cfg.predictor = {16, 8};
    cfg.regressor_hidden = 16;
    cfg.regressor_out = 6;
    return cfg;
}

ImageBatch random_batch(int64_t n, int res, uint64_t seed) {
    ImageBatch b(n, 3, res, res);
    Rng rng = make_rng({seed});
    for (auto& v : b.data.vec()) v = uniform(rng, 0.0, 1.0);
    return b;
}

std::vector<double> all_weights(Networks& nets) {
    std::vector<double> out;
    for (nn::Param* p : nets.all_params())
        out.insert(out.end(), p->w.vec().begin(), p->w.vec().end());
    return out;
}

TrainRunConfig tiny_run(Method m, const std::string& dir, uint64_t seed, int64_t epochs) {
    TrainRunConfig cfg;
    cfg.networks = tiny_networks(m);
    cfg.augment = AugmentationConfig{};
    cfg.augment.resolution = 16;
    cfg.augment.blur_enabled = false;
    cfg.optimizer.lr = 0.05;
    cfg.optimizer.batch_size = 8;
    cfg.optimizer.epochs = epochs;
    cfg.affine = AffineModuleConfig{};
    cfg.seed = seed;
    cfg.run_dir = dir;
    return cfg;
}

Dataset tiny_dataset(int n) {
    Dataset d("synthetic", 3, 16, 16, 10);
    for (int i = 0; i < n; ++i) {
        std::vector<uint8_t> img(3 * 16 * 16);
        Rng rng = make_rng({0xda7a, uint64_t(i)});
        for (auto& v : img) v = static_cast<uint8_t>(uniform(rng, 0.0, 255.0));
        d.add(std::move(img), i % 10, i);
    }
    return d;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 200, 0.03) == doctest::Approx(0.03).epsilon(1e-15));
    CHECK(cosine_lr(200, 200, 0.03) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cosine_lr(100, 200, 0.03) == doctest::Approx(0.015).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(-1, 200, 0.03), ContractError);
    CHECK_THROWS_AS(cosine_lr(201, 200, 0.03), ContractError);
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.03), ContractError);
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = OptimizerConfig{};
    cfg.schedule = "linear";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sgd momentum and weight-decay arithmetic") {
    nn::Param p;
    p.w = Tensor({1}, {1.0});
    p.g = Tensor({1}, {0.5});
    p.decay = true;
    Sgd opt;
    // step 1: g_eff = 0.5 + 0.1*1.0 = 0.6; v = 0.6; w = 1 - 0.1*0.6 = 0.94
    opt.step({&p}, 0.1, 0.9, 0.1);
    CHECK(p.w[0] == doctest::Approx(0.94).epsilon(1e-12));
    // step 2: g_eff = 0.5 + 0.094 = 0.594; v = 0.9*0.6 + 0.594 = 1.134
    opt.step({&p}, 0.1, 0.9, 0.1);
    CHECK(p.w[0] == doctest::Approx(0.94 - 0.1 * 1.134).epsilon(1e-12));

    nn::Param b;  // decay=false params skip weight decay
    b.w = Tensor({1}, {1.0});
    b.g = Tensor({1}, {0.0});
    b.decay = false;
    Sgd opt2;
    opt2.step({&b}, 0.1, 0.9, 10.0);
    CHECK(b.w[0] == 1.0);
}

TEST_CASE("lr zero leaves parameters fixed but ema still applies") {
    Networks nets = build_networks(tiny_networks(Method::kByol), 3);
    nets.ema.tau = 0.5;
    // push online away from target so the EMA update is visible
    for (nn::Param* p : nets.encoder.params())
        for (auto& v : p->w.vec()) v += 0.5;
    Sgd opt;
    ImageBatch x1 = random_batch(4, 16, 1), x2 = random_batch(4, 16, 2);
    AffineModuleConfig affine;
    Rng arng = make_rng({9});
    const double online_before = nets.encoder.params().front()->w[0];
    const double target_before = nets.target_encoder.params().front()->w[0];
    train_step(nets, opt, x1, x2, affine, LossHyper{}, 0.0, OptimizerConfig{}, arng);
    CHECK(nets.encoder.params().front()->w[0] == online_before);
    CHECK(nets.target_encoder.params().front()->w[0] ==
          doctest::Approx(0.5 * target_before + 0.5 * online_before).epsilon(1e-12));
}

TEST_CASE("train_step runs every method and moves parameters") {
    for (Method m : {Method::kSimclr, Method::kByol, Method::kBarlowTwins}) {
        Networks nets = build_networks(tiny_networks(m), 4);
        Sgd opt;
        ImageBatch x1 = random_batch(6, 16, 10), x2 = random_batch(6, 16, 11);
        AffineModuleConfig affine;
        Rng arng = make_rng({12});
        const auto before = all_weights(nets);
        StepResult r = train_step(nets, opt, x1, x2, affine, LossHyper{}, 0.05, OptimizerConfig{},
                                  arng);
        CHECK(std::isfinite(r.total));
        CHECK(r.l_affine > 0.0);
        CHECK(all_weights(nets) != before);
    }
}

TEST_CASE("beta2=0 parameter trajectory is bit-identical to the module-free path") {
    auto run = [&](bool module_enabled) {
        Networks nets = build_networks(tiny_networks(Method::kSimclr), 5);
        Sgd opt;
        AffineModuleConfig affine;
        if (module_enabled) {
            affine.beta2 = 0.0;  // branch must not even sample its rng
        } else {
            affine.enabled = false;
        }
        for (int s = 0; s < 20; ++s) {
            ImageBatch x1 = random_batch(4, 16, 100 + uint64_t(s));
            ImageBatch x2 = random_batch(4, 16, 200 + uint64_t(s));
            Rng arng = make_rng({13, uint64_t(s)});
            train_step(nets, opt, x1, x2, affine, LossHyper{}, 0.03, OptimizerConfig{}, arng);
        }
        return all_weights(nets);
    };
    CHECK(run(true) == run(false));
}

TEST_CASE("checkpoint round trip is bit-exact") {
    TempDir tmp("engine_ckpt");
    Networks nets = build_networks(tiny_networks(Method::kByol), 6);
    Sgd opt;
    ImageBatch x1 = random_batch(4, 16, 30), x2 = random_batch(4, 16, 31);
    AffineModuleConfig affine;
    Rng arng = make_rng({32});
    train_step(nets, opt, x1, x2, affine, LossHyper{}, 0.05, OptimizerConfig{}, arng);

    const std::string path = (tmp.path / "ckpt.bin").string();
    save_checkpoint(path, nets, opt, 7, 0xabcdef);

    Networks fresh = build_networks(tiny_networks(Method::kByol), 999);
    Sgd fresh_opt;
    uint64_t hash = 0;
    const int64_t epoch = load_checkpoint(path, fresh, &fresh_opt, &hash);
    CHECK(epoch == 7);
    CHECK(hash == 0xabcdef);
    CHECK(all_weights(fresh) == all_weights(nets));
    REQUIRE(fresh_opt.buffers().size() == opt.buffers().size());
    for (size_t i = 0; i < opt.buffers().size(); ++i)
        CHECK(fresh_opt.buffers()[i].vec() == opt.buffers()[i].vec());

    CHECK_THROWS_AS(load_checkpoint((tmp.path / "none.bin").string(), fresh, nullptr),
                    IngestionError);
    std::ofstream bad((tmp.path / "bad.bin").string(), std::ios::binary);
    bad << "not a checkpoint";
    bad.close();
    CHECK_THROWS_AS(load_checkpoint((tmp.path / "bad.bin").string(), fresh, nullptr),
                    IngestionError);
}

TEST_CASE("fit is deterministic: identical metrics streams and checkpoints") {
    TempDir a("engine_fit_a"), b("engine_fit_b");
    Dataset data = tiny_dataset(32);
    fit(tiny_run(Method::kSimclr, a.path.string(), 42, 2), data);
    fit(tiny_run(Method::kSimclr, b.path.string(), 42, 2), data);
    const std::string ma = slurp((a.path / "metrics.ndjson").string());
    CHECK(!ma.empty());
    CHECK(ma == slurp((b.path / "metrics.ndjson").string()));
    CHECK(slurp((a.path / "ckpt_latest.bin").string()) ==
          slurp((b.path / "ckpt_latest.bin").string()));

    // different seed changes the stream
    TempDir c("engine_fit_c");
    fit(tiny_run(Method::kSimclr, c.path.string(), 43, 2), data);
    CHECK(ma != slurp((c.path / "metrics.ndjson").string()));
}

TEST_CASE("resumed run matches the uninterrupted run") {
    TempDir full("engine_full"), parts("engine_parts");
    Dataset data = tiny_dataset(32);
    fit(tiny_run(Method::kSimclr, full.path.string(), 7, 4), data);

    // run the same schedule, then rewind to the epoch-2 snapshot as if the
    // last two epochs had been lost to an interruption
    fit(tiny_run(Method::kSimclr, parts.path.string(), 7, 4), data);
    fs::copy_file(parts.path / "ckpt_epoch_2.bin", parts.path / "ckpt_latest.bin",
                  fs::copy_options::overwrite_existing);
    fs::remove(parts.path / "ckpt_epoch_3.bin");
    fs::remove(parts.path / "ckpt_epoch_4.bin");
    fit(tiny_run(Method::kSimclr, parts.path.string(), 7, 4), data, /*resume=*/true);

    CHECK(slurp((full.path / "ckpt_latest.bin").string()) ==
          slurp((parts.path / "ckpt_latest.bin").string()));
    CHECK(slurp((full.path / "metrics.ndjson").string()) ==
          slurp((parts.path / "metrics.ndjson").string()));
}

TEST_CASE("fit rejects a dataset smaller than one batch") {
    TempDir tmp("engine_small");
    Dataset data = tiny_dataset(4);
    CHECK_THROWS_AS(fit(tiny_run(Method::kSimclr, tmp.path.string(), 1, 1), data), ConfigError);
}
