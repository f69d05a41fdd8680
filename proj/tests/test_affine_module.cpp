#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "affssl/affine/module.hpp"
#include "support/oracles.hpp"

using namespace affssl;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng = make_rng({seed});
    for (auto& v : t.vec()) v = normal(rng);
    return t;
}

ImageBatch random_batch(int64_t n, int res, uint64_t seed) {
    ImageBatch b(n, 3, res, res);
    Rng rng = make_rng({seed});
    for (auto& v : b.data.vec()) v = uniform(rng, 0.0, 1.0);
    return b;
}

NetworksConfig small_config(AffineSource source, bool concat) {
    NetworksConfig cfg;
    cfg.method = Method::kSimclr;
    cfg.encoder = {"conv4", 16, 4};
    cfg.projector = {32, 8};
    cfg.regressor_hidden = 32;
    cfg.regressor_out = 6;
    cfg.affine_source = source;
    cfg.regressor_concat_input = concat;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    AffineModuleConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.beta2 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = AffineModuleConfig{};
    cfg.mask = ComponentMask{false, false, false, false};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(AffineModuleConfig{}.target_dim() == 6);
    cfg = AffineModuleConfig{};
    cfg.mask = ComponentMask::only_rotation();
    CHECK(cfg.target_dim() == 1);
}

TEST_CASE("difference aggregation is antisymmetric, concatenation stacks") {
    Tensor h = random_tensor({3, 5}, 1), ha = random_tensor({3, 5}, 2);
    Tensor d1 = aggregate(h, ha, Aggregation::kDifference);
    Tensor d2 = aggregate(ha, h, Aggregation::kDifference);
    for (int64_t i = 0; i < d1.numel(); ++i) CHECK(d1[i] == doctest::Approx(-d2[i]).epsilon(1e-15));

    Tensor c = aggregate(h, ha, Aggregation::kConcatenation);
    REQUIRE(c.dim(1) == 10);
    CHECK(c[0] == h[0]);
    CHECK(c[5] == ha[0]);
    CHECK(c[10] == h[5]);

    Tensor bad = random_tensor({3, 4}, 3);
    CHECK_THROWS_AS(aggregate(h, bad, Aggregation::kDifference), ContractError);
}

TEST_CASE("aggregate_backward splits gradients correctly") {
    Tensor gt = random_tensor({2, 4}, 4);
    Tensor gh, gha;
    aggregate_backward(gt, Aggregation::kDifference, gh, gha);
    for (int64_t i = 0; i < gt.numel(); ++i) {
        CHECK(gh[i] == gt[i]);
        CHECK(gha[i] == -gt[i]);
    }
    Tensor gtc = random_tensor({2, 8}, 5);
    aggregate_backward(gtc, Aggregation::kConcatenation, gh, gha);
    CHECK(gh.dim(1) == 4);
    CHECK(gh[0] == gtc[0]);
    CHECK(gha[0] == gtc[4]);
}

TEST_CASE("affine loss arithmetic") {
    // single scalar component, 0.3 error -> 0.09
    ComponentMask rot = ComponentMask::only_rotation();
    Tensor target({1, 1}, {10.0});
    Tensor pred({1, 1}, {10.3});
    CHECK(affine_loss(target, pred, false, rot, AffineRanges::paper()) ==
          doctest::Approx(0.09).epsilon(1e-12));

    // normalized: theta=45 over [-90,90] -> 0.5; prediction 0 -> 0.25
    Tensor t45({1, 1}, {45.0});
    Tensor zero({1, 1}, {0.0});
    CHECK(affine_loss(t45, zero, true, rot, AffineRanges::paper()) ==
          doctest::Approx(0.25).epsilon(1e-12));

    // mean over batch and components
    ComponentMask all = ComponentMask::all();
    Tensor t6({2, 6});
    Tensor p6 = t6;
    for (int64_t i = 0; i < 12; ++i) p6[i] = 0.1;
    CHECK(affine_loss(t6, p6, false, all, AffineRanges::paper()) ==
          doctest::Approx(0.01).epsilon(1e-12));

    CHECK_THROWS_AS(affine_loss(t6, random_tensor({2, 5}, 6), false, all, AffineRanges::paper()),
                    ContractError);
    Tensor with_nan = p6;
    with_nan[3] = std::nan("");
    CHECK_THROWS_AS(affine_loss(t6, with_nan, false, all, AffineRanges::paper()), NumericError);
}

TEST_CASE("affine loss gradient matches finite differences") {
    ComponentMask mask = ComponentMask::all();
    AffineRanges ranges = AffineRanges::paper();
    Rng rng = make_rng({7});
    Tensor target({4, 6});
    for (int64_t i = 0; i < 4; ++i) {
        const AffineParams p = sample_affine_params(rng, mask, ranges);
        const auto arr = p.as_array();
        for (int64_t k = 0; k < 6; ++k) target[i * 6 + k] = arr[static_cast<size_t>(k)];
    }
    Tensor pred = random_tensor({4, 6}, 8);
    Tensor grad;
    affine_loss(target, pred, true, mask, ranges, &grad);
    const auto fd = oracle::finite_diff(
        [&](const std::vector<double>& x) {
            return affine_loss(Tensor(target.shape(), target.vec()),
                               Tensor(pred.shape(), x), true, mask, ranges);
        },
        pred.vec());
    CHECK(oracle::max_rel_err(grad.vec(), fd) < 1e-5);
}

TEST_CASE("combined loss weighting") {
    AffineModuleConfig cfg;
    cfg.beta1 = 1.0;
    cfg.beta2 = 10.0;
    CHECK(combined_loss(2.0, 0.3, nullptr, cfg) == doctest::Approx(5.0));
    const double v2 = 0.1;
    CHECK(combined_loss(2.0, 0.3, &v2, cfg) == doctest::Approx(2.0 + 10.0 * 0.2));
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(combined_loss(inf, 0.0, nullptr, cfg), NumericError);
}

TEST_CASE("prepare_affine_branch samples within ranges and replays") {
    ImageBatch view = random_batch(6, 16, 10);
    AffineModuleConfig cfg;
    Rng r1 = make_rng({20});
    AffineBranchInput a = prepare_affine_branch(view, cfg, r1);
    REQUIRE(a.params.size() == 6);
    CHECK(a.warped.n() == 6);
    CHECK(a.targets.dim(1) == 6);
    for (const AffineParams& p : a.params) {
        CHECK(std::abs(p.theta) <= 90.0);
        CHECK(std::abs(p.tx) <= 0.25);
        CHECK(p.sigma >= 0.7);
        CHECK(p.sigma <= 1.3);
        CHECK(std::abs(p.sx) <= 25.0);
    }
    Rng r2 = make_rng({20});
    AffineBranchInput b = prepare_affine_branch(view, cfg, r2);
    CHECK(a.warped.data.vec() == b.warped.data.vec());
    CHECK(a.targets.vec() == b.targets.vec());
}

TEST_CASE("identity-forcing ranges leave the view unchanged") {
    ImageBatch view = random_batch(2, 12, 11);
    AffineModuleConfig cfg;
    cfg.ranges = AffineRanges::identity_forcing();
    Rng rng = make_rng({21});
    AffineBranchInput a = prepare_affine_branch(view, cfg, rng);
    double diff = 0.0;
    for (int64_t i = 0; i < view.data.numel(); ++i)
        diff = std::max(diff, std::abs(a.warped.data[i] - view.data[i]));
    CHECK(diff < 1e-9);
    for (int64_t i = 0; i < a.targets.numel(); ++i) {
        const int64_t k = i % 6;
        CHECK(a.targets[i] == doctest::Approx(k == 3 ? 1.0 : 0.0));  // identity params
    }
}

TEST_CASE("bounded crop removes zero fill that plain warping introduces") {
    // bright image, forced 45-degree rotation: plain warp zeroes the corners,
    // the bounded crop must not contain any fill
    ImageBatch view(1, 3, 24, 24);
    view.data.fill(1.0);
    AffineModuleConfig cfg;
    cfg.mask = ComponentMask::only_rotation();
    cfg.ranges.theta = {45.0, 45.0};

    Rng r1 = make_rng({30});
    AffineBranchInput plain = prepare_affine_branch(view, cfg, r1);
    double corner = plain.warped.at(0, 0, 0, 0);
    CHECK(corner < 1e-9);

    cfg.bounded = true;
    Rng r2 = make_rng({30});
    AffineBranchInput bounded = prepare_affine_branch(view, cfg, r2);
    double min_v = 1.0;
    for (double v : bounded.warped.data.vec()) min_v = std::min(min_v, v);
    CHECK(min_v > 0.5);
}

TEST_CASE("affine_branch end-to-end and gradient through the regressor") {
    for (const bool concat : {false, true}) {
        const Aggregation agg = concat ? Aggregation::kConcatenation : Aggregation::kDifference;
        Networks nets = build_networks(small_config(AffineSource::kEncoder, concat), 40);
        ImageBatch view = random_batch(3, 16, 41);
        AffineModuleConfig cfg;
        cfg.aggregation = agg;
        Rng rng = make_rng({42});
        AffineBranchInput input = prepare_affine_branch(view, cfg, rng);
        Tensor h = nets.encoder.forward(image_to_tensor(view), nullptr);

        AffineBranchResult res = affine_branch(nets, h, input, cfg);
        CHECK(std::isfinite(res.loss));
        CHECK(res.prediction.dim(1) == 6);
        CHECK(res.transition.dim(1) == (concat ? 32 : 16));

        // d loss / d transition via the regressor backward vs finite differences
        nn::NetCache cache;
        Tensor pred = predict_phi(res.transition, nets.regressor, &cache);
        Tensor gpred;
        affine_loss(input.targets, pred, cfg.normalize_targets, cfg.mask, cfg.ranges, &gpred);
        nets.regressor.zero_grads();
        Tensor gt = nets.regressor.backward(gpred, cache);
        const auto fd = oracle::finite_diff(
            [&](const std::vector<double>& x) {
                Tensor p2 = predict_phi(Tensor(res.transition.shape(), x), nets.regressor);
                return affine_loss(input.targets, p2, cfg.normalize_targets, cfg.mask, cfg.ranges);
            },
            res.transition.vec());
        CHECK(oracle::max_rel_err(gt.vec(), fd) < 1e-4);
    }
}

TEST_CASE("regressor head parameter arithmetic") {
    CHECK(mlp_param_count(6, 4, 2) == 6 * 4 + 4 + 4 * 2 + 2);
    Networks nets = build_networks(small_config(AffineSource::kEncoder, false), 50);
    int64_t actual = 0;
    for (nn::Param* p : nets.regressor.params()) actual += p->w.numel();
    CHECK(actual == mlp_param_count(16, 32, 6));
}
