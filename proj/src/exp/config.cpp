#include "affssl/exp/config.hpp"

#include <fstream>
#include <set>

namespace affssl {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key \"" + key + "\" in " + where);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for \"" + key + "\": " + e.what());
    }
}

Interval parse_interval(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError("config: " + where + " must be a [lo, hi] pair");
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

AffineRanges parse_ranges(const json& j) {
    check_keys(j, "affine.ranges", {"theta", "translation", "sigma", "shear",
                                    "signed_translation"});
    AffineRanges r = AffineRanges::paper();
    if (j.contains("theta")) r.theta = parse_interval(j.at("theta"), "affine.ranges.theta");
    if (j.contains("translation"))
        r.translation = parse_interval(j.at("translation"), "affine.ranges.translation");
    if (j.contains("sigma")) r.sigma = parse_interval(j.at("sigma"), "affine.ranges.sigma");
    if (j.contains("shear")) r.shear = parse_interval(j.at("shear"), "affine.ranges.shear");
    r.signed_translation = get_or(j, "signed_translation", r.signed_translation);
    return r;
}

ComponentMask parse_components(const json& j) {
    if (!j.is_array()) throw ConfigError("config: affine.components must be an array");
    ComponentMask m{false, false, false, false};
    for (const auto& c : j) {
        const std::string s = c.get<std::string>();
        if (s == "rotation") m.use_rotation = true;
        else if (s == "translation") m.use_translation = true;
        else if (s == "scale") m.use_scale = true;
        else if (s == "shear") m.use_shear = true;
        else throw ConfigError("config: unknown affine component \"" + s + "\"");
    }
    return m;
}

json ranges_json(const AffineRanges& r) {
    return {{"theta", {r.theta.lo, r.theta.hi}},
            {"translation", {r.translation.lo, r.translation.hi}},
            {"sigma", {r.sigma.lo, r.sigma.hi}},
            {"shear", {r.shear.lo, r.shear.hi}},
            {"signed_translation", r.signed_translation}};
}

json components_json(const ComponentMask& m) {
    json a = json::array();
    if (m.use_rotation) a.push_back("rotation");
    if (m.use_translation) a.push_back("translation");
    if (m.use_scale) a.push_back("scale");
    if (m.use_shear) a.push_back("shear");
    return a;
}

}  // namespace

void DatasetSpec::validate() const {
    if (name.empty()) throw ConfigError("dataset.name must be set");
    if (limit < 0 || eval_limit < 0) throw ConfigError("dataset limits must be >= 0");
    if (resolution < 4) throw ConfigError("dataset.resolution must be >= 4");
}

void EvalSpec::validate() const {
    if (cadence < 1) throw ConfigError("eval.cadence must be >= 1");
    if (trials < 1) throw ConfigError("eval.trials must be >= 1");
    if (datasets.empty()) throw ConfigError("eval.datasets must be non-empty");
    if (l2 < 0.0) throw ConfigError("eval.l2 must be >= 0");
    if (max_iterations < 1) throw ConfigError("eval.max_iterations must be >= 1");
    if (train_fraction <= 0.0 || train_fraction > 1.0)
        throw ConfigError("eval.train_fraction must be in (0, 1]");
}

void ExperimentConfig::validate() const {
    parse_method(method);
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    dataset.validate();
    encoder.validate();
    projector.validate();
    predictor.validate();
    if (ema_tau < 0.0 || ema_tau > 1.0) throw ConfigError("ema_tau must be in [0, 1]");
    optimizer.validate();
    if (loss.ntxent_temperature <= 0.0) throw ConfigError("loss.ntxent_temperature must be > 0");
    if (loss.barlow_lambda <= 0.0) throw ConfigError("loss.barlow_lambda must be > 0");
    augment.validate();
    if (affine.enabled) affine.validate();
    if (regressor_hidden < 1) throw ConfigError("regressor_hidden must be >= 1");
    eval.validate();
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (augment.resolution != dataset.resolution)
        throw ConfigError("augment resolution must match dataset resolution");
}

std::string aggregation_name(Aggregation a) {
    return a == Aggregation::kDifference ? "difference" : "concatenation";
}
std::string affine_views_name(AffineViews v) { return v == AffineViews::kOne ? "one" : "both"; }
std::string affine_source_name(AffineSource s) {
    return s == AffineSource::kEncoder ? "encoder" : "projector";
}

Aggregation parse_aggregation(const std::string& s) {
    if (s == "difference") return Aggregation::kDifference;
    if (s == "concatenation") return Aggregation::kConcatenation;
    throw ConfigError("config: unknown aggregation \"" + s + "\"");
}
AffineViews parse_affine_views(const std::string& s) {
    if (s == "one") return AffineViews::kOne;
    if (s == "both") return AffineViews::kBoth;
    throw ConfigError("config: unknown affine views mode \"" + s + "\"");
}
AffineSource parse_affine_source(const std::string& s) {
    if (s == "encoder") return AffineSource::kEncoder;
    if (s == "projector") return AffineSource::kProjector;
    throw ConfigError("config: unknown affine source \"" + s + "\"");
}

ExperimentConfig parse_experiment_config(const json& j) {
    check_keys(j, "top level",
               {"method", "seeds", "dataset", "encoder", "projector", "predictor", "ema_tau",
                "optimizer", "loss", "augment", "affine", "regressor_hidden", "eval",
                "checkpoint_every", "output_dir", "data_root"});
    ExperimentConfig cfg;
    cfg.method = get_or<std::string>(j, "method", cfg.method);
    cfg.seeds = get_or(j, "seeds", cfg.seeds);

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        check_keys(d, "dataset", {"name", "limit", "eval_limit", "resolution"});
        cfg.dataset.name = get_or<std::string>(d, "name", cfg.dataset.name);
        cfg.dataset.limit = get_or(d, "limit", cfg.dataset.limit);
        cfg.dataset.eval_limit = get_or(d, "eval_limit", cfg.dataset.eval_limit);
        cfg.dataset.resolution = get_or(d, "resolution", cfg.dataset.resolution);
        cfg.augment.resolution = cfg.dataset.resolution;
    }
    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        check_keys(e, "encoder", {"arch", "dim", "width"});
        cfg.encoder.arch = get_or<std::string>(e, "arch", cfg.encoder.arch);
        cfg.encoder.dim = get_or(e, "dim", cfg.encoder.dim);
        cfg.encoder.width = get_or(e, "width", cfg.encoder.width);
    }
    for (const char* head : {"projector", "predictor"}) {
        if (!j.contains(head)) continue;
        const json& h = j.at(head);
        check_keys(h, head, {"hidden", "out"});
        HeadSpec& spec = std::string(head) == "projector" ? cfg.projector : cfg.predictor;
        spec.hidden = get_or(h, "hidden", spec.hidden);
        spec.out = get_or(h, "out", spec.out);
    }
    cfg.ema_tau = get_or(j, "ema_tau", cfg.ema_tau);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_keys(o, "optimizer", {"lr", "weight_decay", "batch_size", "epochs", "momentum",
                                    "warmup_epochs", "schedule"});
        cfg.optimizer.lr = get_or(o, "lr", cfg.optimizer.lr);
        cfg.optimizer.weight_decay = get_or(o, "weight_decay", cfg.optimizer.weight_decay);
        cfg.optimizer.batch_size = get_or(o, "batch_size", cfg.optimizer.batch_size);
        cfg.optimizer.epochs = get_or(o, "epochs", cfg.optimizer.epochs);
        cfg.optimizer.momentum = get_or(o, "momentum", cfg.optimizer.momentum);
        cfg.optimizer.warmup_epochs = get_or(o, "warmup_epochs", cfg.optimizer.warmup_epochs);
        cfg.optimizer.schedule = get_or<std::string>(o, "schedule", cfg.optimizer.schedule);
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        check_keys(l, "loss", {"ntxent_temperature", "barlow_lambda"});
        cfg.loss.ntxent_temperature = get_or(l, "ntxent_temperature", cfg.loss.ntxent_temperature);
        cfg.loss.barlow_lambda = get_or(l, "barlow_lambda", cfg.loss.barlow_lambda);
    }
    if (j.contains("augment")) {
        const json& a = j.at("augment");
        check_keys(a, "augment",
                   {"crop_enabled", "crop_scale_lo", "crop_scale_hi", "flip_enabled", "flip_prob",
                    "jitter_enabled", "jitter_prob", "brightness", "contrast", "saturation", "hue",
                    "grayscale_enabled", "grayscale_prob", "blur_enabled", "blur_prob",
                    "blur_sigma_lo", "blur_sigma_hi"});
        AugmentationConfig& g = cfg.augment;
        g.crop_enabled = get_or(a, "crop_enabled", g.crop_enabled);
        g.crop_scale_lo = get_or(a, "crop_scale_lo", g.crop_scale_lo);
        g.crop_scale_hi = get_or(a, "crop_scale_hi", g.crop_scale_hi);
        g.flip_enabled = get_or(a, "flip_enabled", g.flip_enabled);
        g.flip_prob = get_or(a, "flip_prob", g.flip_prob);
        g.jitter_enabled = get_or(a, "jitter_enabled", g.jitter_enabled);
        g.jitter_prob = get_or(a, "jitter_prob", g.jitter_prob);
        g.brightness = get_or(a, "brightness", g.brightness);
        g.contrast = get_or(a, "contrast", g.contrast);
        g.saturation = get_or(a, "saturation", g.saturation);
        g.hue = get_or(a, "hue", g.hue);
        g.grayscale_enabled = get_or(a, "grayscale_enabled", g.grayscale_enabled);
        g.grayscale_prob = get_or(a, "grayscale_prob", g.grayscale_prob);
        g.blur_enabled = get_or(a, "blur_enabled", g.blur_enabled);
        g.blur_prob = get_or(a, "blur_prob", g.blur_prob);
        g.blur_sigma_lo = get_or(a, "blur_sigma_lo", g.blur_sigma_lo);
        g.blur_sigma_hi = get_or(a, "blur_sigma_hi", g.blur_sigma_hi);
    }
    if (j.contains("affine")) {
        const json& a = j.at("affine");
        check_keys(a, "affine",
                   {"enabled", "aggregation", "views", "source", "components", "ranges", "beta1",
                    "beta2", "normalize_targets", "bounded"});
        AffineModuleConfig& m = cfg.affine;
        m.enabled = get_or(a, "enabled", m.enabled);
        if (a.contains("aggregation"))
            m.aggregation = parse_aggregation(a.at("aggregation").get<std::string>());
        if (a.contains("views")) m.views = parse_affine_views(a.at("views").get<std::string>());
        if (a.contains("source")) m.source = parse_affine_source(a.at("source").get<std::string>());
        if (a.contains("components")) m.mask = parse_components(a.at("components"));
        if (a.contains("ranges")) m.ranges = parse_ranges(a.at("ranges"));
        m.beta1 = get_or(a, "beta1", m.beta1);
        m.beta2 = get_or(a, "beta2", m.beta2);
        m.normalize_targets = get_or(a, "normalize_targets", m.normalize_targets);
        m.bounded = get_or(a, "bounded", m.bounded);
    }
    cfg.regressor_hidden = get_or(j, "regressor_hidden", cfg.regressor_hidden);
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, "eval",
                   {"cadence", "trials", "datasets", "l2", "max_iterations", "train_fraction"});
        cfg.eval.cadence = get_or(e, "cadence", cfg.eval.cadence);
        cfg.eval.trials = get_or(e, "trials", cfg.eval.trials);
        cfg.eval.datasets = get_or(e, "datasets", cfg.eval.datasets);
        cfg.eval.l2 = get_or(e, "l2", cfg.eval.l2);
        cfg.eval.max_iterations = get_or(e, "max_iterations", cfg.eval.max_iterations);
        cfg.eval.train_fraction = get_or(e, "train_fraction", cfg.eval.train_fraction);
    }
    cfg.checkpoint_every = get_or(j, "checkpoint_every", cfg.checkpoint_every);
    cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
    cfg.data_root = get_or<std::string>(j, "data_root", cfg.data_root);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

nlohmann::json canonical_json(const ExperimentConfig& cfg) {
    // nlohmann's default object keeps keys sorted, which is exactly the
    // canonical ordering we want for hashing
    json j;
    j["method"] = cfg.method;
    j["seeds"] = cfg.seeds;
    j["dataset"] = {{"name", cfg.dataset.name},
                    {"limit", cfg.dataset.limit},
                    {"eval_limit", cfg.dataset.eval_limit},
                    {"resolution", cfg.dataset.resolution}};
    j["encoder"] = {{"arch", cfg.encoder.arch},
                    {"dim", cfg.encoder.dim},
                    {"width", cfg.encoder.width}};
    j["projector"] = {{"hidden", cfg.projector.hidden}, {"out", cfg.projector.out}};
    j["predictor"] = {{"hidden", cfg.predictor.hidden}, {"out", cfg.predictor.out}};
    j["ema_tau"] = cfg.ema_tau;
    j["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"weight_decay", cfg.optimizer.weight_decay},
                      {"batch_size", cfg.optimizer.batch_size},
                      {"epochs", cfg.optimizer.epochs},
                      {"momentum", cfg.optimizer.momentum},
                      {"warmup_epochs", cfg.optimizer.warmup_epochs},
                      {"schedule", cfg.optimizer.schedule}};
    j["loss"] = {{"ntxent_temperature", cfg.loss.ntxent_temperature},
                 {"barlow_lambda", cfg.loss.barlow_lambda}};
    const AugmentationConfig& g = cfg.augment;
    j["augment"] = {{"crop_enabled", g.crop_enabled},
                    {"crop_scale_lo", g.crop_scale_lo},
                    {"crop_scale_hi", g.crop_scale_hi},
                    {"flip_enabled", g.flip_enabled},
                    {"flip_prob", g.flip_prob},
                    {"jitter_enabled", g.jitter_enabled},
                    {"jitter_prob", g.jitter_prob},
                    {"brightness", g.brightness},
                    {"contrast", g.contrast},
                    {"saturation", g.saturation},
                    {"hue", g.hue},
                    {"grayscale_enabled", g.grayscale_enabled},
                    {"grayscale_prob", g.grayscale_prob},
                    {"blur_enabled", g.blur_enabled},
                    {"blur_prob", g.blur_prob},
                    {"blur_sigma_lo", g.blur_sigma_lo},
                    {"blur_sigma_hi", g.blur_sigma_hi}};
    const AffineModuleConfig& m = cfg.affine;
    j["affine"] = {{"enabled", m.enabled},
                   {"aggregation", aggregation_name(m.aggregation)},
                   {"views", affine_views_name(m.views)},
                   {"source", affine_source_name(m.source)},
                   {"components", components_json(m.mask)},
                   {"ranges", ranges_json(m.ranges)},
                   {"beta1", m.beta1},
                   {"beta2", m.beta2},
                   {"normalize_targets", m.normalize_targets},
                   {"bounded", m.bounded}};
    j["regressor_hidden"] = cfg.regressor_hidden;
    j["eval"] = {{"cadence", cfg.eval.cadence},
                 {"trials", cfg.eval.trials},
                 {"datasets", cfg.eval.datasets},
                 {"l2", cfg.eval.l2},
                 {"max_iterations", cfg.eval.max_iterations},
                 {"train_fraction", cfg.eval.train_fraction}};
    j["checkpoint_every"] = cfg.checkpoint_every;
    return j;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a64(canonical_json(cfg).dump()); }

TrainRunConfig make_train_run_config(const ExperimentConfig& cfg, uint64_t seed, int64_t trial,
                                     const std::string& run_dir) {
    TrainRunConfig run;
    run.networks.method = parse_method(cfg.method);
    run.networks.encoder = cfg.encoder;
    run.networks.projector = cfg.projector;
    run.networks.predictor = cfg.predictor;
    run.networks.regressor_hidden = cfg.regressor_hidden;
    run.networks.regressor_out = cfg.affine.target_dim();
    run.networks.with_regressor = cfg.affine.enabled;
    run.networks.regressor_concat_input = cfg.affine.aggregation == Aggregation::kConcatenation;
    run.networks.affine_source = cfg.affine.source;
    run.networks.ema_tau = cfg.ema_tau;
    run.affine = cfg.affine;
    run.augment = cfg.augment;
    run.optimizer = cfg.optimizer;
    run.loss = cfg.loss;
    run.seed = seed;
    run.trial = trial;
    run.config_hash = config_hash(cfg);
    run.checkpoint_every = cfg.checkpoint_every;
    run.run_dir = run_dir;
    return run;
}

}  // namespace affssl
