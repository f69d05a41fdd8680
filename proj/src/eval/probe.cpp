#include "affssl/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "affssl/core/errors.hpp"
#include "affssl/core/rng.hpp"
#include "affssl/geometry/warp.hpp"

namespace affssl {

FeatureSet extract_features(nn::Net& encoder, const Dataset& data, int resolution,
                            int64_t batch_size) {
    if (data.size() == 0) throw ContractError("extract_features: empty dataset");
    if (batch_size <= 0) throw ContractError("extract_features: batch_size must be > 0");
    const int64_t n = static_cast<int64_t>(data.size());

    FeatureSet out;
    out.labels.resize(static_cast<size_t>(n));
    int64_t d = -1;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t end = std::min(n, start + batch_size);
        std::vector<size_t> idx(static_cast<size_t>(end - start));
        std::iota(idx.begin(), idx.end(), static_cast<size_t>(start));
        ImageBatch batch = data.get_batch(idx);
        if (batch.height() != resolution || batch.width() != resolution)
            batch = resize_bilinear(batch, resolution, resolution);
        const Tensor h = encoder.forward(image_to_tensor(batch), nullptr);
        if (d < 0) {
            d = h.dim(1);
            out.features = Tensor({n, d});
        }
        std::copy(h.data(), h.data() + h.numel(), out.features.data() + start * d);
        for (int64_t i = start; i < end; ++i)
            out.labels[static_cast<size_t>(i)] = data.label(static_cast<size_t>(i));
    }
    return out;
}

namespace {

// Mean cross-entropy + (l2 / 2n) * ||W||^2 (bias excluded) over standardized
// features with an appended constant column. w is (classes * (d+1)) flattened.
struct ProbeObjective {
    const Tensor& x;  // (n, d) standardized
    const std::vector<int>& y;
    int64_t classes;
    double l2;

    double operator()(const std::vector<double>& w, std::vector<double>& grad) const {
        const int64_t n = x.dim(0), d = x.dim(1), cols = d + 1;
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        std::vector<double> logits(static_cast<size_t>(classes));
        for (int64_t i = 0; i < n; ++i) {
            const double* xi = x.data() + i * d;
            for (int64_t k = 0; k < classes; ++k) {
                const double* wk = w.data() + k * cols;
                double s = wk[d];
                for (int64_t j = 0; j < d; ++j) s += wk[j] * xi[j];
                logits[static_cast<size_t>(k)] = s;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double denom = 0.0;
            for (double& s : logits) denom += std::exp(s - mx);
            const double log_denom = mx + std::log(denom);
            loss += log_denom - logits[static_cast<size_t>(y[static_cast<size_t>(i)])];
            for (int64_t k = 0; k < classes; ++k) {
                const double p = std::exp(logits[static_cast<size_t>(k)] - log_denom);
                const double g = p - (k == y[static_cast<size_t>(i)] ? 1.0 : 0.0);
                double* gk = grad.data() + k * cols;
                for (int64_t j = 0; j < d; ++j) gk[j] += g * xi[j];
                gk[d] += g;
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        loss *= inv_n;
        for (auto& g : grad) g *= inv_n;
        const double reg = l2 * inv_n;
        for (int64_t k = 0; k < classes; ++k)
            for (int64_t j = 0; j < d; ++j) {
                const double wv = w[static_cast<size_t>(k * cols + j)];
                loss += 0.5 * reg * wv * wv;
                grad[static_cast<size_t>(k * cols + j)] += reg * wv;
            }
        return loss;
    }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

ProbeModel fit_linear_probe(const Tensor& features, const std::vector<int>& labels,
                            int num_classes, const ProbeOptions& opts) {
    if (features.rank() != 2 || features.dim(0) == 0)
        throw ContractError("fit_linear_probe: features must be a non-empty (n, d) tensor");
    if (static_cast<size_t>(features.dim(0)) != labels.size())
        throw ContractError("fit_linear_probe: label count does not match feature rows");
    if (num_classes < 2) throw ContractError("fit_linear_probe: need at least 2 classes");
    for (int l : labels)
        if (l < 0 || l >= num_classes) throw ContractError("fit_linear_probe: label out of range");
    if (opts.l2 < 0.0 || opts.max_iterations <= 0)
        throw ConfigError("fit_linear_probe: invalid options");

    const int64_t n = features.dim(0), d = features.dim(1);
    ProbeModel model;
    model.feat_mean.assign(static_cast<size_t>(d), 0.0);
    model.feat_std.assign(static_cast<size_t>(d), 1.0);
    Tensor x = features;
    if (opts.standardize) {
        for (int64_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (int64_t i = 0; i < n; ++i) m += features[i * d + j];
            m /= static_cast<double>(n);
            double v = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double c = features[i * d + j] - m;
                v += c * c;
            }
            const double s = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
            model.feat_mean[static_cast<size_t>(j)] = m;
            model.feat_std[static_cast<size_t>(j)] = s;
            for (int64_t i = 0; i < n; ++i) x[i * d + j] = (features[i * d + j] - m) / s;
        }
    }

    const ProbeObjective obj{x, labels, num_classes, opts.l2};
    const size_t dim = static_cast<size_t>(num_classes) * static_cast<size_t>(d + 1);
    std::vector<double> w(dim, 0.0), g(dim, 0.0);
    double f = obj(w, g);

    // L-BFGS two-loop recursion, memory 10, Armijo backtracking.
    const size_t memory = 10;
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        if (norm2(g) <= opts.grad_tol) {
            model.converged = true;
            break;
        }
        std::vector<double> q = g;
        std::vector<double> alpha(s_hist.size());
        for (size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * dot(s_hist[k], q);
            for (size_t j = 0; j < dim; ++j) q[j] -= alpha[k] * y_hist[k][j];
        }
        double gamma = 1.0;
        if (!s_hist.empty()) {
            const double yy = dot(y_hist.back(), y_hist.back());
            if (yy > 0.0) gamma = dot(s_hist.back(), y_hist.back()) / yy;
        }
        for (auto& v : q) v *= gamma;
        for (size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * dot(y_hist[k], q);
            for (size_t j = 0; j < dim; ++j) q[j] += (alpha[k] - beta) * s_hist[k][j];
        }
        // q is now H*g; descend along -q
        const double g_dot_p = dot(g, q);
        if (!(g_dot_p > 0.0)) {
            // fall back to steepest descent when curvature info is unusable
            q = g;
        }
        double step = 1.0;
        const double slope = dot(g, q);
        std::vector<double> w_new(dim), g_new(dim);
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            for (size_t j = 0; j < dim; ++j) w_new[j] = w[j] - step * q[j];
            f_new = obj(w_new, g_new);
            if (std::isfinite(f_new) && f_new <= f - 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        std::vector<double> s_vec(dim), y_vec(dim);
        for (size_t j = 0; j < dim; ++j) {
            s_vec[j] = w_new[j] - w[j];
            y_vec[j] = g_new[j] - g[j];
        }
        const double sy = dot(s_vec, y_vec);
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s_vec));
            y_hist.push_back(std::move(y_vec));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        w = std::move(w_new);
        g = g_new;
        f = f_new;
    }
    if (!model.converged && norm2(g) <= opts.grad_tol) model.converged = true;
    model.iterations = it;
    model.weights = Tensor({num_classes, d + 1}, std::move(w));
    return model;
}

std::vector<int> probe_predict(const ProbeModel& model, const Tensor& features) {
    if (features.rank() != 2) throw ContractError("probe_predict: features must be (n, d)");
    const int64_t n = features.dim(0), d = features.dim(1);
    const int64_t classes = model.weights.dim(0), cols = model.weights.dim(1);
    if (cols != d + 1) throw ContractError("probe_predict: feature dim mismatch with model");
    std::vector<int> pred(static_cast<size_t>(n));
    std::vector<double> xi(static_cast<size_t>(d));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j)
            xi[static_cast<size_t>(j)] =
                (features[i * d + j] - model.feat_mean[static_cast<size_t>(j)]) /
                model.feat_std[static_cast<size_t>(j)];
        int best = 0;
        double best_score = -1e300;
        for (int64_t k = 0; k < classes; ++k) {
            const double* wk = model.weights.data() + k * cols;
            double s = wk[d];
            for (int64_t j = 0; j < d; ++j) s += wk[j] * xi[static_cast<size_t>(j)];
            if (s > best_score) {
                best_score = s;
                best = static_cast<int>(k);
            }
        }
        pred[static_cast<size_t>(i)] = best;
    }
    return pred;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw ContractError("accuracy: size mismatch or empty input");
    size_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double student_t_ci_half_width(const std::vector<double>& values) {
    if (values.empty()) throw ContractError("student_t_ci_half_width: no values");
    const size_t n = values.size();
    if (n == 1) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);  // sample variance
    const boost::math::students_t dist(static_cast<double>(n - 1));
    const double t = boost::math::quantile(dist, 0.975);
    return t * std::sqrt(var / static_cast<double>(n));
}

ProbeResult evaluate_dataset(nn::Net& encoder, const Dataset& train, const Dataset& eval,
                             const EvalOptions& opts) {
    if (opts.trials < 1) throw ConfigError("evaluate_dataset: trials must be >= 1");
    if (opts.train_fraction <= 0.0 || opts.train_fraction > 1.0)
        throw ConfigError("evaluate_dataset: train_fraction must be in (0, 1]");
    if (train.num_classes() != eval.num_classes())
        throw ContractError("evaluate_dataset: class count mismatch between splits");

    const FeatureSet train_f = extract_features(encoder, train, opts.resolution);
    const FeatureSet eval_f = extract_features(encoder, eval, opts.resolution);
    const int64_t n = train_f.features.dim(0), d = train_f.features.dim(1);
    const int64_t keep =
        std::max<int64_t>(1, static_cast<int64_t>(std::llround(opts.train_fraction * n)));

    ProbeResult res;
    res.dataset = train.name();
    for (int t = 0; t < opts.trials; ++t) {
        const uint64_t trial_seed = mix_seed({opts.seed, stream::kProbe, static_cast<uint64_t>(t)});
        std::vector<size_t> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), size_t{0});
        if (keep < n) {
            Rng rng = make_rng({trial_seed});
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(static_cast<size_t>(keep));
            std::sort(idx.begin(), idx.end());
        }
        Tensor sub({static_cast<int64_t>(idx.size()), d});
        std::vector<int> sub_labels(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            std::copy(train_f.features.data() + static_cast<int64_t>(idx[i]) * d,
                      train_f.features.data() + static_cast<int64_t>(idx[i] + 1) * d,
                      sub.data() + static_cast<int64_t>(i) * d);
            sub_labels[i] = train_f.labels[idx[i]];
        }
        const ProbeModel model = fit_linear_probe(sub, sub_labels, train.num_classes(), opts.probe);
        const double acc = accuracy(probe_predict(model, eval_f.features), eval_f.labels);
        res.trial_accuracies.push_back(acc);
        res.trial_seeds.push_back(trial_seed);
    }
    res.mean_accuracy =
        std::accumulate(res.trial_accuracies.begin(), res.trial_accuracies.end(), 0.0) /
        static_cast<double>(res.trial_accuracies.size());
    res.ci_half_width = student_t_ci_half_width(res.trial_accuracies);
    res.degenerate_ci = res.trial_accuracies.size() == 1;
    return res;
}

}  // namespace affssl
