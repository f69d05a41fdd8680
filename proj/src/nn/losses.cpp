#include "affssl/nn/losses.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "affssl/core/errors.hpp"

namespace affssl::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const MatRM>;
using MapM = Eigen::Map<MatRM>;

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rank() != 2 || b.rank() != 2 || !a.same_shape(b))
        throw ContractError(std::string(op) + ": arguments must be equal-shape (batch, k) tensors");
}

}  // namespace

LossResult ntxent_loss(const Tensor& z1, const Tensor& z2, double temperature, bool with_grads) {
    check_pair(z1, z2, "ntxent_loss");
    const int64_t n = z1.dim(0), k = z1.dim(1);
    if (n < 2) throw ContractError("ntxent_loss: batch must be >= 2 (no negatives otherwise)");
    if (!(temperature > 0.0)) throw ContractError("ntxent_loss: temperature must be positive");
    const int64_t m = 2 * n;

    MatRM U(m, k);
    Eigen::VectorXd norms(m);
    for (int64_t i = 0; i < m; ++i) {
        const double* src = (i < n) ? z1.data() + i * k : z2.data() + (i - n) * k;
        Eigen::Map<const Eigen::VectorXd> row(src, k);
        const double nr = row.norm();
        if (nr < 1e-12) throw NumericError("ntxent_loss: zero-norm embedding row");
        norms(i) = nr;
        U.row(i) = row.transpose() / nr;
    }

    MatRM S = (U * U.transpose()) / temperature;

    double loss = 0.0;
    MatRM G;  // dL/dS
    if (with_grads) G = MatRM::Zero(m, m);
    for (int64_t i = 0; i < m; ++i) {
        const int64_t pos = (i + n) % m;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < m; ++j)
            if (j != i) mx = std::max(mx, S(i, j));
        double denom = 0.0;
        for (int64_t j = 0; j < m; ++j)
            if (j != i) denom += std::exp(S(i, j) - mx);
        loss += -(S(i, pos) - mx) + std::log(denom);
        if (with_grads) {
            const double inv = 1.0 / (static_cast<double>(m) * denom);
            for (int64_t j = 0; j < m; ++j)
                if (j != i) G(i, j) = std::exp(S(i, j) - mx) * inv;
            G(i, pos) -= 1.0 / static_cast<double>(m);
        }
    }
    loss /= static_cast<double>(m);

    LossResult out;
    out.value = loss;
    if (with_grads) {
        MatRM GU = ((G + G.transpose()) * U) / temperature;  // dL/dU
        out.g1 = Tensor({n, k});
        out.g2 = Tensor({n, k});
        for (int64_t i = 0; i < m; ++i) {
            Eigen::VectorXd g = GU.row(i).transpose();
            const Eigen::VectorXd u = U.row(i).transpose();
            g = (g - u * u.dot(g)) / norms(i);
            double* dst = (i < n) ? out.g1.data() + i * k : out.g2.data() + (i - n) * k;
            Eigen::Map<Eigen::VectorXd>(dst, k) = g;
        }
    }
    return out;
}

LossResult byol_loss(const Tensor& p_online, const Tensor& z_target, bool with_grads) {
    check_pair(p_online, z_target, "byol_loss");
    const int64_t n = p_online.dim(0), k = p_online.dim(1);
    LossResult out;
    if (with_grads) {
        out.g1 = Tensor({n, k});
        out.g2 = Tensor({n, k});  // stop-gradient: stays zero
    }
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        Eigen::Map<const Eigen::VectorXd> p(p_online.data() + i * k, k);
        Eigen::Map<const Eigen::VectorXd> z(z_target.data() + i * k, k);
        const double np = p.norm(), nz = z.norm();
        if (np < 1e-12 || nz < 1e-12) throw NumericError("byol_loss: zero-norm row");
        const double c = p.dot(z) / (np * nz);
        loss += 2.0 - 2.0 * c;
        if (with_grads) {
            Eigen::Map<Eigen::VectorXd> g(out.g1.data() + i * k, k);
            g = (-2.0 / (static_cast<double>(n) * np)) * (z / nz - (c / np) * p);
        }
    }
    out.value = loss / static_cast<double>(n);
    return out;
}

LossResult barlow_twins_loss(const Tensor& z1, const Tensor& z2, double lambda_offdiag,
                             bool with_grads) {
    check_pair(z1, z2, "barlow_twins_loss");
    const int64_t n = z1.dim(0), k = z1.dim(1);
    if (n < 2) throw ContractError("barlow_twins_loss: batch must be >= 2");
    if (!(lambda_offdiag > 0.0)) throw ContractError("barlow_twins_loss: lambda must be positive");

    MapC Z1(z1.data(), n, k);
    MapC Z2(z2.data(), n, k);

    auto standardize = [&](const MapC& Z, MatRM& Zn, Eigen::VectorXd& std_out) {
        const Eigen::RowVectorXd mean = Z.colwise().mean();
        MatRM centered = Z.rowwise() - mean;
        Eigen::VectorXd var = centered.array().square().colwise().mean().transpose();
        std_out = var.array().sqrt();
        for (int64_t d = 0; d < k; ++d)
            if (std_out(d) < 1e-12)
                throw NumericError("barlow_twins_loss: constant feature dimension (std underflow)");
        Zn = centered.array().rowwise() / std_out.transpose().array();
    };

    MatRM Zn1, Zn2;
    Eigen::VectorXd s1, s2;
    standardize(Z1, Zn1, s1);
    standardize(Z2, Zn2, s2);

    MatRM C = (Zn1.transpose() * Zn2) / static_cast<double>(n);

    double loss = 0.0;
    MatRM dC = MatRM::Zero(k, k);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            if (i == j) {
                const double d = 1.0 - C(i, i);
                loss += d * d;
                dC(i, i) = -2.0 * d;
            } else {
                loss += lambda_offdiag * C(i, j) * C(i, j);
                dC(i, j) = 2.0 * lambda_offdiag * C(i, j);
            }
        }

    LossResult out;
    out.value = loss;
    if (!with_grads) return out;

    MatRM gZn1 = (Zn2 * dC.transpose()) / static_cast<double>(n);
    MatRM gZn2 = (Zn1 * dC) / static_cast<double>(n);

    auto destandardize_grad = [&](const MatRM& g, const MatRM& Zn, const Eigen::VectorXd& std_v) {
        // x -> (x - mean) / std with population statistics.
        MatRM gx(n, k);
        for (int64_t d = 0; d < k; ++d) {
            const double gm = g.col(d).mean();
            const double gz = (g.col(d).array() * Zn.col(d).array()).mean();
            gx.col(d) = (g.col(d).array() - gm - Zn.col(d).array() * gz) / std_v(d);
        }
        return gx;
    };

    MatRM gx1 = destandardize_grad(gZn1, Zn1, s1);
    MatRM gx2 = destandardize_grad(gZn2, Zn2, s2);
    out.g1 = Tensor({n, k});
    out.g2 = Tensor({n, k});
    MapM(out.g1.data(), n, k) = gx1;
    MapM(out.g2.data(), n, k) = gx2;
    return out;
}

void ema_update(Net& online, Net& target, const EmaState& state) {
    if (state.tau < 0.0 || state.tau > 1.0) throw ConfigError("ema_update: tau must be in [0,1]");
    auto on = online.params();
    auto tg = target.params();
    if (on.size() != tg.size()) throw ContractError("ema_update: parameter layout mismatch");
    for (size_t i = 0; i < on.size(); ++i) {
        if (!on[i]->w.same_shape(tg[i]->w))
            throw ContractError("ema_update: shape mismatch at " + on[i]->name);
        double* t = tg[i]->w.data();
        const double* o = on[i]->w.data();
        for (int64_t j = 0; j < on[i]->w.numel(); ++j)
            t[j] = state.tau * t[j] + (1.0 - state.tau) * o[j];
    }
}

}  // namespace affssl::nn
