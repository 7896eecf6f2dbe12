// SPDX-License-Identifier: Apache-2.0
// Reference implementations used as test oracles. Nothing here calls into
// the library's numerics; they are written out with plain loops.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "mekd/autodiff.hpp"

namespace oracle {

using mekd::Shape;
using mekd::Tensor;
using Matrix = std::vector<std::vector<double>>;

inline std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = u(rng);
    return t;
}

/// Rows on the probability simplex, strictly positive.
inline Tensor random_probs(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Tensor t(Shape{rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += (t.at(r, c) = u(rng));
        for (std::size_t c = 0; c < cols; ++c) t.at(r, c) /= s;
    }
    return t;
}

/// Pushes every entry at least `gap` away from each kink.
inline void avoid_kinks(Tensor& t, std::initializer_list<double> kinks, double gap = 1e-2) {
    for (double& v : t.values())
        for (double k : kinks)
            if (std::abs(v - k) < gap) v = k + (v < k ? -gap : gap);
}

// ---------------------------------------------------------------------------
// Finite differences

using ScalarFn = std::function<mekd::ad::Var(mekd::ad::Graph&, const std::vector<mekd::ad::Var>&)>;

/// |a - n| / max(|a|, |n|, floor), the largest over every input entry.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central-difference check of a scalar function of several tensors.
inline double fd_max_rel_error(const ScalarFn& fn, std::vector<Tensor> inputs, double h = 1e-5) {
    std::vector<Tensor> analytic;
    {
        mekd::ad::Graph g;
        std::vector<mekd::ad::Var> vars;
        for (const auto& t : inputs) vars.push_back(g.variable(t));
        g.backward(fn(g, vars));
        for (const auto& v : vars) analytic.push_back(v.grad().empty() ? Tensor(v.shape(), 0.0) : v.grad());
    }
    auto eval = [&](const std::vector<Tensor>& in) {
        mekd::ad::Graph g;
        std::vector<mekd::ad::Var> vars;
        for (const auto& t : in) vars.push_back(g.constant(t));
        return fn(g, vars).value().item();
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double up = eval(inputs);
            inputs[k][i] = orig - h;
            const double down = eval(inputs);
            inputs[k][i] = orig;
            worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2 * h)));
        }
    return worst;
}

// ---------------------------------------------------------------------------
// Loss oracles

inline double kld(const Tensor& pt, const Tensor& ps, double tau) {
    double total = 0.0;
    const std::size_t m = pt.rows(), c = pt.cols();
    for (std::size_t r = 0; r < m; ++r) {
        std::vector<double> a(c), b(c);
        double sa = 0.0, sb = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            a[j] = std::pow(pt.at(r, j), 1.0 / tau);
            b[j] = std::pow(ps.at(r, j), 1.0 / tau);
            sa += a[j];
            sb += b[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            const double p = a[j] / sa;
            const double q = std::max(b[j] / sb, 1e-12);
            if (p > 0.0) total += p * std::log(p / q);
        }
    }
    return total / double(m);
}

inline double clamp_prob(double d) { return std::min(std::max(d, 1e-7), 1.0 - 1e-7); }

inline double discriminator_loss(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
    double s = 0.0;
    for (std::size_t i = 0; i < d_real.size(); ++i)
        s += std::log(clamp_prob(d_real[i])) + std::log(1.0 - clamp_prob(d_fake[i]));
    return -s / double(d_real.size());
}

inline double generator_loss_log1m(const std::vector<double>& d_fake) {
    double s = 0.0;
    for (double d : d_fake) s += std::log(1.0 - clamp_prob(d));
    return s / double(d_fake.size());
}

inline double generator_loss_nonsat(const std::vector<double>& d_fake) {
    double s = 0.0;
    for (double d : d_fake) s -= std::log(clamp_prob(d));
    return s / double(d_fake.size());
}

/// Batch mean of per-row p-norm distances.
inline double mean_row_distance(const Tensor& a, const Tensor& b, int p) {
    double total = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
            const double d = a.at(r, c) - b.at(r, c);
            s += p == 1 ? std::abs(d) : d * d;
        }
        total += p == 1 ? s : std::sqrt(s);
    }
    return total / double(a.rows());
}

// ---------------------------------------------------------------------------
// Fréchet distance via cyclic Jacobi eigendecomposition

/// Eigenvalues and eigenvectors (columns of V) of a symmetric matrix.
inline std::pair<std::vector<double>, Matrix> jacobi_eigen(Matrix a) {
    const std::size_t n = a.size();
    Matrix v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = a[i][i];
    return {w, v};
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    const std::size_t n = a.size(), k = b.size(), m = b[0].size();
    Matrix out(n, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < k; ++t)
            for (std::size_t j = 0; j < m; ++j) out[i][j] += a[i][t] * b[t][j];
    return out;
}

inline Matrix sqrt_psd(const Matrix& a) {
    auto [w, v] = jacobi_eigen(a);
    const std::size_t n = a.size();
    Matrix out(n, std::vector<double>(n, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
        const double s = std::sqrt(std::max(w[k], 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i][j] += s * v[i][k] * v[j][k];
    }
    return out;
}

struct Gaussian {
    std::vector<double> mean;
    Matrix cov;
};

inline Gaussian fit(const Tensor& x) {
    const std::size_t n = x.rows(), d = x.cols();
    Gaussian g{std::vector<double>(d, 0.0), Matrix(d, std::vector<double>(d, 0.0))};
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) g.mean[j] += x.at(r, j) / double(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                g.cov[i][j] += (x.at(r, i) - g.mean[i]) * (x.at(r, j) - g.mean[j]) / double(n - 1);
    return g;
}

inline double frechet(const Gaussian& a, const Gaussian& b) {
    const std::size_t d = a.mean.size();
    double dist = 0.0;
    for (std::size_t i = 0; i < d; ++i) dist += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
    const Matrix sa = sqrt_psd(a.cov);
    const Matrix inner = sqrt_psd(matmul(matmul(sa, b.cov), sa));
    for (std::size_t i = 0; i < d; ++i) dist += a.cov[i][i] + b.cov[i][i] - 2.0 * inner[i][i];
    return std::max(dist, 0.0);
}

inline double frechet(const Tensor& x, const Tensor& y) { return frechet(fit(x), fit(y)); }

}  // namespace oracle
