// SPDX-License-Identifier: Apache-2.0
#include "mekd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

namespace mekd::metrics {

namespace {
using Mat = Eigen::MatrixXd;

Mat to_eigen(const Tensor& t) {
    Mat m(Eigen::Index(t.rows()), Eigen::Index(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m(Eigen::Index(r), Eigen::Index(c)) = t.at(r, c);
    return m;
}

Tensor from_eigen(const Mat& m) {
    Tensor t(Shape{std::size_t(m.rows()), std::size_t(m.cols())});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(std::size_t(r), std::size_t(c)) = m(r, c);
    return t;
}

Mat sqrt_psd(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(m);
    if (eig.info() != Eigen::Success) throw NonFiniteError("eigendecomposition failed");
    const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}
}  // namespace

double accuracy_of(const Tensor& probs, std::span<const std::size_t> labels) {
    if (labels.empty()) throw ContractError("accuracy of an empty dataset is undefined");
    if (probs.rows() != labels.size()) throw ShapeError("prediction count does not match label count");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto row = probs.row_span(r);
        if (std::size_t(std::ranges::max_element(row) - row.begin()) == labels[r]) ++hits;
    }
    return double(hits) / double(labels.size());
}

double accuracy(const nets::Network& net, const data::Dataset& ds) {
    if (net.spec().role != nets::Role::classifier) throw ContractError("accuracy requires a classifier");
    if (net.spec().class_count != ds.classes())
        throw ContractError("classifier has " + std::to_string(net.spec().class_count) + " classes, dataset has " +
                            std::to_string(ds.classes()));
    if (ds.size() == 0) throw ContractError("accuracy of an empty dataset is undefined");
    data::EvaluationScope eval;
    return accuracy_of(net.predict(ds.samples()), ds.labels());
}

FrechetStats frechet_stats(const Tensor& samples) {
    if (!samples.all_finite()) throw NonFiniteError("frechet_stats: non-finite sample values");
    const std::size_t n = samples.rows(), d = samples.cols();
    if (n < 2) throw ContractError("frechet_stats needs at least two samples");
    const Mat x = to_eigen(samples);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Mat centered = x.rowwise() - mu;
    const Mat cov = (centered.transpose() * centered) / double(n - 1);
    FrechetStats s;
    s.mean.assign(mu.data(), mu.data() + d);
    s.covariance = from_eigen(cov);
    return s;
}

Tensor matrix_sqrt_psd(const Tensor& m, double symmetry_tol) {
    if (m.rank() != 2 || m.rows() != m.cols()) throw ShapeError("matrix_sqrt_psd expects a square matrix");
    if (!m.all_finite()) throw NonFiniteError("matrix_sqrt_psd: non-finite input");
    const Mat a = to_eigen(m);
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > symmetry_tol * scale)
        throw ContractError("matrix_sqrt_psd: input is not symmetric");
    return from_eigen(sqrt_psd(0.5 * (a + a.transpose())));
}

double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
    if (a.mean.size() != b.mean.size()) throw ShapeError("frechet_distance: dimension mismatch");
    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.mean.size(); ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
    const Mat ca = to_eigen(a.covariance);
    const Mat cb = to_eigen(b.covariance);
    // Tr((C_A C_B)^{1/2}) == Tr((S C_B S)^{1/2}) with S = C_A^{1/2}; the
    // latter is symmetric PSD.
    const Mat s = sqrt_psd(ca);
    Mat inner = s * cb * s;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(inner, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NonFiniteError("eigendecomposition failed");
    const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double fd = mean_term + ca.trace() + cb.trace() - 2.0 * cross;
    return std::max(0.0, fd);
}

double frechet_distance(const Tensor& set_a, const Tensor& set_b) {
    if (set_a.cols() != set_b.cols()) throw ShapeError("frechet_distance: sample dimension mismatch");
    return frechet_distance(frechet_stats(set_a), frechet_stats(set_b));
}

// ---------------------------------------------------------------------------

LossEvaluator supervised_ce_evaluator() {
    return {"ce", [](ad::Graph& g, ad::Var logits, std::span<const double>, std::size_t true_class) {
                const std::size_t c = logits.cols();
                Tensor onehot(Shape{1, c}, 0.0);
                onehot[true_class] = 1.0;
                return ad::neg(ad::sum(ad::mul(g.constant(std::move(onehot)), ad::log_softmax(logits))));
            }};
}

GradientProfile record_logit_gradients(nets::Network& student, const LossEvaluator& evaluator,
                                       std::span<const double> sample, std::size_t true_class,
                                       std::size_t sample_id) {
    const std::size_t c = student.spec().output_dim;
    if (student.spec().role != nets::Role::classifier) throw ContractError("gradient profiles need a classifier");
    if (true_class >= c) throw ContractError("class index " + std::to_string(true_class) + " out of range");
    ad::Graph g;
    ad::Var x = g.constant(Tensor(Shape{1, sample.size()}, std::vector<double>(sample.begin(), sample.end())));
    // Re-root the logits as a variable so the profile is d loss / d logits
    // regardless of whether the student itself is trainable.
    ad::Var logits_raw = student.forward(g, x);
    ad::Var logits = g.variable(logits_raw.value(), "logits");
    ad::Var loss = evaluator.loss(g, logits, sample, true_class);
    g.backward(loss);
    const Tensor& grad = logits.grad();
    GradientProfile p{evaluator.name, sample_id, true_class, {}};
    p.gradients.reserve(c);
    p.gradients.push_back(grad[true_class]);
    for (std::size_t k = 0; k < c; ++k)
        if (k != true_class) p.gradients.push_back(grad[k]);
    return p;
}

std::string profiles_to_csv(std::span<const GradientProfile> profiles) {
    std::ostringstream os;
    os.precision(17);
    const std::size_t c = profiles.empty() ? 0 : profiles.front().gradients.size();
    os << "experiment,sample";
    for (std::size_t k = 0; k < c; ++k) os << ",g" << k;
    os << '\n';
    for (const auto& p : profiles) {
        os << p.experiment << ',' << p.sample_id;
        for (double v : p.gradients) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

}  // namespace mekd::metrics
