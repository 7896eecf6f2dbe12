// SPDX-License-Identifier: Apache-2.0
#include "mekd/nets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Core>

namespace mekd::nets {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;

MapC view(const Tensor& t) { return MapC(t.values().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }

double apply_activation(Activation a, double x, double slope) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::leaky_relu: return x > 0.0 ? x : slope * x;
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}
}  // namespace

std::string to_string(Role r) {
    switch (r) {
        case Role::classifier: return "classifier";
        case Role::generator: return "generator";
        case Role::discriminator: return "discriminator";
    }
    return "?";
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

std::string to_string(OutputRange r) { return r == OutputRange::unit ? "unit" : "symmetric"; }

Role parse_role(const std::string& s) {
    if (s == "classifier") return Role::classifier;
    if (s == "generator") return Role::generator;
    if (s == "discriminator") return Role::discriminator;
    throw ContractError("unknown network role '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    throw ContractError("unknown activation '" + s + "'");
}

OutputRange parse_output_range(const std::string& s) {
    if (s == "unit") return OutputRange::unit;
    if (s == "symmetric") return OutputRange::symmetric;
    throw ContractError("unknown output range '" + s + "'");
}

void validate(const NetworkSpec& s) {
    if (s.input_dim == 0 || s.output_dim == 0) throw ContractError("network dimensions must be positive");
    if (std::ranges::any_of(s.hidden, [](std::size_t w) { return w == 0; }))
        throw ContractError("hidden widths must be positive");
    switch (s.role) {
        case Role::classifier:
            if (s.class_count < 2) throw ContractError("classifier needs at least 2 classes");
            if (s.output_dim != s.class_count)
                throw ContractError("classifier output_dim " + std::to_string(s.output_dim) +
                                    " != class count " + std::to_string(s.class_count));
            break;
        case Role::generator:
            if (s.input_dim != s.class_count)
                throw ContractError("generator latent dimension " + std::to_string(s.input_dim) +
                                    " must equal the class count " + std::to_string(s.class_count));
            break;
        case Role::discriminator:
            if (s.output_dim != 1) throw ContractError("discriminator output_dim must be 1");
            break;
    }
}

NetworkSpec classifier_spec(std::size_t n, std::size_t classes, std::vector<std::size_t> hidden) {
    return {Role::classifier, n, std::move(hidden), classes, classes};
}

NetworkSpec generator_spec(std::size_t classes, std::size_t n, std::vector<std::size_t> hidden, OutputRange range) {
    NetworkSpec s{Role::generator, classes, std::move(hidden), n, classes};
    s.activation = Activation::leaky_relu;
    s.output_range = range;
    return s;
}

NetworkSpec discriminator_spec(std::size_t n, std::size_t classes, std::vector<std::size_t> hidden) {
    NetworkSpec s{Role::discriminator, n, std::move(hidden), 1, classes};
    s.activation = Activation::leaky_relu;
    return s;
}

// ---------------------------------------------------------------------------

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ContractError("empty probability vector");
    double total = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("probability component outside [0,1]");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractError("probability vector does not sum to 1");
}

std::size_t ProbVector::argmax() const {
    return std::size_t(std::ranges::max_element(values_) - values_.begin());
}

// ---------------------------------------------------------------------------

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    validate(spec_);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> widths{spec_.input_dim};
    widths.insert(widths.end(), spec_.hidden.begin(), spec_.hidden.end());
    widths.push_back(spec_.output_dim);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
        const double bound = 1.0 / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Layer layer{{"l" + std::to_string(l) + ".weight", Tensor(Shape{fan_in, fan_out}), {}},
                    {"l" + std::to_string(l) + ".bias", Tensor(Shape{fan_out}), {}}};
        for (double& v : layer.weight.value.values()) v = u(rng);
        for (double& v : layer.bias.value.values()) v = u(rng);
        layers_.push_back(std::move(layer));
    }
}

ad::Var Network::activate(ad::Var a) const {
    switch (spec_.activation) {
        case Activation::relu: return ad::relu(a);
        case Activation::leaky_relu: return ad::leaky_relu(a, spec_.leaky_slope);
        case Activation::tanh: return ad::tanh(a);
        case Activation::sigmoid: return ad::sigmoid(a);
    }
    return a;
}

ad::Var Network::forward_impl(ad::Graph& g, ad::Var x, std::vector<ad::Var>* hidden_out) {
    ++introspections_;
    if (x.cols() != spec_.input_dim)
        throw ShapeError(to_string(spec_.role) + " expects inputs of width " + std::to_string(spec_.input_dim) +
                         ", got " + shape_string(x.shape()));
    ad::Var h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Layer& layer = layers_[l];
        ad::Var w = frozen_ ? g.constant(layer.weight.value, layer.weight.name) : g.param(layer.weight);
        ad::Var b = frozen_ ? g.constant(layer.bias.value, layer.bias.name) : g.param(layer.bias);
        ad::Var a = ad::linear(h, w, b);
        if (l + 1 < layers_.size()) {
            h = activate(a);
            if (hidden_out) hidden_out->push_back(h);
        } else {
            h = a;
        }
    }
    if (spec_.role == Role::generator) {
        h = ad::tanh(h);
        if (spec_.output_range == OutputRange::unit) h = ad::affine(h, 0.5, 0.5);
    }
    return h;
}

ad::Var Network::forward(ad::Graph& g, ad::Var x) { return forward_impl(g, x, nullptr); }

ad::Var Network::terminal(ad::Var raw) const {
    switch (spec_.role) {
        case Role::classifier: return ad::softmax(raw);
        case Role::discriminator: return ad::sigmoid(raw);
        case Role::generator: return raw;
    }
    return raw;
}

ad::Var Network::output(ad::Graph& g, ad::Var x) { return terminal(forward(g, x)); }

ad::Var Network::score_input_gradient(ad::Graph& g, ad::Var x) {
    if (spec_.role != Role::discriminator || spec_.output_dim != 1)
        throw ContractError("input gradients are only defined for scalar-output discriminators");
    std::vector<ad::Var> hidden;
    forward_impl(g, x, &hidden);
    // Weights are bound again as fresh leaves; backward sums the contributions
    // of every leaf that refers to the same Parameter.
    auto weight_var = [&](std::size_t l) {
        return frozen_ ? g.constant(layers_[l].weight.value) : g.param(layers_[l].weight);
    };
    const std::size_t m = x.rows();
    // d score / d h_{L-1} = 1 * W_L^T for every row.
    ad::Var delta = ad::matmul(g.constant(Tensor(Shape{m, 1}, 1.0)), ad::transpose(weight_var(layers_.size() - 1)));
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
        ad::Var h = hidden[l];
        ad::Var deriv;
        switch (spec_.activation) {
            case Activation::relu:
            case Activation::leaky_relu: {
                const double lo = spec_.activation == Activation::relu ? 0.0 : spec_.leaky_slope;
                Tensor mask(h.shape());
                for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = h.value()[i] > 0.0 ? 1.0 : lo;
                deriv = g.constant(std::move(mask), "activation_mask");
                break;
            }
            case Activation::tanh: deriv = ad::affine(ad::square(h), -1.0, 1.0); break;
            case Activation::sigmoid: deriv = ad::mul(h, ad::affine(h, -1.0, 1.0)); break;
        }
        delta = ad::matmul(ad::mul(delta, deriv), ad::transpose(weight_var(l)));
    }
    return delta;
}

Tensor Network::predict_raw(const Tensor& x) const {
    if (x.cols() != spec_.input_dim)
        throw ShapeError(to_string(spec_.role) + " expects inputs of width " + std::to_string(spec_.input_dim) +
                         ", got " + shape_string(x.shape()));
    RowMat h = view(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        RowMat a = h * view(layer.weight.value);
        a.rowwise() += view(layer.bias.value).row(0);
        if (l + 1 < layers_.size())
            a = a.unaryExpr([this](double v) { return apply_activation(spec_.activation, v, spec_.leaky_slope); });
        h = std::move(a);
    }
    if (spec_.role == Role::generator) {
        h = h.array().tanh();
        if (spec_.output_range == OutputRange::unit) h = (h.array() * 0.5 + 0.5).matrix();
    }
    Tensor out(Shape{std::size_t(h.rows()), std::size_t(h.cols())});
    std::copy(h.data(), h.data() + h.size(), out.values().begin());
    if (!out.all_finite()) throw NonFiniteError(to_string(spec_.role) + " produced a non-finite output");
    return out;
}

Tensor Network::predict(const Tensor& x) const {
    Tensor raw = predict_raw(x);
    switch (spec_.role) {
        case Role::classifier: {
            for (std::size_t r = 0; r < raw.rows(); ++r) {
                auto row = raw.row_span(r);
                const double mx = *std::ranges::max_element(row);
                double z = 0.0;
                for (double& v : row) z += (v = std::exp(v - mx));
                for (double& v : row) v /= z;
            }
            break;
        }
        case Role::discriminator:
            for (double& v : raw.values()) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case Role::generator: break;
    }
    return raw;
}

std::vector<ad::Parameter*> Network::parameters() {
    ++introspections_;
    std::vector<ad::Parameter*> out;
    for (Layer& l : layers_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<ckpt::NamedTensor> Network::state() const {
    ++introspections_;
    std::vector<ckpt::NamedTensor> out;
    for (const Layer& l : layers_) {
        out.push_back({l.weight.name, l.weight.value});
        out.push_back({l.bias.name, l.bias.value});
    }
    return out;
}

void Network::load_state(const std::vector<ckpt::NamedTensor>& state) {
    if (state.size() != 2 * layers_.size())
        throw ShapeError("checkpoint holds " + std::to_string(state.size()) + " tensors, network expects " +
                         std::to_string(2 * layers_.size()));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        for (ad::Parameter* p : {&layers_[l].weight, &layers_[l].bias}) {
            const auto it = std::ranges::find(state, p->name, &ckpt::NamedTensor::name);
            if (it == state.end()) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
            if (it->value.shape() != p->value.shape())
                throw ShapeError("parameter '" + p->name + "' has shape " + shape_string(it->value.shape()) +
                                 ", expected " + shape_string(p->value.shape()));
            p->value = it->value;
        }
    }
}

void Network::zero_grad() {
    for (Layer& l : layers_) {
        l.weight.zero_grad();
        l.bias.zero_grad();
    }
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) { return Network(spec, seed); }

// ---------------------------------------------------------------------------

namespace {
Tensor as_row(std::span<const double> v) { return Tensor(Shape{1, v.size()}, std::vector<double>(v.begin(), v.end())); }
}  // namespace

Tensor classify_batch(const Network& net, const Tensor& x, double temperature) {
    if (net.spec().role != Role::classifier) throw ContractError("classify requires a classifier network");
    if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
    if (temperature == 1.0) return net.predict(x);
    Tensor logits = net.predict_raw(x);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row_span(r);
        const double mx = *std::ranges::max_element(row);
        double z = 0.0;
        for (double& v : row) z += (v = std::exp((v - mx) / temperature));
        for (double& v : row) v /= z;
    }
    return logits;
}

ProbVector classify(const Network& net, std::span<const double> x, double temperature) {
    if (x.size() != net.spec().input_dim)
        throw ShapeError("classify: input of length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(net.spec().input_dim));
    Tensor p = classify_batch(net, as_row(x), temperature);
    return ProbVector(std::vector<double>(p.values().begin(), p.values().end()));
}

Tensor generate_batch(const Network& net, const Tensor& y) {
    if (net.spec().role != Role::generator) throw ContractError("generate requires a generator network");
    if (y.cols() != net.spec().input_dim)
        throw ShapeError("generate: latent width " + std::to_string(y.cols()) + ", expected " +
                         std::to_string(net.spec().input_dim));
    return net.predict(y);
}

Tensor generate(const Network& net, std::span<const double> y) {
    if (y.size() != net.spec().input_dim)
        throw ShapeError("generate: latent length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(net.spec().input_dim));
    return generate_batch(net, as_row(y)).reshaped(Shape{net.spec().output_dim});
}

}  // namespace mekd::nets
