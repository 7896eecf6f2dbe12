// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mekd/autodiff.hpp"
#include "mekd/checkpoint.hpp"

namespace mekd::nets {

enum class Role { classifier, generator, discriminator };
enum class Activation { relu, leaky_relu, tanh, sigmoid };
/// Codomain of generator images.
enum class OutputRange { unit, symmetric };

std::string to_string(Role r);
std::string to_string(Activation a);
std::string to_string(OutputRange r);
Role parse_role(const std::string& s);
Activation parse_activation(const std::string& s);
OutputRange parse_output_range(const std::string& s);

/// Fully connected network description.
///
/// Role contracts, with C = class_count and n = the data dimension:
///   classifier     n -> C, terminal softmax
///   generator      C -> n, terminal tanh rescaled into the output range
///   discriminator  n -> 1, terminal sigmoid
struct NetworkSpec {
    Role role = Role::classifier;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 0;
    std::size_t class_count = 0;
    Activation activation = Activation::relu;
    double leaky_slope = 0.2;
    OutputRange output_range = OutputRange::unit;

    bool operator==(const NetworkSpec&) const = default;
};

/// Throws ContractError if `spec` breaks its role's dimensional contract.
void validate(const NetworkSpec& spec);

NetworkSpec classifier_spec(std::size_t n, std::size_t classes, std::vector<std::size_t> hidden);
NetworkSpec generator_spec(std::size_t classes, std::size_t n, std::vector<std::size_t> hidden,
                           OutputRange range = OutputRange::unit);
NetworkSpec discriminator_spec(std::size_t n, std::size_t classes, std::vector<std::size_t> hidden);

/// A probability vector over C classes: non-negative entries summing to 1.
class ProbVector {
public:
    explicit ProbVector(std::vector<double> values);
    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::size_t argmax() const;
    Tensor as_tensor() const { return Tensor(Shape{values_.size()}, values_); }

private:
    std::vector<double> values_;
};

class Network {
public:
    Network(NetworkSpec spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    std::size_t layer_count() const { return layers_.size(); }

    /// Pre-terminal output recorded on `g`: classifier logits, generator
    /// image (already range-mapped), discriminator score before the sigmoid.
    /// Frozen networks bind their parameters as constants.
    ad::Var forward(ad::Graph& g, ad::Var x);
    /// Role terminal applied: class probabilities, image, or D(x) in (0,1).
    ad::Var output(ad::Graph& g, ad::Var x);

    /// Gradient of the discriminator score with respect to each input row,
    /// built from first-order graph ops so it can itself be differentiated
    /// with respect to the parameters.
    ad::Var score_input_gradient(ad::Graph& g, ad::Var x);

    /// Evaluation without exposing any graph: rows of `x` in, terminal
    /// outputs out. Does not count as introspection.
    Tensor predict(const Tensor& x) const;
    Tensor predict_raw(const Tensor& x) const;

    std::vector<ad::Parameter*> parameters();
    std::vector<ckpt::NamedTensor> state() const;
    void load_state(const std::vector<ckpt::NamedTensor>& state);
    void zero_grad();

    void freeze() { frozen_ = true; }
    void unfreeze() { frozen_ = false; }
    bool frozen() const { return frozen_; }

    /// Number of calls that exposed parameters or activations (forward,
    /// parameters, state). Used by source-blindness audits.
    std::size_t introspection_count() const { return introspections_; }

private:
    struct Layer {
        ad::Parameter weight;
        ad::Parameter bias;
    };

    ad::Var activate(ad::Var a) const;
    ad::Var terminal(ad::Var raw) const;
    ad::Var forward_impl(ad::Graph& g, ad::Var x, std::vector<ad::Var>* hidden_out);

    NetworkSpec spec_;
    std::vector<Layer> layers_;
    bool frozen_ = false;
    mutable std::size_t introspections_ = 0;
};

Network build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Class probabilities for one input of length n, softened at `temperature`.
ProbVector classify(const Network& net, std::span<const double> x, double temperature = 1.0);
/// Row-wise probabilities for an [m,n] batch.
Tensor classify_batch(const Network& net, const Tensor& x, double temperature = 1.0);

/// Image for one latent/probability vector of length C.
Tensor generate(const Network& net, std::span<const double> y);
Tensor generate_batch(const Network& net, const Tensor& y);

}  // namespace mekd::nets
