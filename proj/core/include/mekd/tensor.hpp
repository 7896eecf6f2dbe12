// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mekd {

/// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A caller-side precondition or dimensional contract was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// An operation produced NaN or Inf.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Malformed external input (IDX files, checkpoints, config text).
class FormatError : public Error {
public:
    using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Extents are strictly positive; a rank-0 tensor holds exactly one value.
/// Most graph operations treat rank-1 tensors of extent n as a 1 x n row.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor row(std::initializer_list<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    /// Leading extent for rank 2, 1 for rank <= 1.
    std::size_t rows() const;
    /// Trailing extent for rank >= 1, 1 for rank 0.
    std::size_t cols() const;

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::span<const double> row_span(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }
    std::span<double> row_span(std::size_t r) { return {values_.data() + r * cols(), cols()}; }

    double item() const;
    bool all_finite() const;
    Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

}  // namespace mekd
