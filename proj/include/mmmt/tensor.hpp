#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mmmt/rng.hpp"

namespace mmmt {

/// Dense row-major tensor of doubles. The model only needs rank 1 and 2.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
    const double& at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

    std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }
    std::span<const double> row(std::size_t r) const { return data().subspan(r * cols(), cols()); }

    void fill(double value);
    bool all_finite() const;

    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// A trainable tensor with its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name, Tensor value);

    void zero_grad() { grad.fill(0.0); }

    friend bool operator==(const Parameter& a, const Parameter& b) {
        return a.name == b.name && a.value == b.value;
    }
};

void zero_grads(std::span<Parameter* const> params);

// Forward operations and their reverse functions. Reverse functions
// accumulate (+=) into the gradient outputs they are given.

/// C = A * B. Throws DimensionError naming both shapes when k differs.
Tensor matmul(const Tensor& a, const Tensor& b);
/// dA += dC * B^T, dB += A^T * dC. Either output may be null.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, Tensor* da, Tensor* db);

/// Y = X * W + b with b broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db);

/// Exact GELU, x * Phi(x).
double gelu(double x);
Tensor gelu(const Tensor& x);
/// dx += dy * (Phi(x) + x * phi(x)).
void gelu_backward(const Tensor& x, const Tensor& dy, Tensor& dx);

Tensor softmax_rows(const Tensor& x);
/// Takes the softmax output y, not its input.
void softmax_rows_backward(const Tensor& y, const Tensor& dy, Tensor& dx);

struct LayerNormCache {
    Tensor normalized;           // (x - mean) / sqrt(var + eps)
    std::vector<double> inv_std;  // one per row
};

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache = nullptr);
void layer_norm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& dy, Tensor& dx,
                         Tensor* dgain, Tensor* dbias);

/// Inverted dropout. `mask` receives the per-element multiplier (0 or 1/(1-rate)),
/// or is left empty when the op is the identity.
Tensor dropout(const Tensor& x, double rate, RngState& rng, bool training, Tensor* mask = nullptr);
void dropout_backward(const Tensor& mask, const Tensor& dy, Tensor& dx);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace mmmt
