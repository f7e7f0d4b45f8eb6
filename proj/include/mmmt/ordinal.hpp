#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmmt/rng.hpp"
#include "mmmt/tensor.hpp"

namespace mmmt {

/// Binary prefix encoding of an ordinal rank: rank r over K classes is r ones
/// followed by K-1-r zeros.
struct ExtendedLabels {
    std::vector<unsigned char> bits;

    std::size_t popcount() const;
    bool is_prefix() const;
};

/// Throws LabelError (mentioning `record_id` if given) when rank is outside [0, K).
ExtendedLabels extend_labels(int rank, int num_classes, const std::string& record_id = {});

/// CORAL head: one shared projection to a scalar score g(x), plus K-1
/// threshold biases. Logit k is g(x) + b_k.
struct CoralHead {
    Parameter weight;  // [d_model x 1]
    Parameter bias;    // [K-1]
    int num_classes = 0;

    CoralHead() = default;
    CoralHead(const std::string& name, std::size_t d_model, int num_classes);

    std::size_t thresholds() const { return static_cast<std::size_t>(num_classes - 1); }
};

/// logits[b, k] = <pooled[b], w> + bias[k].
Tensor coral_forward(const Tensor& pooled, const CoralHead& head);
/// Accumulates head parameter grads and returns d pooled.
Tensor coral_backward(const Tensor& pooled, CoralHead& head, const Tensor& dlogits);

/// Mean over the batch of the summed per-threshold binary cross-entropies.
/// If `dlogits` is given it receives the gradient of that mean.
double coral_loss(const Tensor& logits, std::span<const ExtendedLabels> labels, Tensor* dlogits = nullptr);

/// Rank per row: number of logits strictly greater than zero.
std::vector<int> coral_predict(const Tensor& logits);

/// Numerically stable log(1 + exp(z)).
double softplus(double z);
double sigmoid(double z);

}  // namespace mmmt
