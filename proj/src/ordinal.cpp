#include "mmmt/ordinal.hpp"

#include <algorithm>
#include <cmath>

#include "mmmt/error.hpp"

namespace mmmt {

std::size_t ExtendedLabels::popcount() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
}

bool ExtendedLabels::is_prefix() const {
    return std::is_sorted(bits.begin(), bits.end(), std::greater<>());
}

ExtendedLabels extend_labels(int rank, int num_classes, const std::string& record_id) {
    if (num_classes < 2) {
        throw ConfigError("ordinal task needs at least 2 classes, got " + std::to_string(num_classes));
    }
    if (rank < 0 || rank >= num_classes) {
        std::string msg = "rank " + std::to_string(rank) + " outside [0, " + std::to_string(num_classes - 1) + "]";
        if (!record_id.empty()) msg += " for record '" + record_id + "'";
        throw LabelError(msg);
    }
    ExtendedLabels out;
    out.bits.assign(static_cast<std::size_t>(num_classes - 1), 0);
    std::fill_n(out.bits.begin(), rank, 1);
    return out;
}

CoralHead::CoralHead(const std::string& name, std::size_t d_model, int k)
    : weight(name + ".weight", Tensor({d_model, 1})),
      bias(name + ".bias", Tensor({static_cast<std::size_t>(k - 1)})),
      num_classes(k) {
    if (k < 2) throw ConfigError(name + ": ordinal head needs at least 2 classes");
}

Tensor coral_forward(const Tensor& pooled, const CoralHead& head) {
    const Tensor score = matmul(pooled, head.weight.value);
    const std::size_t t = head.thresholds();
    Tensor logits = Tensor::zeros(pooled.rows(), t);
    for (std::size_t b = 0; b < pooled.rows(); ++b) {
        for (std::size_t k = 0; k < t; ++k) logits.at(b, k) = score[b] + head.bias.value[k];
    }
    return logits;
}

Tensor coral_backward(const Tensor& pooled, CoralHead& head, const Tensor& dlogits) {
    Tensor dscore = Tensor::zeros(pooled.rows(), 1);
    for (std::size_t b = 0; b < dlogits.rows(); ++b) {
        for (std::size_t k = 0; k < dlogits.cols(); ++k) {
            dscore[b] += dlogits.at(b, k);
            head.bias.grad[k] += dlogits.at(b, k);
        }
    }
    Tensor dpooled(pooled.shape());
    matmul_backward(pooled, head.weight.value, dscore, &dpooled, &head.weight.grad);
    return dpooled;
}

double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double coral_loss(const Tensor& logits, std::span<const ExtendedLabels> labels, Tensor* dlogits) {
    if (labels.size() != logits.rows()) {
        throw DimensionError("coral_loss: " + std::to_string(labels.size()) + " label rows for logits " +
                             logits.shape_string());
    }
    const std::size_t batch = logits.rows();
    const std::size_t t = logits.cols();
    if (dlogits) *dlogits = Tensor(logits.shape());
    if (batch == 0) return 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b].bits.size() != t) {
            throw DimensionError("coral_loss: label width " + std::to_string(labels[b].bits.size()) +
                                 " does not match " + std::to_string(t) + " thresholds");
        }
        for (std::size_t k = 0; k < t; ++k) {
            const double z = logits.at(b, k);
            const double y = labels[b].bits[k];
            // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
            total += softplus(z) - y * z;
            if (dlogits) dlogits->at(b, k) = (sigmoid(z) - y) * inv_b;
        }
    }
    return total * inv_b;
}

std::vector<int> coral_predict(const Tensor& logits) {
    std::vector<int> ranks(logits.rows(), 0);
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        for (double z : logits.row(b)) ranks[b] += z > 0.0 ? 1 : 0;
    }
    return ranks;
}

}  // namespace mmmt
