#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "mmmt/tensor.hpp"

namespace mmmt {

struct GradCheckOptions {
    double eps = 1e-5;
    // Upper bound on checked entries per parameter tensor. Larger tensors are
    // probed at evenly strided positions. Zero checks every entry.
    std::size_t max_entries_per_param = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t entries_checked = 0;
};

/// Compares the gradients already stored in `params` against central
/// differences of `loss`. Relative error is |a - n| / max(1, |a|, |n|).
/// Parameter values are restored exactly after each probe.
GradCheckResult grad_check(const std::function<double()>& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace mmmt
