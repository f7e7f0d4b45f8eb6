#include "mmmt/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mmmt/error.hpp"

namespace mmmt {

GradCheckResult grad_check(const std::function<double()>& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
    if (!(options.eps >= 1e-6 && options.eps <= 1e-4)) {
        throw ConfigError("grad_check eps must lie in [1e-6, 1e-4]");
    }
    GradCheckResult result;
    for (Parameter* p : params) {
        const std::size_t n = p->value.size();
        std::size_t stride = 1;
        if (options.max_entries_per_param != 0 && n > options.max_entries_per_param) {
            stride = (n + options.max_entries_per_param - 1) / options.max_entries_per_param;
        }
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = p->value[i];
            p->value[i] = saved + options.eps;
            const double up = loss();
            p->value[i] = saved - options.eps;
            const double down = loss();
            p->value[i] = saved;

            const double numeric = (up - down) / (2.0 * options.eps);
            const double analytic = p->grad[i];
            const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            const double err = std::abs(analytic - numeric) / denom;
            ++result.entries_checked;
            if (err > result.max_rel_error || !std::isfinite(err)) {
                result.max_rel_error = std::isfinite(err) ? err : INFINITY;
                result.worst_param = p->name;
                result.worst_index = i;
                result.worst_analytic = analytic;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace mmmt
