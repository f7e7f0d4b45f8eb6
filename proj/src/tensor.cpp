#include "mmmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <numbers>
#include <sstream>

#include "mmmt/error.hpp"

namespace mmmt {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + ": expected a matrix, got shape " + t.shape_string());
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string());
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged rows in Tensor::from_rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (shape_.empty()) return 1;
    return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const {
    return shape_.empty() ? 1 : shape_.back();
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions differ, " + a.shape_string() + " * " + b.shape_string());
    }
    Tensor c = Tensor::zeros(m, n);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, Tensor* da, Tensor* db) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (dc.rows() != m || dc.cols() != n) {
        throw DimensionError("matmul_backward: upstream gradient " + dc.shape_string() + " does not match " +
                             a.shape_string() + " * " + b.shape_string());
    }
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    const double* pd = dc.data().data();
    if (da) {
        require_same_shape(*da, a, "matmul_backward dA");
        double* out = da->data().data();
        for (std::size_t i = 0; i < m; ++i) {
            const double* drow = pd + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = pb + p * n;
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += drow[j] * brow[j];
                out[i * k + p] += s;
            }
        }
    }
    if (db) {
        require_same_shape(*db, b, "matmul_backward dB");
        double* out = db->data().data();
        for (std::size_t i = 0; i < m; ++i) {
            const double* drow = pd + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = pa[i * k + p];
                double* orow = out + p * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += av * drow[j];
            }
        }
    }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    if (b.size() != y.cols()) {
        throw DimensionError("linear: bias " + b.shape_string() + " does not match output " + y.shape_string());
    }
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db) {
    matmul_backward(x, w, dy, dx, dw);
    if (db) {
        for (std::size_t r = 0; r < dy.rows(); ++r) {
            auto row = dy.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) (*db)[c] += row[c];
        }
    }
}

double gelu(double x) {
    return 0.5 * x * std::erfc(-x / std::numbers::sqrt2);
}

Tensor gelu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
    return y;
}

void gelu_backward(const Tensor& x, const Tensor& dy, Tensor& dx) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        dx[i] += dy[i] * (cdf + v * pdf);
    }
}

Tensor softmax_rows(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            out[c] = std::exp(in[c] - mx);
            sum += out[c];
        }
        for (double& v : out) v /= sum;
    }
    return y;
}

void softmax_rows_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = dy.row(r);
        auto out = dx.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
        for (std::size_t c = 0; c < yr.size(); ++c) out[c] += yr[c] * (gr[c] - dot);
    }
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, LayerNormCache* cache) {
    const std::size_t d = x.cols();
    if (gain.size() != d || bias.size() != d) {
        throw DimensionError("layer_norm: affine parameters " + gain.shape_string() + " do not match input " +
                             x.shape_string());
    }
    Tensor y(x.shape());
    Tensor normalized(x.shape());
    std::vector<double> inv_std(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        auto nrow = normalized.row(r);
        auto out = y.row(r);
        for (std::size_t c = 0; c < d; ++c) {
            nrow[c] = (in[c] - mean) * is;
            out[c] = nrow[c] * gain[c] + bias[c];
        }
    }
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& dy, Tensor& dx,
                         Tensor* dgain, Tensor* dbias) {
    const Tensor& xhat = cache.normalized;
    const std::size_t d = xhat.cols();
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < xhat.rows(); ++r) {
        auto xr = xhat.row(r);
        auto gr = dy.row(r);
        auto out = dx.row(r);
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double g = gr[c] * gain[c];
            sum_g += g;
            sum_gx += g * xr[c];
            if (dgain) (*dgain)[c] += gr[c] * xr[c];
            if (dbias) (*dbias)[c] += gr[c];
        }
        const double is = cache.inv_std[r];
        for (std::size_t c = 0; c < d; ++c) {
            const double g = gr[c] * gain[c];
            out[c] += is * (g - inv_d * sum_g - xr[c] * inv_d * sum_gx);
        }
    }
}

Tensor dropout(const Tensor& x, double rate, RngState& rng, bool training, Tensor* mask) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        if (mask) *mask = Tensor();
        return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    Tensor m(x.shape());
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = rng.uniform() < rate ? 0.0 : scale;
        y[i] = x[i] * m[i];
    }
    if (mask) *mask = std::move(m);
    return y;
}

void dropout_backward(const Tensor& mask, const Tensor& dy, Tensor& dx) {
    if (mask.size() == 0) {
        add_inplace(dx, dy);
        return;
    }
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
}

void add_inplace(Tensor& dst, const Tensor& src) {
    require_same_shape(dst, src, "add_inplace");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace mmmt
