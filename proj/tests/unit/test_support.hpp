#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>

#include "mmmt/model.hpp"
#include "mmmt/rng.hpp"
#include "mmmt/tensor.hpp"

namespace testing {

// Independent central-difference derivative of f with respect to x[i].
inline double numeric_partial(const std::function<double()>& f, double& x, double eps = 1e-5) {
    const double saved = x;
    x = saved + eps;
    const double up = f();
    x = saved - eps;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * eps);
}

inline double rel_error(double a, double n) {
    return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

inline mmmt::Tensor random_tensor(std::vector<std::size_t> shape, mmmt::RngState& rng, double scale = 1.0) {
    mmmt::Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal() * scale;
    return t;
}

// Small model whose full gradient check fits in a few seconds.
inline mmmt::ModelConfig tiny_config() {
    mmmt::ModelConfig c;
    c.input_dims = {24, 16, 20};
    c.d_common = 32;
    c.d_model = 16;
    return c;
}

inline std::vector<mmmt::FeatureRecord> synthetic(std::size_t n, std::uint64_t seed, double sep,
                                                  const mmmt::FeatureDims& dims) {
    mmmt::SyntheticSpec spec;
    spec.n = n;
    spec.seed = seed;
    spec.separability = sep;
    spec.dims = dims;
    return mmmt::generate_synthetic(spec);
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("mmmt-test-" + tag + "-" + std::to_string(std::rand()) + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
