#include "pvminer/math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pvminer/errors.hpp"

namespace pvminer {

namespace {

constexpr double kGeluCoeff = 0.044715;

template <class T>
std::vector<T> softmax_impl(std::span<const T> v) {
    if (v.empty()) {
        throw InvalidArgument("softmax of an empty vector");
    }
    const T max_value = *std::max_element(v.begin(), v.end());
    std::vector<T> out(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double e = std::exp(static_cast<double>(v[i] - max_value));
        out[i] = static_cast<T>(e);
        total += e;
    }
    for (auto& x : out) {
        x = static_cast<T>(static_cast<double>(x) / total);
    }
    return out;
}

} // namespace

std::vector<double> softmax(std::span<const double> v) { return softmax_impl(v); }
std::vector<float> softmax(std::span<const float> v) { return softmax_impl(v); }

double gelu(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return 0.5 * x * (1.0 + std::tanh(c * (x + kGeluCoeff * x * x * x)));
}

double gelu_derivative(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    const double t = std::tanh(c * (x + kGeluCoeff * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * kGeluCoeff * x * x);
}

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gamma,
                               std::span<const double> beta, double eps) {
    if (v.size() != gamma.size() || v.size() != beta.size()) {
        throw InvalidArgument("layer_norm: input, gamma and beta lengths differ");
    }
    if (!(eps > 0.0)) {
        throw InvalidArgument("layer_norm: eps must be positive");
    }
    if (v.empty()) {
        return {};
    }
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(v.size());
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = gamma[i] * (v[i] - mean) * inv + beta[i];
    }
    return out;
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

} // namespace pvminer
