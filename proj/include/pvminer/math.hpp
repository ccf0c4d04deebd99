#pragma once

#include <span>
#include <vector>

namespace pvminer {

// Scalar and vector kernels shared by the tape ops and the plain-value APIs.

/// Max-subtracted softmax. Throws InvalidArgument on empty input.
std::vector<double> softmax(std::span<const double> v);
std::vector<float> softmax(std::span<const float> v);

/// Tanh approximation of GELU.
double gelu(double x);
double gelu_derivative(double x);

/// gamma * (v - mean) / sqrt(var + eps) + beta, population variance.
std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gamma,
                               std::span<const double> beta, double eps);

double sigmoid(double z);

/// log(1 + exp(z)) without overflow.
double softplus(double z);

} // namespace pvminer
