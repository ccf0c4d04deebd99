#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pvminer/errors.hpp"

namespace pvminer {

/// Dense row-major tensor. Rank-1 tensors are treated as a single row by the
/// matrix helpers (rows() == 1, cols() == size()).
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(std::vector<std::size_t> shape, T fill = T{})
        : m_shape(std::move(shape)), m_data(element_count(m_shape), fill) {}

    BasicTensor(std::vector<std::size_t> shape, std::vector<T> data)
        : m_shape(std::move(shape)), m_data(std::move(data)) {
        if (element_count(m_shape) != m_data.size()) {
            throw InvalidArgument("tensor data length " + std::to_string(m_data.size()) +
                                  " does not match shape product " +
                                  std::to_string(element_count(m_shape)));
        }
    }

    static BasicTensor zeros(std::vector<std::size_t> shape) { return BasicTensor(std::move(shape)); }
    static BasicTensor scalar(T value) { return BasicTensor({1}, std::vector<T>{value}); }

    const std::vector<std::size_t>& shape() const noexcept { return m_shape; }
    std::size_t size() const noexcept { return m_data.size(); }
    std::size_t rank() const noexcept { return m_shape.size(); }
    bool empty() const noexcept { return m_data.empty(); }

    std::size_t rows() const noexcept {
        if (m_shape.size() < 2) {
            return 1;
        }
        std::size_t r = 1;
        for (std::size_t i = 0; i + 1 < m_shape.size(); ++i) {
            r *= m_shape[i];
        }
        return r;
    }
    std::size_t cols() const noexcept { return m_shape.empty() ? 1 : m_shape.back(); }

    std::span<T> data() noexcept { return m_data; }
    std::span<const T> data() const noexcept { return m_data; }
    std::vector<T>& values() noexcept { return m_data; }
    const std::vector<T>& values() const noexcept { return m_data; }

    T& operator[](std::size_t i) noexcept { return m_data[i]; }
    const T& operator[](std::size_t i) const noexcept { return m_data[i]; }
    T& at(std::size_t r, std::size_t c) noexcept { return m_data[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const noexcept { return m_data[r * cols() + c]; }

    std::span<T> row(std::size_t r) noexcept { return {m_data.data() + r * cols(), cols()}; }
    std::span<const T> row(std::size_t r) const noexcept { return {m_data.data() + r * cols(), cols()}; }

    void fill(T value) { std::fill(m_data.begin(), m_data.end(), value); }

    bool all_finite() const noexcept {
        return std::all_of(m_data.begin(), m_data.end(), [](T v) { return std::isfinite(v); });
    }

    template <class U>
    BasicTensor<U> cast() const {
        std::vector<U> out(m_data.size());
        std::transform(m_data.begin(), m_data.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return BasicTensor<U>(m_shape, std::move(out));
    }

    bool same_shape(const BasicTensor& other) const noexcept { return m_shape == other.m_shape; }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

private:
    std::vector<std::size_t> m_shape;
    std::vector<T> m_data;
};

using Tensor = BasicTensor<float>;

std::string shape_string(const std::vector<std::size_t>& shape);

} // namespace pvminer
