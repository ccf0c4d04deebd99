#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pvminer/tensor.hpp"

namespace pvminer::ag {

template <class T>
class Tape;

/// Handle to a node recorded on a tape.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const BasicTensor<T>& value() const { return tape->value(id); }
};

/// Records operations in execution order and replays them backwards.
/// Gradients accumulate into per-node buffers that are allocated on first use.
template <class T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Var<T> leaf(BasicTensor<T> value, bool requires_grad = true);
    Var<T> constant(BasicTensor<T> value) { return leaf(std::move(value), false); }

    /// Used by ops. `requires_grad` should be true iff any input requires grad.
    Var<T> record(BasicTensor<T> value, bool requires_grad, BackwardFn backward);

    const BasicTensor<T>& value(std::size_t id) const { return m_nodes[id].value; }
    bool requires_grad(std::size_t id) const { return m_nodes[id].requires_grad; }

    /// Gradient buffer of a node, zero-initialised on first access.
    BasicTensor<T>& grad_buffer(std::size_t id);

    /// Gradient of the last backward() target w.r.t. `v`; zeros if unreached.
    BasicTensor<T> grad(Var<T> v) const;

    /// Seeds d(loss)/d(loss) = 1 and propagates. Throws if loss is not scalar.
    void backward(Var<T> loss);

    std::size_t size() const noexcept { return m_nodes.size(); }

private:
    struct Node {
        BasicTensor<T> value;
        BasicTensor<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> m_nodes;
};

// --- ops --------------------------------------------------------------------
// Matrix ops read rank-1 tensors as a single row.

template <class T> Var<T> matmul(Var<T> a, Var<T> b);          // [m,k]x[k,n]
template <class T> Var<T> matmul_nt(Var<T> a, Var<T> b);       // [m,k]x[n,k]^T
template <class T> Var<T> add(Var<T> a, Var<T> b);             // same shape
template <class T> Var<T> add_row(Var<T> a, Var<T> bias);      // [m,n] + [n]
template <class T> Var<T> mul(Var<T> a, Var<T> b);             // elementwise
template <class T> Var<T> scale(Var<T> a, T factor);
template <class T> Var<T> gelu(Var<T> a);
template <class T> Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps);
/// Row softmax; keys with key_valid[j] == 0 get probability exactly zero.
template <class T> Var<T> softmax_rows(Var<T> a, std::span<const std::uint8_t> key_valid = {});
template <class T> Var<T> gather_rows(Var<T> table, std::span<const int> ids);
template <class T> Var<T> select_rows(Var<T> a, std::span<const std::size_t> rows);
template <class T> Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end);
template <class T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <class T> Var<T> sum(Var<T> a);
/// Mean over rows of -log softmax(logits)[target].
template <class T> Var<T> cross_entropy(Var<T> logits, std::span<const int> targets);
/// Mean over elements of the stable logit-form binary cross-entropy.
template <class T> Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets);

} // namespace pvminer::ag
