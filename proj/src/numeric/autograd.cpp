#include "pvminer/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "pvminer/math.hpp"

namespace pvminer::ag {

template <class T>
Var<T> Tape<T>::leaf(BasicTensor<T> value, bool requires_grad) {
    m_nodes.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Var<T>{this, m_nodes.size() - 1};
}

template <class T>
Var<T> Tape<T>::record(BasicTensor<T> value, bool requires_grad, BackwardFn backward) {
    m_nodes.push_back(Node{std::move(value), {}, requires_grad,
                           requires_grad ? std::move(backward) : BackwardFn{}});
    return Var<T>{this, m_nodes.size() - 1};
}

template <class T>
BasicTensor<T>& Tape<T>::grad_buffer(std::size_t id) {
    Node& node = m_nodes[id];
    if (node.grad.size() != node.value.size() || !node.grad.same_shape(node.value)) {
        node.grad = BasicTensor<T>(node.value.shape());
    }
    return node.grad;
}

template <class T>
BasicTensor<T> Tape<T>::grad(Var<T> v) const {
    const Node& node = m_nodes.at(v.id);
    if (node.grad.same_shape(node.value) && node.grad.size() == node.value.size()) {
        return node.grad;
    }
    return BasicTensor<T>(node.value.shape());
}

template <class T>
void Tape<T>::backward(Var<T> loss) {
    if (loss.tape != this || loss.id >= m_nodes.size()) {
        throw InvalidArgument("backward: loss does not belong to this tape");
    }
    if (m_nodes[loss.id].value.size() != 1) {
        throw InvalidArgument("backward: loss must be a scalar, got shape " +
                              shape_string(m_nodes[loss.id].value.shape()));
    }
    for (auto& node : m_nodes) {
        node.grad = {};
    }
    grad_buffer(loss.id)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = m_nodes[i];
        if (node.backward && node.grad.size() == node.value.size() && !node.value.empty()) {
            node.backward(*this, i);
        }
    }
}

namespace {

template <class T>
bool any_grad(std::initializer_list<Var<T>> vars) {
    return std::any_of(vars.begin(), vars.end(), [](const Var<T>& v) { return v.tape->requires_grad(v.id); });
}

template <class T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
    if (a.tape != b.tape || a.tape == nullptr) {
        throw InvalidArgument(std::string(op) + ": operands recorded on different tapes");
    }
}

template <class T>
void matmul_into(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T{0}) {
                continue;
            }
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

} // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "matmul");
    const auto& A = a.value();
    const auto& B = b.value();
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (B.rows() != k) {
        throw InvalidArgument("matmul: inner dimensions differ (" + shape_string(A.shape()) + " x " +
                              shape_string(B.shape()) + ")");
    }
    BasicTensor<T> C({m, n});
    matmul_into(A.data().data(), B.data().data(), C.data().data(), m, k, n);
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), any_grad({a, b}), [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& A = t.value(ia);
        const auto& B = t.value(ib);
        if (t.requires_grad(ia)) {
            auto& GA = t.grad_buffer(ia);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    T acc{0};
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += G[i * n + j] * B[p * n + j];
                    }
                    GA[i * k + p] += acc;
                }
            }
        }
        if (t.requires_grad(ib)) {
            auto& GB = t.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) {
                        GB[p * n + j] += av * G[i * n + j];
                    }
                }
            }
        }
    });
}

template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "matmul_nt");
    const auto& A = a.value();
    const auto& B = b.value();
    const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    if (B.cols() != k) {
        throw InvalidArgument("matmul_nt: inner dimensions differ (" + shape_string(A.shape()) + " x " +
                              shape_string(B.shape()) + "^T)");
    }
    BasicTensor<T> C({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc{0};
            for (std::size_t p = 0; p < k; ++p) {
                acc += A[i * k + p] * B[j * k + p];
            }
            C[i * n + j] = acc;
        }
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), any_grad({a, b}), [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& A = t.value(ia);
        const auto& B = t.value(ib);
        if (t.requires_grad(ia)) {
            auto& GA = t.grad_buffer(ia);
            matmul_into(G.data().data(), B.data().data(), GA.data().data(), m, n, k);
        }
        if (t.requires_grad(ib)) {
            auto& GB = t.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const T g = G[i * n + j];
                    if (g == T{0}) {
                        continue;
                    }
                    for (std::size_t p = 0; p < k; ++p) {
                        GB[j * k + p] += g * A[i * k + p];
                    }
                }
            }
        }
    });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "add");
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.size() != B.size()) {
        throw InvalidArgument("add: shapes differ (" + shape_string(A.shape()) + " vs " +
                              shape_string(B.shape()) + ")");
    }
    BasicTensor<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] += B[i];
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), any_grad({a, b}), [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        for (std::size_t id : {ia, ib}) {
            if (t.requires_grad(id)) {
                auto& g = t.grad_buffer(id);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += G[i];
                }
            }
        }
    });
}

template <class T>
Var<T> add_row(Var<T> a, Var<T> bias) {
    require_same_tape(a, bias, "add_row");
    const auto& A = a.value();
    const auto& b = bias.value();
    const std::size_t m = A.rows(), n = A.cols();
    if (b.size() != n) {
        throw InvalidArgument("add_row: bias length " + std::to_string(b.size()) + " != columns " +
                              std::to_string(n));
    }
    BasicTensor<T> C = A;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            C[i * n + j] += b[j];
        }
    }
    const std::size_t ia = a.id, ib = bias.id;
    return a.tape->record(std::move(C), any_grad({a, bias}), [ia, ib, m, n](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        if (t.requires_grad(ia)) {
            auto& g = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += G[i];
            }
        }
        if (t.requires_grad(ib)) {
            auto& g = t.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    g[j] += G[i * n + j];
                }
            }
        }
    });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_tape(a, b, "mul");
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.size() != B.size()) {
        throw InvalidArgument("mul: shapes differ (" + shape_string(A.shape()) + " vs " +
                              shape_string(B.shape()) + ")");
    }
    BasicTensor<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) {
        C[i] *= B[i];
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), any_grad({a, b}), [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& A = t.value(ia);
        const auto& B = t.value(ib);
        if (t.requires_grad(ia)) {
            auto& g = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += G[i] * B[i];
            }
        }
        if (t.requires_grad(ib)) {
            auto& g = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += G[i] * A[i];
            }
        }
    });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
    BasicTensor<T> C = a.value();
    for (auto& x : C.values()) {
        x *= factor;
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(C), any_grad({a}), [ia, factor](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        auto& g = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += G[i] * factor;
        }
    });
}

template <class T>
Var<T> gelu(Var<T> a) {
    BasicTensor<T> C = a.value();
    for (auto& x : C.values()) {
        x = static_cast<T>(pvminer::gelu(static_cast<double>(x)));
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(C), any_grad({a}), [ia](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& X = t.value(ia);
        auto& g = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += G[i] * static_cast<T>(gelu_derivative(static_cast<double>(X[i])));
        }
    });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
    require_same_tape(x, gamma, "layer_norm");
    require_same_tape(x, beta, "layer_norm");
    const auto& X = x.value();
    const auto& g = gamma.value();
    const auto& b = beta.value();
    const std::size_t m = X.rows(), n = X.cols();
    if (g.size() != n || b.size() != n) {
        throw InvalidArgument("layer_norm: gamma/beta length does not match row width " + std::to_string(n));
    }
    if (!(eps > T{0})) {
        throw InvalidArgument("layer_norm: eps must be positive");
    }
    BasicTensor<T> Y(X.shape());
    // normalised rows and inverse std are kept for the backward pass
    auto xhat = std::make_shared<std::vector<T>>(X.size());
    auto inv_std = std::make_shared<std::vector<T>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        T mean{0};
        for (std::size_t j = 0; j < n; ++j) {
            mean += X[i * n + j];
        }
        mean /= static_cast<T>(n);
        T var{0};
        for (std::size_t j = 0; j < n; ++j) {
            const T d = X[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(n);
        const T inv = T{1} / std::sqrt(var + eps);
        (*inv_std)[i] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const T h = (X[i * n + j] - mean) * inv;
            (*xhat)[i * n + j] = h;
            Y[i * n + j] = g[j] * h + b[j];
        }
    }
    const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
    return x.tape->record(std::move(Y), any_grad({x, gamma, beta}),
                          [ix, ig, ib, m, n, xhat, inv_std](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& gam = t.value(ig);
        if (t.requires_grad(ig)) {
            auto& gg = t.grad_buffer(ig);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gg[j] += G[i * n + j] * (*xhat)[i * n + j];
                }
            }
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gb[j] += G[i * n + j];
                }
            }
        }
        if (t.requires_grad(ix)) {
            auto& gx = t.grad_buffer(ix);
            for (std::size_t i = 0; i < m; ++i) {
                T mean_d{0}, mean_dh{0};
                for (std::size_t j = 0; j < n; ++j) {
                    const T d = G[i * n + j] * gam[j];
                    mean_d += d;
                    mean_dh += d * (*xhat)[i * n + j];
                }
                mean_d /= static_cast<T>(n);
                mean_dh /= static_cast<T>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const T d = G[i * n + j] * gam[j];
                    gx[i * n + j] += (*inv_std)[i] * (d - mean_d - (*xhat)[i * n + j] * mean_dh);
                }
            }
        }
    });
}

template <class T>
Var<T> softmax_rows(Var<T> a, std::span<const std::uint8_t> key_valid) {
    const auto& A = a.value();
    const std::size_t m = A.rows(), n = A.cols();
    if (!key_valid.empty() && key_valid.size() != n) {
        throw InvalidArgument("softmax_rows: key mask length " + std::to_string(key_valid.size()) +
                              " != columns " + std::to_string(n));
    }
    BasicTensor<T> Y(A.shape());
    for (std::size_t i = 0; i < m; ++i) {
        T max_value = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (key_valid.empty() || key_valid[j]) {
                max_value = std::max(max_value, A[i * n + j]);
            }
        }
        if (!std::isfinite(max_value)) {
            continue; // no valid key: the row stays zero
        }
        T total{0};
        for (std::size_t j = 0; j < n; ++j) {
            if (key_valid.empty() || key_valid[j]) {
                const T e = std::exp(A[i * n + j] - max_value);
                Y[i * n + j] = e;
                total += e;
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            Y[i * n + j] /= total;
        }
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(Y), any_grad({a}), [ia, m, n](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& Y = t.value(self);
        auto& g = t.grad_buffer(ia);
        for (std::size_t i = 0; i < m; ++i) {
            T dot{0};
            for (std::size_t j = 0; j < n; ++j) {
                dot += G[i * n + j] * Y[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                g[i * n + j] += Y[i * n + j] * (G[i * n + j] - dot);
            }
        }
    });
}

template <class T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids) {
    const auto& E = table.value();
    const std::size_t vocab = E.rows(), d = E.cols();
    BasicTensor<T> Y({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw InvalidArgument("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                                  std::to_string(vocab) + " rows");
        }
        std::copy_n(E.data().data() + static_cast<std::size_t>(ids[i]) * d, d, Y.data().data() + i * d);
    }
    const std::size_t it = table.id;
    std::vector<int> index(ids.begin(), ids.end());
    return table.tape->record(std::move(Y), any_grad({table}),
                              [it, d, index = std::move(index)](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        auto& g = t.grad_buffer(it);
        for (std::size_t i = 0; i < index.size(); ++i) {
            const std::size_t r = static_cast<std::size_t>(index[i]);
            for (std::size_t j = 0; j < d; ++j) {
                g[r * d + j] += G[i * d + j];
            }
        }
    });
}

template <class T>
Var<T> select_rows(Var<T> a, std::span<const std::size_t> rows) {
    const auto& A = a.value();
    const std::size_t m = A.rows(), n = A.cols();
    BasicTensor<T> Y({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m) {
            throw InvalidArgument("select_rows: row " + std::to_string(rows[i]) + " out of range");
        }
        std::copy_n(A.data().data() + rows[i] * n, n, Y.data().data() + i * n);
    }
    const std::size_t ia = a.id;
    std::vector<std::size_t> index(rows.begin(), rows.end());
    return a.tape->record(std::move(Y), any_grad({a}), [ia, n, index = std::move(index)](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        auto& g = t.grad_buffer(ia);
        for (std::size_t i = 0; i < index.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                g[index[i] * n + j] += G[i * n + j];
            }
        }
    });
}

template <class T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
    const auto& A = a.value();
    const std::size_t m = A.rows(), n = A.cols();
    if (begin > end || end > n) {
        throw InvalidArgument("slice_cols: range out of bounds");
    }
    const std::size_t w = end - begin;
    BasicTensor<T> Y({m, w});
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(A.data().data() + i * n + begin, w, Y.data().data() + i * w);
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(Y), any_grad({a}), [ia, m, n, begin, w](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        auto& g = t.grad_buffer(ia);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                g[i * n + begin + j] += G[i * w + j];
            }
        }
    });
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
    if (parts.empty()) {
        throw InvalidArgument("concat_cols: no parts");
    }
    const std::size_t m = parts.front().value().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.value().rows() != m) {
            throw InvalidArgument("concat_cols: row counts differ");
        }
        widths.push_back(p.value().cols());
        total += widths.back();
        rg = rg || p.tape->requires_grad(p.id);
    }
    BasicTensor<T> Y({m, total});
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& P = parts[k].value();
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(P.data().data() + i * widths[k], widths[k], Y.data().data() + i * total + offset);
        }
        offset += widths[k];
    }
    std::vector<std::size_t> ids;
    for (const auto& p : parts) {
        ids.push_back(p.id);
    }
    return parts.front().tape->record(std::move(Y), rg,
                                      [ids = std::move(ids), widths, m, total](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                auto& g = t.grad_buffer(ids[k]);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < widths[k]; ++j) {
                        g[i * widths[k] + j] += G[i * total + offset + j];
                    }
                }
            }
            offset += widths[k];
        }
    });
}

template <class T>
Var<T> sum(Var<T> a) {
    T total{0};
    for (T x : a.value().data()) {
        total += x;
    }
    const std::size_t ia = a.id;
    return a.tape->record(BasicTensor<T>::scalar(total), any_grad({a}), [ia](Tape<T>& t, std::size_t self) {
        const T g0 = t.grad_buffer(self)[0];
        auto& g = t.grad_buffer(ia);
        for (auto& x : g.values()) {
            x += g0;
        }
    });
}

template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets) {
    const auto& Z = logits.value();
    const std::size_t m = Z.rows(), n = Z.cols();
    if (targets.size() != m || m == 0) {
        throw InvalidArgument("cross_entropy: need one target per row and at least one row");
    }
    auto probs = std::make_shared<std::vector<T>>(Z.size());
    T total{0};
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
            throw InvalidArgument("cross_entropy: target id out of range");
        }
        T max_value = Z[i * n];
        for (std::size_t j = 1; j < n; ++j) {
            max_value = std::max(max_value, Z[i * n + j]);
        }
        T s{0};
        for (std::size_t j = 0; j < n; ++j) {
            const T e = std::exp(Z[i * n + j] - max_value);
            (*probs)[i * n + j] = e;
            s += e;
        }
        for (std::size_t j = 0; j < n; ++j) {
            (*probs)[i * n + j] /= s;
        }
        total += std::log(s) + max_value - Z[i * n + static_cast<std::size_t>(targets[i])];
    }
    const std::size_t iz = logits.id;
    std::vector<int> tgt(targets.begin(), targets.end());
    return logits.tape->record(BasicTensor<T>::scalar(total / static_cast<T>(m)), any_grad({logits}),
                               [iz, m, n, probs, tgt = std::move(tgt)](Tape<T>& t, std::size_t self) {
        const T g0 = t.grad_buffer(self)[0] / static_cast<T>(m);
        auto& g = t.grad_buffer(iz);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const T onehot = static_cast<std::size_t>(tgt[i]) == j ? T{1} : T{0};
                g[i * n + j] += g0 * ((*probs)[i * n + j] - onehot);
            }
        }
    });
}

template <class T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets) {
    const auto& Z = logits.value();
    if (Z.size() != targets.size() || Z.empty()) {
        throw InvalidArgument("bce_with_logits: logits length " + std::to_string(Z.size()) +
                              " != targets length " + std::to_string(targets.size()));
    }
    T total{0};
    for (std::size_t i = 0; i < Z.size(); ++i) {
        total += static_cast<T>(softplus(static_cast<double>(Z[i]))) - Z[i] * targets[i];
    }
    const std::size_t n = Z.size();
    const std::size_t iz = logits.id;
    std::vector<T> y(targets.begin(), targets.end());
    return logits.tape->record(BasicTensor<T>::scalar(total / static_cast<T>(n)), any_grad({logits}),
                               [iz, n, y = std::move(y)](Tape<T>& t, std::size_t self) {
        const T g0 = t.grad_buffer(self)[0] / static_cast<T>(n);
        const auto& Z = t.value(iz);
        auto& g = t.grad_buffer(iz);
        for (std::size_t i = 0; i < n; ++i) {
            g[i] += g0 * (static_cast<T>(sigmoid(static_cast<double>(Z[i]))) - y[i]);
        }
    });
}

#define PVMINER_INSTANTIATE_AG(T)                                                          \
    template class Tape<T>;                                                                \
    template Var<T> matmul(Var<T>, Var<T>);                                                \
    template Var<T> matmul_nt(Var<T>, Var<T>);                                             \
    template Var<T> add(Var<T>, Var<T>);                                                   \
    template Var<T> add_row(Var<T>, Var<T>);                                               \
    template Var<T> mul(Var<T>, Var<T>);                                                   \
    template Var<T> scale(Var<T>, T);                                                      \
    template Var<T> gelu(Var<T>);                                                          \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                 \
    template Var<T> softmax_rows(Var<T>, std::span<const std::uint8_t>);                  \
    template Var<T> gather_rows(Var<T>, std::span<const int>);                             \
    template Var<T> select_rows(Var<T>, std::span<const std::size_t>);                     \
    template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                          \
    template Var<T> concat_cols(std::span<const Var<T>>);                                  \
    template Var<T> sum(Var<T>);                                                           \
    template Var<T> cross_entropy(Var<T>, std::span<const int>);                           \
    template Var<T> bce_with_logits(Var<T>, std::span<const T>);

PVMINER_INSTANTIATE_AG(float)
PVMINER_INSTANTIATE_AG(double)

#undef PVMINER_INSTANTIATE_AG

} // namespace pvminer::ag
