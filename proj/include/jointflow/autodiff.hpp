#pragma once

// Reverse-mode tape over Mat<T>. A Graph owns the nodes of one forward pass;
// ops append nodes in topological order and backward() walks the tape in
// reverse. Batches are folded into rows (sample-major), so per-sample ops
// like modulation and attention take a tokens-per-sample argument instead of
// a batch axis. Gradients are only materialized along paths that request
// them, which lets frozen weights skip their weight-gradient GEMMs.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "jointflow/tensor.hpp"

namespace jointflow {

template <typename T>
class Graph {
public:
    struct Node {
        Mat<T> val;
        Mat<T> grad;  // rows==0 until touched by backward
        std::function<void(Graph&, int)> back;
        bool needs_grad = false;
        int param = -1;  // external parameter slot for leaves, else -1
    };

    std::vector<Node> nodes;

    void reset() { nodes.clear(); }
    int size() const { return static_cast<int>(nodes.size()); }

    int add(Mat<T> val, bool needs_grad, std::function<void(Graph&, int)> back, int param = -1) {
        Node n;
        n.val = std::move(val);
        n.needs_grad = needs_grad;
        n.back = needs_grad ? std::move(back) : nullptr;
        n.param = param;
        nodes.push_back(std::move(n));
        return size() - 1;
    }

    const Mat<T>& val(int id) const { return nodes[id].val; }
    Mat<T>& val(int id) { return nodes[id].val; }
    bool needs_grad(int id) const { return nodes[id].needs_grad; }

    // Gradient accumulator for a node, allocated on first use.
    Mat<T>& grad(int id) {
        Node& n = nodes[id];
        if (n.grad.rows == 0) n.grad = Mat<T>(n.val.rows, n.val.cols);
        return n.grad;
    }

    bool has_grad(int id) const { return nodes[id].grad.rows != 0; }

    void backward(int loss_id) {
        detail::require(nodes[loss_id].val.size() == 1, "backward: loss must be scalar");
        grad(loss_id).v[0] = T(1);
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes[id];
            if (n.back && n.grad.rows != 0) n.back(*this, id);
        }
    }
};

namespace ad {

template <typename T>
int leaf(Graph<T>& g, Mat<T> value, bool needs_grad, int param = -1) {
    return g.add(std::move(value), needs_grad, nullptr, param);
}

template <typename T>
int constant(Graph<T>& g, Mat<T> value) {
    return g.add(std::move(value), false, nullptr);
}

// out = a * b
template <typename T>
int matmul(Graph<T>& g, int a, int b) {
    const Mat<T>& A = g.val(a);
    const Mat<T>& B = g.val(b);
    detail::require(A.cols == B.rows, "matmul: inner dimensions differ");
    Mat<T> out(A.rows, B.cols);
    gemm_nn(A.data(), B.data(), out.data(), A.rows, A.cols, B.cols);
    bool ng = g.needs_grad(a) || g.needs_grad(b);
    return g.add(std::move(out), ng, [a, b](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& A2 = gr.val(a);
        const Mat<T>& B2 = gr.val(b);
        if (gr.needs_grad(a))
            gemm_nt(G.data(), B2, gr.grad(a).data(), A2.rows, B2.cols, A2.cols);
        if (gr.needs_grad(b))
            gemm_tn(A2.data(), G.data(), gr.grad(b).data(), A2.rows, A2.cols, B2.cols);
    });
}

// out = wa*a + wb*b, same shapes
template <typename T>
int lincomb(Graph<T>& g, int a, int b, T wa, T wb) {
    const Mat<T>& A = g.val(a);
    const Mat<T>& B = g.val(b);
    detail::require(A.same_shape(B), "lincomb: shape mismatch");
    Mat<T> out(A.rows, A.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = wa * A.v[i] + wb * B.v[i];
    bool ng = g.needs_grad(a) || g.needs_grad(b);
    return g.add(std::move(out), ng, [a, b, wa, wb](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        if (gr.needs_grad(a)) {
            Mat<T>& da = gr.grad(a);
            for (std::size_t i = 0; i < G.size(); ++i) da.v[i] += wa * G.v[i];
        }
        if (gr.needs_grad(b)) {
            Mat<T>& db = gr.grad(b);
            for (std::size_t i = 0; i < G.size(); ++i) db.v[i] += wb * G.v[i];
        }
    });
}

template <typename T>
int add(Graph<T>& g, int a, int b) {
    return lincomb(g, a, b, T(1), T(1));
}

// out = x + bias (bias broadcast over rows)
template <typename T>
int add_bias(Graph<T>& g, int x, int bias) {
    const Mat<T>& X = g.val(x);
    const Mat<T>& B = g.val(bias);
    detail::require(B.rows == 1 && B.cols == X.cols, "add_bias: bias must be [1, cols]");
    Mat<T> out(X.rows, X.cols);
    for (int r = 0; r < X.rows; ++r)
        for (int c = 0; c < X.cols; ++c) out(r, c) = X(r, c) + B(0, c);
    bool ng = g.needs_grad(x) || g.needs_grad(bias);
    return g.add(std::move(out), ng, [x, bias](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        if (gr.needs_grad(x)) {
            Mat<T>& dx = gr.grad(x);
            for (std::size_t i = 0; i < G.size(); ++i) dx.v[i] += G.v[i];
        }
        if (gr.needs_grad(bias)) {
            Mat<T>& db = gr.grad(bias);
            for (int r = 0; r < G.rows; ++r)
                for (int c = 0; c < G.cols; ++c) db(0, c) += G(r, c);
        }
    });
}

template <typename T>
int scale(Graph<T>& g, int x, T s) {
    const Mat<T>& X = g.val(x);
    Mat<T> out(X.rows, X.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = s * X.v[i];
    return g.add(std::move(out), g.needs_grad(x), [x, s](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        Mat<T>& dx = gr.grad(x);
        for (std::size_t i = 0; i < G.size(); ++i) dx.v[i] += s * G.v[i];
    });
}

template <typename T>
int hadamard(Graph<T>& g, int a, int b) {
    const Mat<T>& A = g.val(a);
    const Mat<T>& B = g.val(b);
    detail::require(A.same_shape(B), "hadamard: shape mismatch");
    Mat<T> out(A.rows, A.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = A.v[i] * B.v[i];
    bool ng = g.needs_grad(a) || g.needs_grad(b);
    return g.add(std::move(out), ng, [a, b](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& A2 = gr.val(a);
        const Mat<T>& B2 = gr.val(b);
        if (gr.needs_grad(a)) {
            Mat<T>& da = gr.grad(a);
            for (std::size_t i = 0; i < G.size(); ++i) da.v[i] += G.v[i] * B2.v[i];
        }
        if (gr.needs_grad(b)) {
            Mat<T>& db = gr.grad(b);
            for (std::size_t i = 0; i < G.size(); ++i) db.v[i] += G.v[i] * A2.v[i];
        }
    });
}

namespace detail_ad {

// tanh through exp; std::tanh on float is an order of magnitude slower.
template <typename T>
inline T fast_tanh(T x) {
    return T(1) - T(2) / (std::exp(T(2) * x) + T(1));
}

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

}  // namespace detail_ad

template <typename T>
int silu(Graph<T>& g, int x) {
    const Mat<T>& X = g.val(x);
    Mat<T> out(X.rows, X.cols);
    auto sig = std::make_shared<std::vector<T>>(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const T s = detail_ad::sigmoid(X.v[i]);
        (*sig)[i] = s;
        out.v[i] = X.v[i] * s;
    }
    return g.add(std::move(out), g.needs_grad(x), [x, sig](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& X2 = gr.val(x);
        Mat<T>& dx = gr.grad(x);
        for (std::size_t i = 0; i < G.size(); ++i) {
            const T s = (*sig)[i];
            dx.v[i] += G.v[i] * (s + X2.v[i] * s * (T(1) - s));
        }
    });
}

template <typename T>
int gelu(Graph<T>& g, int x) {
    constexpr T k0 = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T k1 = T(0.044715);
    const Mat<T>& X = g.val(x);
    Mat<T> out(X.rows, X.cols);
    auto th = std::make_shared<std::vector<T>>(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const T v = X.v[i];
        const T t = detail_ad::fast_tanh(k0 * (v + k1 * v * v * v));
        (*th)[i] = t;
        out.v[i] = T(0.5) * v * (T(1) + t);
    }
    return g.add(std::move(out), g.needs_grad(x), [x, th](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& X2 = gr.val(x);
        Mat<T>& dx = gr.grad(x);
        for (std::size_t i = 0; i < G.size(); ++i) {
            const T v = X2.v[i];
            const T t = (*th)[i];
            const T du = k0 * (T(1) + T(3) * k1 * v * v);
            dx.v[i] += G.v[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du);
        }
    });
}

// Row-wise layer norm without affine parameters (modulation supplies those).
template <typename T>
int layernorm(Graph<T>& g, int x, T eps = T(1e-6)) {
    const Mat<T>& X = g.val(x);
    const int n = X.cols;
    Mat<T> out(X.rows, n);
    auto rstd = std::make_shared<std::vector<T>>(X.rows);
    for (int r = 0; r < X.rows; ++r) {
        const T* xr = X.data() + static_cast<std::size_t>(r) * n;
        T mean = 0;
        for (int c = 0; c < n; ++c) mean += xr[c];
        mean /= T(n);
        T var = 0;
        for (int c = 0; c < n; ++c) {
            const T d = xr[c] - mean;
            var += d * d;
        }
        var /= T(n);
        const T rs = T(1) / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        T* yr = out.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) yr[c] = (xr[c] - mean) * rs;
    }
    return g.add(std::move(out), g.needs_grad(x), [x, rstd, n](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& Y = gr.val(self);  // normalized values
        Mat<T>& dx = gr.grad(x);
        for (int r = 0; r < G.rows; ++r) {
            const T* gr_ = G.data() + static_cast<std::size_t>(r) * n;
            const T* yr = Y.data() + static_cast<std::size_t>(r) * n;
            T* dxr = dx.data() + static_cast<std::size_t>(r) * n;
            T gmean = 0, gymean = 0;
            for (int c = 0; c < n; ++c) {
                gmean += gr_[c];
                gymean += gr_[c] * yr[c];
            }
            gmean /= T(n);
            gymean /= T(n);
            const T rs = (*rstd)[r];
            for (int c = 0; c < n; ++c) dxr[c] += rs * (gr_[c] - gmean - yr[c] * gymean);
        }
    });
}

// Multi-head scaled dot-product attention over sample-major rows.
// q: [batch*tq, d], k and v: [batch*tkv, d]. Attention never crosses sample
// boundaries. Softmax probabilities are kept for the backward pass.
template <typename T>
int attention(Graph<T>& g, int q, int k, int v, int heads, int batch, int tq, int tkv) {
    const Mat<T>& Q = g.val(q);
    const Mat<T>& K = g.val(k);
    const Mat<T>& V = g.val(v);
    const int d = Q.cols;
    detail::require(K.cols == d && V.cols == d, "attention: feature dims differ");
    detail::require(d % heads == 0, "attention: d_model not divisible by heads");
    detail::require(Q.rows == batch * tq && K.rows == batch * tkv && V.rows == batch * tkv,
                    "attention: row counts do not match batch layout");
    const int dh = d / heads;
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    Mat<T> out(Q.rows, d);
    auto probs = std::make_shared<std::vector<T>>(
        static_cast<std::size_t>(batch) * heads * tq * tkv);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (omp_get_max_threads() > 1)
#endif
    for (int b = 0; b < batch; ++b) {
        std::vector<T> srow(tkv);
        for (int h = 0; h < heads; ++h) {
            T* P = probs->data() + (static_cast<std::size_t>(b) * heads + h) * tq * tkv;
            for (int i = 0; i < tq; ++i) {
                const T* qi = &Q(b * tq + i, h * dh);
                T mx = -std::numeric_limits<T>::infinity();
                for (int j = 0; j < tkv; ++j) {
                    const T* kj = &K(b * tkv + j, h * dh);
                    T s = 0;
                    for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    s *= inv_sqrt;
                    srow[j] = s;
                    if (s > mx) mx = s;
                }
                T z = 0;
                for (int j = 0; j < tkv; ++j) {
                    const T e = std::exp(srow[j] - mx);
                    srow[j] = e;
                    z += e;
                }
                const T invz = T(1) / z;
                T* pi = P + static_cast<std::size_t>(i) * tkv;
                for (int j = 0; j < tkv; ++j) pi[j] = srow[j] * invz;
                T* oi = &out(b * tq + i, h * dh);
                for (int j = 0; j < tkv; ++j) {
                    const T p = pi[j];
                    const T* vj = &V(b * tkv + j, h * dh);
                    for (int c = 0; c < dh; ++c) oi[c] += p * vj[c];
                }
            }
        }
    }

    bool ng = g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v);
    return g.add(std::move(out), ng,
                 [q, k, v, heads, batch, tq, tkv, dh, inv_sqrt, probs](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& Q2 = gr.val(q);
        const Mat<T>& K2 = gr.val(k);
        const Mat<T>& V2 = gr.val(v);
        const bool nq = gr.needs_grad(q), nk = gr.needs_grad(k), nv = gr.needs_grad(v);
        Mat<T>* dQ = nq ? &gr.grad(q) : nullptr;
        Mat<T>* dK = nk ? &gr.grad(k) : nullptr;
        Mat<T>* dV = nv ? &gr.grad(v) : nullptr;
        std::vector<T> dp(static_cast<std::size_t>(tq) * tkv);
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < heads; ++h) {
                const T* P = probs->data() + (static_cast<std::size_t>(b) * heads + h) * tq * tkv;
                // dP = dO V^T ; dV += P^T dO
                for (int i = 0; i < tq; ++i) {
                    const T* gi = &G(b * tq + i, h * dh);
                    const T* pi = P + static_cast<std::size_t>(i) * tkv;
                    T* dpi = dp.data() + static_cast<std::size_t>(i) * tkv;
                    for (int j = 0; j < tkv; ++j) {
                        const T* vj = &V2(b * tkv + j, h * dh);
                        T s = 0;
                        for (int c = 0; c < dh; ++c) s += gi[c] * vj[c];
                        dpi[j] = s;
                        if (nv) {
                            T* dvj = &(*dV)(b * tkv + j, h * dh);
                            const T p = pi[j];
                            for (int c = 0; c < dh; ++c) dvj[c] += p * gi[c];
                        }
                    }
                }
                if (!nq && !nk) continue;
                // dS = P o (dP - sum_j dP o P), then dQ += dS K / sqrt(dh), dK += dS^T Q / sqrt(dh)
                for (int i = 0; i < tq; ++i) {
                    const T* pi = P + static_cast<std::size_t>(i) * tkv;
                    T* dpi = dp.data() + static_cast<std::size_t>(i) * tkv;
                    T dot = 0;
                    for (int j = 0; j < tkv; ++j) dot += dpi[j] * pi[j];
                    for (int j = 0; j < tkv; ++j) dpi[j] = pi[j] * (dpi[j] - dot) * inv_sqrt;
                    const T* qi = &Q2(b * tq + i, h * dh);
                    T* dqi = nq ? &(*dQ)(b * tq + i, h * dh) : nullptr;
                    for (int j = 0; j < tkv; ++j) {
                        const T ds = dpi[j];
                        const T* kj = &K2(b * tkv + j, h * dh);
                        if (nq)
                            for (int c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
                        if (nk) {
                            T* dkj = &(*dK)(b * tkv + j, h * dh);
                            for (int c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
                        }
                    }
                }
            }
        }
    });
}

// Embedding lookup: one output row per index.
template <typename T>
int rows_lookup(Graph<T>& g, int table, std::vector<int> indices) {
    const Mat<T>& Tb = g.val(table);
    Mat<T> out(static_cast<int>(indices.size()), Tb.cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        detail::require(indices[r] >= 0 && indices[r] < Tb.rows, "rows_lookup: index out of range");
        for (int c = 0; c < Tb.cols; ++c) out(static_cast<int>(r), c) = Tb(indices[r], c);
    }
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    return g.add(std::move(out), g.needs_grad(table), [table, idx](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        Mat<T>& dt = gr.grad(table);
        for (std::size_t r = 0; r < idx->size(); ++r)
            for (int c = 0; c < G.cols; ++c) dt((*idx)[r], c) += G(static_cast<int>(r), c);
    });
}

// y = x * (1 + scale_b) + shift_b with one (scale, shift) row per sample.
template <typename T>
int modulate(Graph<T>& g, int x, int scale_id, int shift_id, int tokens_per_sample) {
    const Mat<T>& X = g.val(x);
    const Mat<T>& S = g.val(scale_id);
    const Mat<T>& Sh = g.val(shift_id);
    detail::require(S.cols == X.cols && Sh.cols == X.cols, "modulate: feature dims differ");
    detail::require(X.rows == S.rows * tokens_per_sample && S.rows == Sh.rows,
                    "modulate: row layout mismatch");
    Mat<T> out(X.rows, X.cols);
    for (int r = 0; r < X.rows; ++r) {
        const int b = r / tokens_per_sample;
        for (int c = 0; c < X.cols; ++c) out(r, c) = X(r, c) * (T(1) + S(b, c)) + Sh(b, c);
    }
    bool ng = g.needs_grad(x) || g.needs_grad(scale_id) || g.needs_grad(shift_id);
    return g.add(std::move(out), ng,
                 [x, scale_id, shift_id, tokens_per_sample](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& X2 = gr.val(x);
        const Mat<T>& S2 = gr.val(scale_id);
        for (int r = 0; r < G.rows; ++r) {
            const int b = r / tokens_per_sample;
            if (gr.needs_grad(x)) {
                Mat<T>& dx = gr.grad(x);
                for (int c = 0; c < G.cols; ++c) dx(r, c) += G(r, c) * (T(1) + S2(b, c));
            }
            if (gr.needs_grad(scale_id)) {
                Mat<T>& ds = gr.grad(scale_id);
                for (int c = 0; c < G.cols; ++c) ds(b, c) += G(r, c) * X2(r, c);
            }
            if (gr.needs_grad(shift_id)) {
                Mat<T>& dsh = gr.grad(shift_id);
                for (int c = 0; c < G.cols; ++c) dsh(b, c) += G(r, c);
            }
        }
    });
}

// y = x * gate_b with one gate row per sample.
template <typename T>
int gate_rows(Graph<T>& g, int x, int gate_id, int tokens_per_sample) {
    const Mat<T>& X = g.val(x);
    const Mat<T>& Gt = g.val(gate_id);
    detail::require(Gt.cols == X.cols && X.rows == Gt.rows * tokens_per_sample,
                    "gate_rows: row layout mismatch");
    Mat<T> out(X.rows, X.cols);
    for (int r = 0; r < X.rows; ++r) {
        const int b = r / tokens_per_sample;
        for (int c = 0; c < X.cols; ++c) out(r, c) = X(r, c) * Gt(b, c);
    }
    bool ng = g.needs_grad(x) || g.needs_grad(gate_id);
    return g.add(std::move(out), ng, [x, gate_id, tokens_per_sample](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        const Mat<T>& X2 = gr.val(x);
        const Mat<T>& G2 = gr.val(gate_id);
        for (int r = 0; r < G.rows; ++r) {
            const int b = r / tokens_per_sample;
            if (gr.needs_grad(x)) {
                Mat<T>& dx = gr.grad(x);
                for (int c = 0; c < G.cols; ++c) dx(r, c) += G(r, c) * G2(b, c);
            }
            if (gr.needs_grad(gate_id)) {
                Mat<T>& dg = gr.grad(gate_id);
                for (int c = 0; c < G.cols; ++c) dg(b, c) += G(r, c) * X2(r, c);
            }
        }
    });
}

// Interleave one txt row per sample in front of that sample's img token rows.
template <typename T>
int concat_tokens(Graph<T>& g, int txt, int img, int img_tokens) {
    const Mat<T>& Tx = g.val(txt);
    const Mat<T>& Im = g.val(img);
    detail::require(Tx.cols == Im.cols, "concat_tokens: feature dims differ");
    detail::require(Im.rows == Tx.rows * img_tokens, "concat_tokens: row layout mismatch");
    const int batch = Tx.rows;
    const int t_all = 1 + img_tokens;
    Mat<T> out(batch * t_all, Tx.cols);
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < Tx.cols; ++c) out(b * t_all, c) = Tx(b, c);
        for (int i = 0; i < img_tokens; ++i)
            for (int c = 0; c < Tx.cols; ++c) out(b * t_all + 1 + i, c) = Im(b * img_tokens + i, c);
    }
    bool ng = g.needs_grad(txt) || g.needs_grad(img);
    return g.add(std::move(out), ng, [txt, img, img_tokens, batch, t_all](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        for (int b = 0; b < batch; ++b) {
            if (gr.needs_grad(txt)) {
                Mat<T>& dt = gr.grad(txt);
                for (int c = 0; c < G.cols; ++c) dt(b, c) += G(b * t_all, c);
            }
            if (gr.needs_grad(img)) {
                Mat<T>& di = gr.grad(img);
                for (int i = 0; i < img_tokens; ++i)
                    for (int c = 0; c < G.cols; ++c)
                        di(b * img_tokens + i, c) += G(b * t_all + 1 + i, c);
            }
        }
    });
}

// Per-sample row slice: rows [offset, offset+count) of each sample block.
template <typename T>
int split_tokens(Graph<T>& g, int x, int tokens_per_sample, int offset, int count) {
    const Mat<T>& X = g.val(x);
    detail::require(X.rows % tokens_per_sample == 0, "split_tokens: row layout mismatch");
    detail::require(offset >= 0 && offset + count <= tokens_per_sample, "split_tokens: bad slice");
    const int batch = X.rows / tokens_per_sample;
    Mat<T> out(batch * count, X.cols);
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < count; ++i)
            for (int c = 0; c < X.cols; ++c)
                out(b * count + i, c) = X(b * tokens_per_sample + offset + i, c);
    return g.add(std::move(out), g.needs_grad(x),
                 [x, tokens_per_sample, offset, count, batch](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        Mat<T>& dx = gr.grad(x);
        for (int b = 0; b < batch; ++b)
            for (int i = 0; i < count; ++i)
                for (int c = 0; c < G.cols; ++c)
                    dx(b * tokens_per_sample + offset + i, c) += G(b * count + i, c);
    });
}

template <typename T>
int slice_cols(Graph<T>& g, int x, int c0, int len) {
    const Mat<T>& X = g.val(x);
    detail::require(c0 >= 0 && c0 + len <= X.cols, "slice_cols: bad range");
    Mat<T> out(X.rows, len);
    for (int r = 0; r < X.rows; ++r)
        for (int c = 0; c < len; ++c) out(r, c) = X(r, c0 + c);
    return g.add(std::move(out), g.needs_grad(x), [x, c0, len](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        Mat<T>& dx = gr.grad(x);
        for (int r = 0; r < G.rows; ++r)
            for (int c = 0; c < len; ++c) dx(r, c0 + c) += G(r, c);
    });
}

template <typename T>
int concat_cols(Graph<T>& g, int a, int b) {
    const Mat<T>& A = g.val(a);
    const Mat<T>& B = g.val(b);
    detail::require(A.rows == B.rows, "concat_cols: row counts differ");
    Mat<T> out(A.rows, A.cols + B.cols);
    for (int r = 0; r < A.rows; ++r) {
        for (int c = 0; c < A.cols; ++c) out(r, c) = A(r, c);
        for (int c = 0; c < B.cols; ++c) out(r, A.cols + c) = B(r, c);
    }
    bool ng = g.needs_grad(a) || g.needs_grad(b);
    const int ac = A.cols, bc = B.cols;
    return g.add(std::move(out), ng, [a, b, ac, bc](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        if (gr.needs_grad(a)) {
            Mat<T>& da = gr.grad(a);
            for (int r = 0; r < G.rows; ++r)
                for (int c = 0; c < ac; ++c) da(r, c) += G(r, c);
        }
        if (gr.needs_grad(b)) {
            Mat<T>& db = gr.grad(b);
            for (int r = 0; r < G.rows; ++r)
                for (int c = 0; c < bc; ++c) db(r, c) += G(r, ac + c);
        }
    });
}

// Bijective element shuffle: out.flat[map[i]] = x.flat[i].
template <typename T>
int permute_flat(Graph<T>& g, int x, std::shared_ptr<const std::vector<int>> map,
                 int out_rows, int out_cols) {
    const Mat<T>& X = g.val(x);
    detail::require(map->size() == X.size(), "permute_flat: map size mismatch");
    detail::require(static_cast<std::size_t>(out_rows) * out_cols == X.size(),
                    "permute_flat: output shape must preserve element count");
    Mat<T> out(out_rows, out_cols);
    for (std::size_t i = 0; i < X.size(); ++i) out.v[(*map)[i]] = X.v[i];
    return g.add(std::move(out), g.needs_grad(x), [x, map](Graph<T>& gr, int self) {
        const Mat<T>& G = gr.grad(self);
        Mat<T>& dx = gr.grad(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += G.v[(*map)[i]];
    });
}

// Scalar node: mean((x - target)^2) over all elements.
template <typename T>
int mse_vs(Graph<T>& g, int x, Mat<T> target_in) {
    auto target = std::make_shared<const Mat<T>>(std::move(target_in));
    const Mat<T>& X = g.val(x);
    detail::require(X.same_shape(*target), "mse_vs: shape mismatch");
    T acc = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const T d = X.v[i] - target->v[i];
        acc += d * d;
    }
    Mat<T> out(1, 1);
    out.v[0] = acc / T(X.size());
    return g.add(std::move(out), g.needs_grad(x), [x, target](Graph<T>& gr, int self) {
        const T go = gr.grad(self).v[0];
        const Mat<T>& X2 = gr.val(x);
        Mat<T>& dx = gr.grad(x);
        const T w = T(2) * go / T(X2.size());
        for (std::size_t i = 0; i < X2.size(); ++i) dx.v[i] += w * (X2.v[i] - target->v[i]);
    });
}

}  // namespace ad
}  // namespace jointflow
