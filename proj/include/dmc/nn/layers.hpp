#pragma once

// Forward / backward primitives for a pre-LayerNorm transformer encoder.
// Everything is templated on the scalar so the same code runs in double and
// in Dual<double> (the latter differentiates the backward pass itself).
// Backward functions accumulate into gradient blocks and return the input
// gradient.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dmc/core/linalg.hpp"
#include "dmc/nn/parameters.hpp"

namespace dmc::nn {

// ---------------------------------------------------------------- linear

template <typename S, typename W, typename B>
MatX<S> linear(const MatX<S>& x, const Eigen::MatrixBase<W>& w, const Eigen::MatrixBase<B>& b) {
    MatX<S> y = mm(x, w);
    y.rowwise() += b.row(0);
    return y;
}

template <typename S, typename W, typename DW, typename DB>
MatX<S> linear_backward(const MatX<S>& x, const Eigen::MatrixBase<W>& w, const MatX<S>& dy,
                        Eigen::MatrixBase<DW>& dw, Eigen::MatrixBase<DB>& db) {
    dw += mm(x.transpose(), dy);
    db.row(0) += dy.colwise().sum();
    return mm(dy, w.transpose());
}

// ------------------------------------------------------------ layer norm

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
struct LayerNormCache {
    MatX<S> xhat;
    VecX<S> inv_std;
};

template <typename S, typename G, typename B>
MatX<S> layer_norm(const MatX<S>& x, const Eigen::MatrixBase<G>& gain, const Eigen::MatrixBase<B>& bias,
                   LayerNormCache<S>& cache) {
    using std::sqrt;
    const Index n = x.rows();
    const Index d = x.cols();
    const S inv_d = S(1.0 / static_cast<double>(d));
    cache.xhat.resize(n, d);
    cache.inv_std.resize(n);
    MatX<S> y(n, d);
    for (Index i = 0; i < n; ++i) {
        const S mean = x.row(i).sum() * inv_d;
        RowVecX<S> c = x.row(i).array() - mean;
        const S var = c.squaredNorm() * inv_d;
        const S inv = S(1.0) / sqrt(var + S(kLayerNormEps));
        cache.inv_std(i) = inv;
        cache.xhat.row(i) = c * inv;
        y.row(i) = cache.xhat.row(i).cwiseProduct(gain.row(0)) + bias.row(0);
    }
    return y;
}

template <typename S, typename G, typename DG, typename DB>
MatX<S> layer_norm_backward(const MatX<S>& dy, const Eigen::MatrixBase<G>& gain, const LayerNormCache<S>& cache,
                            Eigen::MatrixBase<DG>& dgain, Eigen::MatrixBase<DB>& dbias) {
    const Index n = dy.rows();
    const Index d = dy.cols();
    const S dd = S(static_cast<double>(d));
    dgain.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
    dbias.row(0) += dy.colwise().sum();
    MatX<S> dx(n, d);
    for (Index i = 0; i < n; ++i) {
        const RowVecX<S> dxhat = dy.row(i).cwiseProduct(gain.row(0));
        const S sum_dxhat = dxhat.sum();
        const S sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(i)).sum();
        dx.row(i) = (cache.inv_std(i) / dd) *
                    (dd * dxhat - RowVecX<S>::Constant(d, sum_dxhat) - sum_dxhat_xhat * cache.xhat.row(i));
    }
    return dx;
}

// ------------------------------------------------------------------ GELU

namespace detail {
inline constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluCubic = 0.044715;
}  // namespace detail

template <typename S>
MatX<S> gelu(const MatX<S>& x) {
    using std::tanh;
    return x.unaryExpr([](const S& v) {
        const S inner = S(detail::kGeluScale) * (v + S(detail::kGeluCubic) * v * v * v);
        return S(0.5) * v * (S(1.0) + tanh(inner));
    });
}

template <typename S>
MatX<S> gelu_backward(const MatX<S>& x, const MatX<S>& dy) {
    using std::tanh;
    const MatX<S> slope = x.unaryExpr([](const S& v) {
        const S inner = S(detail::kGeluScale) * (v + S(detail::kGeluCubic) * v * v * v);
        const S th = tanh(inner);
        const S dinner = S(detail::kGeluScale) * (S(1.0) + S(3.0 * detail::kGeluCubic) * v * v);
        return S(0.5) * (S(1.0) + th) + S(0.5) * v * (S(1.0) - th * th) * dinner;
    });
    return dy.cwiseProduct(slope);
}

// ---------------------------------------------------- multi-head attention

template <typename S>
void softmax_rows(MatX<S>& a) {
    using std::exp;
    for (Index i = 0; i < a.rows(); ++i) {
        S m = a(i, 0);
        for (Index j = 1; j < a.cols(); ++j)
            if (a(i, j) > m) m = a(i, j);
        S total = S(0.0);
        for (Index j = 0; j < a.cols(); ++j) {
            a(i, j) = exp(a(i, j) - m);
            total += a(i, j);
        }
        const S inv = S(1.0) / total;
        for (Index j = 0; j < a.cols(); ++j) a(i, j) *= inv;
    }
}

template <typename S>
struct AttentionCache {
    MatX<S> x, q, k, v, context;
    std::vector<MatX<S>> weights;  // per head, N x N
};

/// Self-attention sub-layer; parameters `<prefix>.wq/.bq/.wk/.bk/.wv/.bv/.wo/.bo`.
template <typename S>
MatX<S> attention(const Parameters<S>& p, const std::string& prefix, Index heads, const MatX<S>& x,
                  AttentionCache<S>& cache) {
    const Index n = x.rows();
    const Index d = x.cols();
    const Index dh = d / heads;
    const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));
    cache.x = x;
    cache.q = linear(x, p[prefix + ".wq"], p[prefix + ".bq"]);
    cache.k = linear(x, p[prefix + ".wk"], p[prefix + ".bk"]);
    cache.v = linear(x, p[prefix + ".wv"], p[prefix + ".bv"]);
    cache.context.resize(n, d);
    cache.weights.resize(static_cast<std::size_t>(heads));
    for (Index h = 0; h < heads; ++h) {
        MatX<S> scores = mm(cache.q.middleCols(h * dh, dh), cache.k.middleCols(h * dh, dh).transpose());
        scores *= scale;
        softmax_rows(scores);
        cache.context.middleCols(h * dh, dh) = mm(scores, cache.v.middleCols(h * dh, dh));
        cache.weights[h] = std::move(scores);
    }
    return linear(cache.context, p[prefix + ".wo"], p[prefix + ".bo"]);
}

template <typename S>
MatX<S> attention_backward(const Parameters<S>& p, Parameters<S>& g, const std::string& prefix, Index heads,
                           const AttentionCache<S>& cache, const MatX<S>& dy) {
    const Index n = cache.x.rows();
    const Index d = cache.x.cols();
    const Index dh = d / heads;
    const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));

    auto dwo = g[prefix + ".wo"];
    auto dbo = g[prefix + ".bo"];
    const MatX<S> dcontext = linear_backward(cache.context, p[prefix + ".wo"], dy, dwo, dbo);

    MatX<S> dq(n, d), dk(n, d), dv(n, d);
    for (Index h = 0; h < heads; ++h) {
        const auto& a = cache.weights[h];
        const MatX<S> dctx = dcontext.middleCols(h * dh, dh);
        const MatX<S> da = mm(dctx, cache.v.middleCols(h * dh, dh).transpose());
        dv.middleCols(h * dh, dh) = mm(a.transpose(), dctx);
        // Softmax Jacobian, row by row: ds = a * (da - <da, a>).
        MatX<S> ds(n, n);
        for (Index i = 0; i < n; ++i) {
            const S dot = da.row(i).cwiseProduct(a.row(i)).sum();
            ds.row(i) = a.row(i).cwiseProduct(da.row(i) - RowVecX<S>::Constant(n, dot));
        }
        ds *= scale;
        dq.middleCols(h * dh, dh) = mm(ds, cache.k.middleCols(h * dh, dh));
        dk.middleCols(h * dh, dh) = mm(ds.transpose(), cache.q.middleCols(h * dh, dh));
    }

    auto dwq = g[prefix + ".wq"];
    auto dbq = g[prefix + ".bq"];
    auto dwk = g[prefix + ".wk"];
    auto dbk = g[prefix + ".bk"];
    auto dwv = g[prefix + ".wv"];
    auto dbv = g[prefix + ".bv"];
    MatX<S> dx = linear_backward(cache.x, p[prefix + ".wq"], dq, dwq, dbq);
    dx += linear_backward(cache.x, p[prefix + ".wk"], dk, dwk, dbk);
    dx += linear_backward(cache.x, p[prefix + ".wv"], dv, dwv, dbv);
    return dx;
}

// ------------------------------------------------------- encoder stack

struct EncoderShape {
    Index d_model = 0;
    Index n_layers = 0;
    Index n_heads = 0;
    Index ffn_dim = 0;
};

/// Registers `<prefix>.<i>.*` block parameters and `<prefix>.final_ln.*`.
inline void add_encoder_parameters(ParameterLayout& layout, const std::string& prefix, const EncoderShape& s) {
    for (Index i = 0; i < s.n_layers; ++i) {
        const std::string b = prefix + "." + std::to_string(i);
        layout.add(b + ".ln1.gain", 1, s.d_model);
        layout.add(b + ".ln1.bias", 1, s.d_model);
        for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) layout.add(b + w, s.d_model, s.d_model);
        for (const char* w : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"}) layout.add(b + w, 1, s.d_model);
        layout.add(b + ".ln2.gain", 1, s.d_model);
        layout.add(b + ".ln2.bias", 1, s.d_model);
        layout.add(b + ".ffn.w1", s.d_model, s.ffn_dim);
        layout.add(b + ".ffn.b1", 1, s.ffn_dim);
        layout.add(b + ".ffn.w2", s.ffn_dim, s.d_model);
        layout.add(b + ".ffn.b2", 1, s.d_model);
    }
    layout.add(prefix + ".final_ln.gain", 1, s.d_model);
    layout.add(prefix + ".final_ln.bias", 1, s.d_model);
}

template <typename S>
struct EncoderBlockCache {
    LayerNormCache<S> ln1, ln2;
    AttentionCache<S> attn;
    MatX<S> ffn_in;   // LN2 output
    MatX<S> ffn_pre;  // pre-activation of the hidden layer
    MatX<S> ffn_act;
};

template <typename S>
struct EncoderCache {
    std::vector<EncoderBlockCache<S>> blocks;
    LayerNormCache<S> final_ln;
};

/// y = final_ln(blocks(x)), each block  h = x + attn(ln1(x)),  y = h + ffn(ln2(h)).
template <typename S>
MatX<S> encoder(const Parameters<S>& p, const std::string& prefix, const EncoderShape& s, MatX<S> x,
                EncoderCache<S>& cache) {
    cache.blocks.resize(static_cast<std::size_t>(s.n_layers));
    for (Index i = 0; i < s.n_layers; ++i) {
        const std::string b = prefix + "." + std::to_string(i);
        auto& c = cache.blocks[i];
        const MatX<S> a = layer_norm(x, p[b + ".ln1.gain"], p[b + ".ln1.bias"], c.ln1);
        x += attention(p, b + ".attn", s.n_heads, a, c.attn);
        c.ffn_in = layer_norm(x, p[b + ".ln2.gain"], p[b + ".ln2.bias"], c.ln2);
        c.ffn_pre = linear(c.ffn_in, p[b + ".ffn.w1"], p[b + ".ffn.b1"]);
        c.ffn_act = gelu(c.ffn_pre);
        x += linear(c.ffn_act, p[b + ".ffn.w2"], p[b + ".ffn.b2"]);
    }
    return layer_norm(x, p[prefix + ".final_ln.gain"], p[prefix + ".final_ln.bias"], cache.final_ln);
}

template <typename S>
MatX<S> encoder_backward(const Parameters<S>& p, Parameters<S>& g, const std::string& prefix, const EncoderShape& s,
                         const EncoderCache<S>& cache, const MatX<S>& dy) {
    auto dgain = g[prefix + ".final_ln.gain"];
    auto dbias = g[prefix + ".final_ln.bias"];
    MatX<S> dx = layer_norm_backward(dy, p[prefix + ".final_ln.gain"], cache.final_ln, dgain, dbias);
    for (Index i = s.n_layers - 1; i >= 0; --i) {
        const std::string b = prefix + "." + std::to_string(i);
        const auto& c = cache.blocks[i];
        {
            auto dw2 = g[b + ".ffn.w2"];
            auto db2 = g[b + ".ffn.b2"];
            const MatX<S> dact = linear_backward(c.ffn_act, p[b + ".ffn.w2"], dx, dw2, db2);
            const MatX<S> dpre = gelu_backward(c.ffn_pre, dact);
            auto dw1 = g[b + ".ffn.w1"];
            auto db1 = g[b + ".ffn.b1"];
            const MatX<S> dln2 = linear_backward(c.ffn_in, p[b + ".ffn.w1"], dpre, dw1, db1);
            auto dg2 = g[b + ".ln2.gain"];
            auto dbb2 = g[b + ".ln2.bias"];
            dx += layer_norm_backward(dln2, p[b + ".ln2.gain"], c.ln2, dg2, dbb2);
        }
        {
            const MatX<S> da = attention_backward(p, g, b + ".attn", s.n_heads, c.attn, dx);
            auto dg1 = g[b + ".ln1.gain"];
            auto dbb1 = g[b + ".ln1.bias"];
            dx += layer_norm_backward(da, p[b + ".ln1.gain"], c.ln1, dg1, dbb1);
        }
    }
    return dx;
}

/// Sinusoidal encoding of integer positions 0..n-1 (or a single value), width d.
inline Matrix sinusoidal_table(Index n, Index d, Index first = 0) {
    Matrix out(n, d);
    for (Index i = 0; i < n; ++i) {
        const double pos = static_cast<double>(first + i);
        for (Index k = 0; k < d; ++k) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (k / 2)) / static_cast<double>(d));
            out(i, k) = (k % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
        }
    }
    return out;
}

}  // namespace dmc::nn
