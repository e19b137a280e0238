// Minimal dense-network kit: layer container, plain and recorded forward
// passes, Adam, and the numerically stable binary cross-entropy. The
// networks here are a handful of small layers; owning this code keeps the
// gradient path through the soft carrier recovery in one place.
#ifndef BPSHAPE_NNKIT_HPP
#define BPSHAPE_NNKIT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bpshape/autodiff.hpp"
#include "bpshape/errors.hpp"
#include "bpshape/mat.hpp"
#include "bpshape/rng.hpp"

namespace bpshape::nn {

enum class Activation { relu, linear };

struct DenseLayer {
    Mat weight; // [out x in]
    Mat bias;   // [1 x out]
    Activation act = Activation::linear;
};

struct DenseNet {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

    void validate() const {
        if (layers.empty()) throw ValidationError("DenseNet: no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const DenseLayer& l = layers[i];
            l.bias.require_shape(1, l.weight.rows(), "DenseNet bias");
            if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows())
                throw ShapeError("DenseNet: layer " + std::to_string(i) +
                                 " fan-in does not chain with previous fan-out");
        }
    }
};

/// Symmetric uniform init, |w| < sqrt(6/(fan_in+fan_out)); biases start at 0.
inline DenseNet make_dense(std::span<const std::size_t> dims,
                           std::span<const Activation> acts, rng::Stream& init) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw ValidationError("make_dense: need n+1 dims for n activations");
    DenseNet net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weight = Mat(dims[l + 1], dims[l]);
        layer.bias = Mat(1, dims[l + 1]);
        layer.act = acts[l];
        const double bound =
            std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        for (std::size_t i = 0; i < layer.weight.size(); ++i)
            layer.weight[i] = init.uniform(-bound, bound);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

/// Plain batched forward pass, X: [B x in] -> [B x out].
inline Mat forward(const DenseNet& net, const Mat& x) {
    net.validate();
    if (x.cols() != net.in_dim())
        throw ShapeError("forward: input width " + std::to_string(x.cols()) +
                         " != net in-dim " + std::to_string(net.in_dim()));
    Mat cur = x;
    for (const DenseLayer& l : net.layers) {
        const std::size_t B = cur.rows(), I = cur.cols(), O = l.weight.rows();
        Mat next(B, O);
        for (std::size_t k = 0; k < B; ++k)
            for (std::size_t o = 0; o < O; ++o) {
                double acc = l.bias[o];
                for (std::size_t i = 0; i < I; ++i) acc += cur(k, i) * l.weight(o, i);
                next(k, o) = l.act == Activation::relu && acc < 0.0 ? 0.0 : acc;
            }
        cur = std::move(next);
    }
    return cur;
}

/// Single-vector convenience wrapper.
inline std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
    Mat x(1, input.size());
    for (std::size_t i = 0; i < input.size(); ++i) x[i] = input[i];
    Mat y = forward(net, x);
    return y.storage();
}

/// Parameter nodes of one network inside a recorded graph.
struct LayerVars {
    ad::Var weight, bias;
    Activation act;
};
using NetVars = std::vector<LayerVars>;

inline NetVars declare_params(ad::Graph& g, const DenseNet& net, bool trainable = true) {
    net.validate();
    NetVars vars;
    vars.reserve(net.layers.size());
    for (const DenseLayer& l : net.layers)
        vars.push_back({g.input(l.weight, trainable), g.input(l.bias, trainable), l.act});
    return vars;
}

inline ad::Var forward_graph(ad::Graph& g, const NetVars& vars, ad::Var x) {
    ad::Var cur = x;
    for (const LayerVars& l : vars) {
        cur = g.linear(cur, l.weight, l.bias);
        if (l.act == Activation::relu) cur = g.relu(cur);
    }
    return cur;
}

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second-moment accumulators, shaped like the parameter list.
struct AdamState {
    AdamConfig cfg;
    std::uint64_t step = 0;
    std::vector<Mat> m;
    std::vector<Mat> v;
};

inline AdamState make_adam_state(std::span<const Mat* const> params, AdamConfig cfg = {}) {
    AdamState st;
    st.cfg = cfg;
    for (const Mat* p : params) {
        st.m.emplace_back(p->rows(), p->cols());
        st.v.emplace_back(p->rows(), p->cols());
    }
    return st;
}

/// One bias-corrected Adam update over a fixed-order parameter list.
inline void adam_step(std::span<Mat* const> params, std::span<const Mat* const> grads,
                      AdamState& st) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    st.step += 1;
    const double b1t = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step));
    const double b2t = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step));
    for (std::size_t j = 0; j < params.size(); ++j) {
        Mat& p = *params[j];
        const Mat& g = *grads[j];
        if (!p.same_shape(g) || !p.same_shape(st.m[j]))
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(j));
        for (std::size_t i = 0; i < p.size(); ++i) {
            st.m[j][i] = st.cfg.beta1 * st.m[j][i] + (1.0 - st.cfg.beta1) * g[i];
            st.v[j][i] = st.cfg.beta2 * st.v[j][i] + (1.0 - st.cfg.beta2) * g[i] * g[i];
            const double mhat = st.m[j][i] / b1t;
            const double vhat = st.v[j][i] / b2t;
            p[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
        }
    }
}

// ---- loss -------------------------------------------------------------------

constexpr double kLlrClamp = 40.0; // natural-log LLR clamp before the loss

inline double nats_to_bits(double nats) noexcept { return nats / std::numbers::ln2; }

/// Mean BCE in nats per (symbol, bit) cell over unmasked symbols, with the
/// project LLR convention L = log(P(0)/P(1)). Pass an empty mask span to
/// include every symbol.
inline double bce_with_logits_nats(const Mat& llrs, const Mat& bits,
                                   std::span<const std::uint8_t> mask = {}) {
    if (!llrs.same_shape(bits)) throw ShapeError("bce_with_logits: shape mismatch");
    if (!mask.empty() && mask.size() != llrs.rows())
        throw ShapeError("bce_with_logits: mask size mismatch");
    const std::size_t B = llrs.rows(), m = llrs.cols();
    std::size_t kept = 0;
    double total = 0.0;
    for (std::size_t k = 0; k < B; ++k) {
        if (!mask.empty() && !mask[k]) continue;
        ++kept;
        for (std::size_t i = 0; i < m; ++i) {
            const double sgn = 2.0 * bits(k, i) - 1.0;
            const double l = std::clamp(llrs(k, i), -kLlrClamp, kLlrClamp);
            total += ad::detail::softplus(sgn * l);
        }
    }
    if (kept == 0) throw DegenerateError("bce_with_logits: mask excludes every symbol");
    return total / static_cast<double>(kept * m);
}

inline double bce_with_logits_bits(const Mat& llrs, const Mat& bits,
                                   std::span<const std::uint8_t> mask = {}) {
    return nats_to_bits(bce_with_logits_nats(llrs, bits, mask));
}

} // namespace bpshape::nn

#endif
