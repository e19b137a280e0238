// Channel-condition-parameterized mapper and demapper.
//
// The transmit net maps the scaled condition pair (sigma_n, sigma_phi) to a
// full constellation (2^(m+1) outputs, interleaved Re/Im, normalized to unit
// mean power inside the training graph). The receive net maps each
// carrier-recovered symbol plus the condition pair to m LLRs with the
// convention L = log(P(b=0)/P(b=1)). exact_gaussian_llrs is the closed-form
// reference demapper used to validate the learned one on phase-noise-free
// channels.
#ifndef BPSHAPE_SHAPING_HPP
#define BPSHAPE_SHAPING_HPP

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "bpshape/autodiff.hpp"
#include "bpshape/channel.hpp"
#include "bpshape/constellation.hpp"
#include "bpshape/errors.hpp"
#include "bpshape/mat.hpp"
#include "bpshape/nnkit.hpp"

namespace bpshape::shaping {

using channel::ChannelParams;
using channel::cplx;
using constellation::Constellation;

/// Affine rescaling of the conditioning inputs to [0,1] over the training
/// ranges. Raw sigmas (~0.06 vs ~0.005) are poorly scaled for small ReLU
/// nets; the constants ship inside every checkpoint.
struct ConditioningScale {
    double sigma_n_min = 0.0, sigma_n_max = 1.0;
    double sigma_phi_min = 0.0, sigma_phi_max = 1.0;

    std::array<double, 2> apply(const ChannelParams& p) const {
        auto unit = [](double x, double lo, double hi) {
            return hi > lo ? (x - lo) / (hi - lo) : 0.5;
        };
        return {unit(p.sigma_n, sigma_n_min, sigma_n_max),
                unit(p.sigma_phi, sigma_phi_min, sigma_phi_max)};
    }
};

struct TxNet {
    int bits_per_symbol = 0;
    nn::DenseNet net; // 2 -> 2^(m+1) relu -> 2^(m+1) relu -> 2^(m+1) linear
};

struct RxNet {
    int bits_per_symbol = 0;
    nn::DenseNet net; // 4 -> 2^(m+1) relu -> 2^(m+1) relu -> m linear
};

inline TxNet make_tx_net(int m, rng::Stream& init) {
    const std::size_t width = std::size_t{1} << (m + 1);
    const std::array<std::size_t, 4> dims{2, width, width, width};
    const std::array<nn::Activation, 3> acts{nn::Activation::relu, nn::Activation::relu,
                                             nn::Activation::linear};
    return {m, nn::make_dense(dims, acts, init)};
}

inline RxNet make_rx_net(int m, rng::Stream& init) {
    const std::size_t width = std::size_t{1} << (m + 1);
    const std::array<std::size_t, 4> dims{4, width, width, static_cast<std::size_t>(m)};
    const std::array<nn::Activation, 3> acts{nn::Activation::relu, nn::Activation::relu,
                                             nn::Activation::linear};
    return {m, nn::make_dense(dims, acts, init)};
}

/// bits [B x m] with entries in {0,1} -> one-hot rows [B x 2^m]; the hot
/// index is the bit pattern read most-significant-bit first.
inline Mat embed_one_hot(const Mat& bits) {
    const std::size_t B = bits.rows(), m = bits.cols();
    if (m == 0 || m > 20) throw ValidationError("embed_one_hot: bad bit count");
    Mat out(B, std::size_t{1} << m);
    for (std::size_t k = 0; k < B; ++k) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double b = bits(k, i);
            if (b != 0.0 && b != 1.0)
                throw ValidationError("embed_one_hot: entries must be 0 or 1");
            idx = (idx << 1) | static_cast<std::size_t>(b);
        }
        out(k, idx) = 1.0;
    }
    return out;
}

namespace detail {

inline Constellation points_mat_to_constellation(const Mat& pts, int m) {
    Constellation c;
    c.bits_per_symbol = m;
    const std::size_t n = pts.rows();
    c.points.resize(n);
    c.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.points[i] = cplx(pts(i, 0), pts(i, 1));
        c.labels[i] = static_cast<std::uint32_t>(i);
    }
    return c;
}

} // namespace detail

/// Recorded transmit path: condition pair -> normalized point list [2^m x 2].
inline ad::Var tx_constellation_graph(ad::Graph& g, const nn::NetVars& tx,
                                      std::array<double, 2> cond, int m) {
    ad::Var in = g.constant(Mat::row({cond[0], cond[1]}));
    ad::Var out = nn::forward_graph(g, tx, in);               // [1 x 2^(m+1)]
    ad::Var pts = g.reshape(out, std::size_t{1} << m, 2);     // interleaved Re/Im
    return g.normalize_power(pts);
}

/// Evaluates the transmit net for one channel condition. The learned
/// labeling is the identity (label i = binary of i, MSB first); geometry
/// carries the optimization, not a label permutation.
inline Constellation tx_constellation(const TxNet& tx, const ChannelParams& params,
                                      const ConditioningScale& scale) {
    const std::array<double, 2> cond = scale.apply(params);
    const std::vector<double> out = nn::forward(tx.net, std::span<const double>(cond));
    const std::size_t n = std::size_t{1} << tx.bits_per_symbol;
    Mat pts(n, 2);
    pts.storage() = out;
    Constellation c = detail::points_mat_to_constellation(pts, tx.bits_per_symbol);
    return constellation::normalize(std::move(c)); // throws DegenerateError on zero output
}

/// x_k = sum_i one_hot[k][i] * points[i].
inline std::vector<cplx> map_symbols(const Mat& one_hot, const Constellation& c) {
    if (one_hot.cols() != c.order()) throw ShapeError("map_symbols: order mismatch");
    std::vector<cplx> x(one_hot.rows());
    for (std::size_t k = 0; k < one_hot.rows(); ++k) {
        cplx acc = 0.0;
        for (std::size_t i = 0; i < one_hot.cols(); ++i) {
            const double w = one_hot(k, i);
            if (w != 0.0) acc += w * c.points[i];
        }
        x[k] = acc;
    }
    return x;
}

/// Builds the [B x 4] demapper input (Re x_hat, Im x_hat, cond) in-graph.
inline ad::Var demap_graph(ad::Graph& g, const nn::NetVars& rx, ad::Var x_hat,
                           std::array<double, 2> cond) {
    const std::size_t B = g.value(x_hat).rows();
    Mat cm(B, 2);
    for (std::size_t k = 0; k < B; ++k) {
        cm(k, 0) = cond[0];
        cm(k, 1) = cond[1];
    }
    ad::Var in = g.concat_cols(x_hat, g.constant(std::move(cm)));
    return nn::forward_graph(g, rx, in); // [B x m] LLRs
}

/// Frozen-weights demapper: per-symbol LLRs for a block of recovered symbols.
inline Mat demap(const RxNet& rx, std::span<const cplx> x_hat, const ChannelParams& params,
                 const ConditioningScale& scale) {
    const std::array<double, 2> cond = scale.apply(params);
    Mat in(x_hat.size(), 4);
    for (std::size_t k = 0; k < x_hat.size(); ++k) {
        in(k, 0) = x_hat[k].real();
        in(k, 1) = x_hat[k].imag();
        in(k, 2) = cond[0];
        in(k, 3) = cond[1];
    }
    return nn::forward(rx.net, in);
}

/// Exact bit LLRs under the circular-Gaussian likelihood with total noise
/// variance sigma_n^2 (log-sum-exp over the label subsets). Reference
/// demapper for phase-noise-free validation.
inline Mat exact_gaussian_llrs(std::span<const cplx> x_hat, const Constellation& c,
                               double sigma_n) {
    if (!(sigma_n > 0.0))
        throw std::invalid_argument("exact_gaussian_llrs: sigma_n must be > 0");
    const int m = c.bits_per_symbol;
    const std::size_t n = c.order();
    const double inv_var = 1.0 / (sigma_n * sigma_n);
    Mat llrs(x_hat.size(), static_cast<std::size_t>(m));
    std::vector<double> metric(n);
    for (std::size_t k = 0; k < x_hat.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i)
            metric[i] = -std::norm(x_hat[k] - c.points[i]) * inv_var;
        for (int bit = 0; bit < m; ++bit) {
            double max0 = -1e300, max1 = -1e300;
            for (std::size_t i = 0; i < n; ++i) {
                if (constellation::label_bit(c.labels[i], m, bit))
                    max1 = std::max(max1, metric[i]);
                else
                    max0 = std::max(max0, metric[i]);
            }
            double s0 = 0.0, s1 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (constellation::label_bit(c.labels[i], m, bit))
                    s1 += std::exp(metric[i] - max1);
                else
                    s0 += std::exp(metric[i] - max0);
            }
            llrs(k, static_cast<std::size_t>(bit)) =
                (max0 + std::log(s0)) - (max1 + std::log(s1));
        }
    }
    return llrs;
}

} // namespace bpshape::shaping

#endif
