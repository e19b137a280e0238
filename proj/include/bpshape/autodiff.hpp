// Reverse-mode automatic differentiation over dense matrices.
//
// A Graph records one forward computation as a tape of matrix-valued nodes;
// backward() walks the tape once in reverse and accumulates exact gradients
// into every node created with requires_grad. Complex quantities travel as
// (Re, Im) coordinate pairs, so the whole transmit -> channel -> soft BPS ->
// demapper -> loss pipeline is plain real-valued differentiation. Ops that
// the pipeline needs but a generic kit would not have (nearest-point
// distances, sliding-window sums, softmax-weighted rotation combining) are
// fused nodes with hand-written adjoints.
#ifndef BPSHAPE_AUTODIFF_HPP
#define BPSHAPE_AUTODIFF_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bpshape/bps.hpp"
#include "bpshape/errors.hpp"
#include "bpshape/mat.hpp"

namespace bpshape::ad {

struct Var {
    std::uint32_t id = 0;
};

namespace detail {

inline double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace detail

/// Test hook: relative perturbation injected into the softmin backward pass
/// (used by the self-test to prove the gradient checks can fail). Leave 0.
inline double& softmin_grad_fault() {
    static double fault = 0.0;
    return fault;
}

class Graph {
public:
    Var input(Mat value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, {});
    }
    Var constant(Mat value) { return input(std::move(value), false); }

    const Mat& value(Var v) const { return node(v).value; }

    /// Gradient of the loss w.r.t. this node; only valid after backward().
    const Mat& grad(Var v) const {
        const Node& n = node(v);
        if (!consumed_) throw std::logic_error("Graph::grad: backward() has not run");
        if (!n.requires_grad)
            throw std::logic_error("Graph::grad: node does not require gradients");
        return n.grad;
    }

    bool requires_grad(Var v) const { return node(v).requires_grad; }

    // ---- generic ops -------------------------------------------------------

    /// y = x * W^T + b  with x:[B x I], W:[O x I], b:[1 x O].
    Var linear(Var x, Var w, Var b) {
        const Mat& xv = value(x);
        const Mat& wv = value(w);
        const Mat& bv = value(b);
        if (xv.cols() != wv.cols())
            throw ShapeError("linear: input width " + std::to_string(xv.cols()) +
                             " != weight fan-in " + std::to_string(wv.cols()));
        bv.require_shape(1, wv.rows(), "linear bias");
        const std::size_t B = xv.rows(), I = xv.cols(), O = wv.rows();
        Mat y(B, O);
        for (std::size_t k = 0; k < B; ++k)
            for (std::size_t o = 0; o < O; ++o) {
                double acc = bv[o];
                for (std::size_t i = 0; i < I; ++i) acc += xv(k, i) * wv(o, i);
                y(k, o) = acc;
            }
        return push(std::move(y), any_grad({x, w, b}), [=](Graph& g, const Mat& go) {
            const Mat& xv2 = g.value(x);
            const Mat& wv2 = g.value(w);
            if (Mat* gx = g.grad_slot(x))
                for (std::size_t k = 0; k < B; ++k)
                    for (std::size_t o = 0; o < O; ++o) {
                        const double gko = go(k, o);
                        for (std::size_t i = 0; i < I; ++i) (*gx)(k, i) += gko * wv2(o, i);
                    }
            if (Mat* gw = g.grad_slot(w))
                for (std::size_t k = 0; k < B; ++k)
                    for (std::size_t o = 0; o < O; ++o) {
                        const double gko = go(k, o);
                        for (std::size_t i = 0; i < I; ++i) (*gw)(o, i) += gko * xv2(k, i);
                    }
            if (Mat* gb = g.grad_slot(b))
                for (std::size_t k = 0; k < B; ++k)
                    for (std::size_t o = 0; o < O; ++o) (*gb)[o] += go(k, o);
        });
    }

    Var matmul(Var a, Var b) {
        const Mat& av = value(a);
        const Mat& bv = value(b);
        if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions disagree");
        const std::size_t R = av.rows(), K = av.cols(), C = bv.cols();
        Mat y(R, C);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t k = 0; k < K; ++k) {
                const double arv = av(r, k);
                if (arv == 0.0) continue;
                for (std::size_t c = 0; c < C; ++c) y(r, c) += arv * bv(k, c);
            }
        return push(std::move(y), any_grad({a, b}), [=](Graph& g, const Mat& go) {
            const Mat& av2 = g.value(a);
            const Mat& bv2 = g.value(b);
            if (Mat* ga = g.grad_slot(a))
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double grc = go(r, c);
                        for (std::size_t k = 0; k < K; ++k) (*ga)(r, k) += grc * bv2(k, c);
                    }
            if (Mat* gb = g.grad_slot(b))
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t k = 0; k < K; ++k) {
                        const double arv = av2(r, k);
                        if (arv == 0.0) continue;
                        for (std::size_t c = 0; c < C; ++c) (*gb)(k, c) += arv * go(r, c);
                    }
        });
    }

    Var relu(Var x) {
        Mat y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
        return push(std::move(y), any_grad({x}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(x)) {
                const Mat& xv = g.value(x);
                for (std::size_t i = 0; i < go.size(); ++i)
                    if (xv[i] > 0.0) (*gx)[i] += go[i];
            }
        });
    }

    Var add(Var a, Var b) {
        const Mat& av = value(a);
        const Mat& bv = value(b);
        if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
        Mat y = av;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
        return push(std::move(y), any_grad({a, b}), [=](Graph& g, const Mat& go) {
            if (Mat* ga = g.grad_slot(a))
                for (std::size_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i];
            if (Mat* gb = g.grad_slot(b))
                for (std::size_t i = 0; i < go.size(); ++i) (*gb)[i] += go[i];
        });
    }

    Var scale(Var x, double s) {
        Mat y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
        return push(std::move(y), any_grad({x}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(x))
                for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += s * go[i];
        });
    }

    /// Same storage reinterpreted with a new shape (row-major order kept).
    Var reshape(Var x, std::size_t rows, std::size_t cols) {
        const Mat& xv = value(x);
        if (rows * cols != xv.size()) throw ShapeError("reshape: element count mismatch");
        Mat y(rows, cols);
        y.storage() = xv.storage();
        return push(std::move(y), any_grad({x}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(x))
                for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
        });
    }

    Var concat_cols(Var a, Var b) {
        const Mat& av = value(a);
        const Mat& bv = value(b);
        if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row count mismatch");
        const std::size_t R = av.rows(), ca = av.cols(), cb = bv.cols();
        Mat y(R, ca + cb);
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t c = 0; c < ca; ++c) y(r, c) = av(r, c);
            for (std::size_t c = 0; c < cb; ++c) y(r, ca + c) = bv(r, c);
        }
        return push(std::move(y), any_grad({a, b}), [=](Graph& g, const Mat& go) {
            if (Mat* ga = g.grad_slot(a))
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < ca; ++c) (*ga)(r, c) += go(r, c);
            if (Mat* gb = g.grad_slot(b))
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < cb; ++c) (*gb)(r, c) += go(r, ca + c);
        });
    }

    /// Elementwise clamp; gradient passes only strictly inside [lo, hi].
    Var clamp(Var x, double lo, double hi) {
        Mat y = value(x);
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = y[i] < lo ? lo : (y[i] > hi ? hi : y[i]);
        return push(std::move(y), any_grad({x}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(x)) {
                const Mat& xv = g.value(x);
                for (std::size_t i = 0; i < go.size(); ++i)
                    if (xv[i] > lo && xv[i] < hi) (*gx)[i] += go[i];
            }
        });
    }

    Var sum_squares(Var x) {
        const Mat& xv = value(x);
        double s = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * xv[i];
        return push(Mat::scalar(s), any_grad({x}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(x)) {
                const Mat& xv2 = g.value(x);
                for (std::size_t i = 0; i < xv2.size(); ++i) (*gx)[i] += 2.0 * xv2[i] * go[0];
            }
        });
    }

    // ---- pipeline ops ------------------------------------------------------

    /// Scales an [M x 2] point list by one positive real so the mean squared
    /// magnitude is 1. Gradients flow through the scale factor.
    Var normalize_power(Var pts) {
        const Mat& xv = value(pts);
        if (xv.cols() != 2 || xv.rows() == 0) throw ShapeError("normalize_power: expected [M x 2]");
        const std::size_t M = xv.rows();
        double sum_sq = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) sum_sq += xv[i] * xv[i];
        const double power = sum_sq / static_cast<double>(M);
        if (!(power > 0.0))
            throw DegenerateError("normalize_power: zero-power constellation");
        const double s = 1.0 / std::sqrt(power);
        Mat y = xv;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
        return push(std::move(y), any_grad({pts}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(pts)) {
                const Mat& xv2 = g.value(pts);
                double dot = 0.0;
                for (std::size_t i = 0; i < go.size(); ++i) dot += go[i] * xv2[i];
                const double c = dot / (power * std::sqrt(power) * static_cast<double>(M));
                for (std::size_t i = 0; i < go.size(); ++i)
                    (*gx)[i] += s * go[i] - c * xv2[i];
            }
        });
    }

    /// z_k = (x_k + n_k) * e^{j*phi_k} on [B x 2] coordinate pairs; the noise
    /// and phase trajectory are constants of the recorded computation.
    Var rotate_add(Var x, Mat noise, std::vector<double> phi) {
        const Mat& xv = value(x);
        if (xv.cols() != 2) throw ShapeError("rotate_add: expected [B x 2]");
        if (!noise.same_shape(xv) || phi.size() != xv.rows())
            throw ShapeError("rotate_add: noise/phase size mismatch");
        const std::size_t B = xv.rows();
        Mat y(B, 2);
        auto cs = std::make_shared<std::vector<double>>(2 * B);
        for (std::size_t k = 0; k < B; ++k) {
            const double c = std::cos(phi[k]), s = std::sin(phi[k]);
            (*cs)[2 * k] = c;
            (*cs)[2 * k + 1] = s;
            const double re = xv(k, 0) + noise(k, 0);
            const double im = xv(k, 1) + noise(k, 1);
            y(k, 0) = re * c - im * s;
            y(k, 1) = re * s + im * c;
        }
        return push(std::move(y), any_grad({x}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(x))
                for (std::size_t k = 0; k < B; ++k) {
                    const double c = (*cs)[2 * k], s = (*cs)[2 * k + 1];
                    (*gx)(k, 0) += c * go(k, 0) + s * go(k, 1);
                    (*gx)(k, 1) += -s * go(k, 0) + c * go(k, 1);
                }
        });
    }

    /// x * e^{j*angle} with a fixed angle (per-frame ambiguity rotation).
    Var rotate_const(Var x, double angle) {
        const Mat& xv = value(x);
        if (xv.cols() != 2) throw ShapeError("rotate_const: expected [B x 2]");
        const double c = std::cos(angle), s = std::sin(angle);
        const std::size_t B = xv.rows();
        Mat y(B, 2);
        for (std::size_t k = 0; k < B; ++k) {
            y(k, 0) = xv(k, 0) * c - xv(k, 1) * s;
            y(k, 1) = xv(k, 0) * s + xv(k, 1) * c;
        }
        return push(std::move(y), any_grad({x}), [=](Graph& g, const Mat& go) {
            if (Mat* gx = g.grad_slot(x))
                for (std::size_t k = 0; k < B; ++k) {
                    (*gx)(k, 0) += c * go(k, 0) + s * go(k, 1);
                    (*gx)(k, 1) += -s * go(k, 0) + c * go(k, 1);
                }
        });
    }

    /// D[k][t] = min_i |z_k e^{j angle_t} - p_i|^2 over the point list.
    /// The adjoint routes each cell's gradient to the minimizing point (and
    /// to z), the standard subgradient of a pointwise minimum.
    Var bps_distance(Var z, Var pts, std::vector<double> angles) {
        const Mat& zv = value(z);
        const Mat& pv = value(pts);
        if (zv.cols() != 2 || pv.cols() != 2)
            throw ShapeError("bps_distance: expected [B x 2] symbols and [M x 2] points");
        const std::size_t B = zv.rows(), T = angles.size(), M = pv.rows();
        if (T == 0 || M == 0) throw ShapeError("bps_distance: empty angle grid or point list");

        auto rot = std::make_shared<std::vector<double>>(2 * T);
        for (std::size_t t = 0; t < T; ++t) {
            (*rot)[2 * t] = std::cos(angles[t]);
            (*rot)[2 * t + 1] = std::sin(angles[t]);
        }
        auto nearest = std::make_shared<std::vector<std::uint16_t>>(B * T);
        Mat D(B, T);
        for (std::size_t t = 0; t < T; ++t) {
            const double ca = (*rot)[2 * t], sa = (*rot)[2 * t + 1];
            for (std::size_t k = 0; k < B; ++k) {
                const double zr = zv(k, 0) * ca - zv(k, 1) * sa;
                const double zi = zv(k, 0) * sa + zv(k, 1) * ca;
                double best = 0.0;
                std::size_t best_i = 0;
                bool first = true;
                for (std::size_t i = 0; i < M; ++i) {
                    const double u = zr - pv(i, 0);
                    const double v = zi - pv(i, 1);
                    const double d = u * u + v * v;
                    if (first || d < best) {
                        best = d;
                        best_i = i;
                        first = false;
                    }
                }
                D(k, t) = best;
                (*nearest)[k * T + t] = static_cast<std::uint16_t>(best_i);
            }
        }
        return push(std::move(D), any_grad({z, pts}), [=](Graph& g, const Mat& go) {
            const Mat& zv2 = g.value(z);
            const Mat& pv2 = g.value(pts);
            Mat* gz = g.grad_slot(z);
            Mat* gp = g.grad_slot(pts);
            for (std::size_t t = 0; t < T; ++t) {
                const double ca = (*rot)[2 * t], sa = (*rot)[2 * t + 1];
                for (std::size_t k = 0; k < B; ++k) {
                    const double gkt = go(k, t);
                    if (gkt == 0.0) continue;
                    const std::size_t i = (*nearest)[k * T + t];
                    const double zr = zv2(k, 0) * ca - zv2(k, 1) * sa;
                    const double zi = zv2(k, 0) * sa + zv2(k, 1) * ca;
                    const double u = zr - pv2(i, 0);
                    const double v = zi - pv2(i, 1);
                    if (gp) {
                        (*gp)(i, 0) -= 2.0 * gkt * u;
                        (*gp)(i, 1) -= 2.0 * gkt * v;
                    }
                    if (gz) {
                        (*gz)(k, 0) += 2.0 * gkt * (u * ca + v * sa);
                        (*gz)(k, 1) += 2.0 * gkt * (-u * sa + v * ca);
                    }
                }
            }
        });
    }

    /// Sliding-window column sums (same window layout as bps::windowed_cost).
    Var windowed_sum(Var d, int window) {
        if (window < 1) throw std::invalid_argument("windowed_sum: window must be >= 1");
        const Mat& dv = value(d);
        const std::size_t B = dv.rows(), T = dv.cols();
        Mat W = bps::windowed_cost(dv, window);
        const int past = window / 2;
        const int future = (window + 1) / 2;
        return push(std::move(W), any_grad({d}), [=](Graph& g, const Mat& go) {
            if (Mat* gd = g.grad_slot(d)) {
                // i is inside window(k) exactly when k is in [i-future+1, i+past];
                // the adjoint is therefore another windowed sum with the
                // past/future extents swapped.
                std::vector<double> prefix((B + 1) * T, 0.0);
                for (std::size_t k = 0; k < B; ++k)
                    for (std::size_t t = 0; t < T; ++t)
                        prefix[(k + 1) * T + t] = prefix[k * T + t] + go(k, t);
                for (std::size_t i = 0; i < B; ++i) {
                    const std::size_t lo =
                        i >= static_cast<std::size_t>(future - 1) ? i - (future - 1) : 0;
                    const std::size_t hi = std::min(B, i + static_cast<std::size_t>(past) + 1);
                    for (std::size_t t = 0; t < T; ++t)
                        (*gd)(i, t) += prefix[hi * T + t] - prefix[lo * T + t];
                }
            }
        });
    }

    /// Row-wise softmax of (-W / temperature), computed with max subtraction.
    Var softmin_weights(Var w, double temperature) {
        if (!(temperature > 0.0))
            throw std::invalid_argument("softmin_weights: temperature must be > 0");
        bps::soft_call_counter().fetch_add(1, std::memory_order_relaxed);
        const Mat& wv = value(w);
        const std::size_t B = wv.rows(), T = wv.cols();
        Mat p(B, T);
        for (std::size_t k = 0; k < B; ++k) {
            double lo = wv(k, 0);
            for (std::size_t t = 1; t < T; ++t) lo = std::min(lo, wv(k, t));
            double sum = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                p(k, t) = std::exp(-(wv(k, t) - lo) / temperature);
                sum += p(k, t);
            }
            for (std::size_t t = 0; t < T; ++t) p(k, t) /= sum;
        }
        const std::uint32_t self = next_id();
        return push(std::move(p), any_grad({w}), [=](Graph& g, const Mat& go) {
            if (Mat* gw = g.grad_slot(w)) {
                const Mat& pv = g.nodes_[self].value;
                const double fault = 1.0 + softmin_grad_fault();
                for (std::size_t k = 0; k < B; ++k) {
                    double dot = 0.0;
                    for (std::size_t t = 0; t < T; ++t) dot += go(k, t) * pv(k, t);
                    for (std::size_t t = 0; t < T; ++t)
                        (*gw)(k, t) += fault * (-1.0 / temperature) * pv(k, t) * (go(k, t) - dot);
                }
            }
        });
    }

    /// x_hat_k = z_k * sum_t w[k][t] e^{j angle_t}  (weights [B x T], z [B x 2]).
    Var combine_rotations(Var w, Var z, std::vector<double> angles) {
        const Mat& wv = value(w);
        const Mat& zv = value(z);
        if (zv.cols() != 2) throw ShapeError("combine_rotations: z must be [B x 2]");
        if (wv.rows() != zv.rows() || wv.cols() != angles.size())
            throw ShapeError("combine_rotations: weight shape mismatch");
        const std::size_t B = zv.rows(), T = angles.size();
        auto rot = std::make_shared<std::vector<double>>(2 * T);
        for (std::size_t t = 0; t < T; ++t) {
            (*rot)[2 * t] = std::cos(angles[t]);
            (*rot)[2 * t + 1] = std::sin(angles[t]);
        }
        auto amix = std::make_shared<std::vector<double>>(2 * B); // per-symbol sum_t w e^{j a}
        Mat y(B, 2);
        for (std::size_t k = 0; k < B; ++k) {
            double ar = 0.0, ai = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                ar += wv(k, t) * (*rot)[2 * t];
                ai += wv(k, t) * (*rot)[2 * t + 1];
            }
            (*amix)[2 * k] = ar;
            (*amix)[2 * k + 1] = ai;
            y(k, 0) = zv(k, 0) * ar - zv(k, 1) * ai;
            y(k, 1) = zv(k, 0) * ai + zv(k, 1) * ar;
        }
        return push(std::move(y), any_grad({w, z}), [=](Graph& g, const Mat& go) {
            const Mat& zv2 = g.value(z);
            Mat* gw = g.grad_slot(w);
            Mat* gz = g.grad_slot(z);
            for (std::size_t k = 0; k < B; ++k) {
                const double gr = go(k, 0), gi = go(k, 1);
                const double ar = (*amix)[2 * k], ai = (*amix)[2 * k + 1];
                if (gz) {
                    (*gz)(k, 0) += gr * ar + gi * ai;
                    (*gz)(k, 1) += -gr * ai + gi * ar;
                }
                if (gw) {
                    const double dar = gr * zv2(k, 0) + gi * zv2(k, 1);
                    const double dai = -gr * zv2(k, 1) + gi * zv2(k, 0);
                    for (std::size_t t = 0; t < T; ++t)
                        (*gw)(k, t) += dar * (*rot)[2 * t] + dai * (*rot)[2 * t + 1];
                }
            }
        });
    }

    /// Mean binary cross-entropy (nats) of LLRs against bits over the
    /// unmasked symbols; L = log(P(b=0)/P(b=1)), so a cell costs
    /// softplus((2b-1) * L).
    Var bce_with_logits(Var llrs, Mat bits, std::vector<std::uint8_t> mask) {
        const Mat& lv = value(llrs);
        if (!bits.same_shape(lv)) throw ShapeError("bce_with_logits: bits shape mismatch");
        if (mask.size() != lv.rows()) throw ShapeError("bce_with_logits: mask size mismatch");
        const std::size_t B = lv.rows(), mcols = lv.cols();
        std::size_t kept = 0;
        for (std::uint8_t f : mask) kept += f;
        if (kept == 0) throw DegenerateError("bce_with_logits: mask excludes every symbol");
        const double denom = static_cast<double>(kept * mcols);
        auto bits_s = std::make_shared<Mat>(std::move(bits));
        auto mask_s = std::make_shared<std::vector<std::uint8_t>>(std::move(mask));
        double total = 0.0;
        for (std::size_t k = 0; k < B; ++k) {
            if (!(*mask_s)[k]) continue;
            for (std::size_t i = 0; i < mcols; ++i) {
                const double sgn = 2.0 * (*bits_s)(k, i) - 1.0;
                total += detail::softplus(sgn * lv(k, i));
            }
        }
        return push(Mat::scalar(total / denom), any_grad({llrs}),
                    [=](Graph& g, const Mat& go) {
                        if (Mat* gl = g.grad_slot(llrs)) {
                            const Mat& lv2 = g.value(llrs);
                            const double s = go[0] / denom;
                            for (std::size_t k = 0; k < B; ++k) {
                                if (!(*mask_s)[k]) continue;
                                for (std::size_t i = 0; i < mcols; ++i) {
                                    const double sgn = 2.0 * (*bits_s)(k, i) - 1.0;
                                    (*gl)(k, i) += s * sgn * detail::sigmoid(sgn * lv2(k, i));
                                }
                            }
                        }
                    });
    }

    // ---- reverse pass ------------------------------------------------------

    /// Runs the reverse pass from a scalar loss node. A graph records one
    /// computation; calling backward twice is a state error.
    void backward(Var loss) {
        if (consumed_) throw std::logic_error("Graph::backward: graph already consumed");
        Node& ln = node_mut(loss);
        if (ln.value.rows() != 1 || ln.value.cols() != 1)
            throw ShapeError("Graph::backward: loss must be scalar");
        consumed_ = true;
        for (Node& n : nodes_)
            if (n.requires_grad) n.grad = Mat(n.value.rows(), n.value.cols());
        if (!ln.requires_grad) return; // loss independent of any tracked input
        ln.grad[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.requires_grad && n.pull) n.pull(*this, n.grad);
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        std::function<void(Graph&, const Mat&)> pull;
    };

    std::uint32_t next_id() const noexcept { return static_cast<std::uint32_t>(nodes_.size()); }

    Var push(Mat value, bool requires_grad,
             std::function<void(Graph&, const Mat&)> pull) {
        if (consumed_)
            throw std::logic_error("Graph: cannot grow a graph after backward()");
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.pull = std::move(pull);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    bool any_grad(std::initializer_list<Var> vars) const {
        for (Var v : vars)
            if (node(v).requires_grad) return true;
        return false;
    }

    /// Gradient buffer of a node, or nullptr when it does not track gradients.
    Mat* grad_slot(Var v) {
        Node& n = node_mut(v);
        return n.requires_grad ? &n.grad : nullptr;
    }

    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) throw std::out_of_range("Graph: bad node id");
        return nodes_[v.id];
    }
    Node& node_mut(Var v) {
        if (v.id >= nodes_.size()) throw std::out_of_range("Graph: bad node id");
        return nodes_[v.id];
    }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

} // namespace bpshape::ad

#endif
