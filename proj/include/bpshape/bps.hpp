// Blind phase search carrier recovery.
//
// The classical (hard) form rotates each received symbol by a grid of test
// angles, accumulates nearest-constellation-point squared distances over a
// sliding window, and picks the angle with minimal windowed cost. The soft
// form replaces the argmin with a temperature-scaled softmax and outputs the
// weighted combination of the candidate rotated symbols; the autodiff graph
// version of that path lives in autodiff.hpp.
#ifndef BPSHAPE_BPS_HPP
#define BPSHAPE_BPS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "bpshape/constellation.hpp"
#include "bpshape/errors.hpp"
#include "bpshape/mat.hpp"

namespace bpshape::bps {

using cplx = std::complex<double>;
using constellation::Constellation;

enum class Mode { hard, soft };

struct BpsConfig {
    int num_test_angles = 60;
    int window_size = 128;
    // Test-angle span, half-open [angle_min, angle_max). The default covers
    // the full circle, which an asymmetric constellation needs to resolve an
    // arbitrary start phase; square QAM only needs one pi/2 symmetry period,
    // see qam_span().
    double angle_min = -std::numbers::pi;
    double angle_max = std::numbers::pi;
    double temperature = 1.0; // soft mode only
    Mode mode = Mode::hard;

    void validate() const {
        if (num_test_angles < 2) throw ValidationError("BpsConfig: need at least 2 test angles");
        if (window_size < 1) throw ValidationError("BpsConfig: window size must be >= 1");
        if (!(angle_min < angle_max)) throw ValidationError("BpsConfig: angle_min must be < angle_max");
        if (!(temperature > 0.0)) throw ValidationError("BpsConfig: temperature must be > 0");
    }

    std::vector<double> test_angles() const {
        std::vector<double> a(static_cast<std::size_t>(num_test_angles));
        const double step = (angle_max - angle_min) / num_test_angles;
        for (int i = 0; i < num_test_angles; ++i) a[static_cast<std::size_t>(i)] = angle_min + i * step;
        return a;
    }

    /// One symmetry period of square QAM, [-pi/4, pi/4).
    BpsConfig with_qam_span() const {
        BpsConfig c = *this;
        c.angle_min = -std::numbers::pi / 4.0;
        c.angle_max = std::numbers::pi / 4.0;
        return c;
    }
};

/// Number of soft-path evaluations since process start; evaluation code is
/// expected to leave this untouched (hard decisions only).
inline std::atomic<std::uint64_t>& soft_call_counter() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

/// Window covered for symbol k: past floor(N/2), future ceil(N/2)-1,
/// truncated to [0, frame_size).
struct WindowBounds {
    std::size_t lo, hi; // half-open
};
inline WindowBounds window_bounds(std::size_t k, std::size_t frame_size, int window) noexcept {
    const std::size_t past = static_cast<std::size_t>(window / 2);
    const std::size_t future = static_cast<std::size_t>((window + 1) / 2); // exclusive offset
    const std::size_t lo = k >= past ? k - past : 0;
    const std::size_t hi = std::min(frame_size, k + future);
    return {lo, hi};
}

/// Flags the first and last floor(N/2) symbols of a frame; loss and BMI
/// computations exclude flagged symbols.
inline std::vector<std::uint8_t> edge_mask(std::size_t frame_size, int window) {
    std::vector<std::uint8_t> mask(frame_size, 1);
    const std::size_t edge = std::min(frame_size, static_cast<std::size_t>(window / 2));
    for (std::size_t k = 0; k < edge; ++k) {
        mask[k] = 0;
        mask[frame_size - 1 - k] = 0;
    }
    return mask;
}

namespace detail {

/// Per-angle nearest-point squared distances with the argmin indices kept
/// for gradient routing. D and nearest are B x T row-major.
struct DistanceDetail {
    Mat D;
    std::vector<std::uint16_t> nearest;
};

inline DistanceDetail distance_detail(std::span<const cplx> z,
                                      std::span<const cplx> points,
                                      std::span<const double> angles) {
    if (z.empty()) throw std::invalid_argument("distance_metric: empty symbol block");
    if (points.empty()) throw std::invalid_argument("distance_metric: empty constellation");
    const std::size_t b = z.size(), t = angles.size(), m = points.size();

    std::vector<double> pre(m), pim(m), pq(m); // coordinates and |p|^2 / 2
    for (std::size_t i = 0; i < m; ++i) {
        pre[i] = points[i].real();
        pim[i] = points[i].imag();
        pq[i] = 0.5 * std::norm(points[i]);
    }

    DistanceDetail out;
    out.D = Mat(b, t);
    out.nearest.resize(b * t);
    for (std::size_t ti = 0; ti < t; ++ti) {
        const double ca = std::cos(angles[ti]), sa = std::sin(angles[ti]);
        for (std::size_t k = 0; k < b; ++k) {
            const double zr = z[k].real() * ca - z[k].imag() * sa;
            const double zi = z[k].real() * sa + z[k].imag() * ca;
            // |z_rot - p|^2 = |z|^2 - 2*(Re(z_rot * conj(p)) - |p|^2/2)
            double best = zr * pre[0] + zi * pim[0] - pq[0];
            std::size_t best_i = 0;
            for (std::size_t i = 1; i < m; ++i) {
                const double s = zr * pre[i] + zi * pim[i] - pq[i];
                if (s > best) {
                    best = s;
                    best_i = i;
                }
            }
            out.D(k, ti) = zr * zr + zi * zi - 2.0 * best;
            out.nearest[k * t + ti] = static_cast<std::uint16_t>(best_i);
        }
    }
    return out;
}

} // namespace detail

/// D[k][t] = min over constellation points c of |z_k * e^{j*angle_t} - c|^2.
inline Mat distance_metric(std::span<const cplx> z, const Constellation& c,
                           std::span<const double> angles) {
    return detail::distance_detail(z, c.points, angles).D;
}

/// Sliding-window column sums of D with edge truncation; computed with
/// per-column prefix sums (equal to the direct sum within 1e-9 relative).
inline Mat windowed_cost(const Mat& D, int window) {
    if (window < 1) throw std::invalid_argument("windowed_cost: window must be >= 1");
    const std::size_t b = D.rows(), t = D.cols();
    if (b == 0) throw std::invalid_argument("windowed_cost: empty cost matrix");
    if (window == 1) return D;

    // prefix[r] = column sums of rows [0, r)
    std::vector<double> prefix((b + 1) * t, 0.0);
    for (std::size_t k = 0; k < b; ++k)
        for (std::size_t ti = 0; ti < t; ++ti)
            prefix[(k + 1) * t + ti] = prefix[k * t + ti] + D(k, ti);

    Mat W(b, t);
    for (std::size_t k = 0; k < b; ++k) {
        const auto [lo, hi] = window_bounds(k, b, window);
        for (std::size_t ti = 0; ti < t; ++ti)
            W(k, ti) = prefix[hi * t + ti] - prefix[lo * t + ti];
    }
    return W;
}

struct HardResult {
    std::vector<cplx> x_hat;
    std::vector<double> theta_hat;
    std::vector<std::uint16_t> angle_index;
};

namespace detail {

inline HardResult decide_from_costs(std::span<const cplx> z, const Mat& W,
                                    std::span<const double> angles,
                                    std::size_t first, std::size_t count) {
    HardResult r;
    r.x_hat.resize(count);
    r.theta_hat.resize(count);
    r.angle_index.resize(count);
    const std::size_t t = W.cols();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = first + i;
        double best = W(k, 0);
        std::size_t best_t = 0;
        for (std::size_t ti = 1; ti < t; ++ti) {
            if (W(k, ti) < best) { // strict: ties keep the lowest index
                best = W(k, ti);
                best_t = ti;
            }
        }
        r.angle_index[i] = static_cast<std::uint16_t>(best_t);
        r.theta_hat[i] = angles[best_t];
        r.x_hat[i] = z[k] * std::polar(1.0, angles[best_t]);
    }
    return r;
}

} // namespace detail

/// Whole-frame hard BPS: theta_hat_k = argmin_t W[k][t] (ties -> lowest
/// index), x_hat_k = z_k * e^{j*theta_hat_k}. No unwrapping across symbols.
inline HardResult bps_hard(std::span<const cplx> z, const Constellation& c,
                           const BpsConfig& config) {
    config.validate();
    const std::vector<double> angles = config.test_angles();
    const Mat W = windowed_cost(detail::distance_detail(z, c.points, angles).D,
                                config.window_size);
    return detail::decide_from_costs(z, W, angles, 0, z.size());
}

/// Carry-over state for processing one long frame in consecutive chunks.
/// Symbols are only decided once their full look-ahead is available, so the
/// chunked outputs concatenated with flush() match the whole-frame result.
struct BpsState {
    std::vector<cplx> buffer;      // undecided symbols plus past context
    std::size_t base = 0;          // global index of buffer[0]
    std::size_t next_decide = 0;   // global index of the first undecided symbol
    bool stream_ended = false;
};

namespace detail {

inline HardResult run_stream(const Constellation& c, const BpsConfig& config,
                             BpsState& state, bool flush) {
    const std::vector<double> angles = config.test_angles();
    const std::size_t past = static_cast<std::size_t>(config.window_size / 2);
    const std::size_t future = static_cast<std::size_t>((config.window_size + 1) / 2);
    const std::size_t total = state.base + state.buffer.size();

    // Decide every symbol whose window no longer grows with more input.
    const std::size_t decide_end =
        flush ? total : (total + 1 >= future ? total + 1 - future : 0);
    if (decide_end <= state.next_decide)
        return {};

    const std::size_t count = decide_end - state.next_decide;
    // Windowed costs computed by direct summation over each window so the
    // result is independent of how the stream was chunked.
    const DistanceDetail dd = distance_detail(state.buffer, c.points, angles);
    const std::size_t t = angles.size();
    Mat W(count, t);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = state.next_decide + i;
        const std::size_t lo = k >= past ? k - past : 0;
        const std::size_t hi = std::min(total, k + future);
        for (std::size_t ti = 0; ti < t; ++ti) {
            double acc = 0.0;
            for (std::size_t j = lo; j < hi; ++j) acc += dd.D(j - state.base, ti);
            W(i, ti) = acc;
        }
    }
    std::vector<cplx> zw(state.buffer.begin() +
                             static_cast<std::ptrdiff_t>(state.next_decide - state.base),
                         state.buffer.begin() +
                             static_cast<std::ptrdiff_t>(decide_end - state.base));
    HardResult r = decide_from_costs(zw, W, angles, 0, count);
    state.next_decide = decide_end;

    // Drop buffer entries no longer needed as past context.
    const std::size_t keep_from =
        state.next_decide >= past ? state.next_decide - past : 0;
    if (keep_from > state.base) {
        state.buffer.erase(state.buffer.begin(),
                           state.buffer.begin() +
                               static_cast<std::ptrdiff_t>(keep_from - state.base));
        state.base = keep_from;
    }
    return r;
}

} // namespace detail

/// Streaming hard BPS: feeds a chunk, returns decisions that became final
/// (their count may lag the input by the look-ahead). Call bps_hard_flush
/// at end of stream for the remaining symbols.
inline HardResult bps_hard(std::span<const cplx> z, const Constellation& c,
                           const BpsConfig& config, BpsState& state) {
    config.validate();
    if (state.stream_ended) throw std::logic_error("bps_hard: stream already flushed");
    state.buffer.insert(state.buffer.end(), z.begin(), z.end());
    return detail::run_stream(c, config, state, false);
}

inline HardResult bps_hard_flush(const Constellation& c, const BpsConfig& config,
                                 BpsState& state) {
    config.validate();
    if (state.stream_ended) throw std::logic_error("bps_hard_flush: already flushed");
    HardResult r = detail::run_stream(c, config, state, true);
    state.stream_ended = true;
    return r;
}

/// Picks the quarter-turn r in {0, pi/2, pi, 3pi/2} minimizing the total
/// squared distance of x_hat * e^{jr} to the reference symbols. Used only
/// for the square-QAM baseline, whose pi/2 rotational symmetry leaves the
/// blind search with an unresolvable per-frame ambiguity.
inline double genie_rotation(std::span<const cplx> x_hat, std::span<const cplx> x) {
    if (x_hat.size() != x.size())
        throw std::invalid_argument("genie_rotation: size mismatch");
    double best_cost = 0.0, best_angle = 0.0;
    for (int q = 0; q < 4; ++q) {
        const double angle = q * std::numbers::pi / 2.0;
        const cplx r = std::polar(1.0, angle);
        double cost = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) cost += std::norm(x_hat[k] * r - x[k]);
        if (q == 0 || cost < best_cost) {
            best_cost = cost;
            best_angle = angle;
        }
    }
    return best_angle;
}

/// Soft BPS: per-symbol softmax weights over the windowed costs,
/// x_hat_k = sum_t softmax_t(-W[k][t]/temperature) * z_k * e^{j*angle_t}.
inline std::vector<cplx> bps_soft(std::span<const cplx> z, const Constellation& c,
                                  const BpsConfig& config) {
    config.validate();
    soft_call_counter().fetch_add(1, std::memory_order_relaxed);
    const std::vector<double> angles = config.test_angles();
    const Mat W = windowed_cost(detail::distance_detail(z, c.points, angles).D,
                                config.window_size);
    const std::size_t b = z.size(), t = angles.size();

    std::vector<double> rot_re(t), rot_im(t);
    for (std::size_t ti = 0; ti < t; ++ti) {
        rot_re[ti] = std::cos(angles[ti]);
        rot_im[ti] = std::sin(angles[ti]);
    }

    std::vector<cplx> x_hat(b);
    std::vector<double> w(t);
    for (std::size_t k = 0; k < b; ++k) {
        double lo = W(k, 0);
        for (std::size_t ti = 1; ti < t; ++ti) lo = std::min(lo, W(k, ti));
        double sum = 0.0;
        for (std::size_t ti = 0; ti < t; ++ti) {
            w[ti] = std::exp(-(W(k, ti) - lo) / config.temperature);
            sum += w[ti];
        }
        double ar = 0.0, ai = 0.0;
        for (std::size_t ti = 0; ti < t; ++ti) {
            ar += w[ti] * rot_re[ti];
            ai += w[ti] * rot_im[ti];
        }
        x_hat[k] = z[k] * cplx(ar / sum, ai / sum);
    }
    return x_hat;
}

} // namespace bpshape::bps

#endif
