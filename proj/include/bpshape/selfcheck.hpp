// Independent reference implementations (brute-force carrier search, direct
// window sums, Monte-Carlo mutual information, finite-difference gradients)
// and the self-test harness built on them. Everything here deliberately
// avoids the optimized kernels it is used to check.
#ifndef BPSHAPE_SELFCHECK_HPP
#define BPSHAPE_SELFCHECK_HPP

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bpshape/bps.hpp"
#include "bpshape/channel.hpp"
#include "bpshape/constellation.hpp"
#include "bpshape/nnkit.hpp"
#include "bpshape/rng.hpp"
#include "bpshape/shaping.hpp"
#include "bpshape/trainer.hpp"

namespace bpshape::selfcheck {

using channel::cplx;
using constellation::Constellation;

// ---- reference implementations ----------------------------------------------

/// Direct per-window double loop; O(B*N*T).
inline Mat naive_windowed_cost(const Mat& d, int window) {
    const std::size_t b = d.rows(), t = d.cols();
    Mat w(b, t);
    for (std::size_t k = 0; k < b; ++k) {
        const auto [lo, hi] = bps::window_bounds(k, b, window);
        for (std::size_t ti = 0; ti < t; ++ti) {
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) acc += d(i, ti);
            w(k, ti) = acc;
        }
    }
    return w;
}

/// Brute-force hard BPS, O(B*N*T*2^m): recomputes every distance inside
/// every window, no shared prefix sums, ties to the lowest angle index.
inline bps::HardResult naive_bps_hard(std::span<const cplx> z, const Constellation& c,
                                      const bps::BpsConfig& config) {
    const std::vector<double> angles = config.test_angles();
    const std::size_t b = z.size(), t = angles.size();
    bps::HardResult r;
    r.x_hat.resize(b);
    r.theta_hat.resize(b);
    r.angle_index.resize(b);
    for (std::size_t k = 0; k < b; ++k) {
        const auto [lo, hi] = bps::window_bounds(k, b, config.window_size);
        double best_cost = 0.0;
        std::size_t best_t = 0;
        for (std::size_t ti = 0; ti < t; ++ti) {
            const cplx rot = std::polar(1.0, angles[ti]);
            double cost = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                const cplx zr = z[i] * rot;
                double dmin = std::norm(zr - c.points[0]);
                for (std::size_t p = 1; p < c.points.size(); ++p)
                    dmin = std::min(dmin, std::norm(zr - c.points[p]));
                cost += dmin;
            }
            if (ti == 0 || cost < best_cost) {
                best_cost = cost;
                best_t = ti;
            }
        }
        r.angle_index[k] = static_cast<std::uint16_t>(best_t);
        r.theta_hat[k] = angles[best_t];
        r.x_hat[k] = z[k] * std::polar(1.0, angles[best_t]);
    }
    return r;
}

/// Monte-Carlo estimate of sum_i I(b_i; Y) for an AWGN channel (total noise
/// variance sigma_n^2) via direct density ratios, log2 domain. Independent
/// of the LLR/BCE path.
inline double mc_mutual_information_bits(const Constellation& c, double sigma_n,
                                         std::size_t samples, std::uint64_t seed) {
    const int m = c.bits_per_symbol;
    const std::size_t n = c.order();
    const double inv_var = 1.0 / (sigma_n * sigma_n);
    rng::Stream sym(seed, "mi-symbols");
    rng::Stream noise(seed, "mi-noise");

    std::vector<double> e(n);
    double acc = 0.0;
    const double per_dim = sigma_n / std::numbers::sqrt2;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t j = static_cast<std::size_t>(sym.next_u64() % n);
        const cplx y = c.points[j] + cplx(per_dim * noise.gaussian(), per_dim * noise.gaussian());
        double emax = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
            e[i] = -std::norm(y - c.points[i]) * inv_var;
            emax = std::max(emax, e[i]);
        }
        double den = 0.0;
        for (std::size_t i = 0; i < n; ++i) den += std::exp(e[i] - emax);
        for (int bit = 0; bit < m; ++bit) {
            const int b = constellation::label_bit(c.labels[j], m, bit);
            double num = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (constellation::label_bit(c.labels[i], m, bit) == b)
                    num += std::exp(e[i] - emax);
            acc += std::log2(2.0 * num / den);
        }
    }
    return acc / static_cast<double>(samples);
}

/// Fixed-randomness copy of one training batch, for replaying the forward
/// pass at perturbed parameters.
struct PipelineData {
    Mat bits;
    std::vector<cplx> noise;
    std::vector<double> phi;
    channel::ChannelParams params;
    bps::BpsConfig bps;
    double temperature = 0.1;
};

inline PipelineData make_pipeline_data(int m, std::size_t batch, const bps::BpsConfig& cfg,
                                       double temperature,
                                       const channel::ChannelParams& params,
                                       std::uint64_t seed) {
    PipelineData d;
    rng::Stream bits(seed, "fd-bits");
    rng::Stream noise(seed, "fd-noise");
    rng::Stream phase(seed, "fd-phase");
    d.bits = trainer::draw_bits(batch, m, bits);
    d.noise = channel::draw_noise(batch, params.sigma_n, noise);
    d.phi = channel::draw_phase_walk(batch, params.sigma_phi, phase);
    d.params = params;
    d.bps = cfg;
    d.temperature = temperature;
    return d;
}

/// End-to-end loss recomputed entirely through the plain (non-recorded)
/// code path: transmit net, mapping, fixed channel realization, plain soft
/// BPS, plain demapper, masked BCE. Serves as the function under
/// finite differences.
inline double pipeline_loss_nats(const shaping::TxNet& tx, const shaping::RxNet& rx,
                                 const shaping::ConditioningScale& scale,
                                 const PipelineData& d) {
    const Constellation c = shaping::tx_constellation(tx, d.params, scale);
    const std::vector<cplx> x = shaping::map_symbols(shaping::embed_one_hot(d.bits), c);
    std::vector<cplx> z(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
        z[k] = (x[k] + d.noise[k]) * std::polar(1.0, d.phi[k]);
    bps::BpsConfig soft_cfg = d.bps;
    soft_cfg.mode = bps::Mode::soft;
    soft_cfg.temperature = d.temperature;
    const std::vector<cplx> x_hat = bps::bps_soft(z, c, soft_cfg);
    const Mat llrs = shaping::demap(rx, x_hat, d.params, scale);
    const std::vector<std::uint8_t> mask = bps::edge_mask(x.size(), d.bps.window_size);
    return nn::bce_with_logits_nats(llrs, d.bits, mask);
}

/// Records the same pipeline on a graph and returns the loss gradients in
/// the canonical parameter order (tx layers then rx layers, weight then
/// bias).
inline std::vector<Mat> pipeline_grads(const shaping::TxNet& tx, const shaping::RxNet& rx,
                                       const shaping::ConditioningScale& scale,
                                       const PipelineData& d) {
    ad::Graph g;
    nn::NetVars txv = nn::declare_params(g, tx.net, true);
    nn::NetVars rxv = nn::declare_params(g, rx.net, true);
    const std::array<double, 2> cond = scale.apply(d.params);
    ad::Var points = shaping::tx_constellation_graph(g, txv, cond, tx.bits_per_symbol);
    ad::Var x = g.matmul(g.constant(shaping::embed_one_hot(d.bits)), points);
    Mat noise_m(d.noise.size(), 2);
    for (std::size_t k = 0; k < d.noise.size(); ++k) {
        noise_m(k, 0) = d.noise[k].real();
        noise_m(k, 1) = d.noise[k].imag();
    }
    ad::Var z = g.rotate_add(x, std::move(noise_m), d.phi);
    ad::Var dist = g.bps_distance(z, points, d.bps.test_angles());
    ad::Var w = g.windowed_sum(dist, d.bps.window_size);
    ad::Var weights = g.softmin_weights(w, d.temperature);
    ad::Var x_hat = g.combine_rotations(weights, z, d.bps.test_angles());
    ad::Var llrs = shaping::demap_graph(g, rxv, x_hat, cond);
    llrs = g.clamp(llrs, -nn::kLlrClamp, nn::kLlrClamp);
    ad::Var loss = g.bce_with_logits(llrs, d.bits,
                                     bps::edge_mask(d.bits.rows(), d.bps.window_size));
    g.backward(loss);
    std::vector<Mat> grads;
    for (const nn::LayerVars& l : txv) {
        grads.push_back(g.grad(l.weight));
        grads.push_back(g.grad(l.bias));
    }
    for (const nn::LayerVars& l : rxv) {
        grads.push_back(g.grad(l.weight));
        grads.push_back(g.grad(l.bias));
    }
    return grads;
}

struct GradCheckResult {
    double worst_rel_err = 0.0;
    std::size_t coords_checked = 0;
};

/// Compares recorded gradients against central finite differences on
/// `coords` randomly chosen parameter coordinates. step is the FD step.
inline GradCheckResult pipeline_grad_check(shaping::TxNet tx, shaping::RxNet rx,
                                           const shaping::ConditioningScale& scale,
                                           const PipelineData& d, std::size_t coords,
                                           double step, std::uint64_t seed) {
    const std::vector<Mat> grads = pipeline_grads(tx, rx, scale, d);

    std::vector<Mat*> params;
    for (nn::DenseLayer& l : tx.net.layers) {
        params.push_back(&l.weight);
        params.push_back(&l.bias);
    }
    for (nn::DenseLayer& l : rx.net.layers) {
        params.push_back(&l.weight);
        params.push_back(&l.bias);
    }

    rng::Stream pick(seed, "fd-coords");
    GradCheckResult res;
    for (std::size_t i = 0; i < coords; ++i) {
        const std::size_t pj = static_cast<std::size_t>(pick.next_u64() % params.size());
        const std::size_t ci = static_cast<std::size_t>(pick.next_u64() % params[pj]->size());
        double& slot = (*params[pj])[ci];
        const double keep = slot;
        slot = keep + step;
        const double lp = pipeline_loss_nats(tx, rx, scale, d);
        slot = keep - step;
        const double lm = pipeline_loss_nats(tx, rx, scale, d);
        slot = keep;
        const double fd = (lp - lm) / (2.0 * step);
        const double adv = grads[pj][ci];
        const double rel = std::abs(adv - fd) / (std::abs(fd) + 1e-8);
        res.worst_rel_err = std::max(res.worst_rel_err, rel);
        ++res.coords_checked;
    }
    return res;
}

// ---- self-test harness -------------------------------------------------------

struct CheckResult {
    std::string name;
    bool passed = false;
    double seconds = 0.0;
    std::string detail;
};

namespace detail {

template <class F>
CheckResult timed_check(const std::string& name, F&& fn) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        r.detail = fn();
        r.passed = true;
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw NumericalError(msg);
}

} // namespace detail

/// Runs the oracle-equivalence and gradient-check suite at fixed seeds and
/// prints one line per check. Returns the number of failed checks.
inline int run_selftest(std::FILE* out = stdout) {
    std::vector<CheckResult> results;

    results.push_back(detail::timed_check("bps-hard-brute-force", [] {
        rng::Stream r(2024, "selftest-bps");
        int checked = 0;
        for (int inst = 0; inst < 50; ++inst) {
            const int m = 2 * (1 + static_cast<int>(r.next_u64() % 2)); // 2 or 4
            const std::size_t b = 16 + r.next_u64() % 96;
            bps::BpsConfig cfg;
            cfg.num_test_angles = 8 + static_cast<int>(r.next_u64() % 32);
            cfg.window_size = 1 + static_cast<int>(r.next_u64() % 48);
            const Constellation c = constellation::make_square_qam(m);
            std::vector<cplx> z(b);
            for (cplx& v : z) v = cplx(r.gaussian(), r.gaussian());
            const bps::HardResult fast = bps::bps_hard(z, c, cfg);
            const bps::HardResult ref = naive_bps_hard(z, c, cfg);
            for (std::size_t k = 0; k < b; ++k)
                detail::require(fast.angle_index[k] == ref.angle_index[k],
                                "argmin mismatch at symbol " + std::to_string(k));
            ++checked;
        }
        return std::to_string(checked) + " instances, exact argmin agreement";
    }));

    results.push_back(detail::timed_check("windowed-sum-oracle", [] {
        rng::Stream r(2024, "selftest-window");
        Mat d(200, 60);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = r.uniform();
        for (int window : {1, 3, 16, 128}) {
            const Mat fast = bps::windowed_cost(d, window);
            const Mat ref = naive_windowed_cost(d, window);
            for (std::size_t i = 0; i < d.size(); ++i)
                detail::require(std::abs(fast[i] - ref[i]) <= 1e-9 * std::abs(ref[i]) + 1e-12,
                                "window sum deviates at flat index " + std::to_string(i));
        }
        return "windows {1,3,16,128} within 1e-9 relative";
    }));

    results.push_back(detail::timed_check("soft-hard-convergence", [] {
        const Constellation c = constellation::make_square_qam(2);
        bps::BpsConfig cfg = bps::BpsConfig{}.with_qam_span();
        cfg.num_test_angles = 60;
        cfg.window_size = 64;
        rng::Stream r(7, "selftest-soft");
        const std::size_t b = 256;
        std::vector<cplx> z(b);
        for (std::size_t k = 0; k < b; ++k) {
            const std::size_t j = r.next_u64() % c.order();
            z[k] = c.points[j] * std::polar(1.0, 0.2) +
                   cplx(0.01 * r.gaussian(), 0.01 * r.gaussian());
        }
        const bps::HardResult hard = bps::bps_hard(z, c, cfg);
        double prev = 1e300;
        double last = 0.0;
        for (double temp : {1.0, 0.1, 0.01, 0.001}) {
            bps::BpsConfig soft = cfg;
            soft.mode = bps::Mode::soft;
            soft.temperature = temp;
            const std::vector<cplx> xs = bps::bps_soft(z, c, soft);
            double dev = 0.0;
            for (std::size_t k = 0; k < b; ++k)
                dev = std::max(dev, std::abs(xs[k] - hard.x_hat[k]));
            detail::require(dev <= prev + 1e-12, "deviation not non-increasing");
            prev = dev;
            last = dev;
        }
        detail::require(last < 1e-6, "soft output at temperature 0.001 deviates by " +
                                         std::to_string(last));
        return "monotone in temperature, final deviation < 1e-6";
    }));

    results.push_back(detail::timed_check("pipeline-gradient-fd", [] {
        const int m = 3;
        rng::Stream init(11, "selftest-init");
        shaping::TxNet tx = shaping::make_tx_net(m, init);
        shaping::RxNet rx = shaping::make_rx_net(m, init);
        trainer::TrainConfig base;
        const shaping::ConditioningScale scale = base.conditioning_scale();
        bps::BpsConfig cfg;
        cfg.num_test_angles = 16;
        cfg.window_size = 16;
        channel::ChannelParams params{channel::snr_db_to_sigma_n(18.0),
                                      channel::linewidth_to_sigma_phi(100e3, 32e9)};
        const PipelineData d = make_pipeline_data(m, 64, cfg, 0.1, params, 99);
        const GradCheckResult res = pipeline_grad_check(tx, rx, scale, d, 20, 1e-5, 99);
        detail::require(res.worst_rel_err < 1e-4,
                        "worst relative error " + std::to_string(res.worst_rel_err));
        char buf[96];
        std::snprintf(buf, sizeof buf, "%zu coordinates, worst relative error %.3g",
                      res.coords_checked, res.worst_rel_err);
        return std::string(buf);
    }));

    results.push_back(detail::timed_check("bmi-mc-oracle", [] {
        const Constellation c = constellation::make_square_qam(2);
        const double sigma = channel::snr_db_to_sigma_n(8.0);
        const std::size_t n = 200000;
        rng::Stream bits_stream(5, "selftest-bits");
        channel::ChannelRng crng{rng::Stream(5, "selftest-noise"), rng::Stream(5, "selftest-phase")};
        const Mat bits = trainer::draw_bits(n, 2, bits_stream);
        const std::vector<cplx> x = shaping::map_symbols(shaping::embed_one_hot(bits), c);
        const channel::SymbolFrame frame =
            channel::apply_channel(x, {sigma, 0.0}, crng, 0.0);
        const Mat llrs = shaping::exact_gaussian_llrs(frame.z, c, sigma);
        const double bmi = 2.0 * (1.0 - nn::bce_with_logits_bits(llrs, bits));
        const double mc = mc_mutual_information_bits(c, sigma, n, 6);
        detail::require(std::abs(bmi - mc) < 0.02,
                        "BMI " + std::to_string(bmi) + " vs MC " + std::to_string(mc));
        char buf[96];
        std::snprintf(buf, sizeof buf, "BMI %.4f vs MC %.4f", bmi, mc);
        return std::string(buf);
    }));

    int failed = 0;
    for (const CheckResult& r : results) {
        std::fprintf(out, "[%s] %-24s %6.2f s  %s\n", r.passed ? "PASS" : "FAIL",
                     r.name.c_str(), r.seconds, r.detail.c_str());
        if (!r.passed) ++failed;
    }
    return failed;
}

} // namespace bpshape::selfcheck

#endif
