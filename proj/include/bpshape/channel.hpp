// AWGN + Wiener phase-noise channel and the parameter conversions between
// SNR <-> sigma_n and laser linewidth <-> sigma_phi.
//
// Conventions (fixed project-wide): symbols are normalized to unit mean
// energy, SNR = 1/sigma_n^2 with sigma_n^2 the total complex noise variance,
// and sigma_phi^2 = 2*pi*linewidth/symbol_rate.
#ifndef BPSHAPE_CHANNEL_HPP
#define BPSHAPE_CHANNEL_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpshape/errors.hpp"
#include "bpshape/rng.hpp"

namespace bpshape::channel {

using cplx = std::complex<double>;

struct ChannelParams {
    double sigma_n = 0.0;    // total std dev of the complex AWGN
    double sigma_phi = 0.0;  // std dev of per-symbol phase increment [rad]

    void validate() const {
        if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n) ||
            !(sigma_phi >= 0.0) || !std::isfinite(sigma_phi))
            throw ValidationError("ChannelParams: sigma_n and sigma_phi must be finite and >= 0");
    }
};

/// One simulated batch: transmitted x, channel output z, the true phase
/// trajectory phi, and (once carrier recovery ran) the compensated x_hat.
struct SymbolFrame {
    std::vector<cplx> x;
    std::vector<cplx> z;
    std::vector<double> phi;
    std::optional<std::vector<cplx>> x_hat;

    std::size_t size() const noexcept { return x.size(); }
};

inline double snr_db_to_sigma_n(double snr_db) noexcept {
    return std::pow(10.0, -snr_db / 20.0);
}

inline double sigma_n_to_snr_db(double sigma_n) noexcept {
    return -20.0 * std::log10(sigma_n);
}

inline double linewidth_to_sigma_phi(double linewidth_hz, double symbol_rate_baud) {
    if (!(symbol_rate_baud > 0.0))
        throw std::invalid_argument("linewidth_to_sigma_phi: symbol rate must be > 0");
    if (!(linewidth_hz >= 0.0))
        throw std::invalid_argument("linewidth_to_sigma_phi: linewidth must be >= 0");
    return std::sqrt(2.0 * std::numbers::pi * linewidth_hz / symbol_rate_baud);
}

inline double sigma_phi_to_linewidth(double sigma_phi, double symbol_rate_baud) {
    return sigma_phi * sigma_phi * symbol_rate_baud / (2.0 * std::numbers::pi);
}

/// Random sources for one channel realization. Noise and phase are separate
/// streams so batch-size changes never shift one into the other.
struct ChannelRng {
    rng::Stream noise;
    rng::Stream phase;
};

/// Wiener phase trajectory: phi_0 ~ U[0, 2*pi) (or *start_phase* when
/// given), then i.i.d. N(0, sigma_phi^2) increments.
inline std::vector<double> draw_phase_walk(std::size_t count, double sigma_phi,
                                           rng::Stream& phase,
                                           std::optional<double> start_phase = std::nullopt) {
    std::vector<double> phi(count);
    double p = start_phase ? *start_phase : phase.uniform() * 2.0 * std::numbers::pi;
    for (std::size_t k = 0; k < count; ++k) {
        if (k > 0) p += sigma_phi * phase.gaussian();
        phi[k] = p;
    }
    return phi;
}

/// Circular complex AWGN samples as (Re, Im) pairs, total variance sigma_n^2.
inline std::vector<cplx> draw_noise(std::size_t count, double sigma_n, rng::Stream& noise) {
    const double per_dim = sigma_n / std::numbers::sqrt2;
    std::vector<cplx> n(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double re = per_dim * noise.gaussian();
        const double im = per_dim * noise.gaussian();
        n[k] = cplx(re, im);
    }
    return n;
}

/// z_k = (x_k + n_k) * exp(j*phi_k) with n_k circular complex Gaussian of
/// total variance sigma_n^2 and phi_k a Wiener walk of increment std
/// sigma_phi started at phi_0 ~ U[0, 2*pi) (or at *start_phase* when given).
inline SymbolFrame apply_channel(std::span<const cplx> x, const ChannelParams& params,
                                 ChannelRng& rng,
                                 std::optional<double> start_phase = std::nullopt) {
    params.validate();
    if (x.empty()) throw std::invalid_argument("apply_channel: empty input");

    SymbolFrame frame;
    frame.x.assign(x.begin(), x.end());
    frame.z.resize(x.size());
    frame.phi = draw_phase_walk(x.size(), params.sigma_phi, rng.phase, start_phase);
    const std::vector<cplx> noise = draw_noise(x.size(), params.sigma_n, rng.noise);
    for (std::size_t k = 0; k < x.size(); ++k)
        frame.z[k] = (x[k] + noise[k]) * std::polar(1.0, frame.phi[k]);
    return frame;
}

} // namespace bpshape::channel

#endif
