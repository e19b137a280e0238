// End-to-end training loop: per-batch channel-parameter sampling, batch-size
// ramp, temperature annealing, soft-BPS pipeline, Adam updates and the
// versioned binary checkpoint container.
#ifndef BPSHAPE_TRAINER_HPP
#define BPSHAPE_TRAINER_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bpshape/autodiff.hpp"
#include "bpshape/bps.hpp"
#include "bpshape/channel.hpp"
#include "bpshape/constellation.hpp"
#include "bpshape/errors.hpp"
#include "bpshape/nnkit.hpp"
#include "bpshape/rng.hpp"
#include "bpshape/shaping.hpp"
#include "bpshape/version.hpp"

namespace bpshape::trainer {

using channel::ChannelParams;
using channel::cplx;

/// parameterized: condition inputs live on both nets (the main system).
/// robust: identical pipeline with condition inputs frozen at the
///   training-range midpoints (single constellation for the whole range).
/// qam_demapper_only: transmit side fixed to Gray square QAM, only the
///   (still condition-aware) demapper trains.
enum class Mode { parameterized, robust, qam_demapper_only };

enum class SigmaSampling { sigma_uniform, db_uniform };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::parameterized: return "parameterized";
        case Mode::robust: return "robust";
        case Mode::qam_demapper_only: return "qam_demapper_only";
    }
    return "?";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "parameterized") return Mode::parameterized;
    if (s == "robust") return Mode::robust;
    if (s == "qam_demapper_only") return Mode::qam_demapper_only;
    throw ValidationError("unknown mode '" + s + "'");
}

struct TrainConfig {
    int m = 6;
    int epochs = 1000;
    int batches_per_epoch = 10;
    int batch_start = 1000;
    int batch_end = 10000;
    double snr_db_min = 14.0;
    double snr_db_max = 25.0;
    double linewidth_hz_min = 50e3;
    double linewidth_hz_max = 600e3;
    double symbol_rate_baud = 32e9;
    bps::BpsConfig bps{}; // 60 angles, window 128; span defaults to the full circle
    double temp_start = 1.0;
    double temp_end = 1e-3;
    std::uint64_t seed = 1;
    Mode mode = Mode::parameterized;
    SigmaSampling sampling = SigmaSampling::sigma_uniform;
    nn::AdamConfig adam{};

    double sigma_n_lo() const { return channel::snr_db_to_sigma_n(snr_db_max); }
    double sigma_n_hi() const { return channel::snr_db_to_sigma_n(snr_db_min); }
    double sigma_phi_lo() const {
        return channel::linewidth_to_sigma_phi(linewidth_hz_min, symbol_rate_baud);
    }
    double sigma_phi_hi() const {
        return channel::linewidth_to_sigma_phi(linewidth_hz_max, symbol_rate_baud);
    }

    shaping::ConditioningScale conditioning_scale() const {
        return {sigma_n_lo(), sigma_n_hi(), sigma_phi_lo(), sigma_phi_hi()};
    }

    ChannelParams range_midpoint() const {
        return {0.5 * (sigma_n_lo() + sigma_n_hi()), 0.5 * (sigma_phi_lo() + sigma_phi_hi())};
    }

    void validate() const {
        if (m < 1 || m > 12) throw ValidationError("config: m must be in [1, 12]");
        if (mode == Mode::qam_demapper_only && (m % 2) != 0)
            throw ValidationError("config: qam_demapper_only requires even m");
        if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
        if (batches_per_epoch < 1) throw ValidationError("config: batches_per_epoch must be >= 1");
        if (!(snr_db_min <= snr_db_max)) throw ValidationError("config: SNR range not ordered");
        if (!(linewidth_hz_min <= linewidth_hz_max) || linewidth_hz_min < 0)
            throw ValidationError("config: linewidth range not ordered/nonnegative");
        if (!(symbol_rate_baud > 0)) throw ValidationError("config: symbol rate must be > 0");
        if (!(temp_end <= temp_start) || !(temp_end > 0))
            throw ValidationError("config: need 0 < temp_end <= temp_start");
        if (!(batch_end >= batch_start) || batch_start < bps.window_size)
            throw ValidationError("config: need batch_end >= batch_start >= window_size");
        bps.validate();
    }
};

/// Draws one (sigma_n, sigma_phi) pair, uniform in the sigma domain over the
/// configured SNR/linewidth ranges (dB-uniform SNR behind the config flag).
inline ChannelParams sample_channel_params(const TrainConfig& config, rng::Stream& stream) {
    ChannelParams p;
    if (config.sampling == SigmaSampling::sigma_uniform) {
        p.sigma_n = stream.uniform(config.sigma_n_lo(), config.sigma_n_hi());
    } else {
        p.sigma_n = channel::snr_db_to_sigma_n(
            stream.uniform(config.snr_db_min, config.snr_db_max));
    }
    p.sigma_phi = stream.uniform(config.sigma_phi_lo(), config.sigma_phi_hi());
    return p;
}

struct Schedule {
    int batch_size;
    double temperature;
};

/// Batch size: linear ramp, rounded to nearest, floored at the window size.
/// Temperature: geometric (log-linear) ramp; the endpoints span three
/// decades, so a linear ramp would sit at the end value almost throughout.
inline Schedule schedule(int epoch, const TrainConfig& config) {
    if (epoch < 0 || epoch >= config.epochs)
        throw std::invalid_argument("schedule: epoch out of range");
    const double frac =
        config.epochs > 1 ? static_cast<double>(epoch) / (config.epochs - 1) : 0.0;
    const double raw =
        config.batch_start + (config.batch_end - config.batch_start) * frac;
    int batch = static_cast<int>(std::lround(raw));
    batch = std::max(batch, config.bps.window_size);
    const double temp =
        config.temp_start * std::pow(config.temp_end / config.temp_start, frac);
    return {batch, temp};
}

struct TrainerState {
    TrainConfig config;
    shaping::TxNet tx;
    shaping::RxNet rx;
    nn::AdamState adam; // over the trainable parameters, fixed order
    shaping::ConditioningScale scale;
    int epoch = 0; // completed epochs
};

namespace detail {

inline std::vector<Mat*> trainable_params(TrainerState& st) {
    std::vector<Mat*> out;
    if (st.config.mode != Mode::qam_demapper_only)
        for (nn::DenseLayer& l : st.tx.net.layers) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
    for (nn::DenseLayer& l : st.rx.net.layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

} // namespace detail

inline TrainerState init_trainer(const TrainConfig& config) {
    config.validate();
    TrainerState st;
    st.config = config;
    rng::Stream init(config.seed, "init");
    st.tx = shaping::make_tx_net(config.m, init);
    st.rx = shaping::make_rx_net(config.m, init);
    st.scale = config.conditioning_scale();
    std::vector<const Mat*> params;
    for (Mat* p : detail::trainable_params(st)) params.push_back(p);
    st.adam = nn::make_adam_state(params, config.adam);
    return st;
}

/// Uniform random bit matrix [B x m]; one stream draw per symbol.
inline Mat draw_bits(std::size_t batch, int m, rng::Stream& bits) {
    Mat out(batch, static_cast<std::size_t>(m));
    for (std::size_t k = 0; k < batch; ++k) {
        const std::uint64_t word = bits.bits(static_cast<unsigned>(m));
        for (int i = 0; i < m; ++i)
            out(k, static_cast<std::size_t>(i)) =
                static_cast<double>((word >> (m - 1 - i)) & 1u);
    }
    return out;
}

struct EpochMetrics {
    int epoch = 0;
    int batch_size = 0;
    double temperature = 0.0;
    double bce_bits = 0.0; // mean per (symbol, bit) cell over the epoch
    double bmi_bits = 0.0; // m * (1 - bce_bits)
    std::vector<double> batch_bce_nats;
};

/// Runs one epoch: per batch, sample channel parameters, regenerate the
/// transmit constellation, push a frame through AWGN + Wiener phase noise
/// and the soft BPS (whose metric uses that fresh constellation), demap,
/// apply the masked BCE and one Adam step.
inline EpochMetrics train_epoch(TrainerState& st) {
    const TrainConfig& cfg = st.config;
    const Schedule sched = schedule(st.epoch, cfg);
    const std::vector<double> angles = cfg.bps.test_angles();
    const int m = cfg.m;

    rng::Stream params_stream(cfg.seed, "params", static_cast<std::uint64_t>(st.epoch));
    rng::Stream bits_stream(cfg.seed, "bits", static_cast<std::uint64_t>(st.epoch));
    rng::Stream noise_stream(cfg.seed, "noise", static_cast<std::uint64_t>(st.epoch));
    rng::Stream phase_stream(cfg.seed, "phase", static_cast<std::uint64_t>(st.epoch));

    const std::optional<constellation::Constellation> qam =
        cfg.mode == Mode::qam_demapper_only
            ? std::optional<constellation::Constellation>(constellation::make_square_qam(m))
            : std::nullopt;

    EpochMetrics metrics;
    metrics.epoch = st.epoch;
    metrics.batch_size = sched.batch_size;
    metrics.temperature = sched.temperature;

    const std::size_t B = static_cast<std::size_t>(sched.batch_size);
    const std::vector<std::uint8_t> mask = bps::edge_mask(B, cfg.bps.window_size);

    for (int batch = 0; batch < cfg.batches_per_epoch; ++batch) {
        const ChannelParams true_params = sample_channel_params(cfg, params_stream);
        const ChannelParams cond_params =
            cfg.mode == Mode::robust ? cfg.range_midpoint() : true_params;
        const std::array<double, 2> cond = st.scale.apply(cond_params);

        ad::Graph g;
        const bool train_tx = cfg.mode != Mode::qam_demapper_only;
        nn::NetVars txv, rxv;
        ad::Var points{};
        if (qam) {
            Mat pm(qam->order(), 2);
            for (std::size_t i = 0; i < qam->order(); ++i) {
                pm(i, 0) = qam->points[i].real();
                pm(i, 1) = qam->points[i].imag();
            }
            points = g.constant(std::move(pm));
        } else {
            txv = nn::declare_params(g, st.tx.net, train_tx);
            points = shaping::tx_constellation_graph(g, txv, cond, m);
        }
        rxv = nn::declare_params(g, st.rx.net, true);

        const Mat bits = draw_bits(B, m, bits_stream);
        const Mat one_hot = shaping::embed_one_hot(bits);
        ad::Var x = g.matmul(g.constant(one_hot), points);

        const std::vector<double> phi =
            channel::draw_phase_walk(B, true_params.sigma_phi, phase_stream);
        const std::vector<cplx> noise = channel::draw_noise(B, true_params.sigma_n, noise_stream);
        Mat noise_m(B, 2);
        for (std::size_t k = 0; k < B; ++k) {
            noise_m(k, 0) = noise[k].real();
            noise_m(k, 1) = noise[k].imag();
        }
        ad::Var z = g.rotate_add(x, std::move(noise_m), phi);

        ad::Var d = g.bps_distance(z, points, angles);
        ad::Var w = g.windowed_sum(d, cfg.bps.window_size);
        ad::Var weights = g.softmin_weights(w, sched.temperature);
        ad::Var x_hat = g.combine_rotations(weights, z, angles);

        if (qam) {
            // Resolve the residual quarter-turn ambiguity of square QAM per
            // frame before demapping (genie-aided; bounds this baseline
            // optimistically).
            const Mat& xh = g.value(x_hat);
            const Mat& xv = g.value(x);
            std::vector<cplx> xh_c(B), x_c(B);
            for (std::size_t k = 0; k < B; ++k) {
                xh_c[k] = cplx(xh(k, 0), xh(k, 1));
                x_c[k] = cplx(xv(k, 0), xv(k, 1));
            }
            x_hat = g.rotate_const(x_hat, bps::genie_rotation(xh_c, x_c));
        }

        ad::Var llrs = shaping::demap_graph(g, rxv, x_hat, cond);
        llrs = g.clamp(llrs, -nn::kLlrClamp, nn::kLlrClamp);
        ad::Var loss = g.bce_with_logits(llrs, bits, mask);

        const double loss_nats = g.value(loss)[0];
        if (!std::isfinite(loss_nats)) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "train_epoch: non-finite loss (epoch %d, batch %d, sigma_n=%.6g, "
                          "sigma_phi=%.6g)",
                          st.epoch, batch, true_params.sigma_n, true_params.sigma_phi);
            throw NumericalError(buf);
        }
        metrics.batch_bce_nats.push_back(loss_nats);

        g.backward(loss);

        std::vector<Mat*> params = detail::trainable_params(st);
        std::vector<const Mat*> cparams(params.begin(), params.end());
        std::vector<const Mat*> grads;
        grads.reserve(params.size());
        if (train_tx)
            for (const nn::LayerVars& l : txv) {
                grads.push_back(&g.grad(l.weight));
                grads.push_back(&g.grad(l.bias));
            }
        for (const nn::LayerVars& l : rxv) {
            grads.push_back(&g.grad(l.weight));
            grads.push_back(&g.grad(l.bias));
        }
        nn::adam_step(params, grads, st.adam);
    }

    double mean_nats = 0.0;
    for (double v : metrics.batch_bce_nats) mean_nats += v;
    mean_nats /= static_cast<double>(metrics.batch_bce_nats.size());
    metrics.bce_bits = nn::nats_to_bits(mean_nats);
    metrics.bmi_bits = m * (1.0 - metrics.bce_bits);
    st.epoch += 1;
    return metrics;
}

// ---- checkpoint container ----------------------------------------------------
//
// Layout (little-endian):
//   8 bytes   magic "BPSHCKP1"
//   u32       format version (1)
//   u64       metadata byte count
//   ...       metadata, UTF-8 "key=value\n" lines (config, scaling, epoch,
//             adam step, LLR sign convention)
//   u32       blob count
//   per blob: u32 name length, name bytes, u64 rows, u64 cols,
//             rows*cols f64 values

namespace detail {

constexpr char kCkptMagic[8] = {'B', 'P', 'S', 'H', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCkptVersion = 1;

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw IoError("checkpoint: truncated file");
    return v;
}

inline void write_blob(std::ostream& os, const std::string& name, const Mat& m) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint64_t>(m.rows()));
    write_pod(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
}

struct Blob {
    std::string name;
    Mat m;
};

inline Blob read_blob(std::istream& is) {
    Blob b;
    const std::uint32_t len = read_pod<std::uint32_t>(is);
    if (len > 4096) throw ValidationError("checkpoint: implausible blob name length");
    b.name.resize(len);
    is.read(b.name.data(), len);
    const std::uint64_t rows = read_pod<std::uint64_t>(is);
    const std::uint64_t cols = read_pod<std::uint64_t>(is);
    if (rows * cols > (std::uint64_t{1} << 28))
        throw ValidationError("checkpoint: implausible blob size");
    b.m = Mat(rows, cols);
    is.read(reinterpret_cast<char*>(b.m.data()),
            static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!is) throw IoError("checkpoint: truncated blob " + b.name);
    return b;
}

inline void net_blobs(std::vector<Blob>& out, const std::string& prefix,
                      const nn::DenseNet& net) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        out.push_back({prefix + ".layer" + std::to_string(i) + ".weight", net.layers[i].weight});
        out.push_back({prefix + ".layer" + std::to_string(i) + ".bias", net.layers[i].bias});
    }
}

} // namespace detail

inline std::string checkpoint_metadata(const TrainerState& st) {
    const TrainConfig& c = st.config;
    std::ostringstream os;
    auto kv = [&os](const std::string& k, const std::string& v) { os << k << '=' << v << '\n'; };
    auto kvd = [&](const std::string& k, double v) { kv(k, detail::fmt_double(v)); };
    kv("tool_version", kVersion);
    kv("llr_convention", "L=log(P(b=0)/P(b=1))");
    kv("m", std::to_string(c.m));
    kv("epochs", std::to_string(c.epochs));
    kv("batches_per_epoch", std::to_string(c.batches_per_epoch));
    kv("batch_start", std::to_string(c.batch_start));
    kv("batch_end", std::to_string(c.batch_end));
    kvd("snr_db_min", c.snr_db_min);
    kvd("snr_db_max", c.snr_db_max);
    kvd("linewidth_hz_min", c.linewidth_hz_min);
    kvd("linewidth_hz_max", c.linewidth_hz_max);
    kvd("symbol_rate_baud", c.symbol_rate_baud);
    kv("num_test_angles", std::to_string(c.bps.num_test_angles));
    kv("window_size", std::to_string(c.bps.window_size));
    kvd("angle_min", c.bps.angle_min);
    kvd("angle_max", c.bps.angle_max);
    kvd("temp_start", c.temp_start);
    kvd("temp_end", c.temp_end);
    kv("seed", std::to_string(c.seed));
    kv("mode", to_string(c.mode));
    kv("sigma_sampling", c.sampling == SigmaSampling::sigma_uniform ? "sigma" : "db");
    kvd("adam_lr", c.adam.lr);
    kvd("adam_beta1", c.adam.beta1);
    kvd("adam_beta2", c.adam.beta2);
    kvd("adam_eps", c.adam.eps);
    kv("adam_step", std::to_string(st.adam.step));
    kv("epoch", std::to_string(st.epoch));
    kvd("scale_sigma_n_min", st.scale.sigma_n_min);
    kvd("scale_sigma_n_max", st.scale.sigma_n_max);
    kvd("scale_sigma_phi_min", st.scale.sigma_phi_min);
    kvd("scale_sigma_phi_max", st.scale.sigma_phi_max);
    return os.str();
}

inline void save_checkpoint(const TrainerState& st, std::ostream& os) {
    os.write(detail::kCkptMagic, sizeof detail::kCkptMagic);
    detail::write_pod(os, detail::kCkptVersion);
    const std::string meta = checkpoint_metadata(st);
    detail::write_pod(os, static_cast<std::uint64_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));

    std::vector<detail::Blob> blobs;
    detail::net_blobs(blobs, "tx", st.tx.net);
    detail::net_blobs(blobs, "rx", st.rx.net);
    for (std::size_t j = 0; j < st.adam.m.size(); ++j) {
        blobs.push_back({"adam.m." + std::to_string(j), st.adam.m[j]});
        blobs.push_back({"adam.v." + std::to_string(j), st.adam.v[j]});
    }
    detail::write_pod(os, static_cast<std::uint32_t>(blobs.size()));
    for (const detail::Blob& b : blobs) detail::write_blob(os, b.name, b.m);
    if (!os) throw IoError("save_checkpoint: write failed");
}

inline void save_checkpoint(const TrainerState& st, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_checkpoint: cannot open " + path);
    save_checkpoint(st, os);
}

namespace detail {

inline std::map<std::string, std::string> parse_metadata(const std::string& meta) {
    std::map<std::string, std::string> kv;
    std::istringstream is(meta);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("checkpoint: bad metadata line");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline const std::string& meta_get(const std::map<std::string, std::string>& kv,
                                   const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("checkpoint: missing metadata key '" + key + "'");
    return it->second;
}

} // namespace detail

inline TrainerState load_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, detail::kCkptMagic, sizeof magic) != 0)
        throw ValidationError("checkpoint: bad magic (not a checkpoint file?)");
    const std::uint32_t version = detail::read_pod<std::uint32_t>(is);
    if (version != detail::kCkptVersion)
        throw ValidationError("checkpoint: unsupported format version " +
                              std::to_string(version));
    const std::uint64_t meta_len = detail::read_pod<std::uint64_t>(is);
    if (meta_len > (1u << 20)) throw ValidationError("checkpoint: implausible metadata size");
    std::string meta(meta_len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw IoError("checkpoint: truncated metadata");
    const auto kv = detail::parse_metadata(meta);

    TrainConfig c;
    c.m = std::stoi(detail::meta_get(kv, "m"));
    c.epochs = std::stoi(detail::meta_get(kv, "epochs"));
    c.batches_per_epoch = std::stoi(detail::meta_get(kv, "batches_per_epoch"));
    c.batch_start = std::stoi(detail::meta_get(kv, "batch_start"));
    c.batch_end = std::stoi(detail::meta_get(kv, "batch_end"));
    c.snr_db_min = std::stod(detail::meta_get(kv, "snr_db_min"));
    c.snr_db_max = std::stod(detail::meta_get(kv, "snr_db_max"));
    c.linewidth_hz_min = std::stod(detail::meta_get(kv, "linewidth_hz_min"));
    c.linewidth_hz_max = std::stod(detail::meta_get(kv, "linewidth_hz_max"));
    c.symbol_rate_baud = std::stod(detail::meta_get(kv, "symbol_rate_baud"));
    c.bps.num_test_angles = std::stoi(detail::meta_get(kv, "num_test_angles"));
    c.bps.window_size = std::stoi(detail::meta_get(kv, "window_size"));
    c.bps.angle_min = std::stod(detail::meta_get(kv, "angle_min"));
    c.bps.angle_max = std::stod(detail::meta_get(kv, "angle_max"));
    c.temp_start = std::stod(detail::meta_get(kv, "temp_start"));
    c.temp_end = std::stod(detail::meta_get(kv, "temp_end"));
    c.seed = std::stoull(detail::meta_get(kv, "seed"));
    c.mode = mode_from_string(detail::meta_get(kv, "mode"));
    c.sampling = detail::meta_get(kv, "sigma_sampling") == "db" ? SigmaSampling::db_uniform
                                                                : SigmaSampling::sigma_uniform;
    c.adam.lr = std::stod(detail::meta_get(kv, "adam_lr"));
    c.adam.beta1 = std::stod(detail::meta_get(kv, "adam_beta1"));
    c.adam.beta2 = std::stod(detail::meta_get(kv, "adam_beta2"));
    c.adam.eps = std::stod(detail::meta_get(kv, "adam_eps"));

    TrainerState st = init_trainer(c);
    st.epoch = std::stoi(detail::meta_get(kv, "epoch"));
    st.adam.step = std::stoull(detail::meta_get(kv, "adam_step"));
    st.scale.sigma_n_min = std::stod(detail::meta_get(kv, "scale_sigma_n_min"));
    st.scale.sigma_n_max = std::stod(detail::meta_get(kv, "scale_sigma_n_max"));
    st.scale.sigma_phi_min = std::stod(detail::meta_get(kv, "scale_sigma_phi_min"));
    st.scale.sigma_phi_max = std::stod(detail::meta_get(kv, "scale_sigma_phi_max"));

    const std::uint32_t blob_count = detail::read_pod<std::uint32_t>(is);
    std::map<std::string, Mat> blobs;
    for (std::uint32_t i = 0; i < blob_count; ++i) {
        detail::Blob b = detail::read_blob(is);
        blobs.emplace(std::move(b.name), std::move(b.m));
    }
    auto take = [&blobs](const std::string& name) -> Mat {
        auto it = blobs.find(name);
        if (it == blobs.end())
            throw ValidationError("checkpoint: missing parameter blob '" + name + "'");
        Mat m = std::move(it->second);
        blobs.erase(it);
        return m;
    };
    auto load_net = [&take](const std::string& prefix, nn::DenseNet& net) {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            Mat w = take(prefix + ".layer" + std::to_string(i) + ".weight");
            Mat b = take(prefix + ".layer" + std::to_string(i) + ".bias");
            if (!w.same_shape(net.layers[i].weight) || !b.same_shape(net.layers[i].bias))
                throw ValidationError("checkpoint: blob shape mismatch in " + prefix);
            net.layers[i].weight = std::move(w);
            net.layers[i].bias = std::move(b);
        }
    };
    load_net("tx", st.tx.net);
    load_net("rx", st.rx.net);
    for (std::size_t j = 0; j < st.adam.m.size(); ++j) {
        Mat m = take("adam.m." + std::to_string(j));
        Mat v = take("adam.v." + std::to_string(j));
        if (!m.same_shape(st.adam.m[j]) || !v.same_shape(st.adam.v[j]))
            throw ValidationError("checkpoint: Adam state shape mismatch");
        st.adam.m[j] = std::move(m);
        st.adam.v[j] = std::move(v);
    }
    if (!blobs.empty())
        throw ValidationError("checkpoint: unexpected extra blob '" + blobs.begin()->first + "'");
    return st;
}

inline TrainerState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path);
    return load_checkpoint(is);
}

} // namespace bpshape::trainer

#endif
