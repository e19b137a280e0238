// Frozen-model evaluation: BMI estimation with the hard BPS, SNR x linewidth
// sweeps, SNR-misestimation experiments and constellation export.
#ifndef BPSHAPE_EVALSUITE_HPP
#define BPSHAPE_EVALSUITE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "bpshape/bps.hpp"
#include "bpshape/channel.hpp"
#include "bpshape/constellation.hpp"
#include "bpshape/errors.hpp"
#include "bpshape/shaping.hpp"
#include "bpshape/trainer.hpp"

namespace bpshape::evalsuite {

using channel::ChannelParams;
using channel::cplx;

struct SweepSpec {
    std::vector<double> snr_db;
    std::vector<double> linewidth_hz;
    int symbols_per_point = 1 << 17;
    std::uint64_t seed = 1;
    double misestimation_offset_db = 0.0; // applied to both mapper and demapper conditioning
    int jobs = 1;

    void validate(int window_size) const {
        if (snr_db.empty() || linewidth_hz.empty())
            throw ValidationError("sweep: SNR and linewidth lists must be nonempty");
        if (symbols_per_point < 10 * window_size)
            throw ValidationError("sweep: symbols_per_point must be >= 10 * window size");
        if (jobs < 1) throw ValidationError("sweep: jobs must be >= 1");
    }
};

struct SweepRow {
    double snr_db = 0.0;
    double linewidth_hz = 0.0;
    double bmi_bits = 0.0;
    std::int64_t n = 0;
    std::uint64_t seed = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

/// BMI = m - sum_i mean_k BCE_bits over unmasked symbols, clamped below at 0
/// for reporting (the raw value is what the clamp is applied to).
inline double estimate_bmi(const Mat& llrs, const Mat& bits,
                           std::span<const std::uint8_t> mask = {}) {
    const double per_cell_bits = nn::bce_with_logits_bits(llrs, bits, mask);
    const double raw = static_cast<double>(llrs.cols()) * (1.0 - per_cell_bits);
    return std::max(0.0, raw);
}

/// One evaluation point: generate with true_params, condition the mapper and
/// demapper on assumed_params, recover with the hard BPS, estimate BMI over
/// non-edge symbols. assumed == true is the perfect-knowledge case.
inline double run_point(const trainer::TrainerState& model, const ChannelParams& true_params,
                        const ChannelParams& assumed_params, const SweepSpec& spec,
                        std::uint64_t point_seed) {
    const trainer::TrainConfig& cfg = model.config;
    const int m = cfg.m;
    const std::size_t n = static_cast<std::size_t>(spec.symbols_per_point);

    const bool qam_mode = cfg.mode == trainer::Mode::qam_demapper_only;
    const ChannelParams cond_params =
        cfg.mode == trainer::Mode::robust ? cfg.range_midpoint() : assumed_params;

    const constellation::Constellation c =
        qam_mode ? constellation::make_square_qam(m)
                 : shaping::tx_constellation(model.tx, cond_params, model.scale);

    rng::Stream bits_stream(point_seed, "eval-bits");
    channel::ChannelRng crng{rng::Stream(point_seed, "eval-noise"),
                             rng::Stream(point_seed, "eval-phase")};

    const Mat bits = trainer::draw_bits(n, m, bits_stream);
    const std::vector<cplx> x = shaping::map_symbols(shaping::embed_one_hot(bits), c);
    const channel::SymbolFrame frame = channel::apply_channel(x, true_params, crng);

    bps::HardResult hard = bps::bps_hard(frame.z, c, cfg.bps);
    if (qam_mode) {
        const double rot = bps::genie_rotation(hard.x_hat, x);
        const cplx r = std::polar(1.0, rot);
        for (cplx& v : hard.x_hat) v *= r;
    }

    const Mat llrs = shaping::demap(model.rx, hard.x_hat, cond_params, model.scale);
    const std::vector<std::uint8_t> mask = bps::edge_mask(n, cfg.bps.window_size);
    return estimate_bmi(llrs, bits, mask);
}

inline std::uint64_t point_seed(std::uint64_t master, std::size_t snr_i, std::size_t lw_i) {
    return rng::stream_key(master, "sweep-point", (static_cast<std::uint64_t>(snr_i) << 32) |
                                                      static_cast<std::uint64_t>(lw_i));
}

/// Cartesian SNR x linewidth sweep. Every grid point owns a seed derived
/// from the master seed, so the rows do not depend on the job count.
inline SweepResult run_sweep(const trainer::TrainerState& model, const SweepSpec& spec) {
    spec.validate(model.config.bps.window_size);
    struct Job {
        std::size_t si, li;
        SweepRow row;
    };
    std::vector<Job> jobs;
    for (std::size_t si = 0; si < spec.snr_db.size(); ++si)
        for (std::size_t li = 0; li < spec.linewidth_hz.size(); ++li)
            jobs.push_back({si, li, {}});

    auto run_one = [&](Job& job) {
        const double snr = spec.snr_db[job.si];
        const double lw = spec.linewidth_hz[job.li];
        ChannelParams true_params{
            channel::snr_db_to_sigma_n(snr),
            channel::linewidth_to_sigma_phi(lw, model.config.symbol_rate_baud)};
        ChannelParams assumed = true_params;
        assumed.sigma_n =
            channel::snr_db_to_sigma_n(snr + spec.misestimation_offset_db);
        const std::uint64_t seed = point_seed(spec.seed, job.si, job.li);
        try {
            job.row = {snr, lw, run_point(model, true_params, assumed, spec, seed),
                       spec.symbols_per_point, seed};
        } catch (const std::exception& e) {
            throw NumericalError("sweep point (snr=" + std::to_string(snr) +
                                 " dB, linewidth=" + std::to_string(lw) + " Hz): " + e.what());
        }
    };

    if (spec.jobs <= 1 || jobs.size() <= 1) {
        for (Job& j : jobs) run_one(j);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(
            static_cast<std::size_t>(std::min<std::size_t>(jobs.size(), spec.jobs)));
        for (std::size_t w = 0; w < errors.size(); ++w)
            pool.emplace_back([&, w] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    try {
                        run_one(jobs[i]);
                    } catch (...) {
                        errors[w] = std::current_exception();
                        return;
                    }
                }
            });
        for (std::thread& t : pool) t.join();
        for (const std::exception_ptr& e : errors)
            if (e) std::rethrow_exception(e);
    }

    SweepResult result;
    for (const Job& j : jobs) result.rows.push_back(j.row);
    return result;
}

/// Result table header and row layout shared by the CLI and the plots:
/// `snr linewidth mean n seed`, SNR with 2 decimals, linewidth in Hz,
/// mean BMI with 6 decimals.
inline void write_result_table(const SweepResult& result, std::ostream& os) {
    os << "snr linewidth mean n seed\n";
    char buf[160];
    for (const SweepRow& r : result.rows) {
        std::snprintf(buf, sizeof buf, "%.2f %.2f %.6f %lld %llu\n", r.snr_db, r.linewidth_hz,
                      r.bmi_bits, static_cast<long long>(r.n),
                      static_cast<unsigned long long>(r.seed));
        os << buf;
    }
    if (!os) throw IoError("write_result_table: stream write failed");
}

/// `constellation_<linewidth Hz, 2 decimals>_<snr dB, trailing zeros
/// trimmed>.txt`
inline std::string constellation_file_name(double linewidth_hz, double snr_db) {
    char lw[48], snr[48];
    std::snprintf(lw, sizeof lw, "%.2f", linewidth_hz);
    std::snprintf(snr, sizeof snr, "%g", snr_db);
    return std::string("constellation_") + lw + "_" + snr + ".txt";
}

/// Writes one constellation file per (snr, linewidth) grid point; returns
/// the file paths in grid order.
inline std::vector<std::string> export_constellation_sweep(
    const trainer::TrainerState& model, std::span<const double> snr_db,
    std::span<const double> linewidth_hz, const std::string& out_dir) {
    if (snr_db.empty() || linewidth_hz.empty())
        throw ValidationError("export: SNR and linewidth lists must be nonempty");
    if (model.config.mode == trainer::Mode::qam_demapper_only)
        throw ValidationError("export: the QAM baseline has no learned constellation");
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> files;
    for (double snr : snr_db)
        for (double lw : linewidth_hz) {
            ChannelParams p{channel::snr_db_to_sigma_n(snr),
                            channel::linewidth_to_sigma_phi(lw, model.config.symbol_rate_baud)};
            const ChannelParams cond =
                model.config.mode == trainer::Mode::robust ? model.config.range_midpoint() : p;
            const constellation::Constellation c =
                shaping::tx_constellation(model.tx, cond, model.scale);
            const std::string path =
                (std::filesystem::path(out_dir) / constellation_file_name(lw, snr)).string();
            std::ofstream os(path, std::ios::binary);
            if (!os) throw IoError("export: cannot open " + path);
            constellation::write_constellation(c, os);
            files.push_back(path);
        }
    return files;
}

} // namespace bpshape::evalsuite

#endif
