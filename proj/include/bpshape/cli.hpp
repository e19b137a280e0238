// Command-line front end: train / eval / export-constellation / selftest.
// Every command writes a manifest (command line, config digest, seed, tool
// version, timestamps, outputs) next to its outputs so a run can be
// reproduced from the manifest alone.
#ifndef BPSHAPE_CLI_HPP
#define BPSHAPE_CLI_HPP

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpshape/config.hpp"
#include "bpshape/errors.hpp"
#include "bpshape/evalsuite.hpp"
#include "bpshape/selfcheck.hpp"
#include "bpshape/trainer.hpp"
#include "bpshape/version.hpp"

namespace bpshape::cli {

namespace detail {

inline std::string iso_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string file_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path + " for digest");
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string bytes = ss.str();
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                  static_cast<unsigned long long>(rng::detail::hash_name(bytes)));
    return buf;
}

struct Manifest {
    std::string command_line;
    std::string config_digest = "none";
    std::uint64_t seed = 0;
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;

    void write(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot write manifest " + path);
        os << "command=" << command_line << "\n"
           << "config_digest=" << config_digest << "\n"
           << "seed=" << seed << "\n"
           << "version=" << kVersion << "\n"
           << "started=" << started << "\n"
           << "finished=" << finished << "\n";
        for (const std::string& o : outputs) os << "output=" << o << "\n";
    }
};

inline std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

inline std::string default_out_dir() {
    const char* env = std::getenv("BPSHAPE_OUT_DIR");
    return env && *env ? env : ".";
}

inline config::ConfigMap load_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open config file " + path);
    return config::parse_config(is);
}

} // namespace detail

struct TrainCli {
    std::string config_path;
    std::string resume_path;
    std::string out_dir = detail::default_out_dir();
    // overrides; -1 / NaN mean "not set"
    int m = -1;
    int epochs = -1;
    int batches_per_epoch = -1;
    int batch_start = -1;
    int batch_end = -1;
    double learning_rate = -1.0;
    std::int64_t seed = -1;
    std::string mode;
};

inline int cmd_train(const TrainCli& opt, const std::string& command_line) {
    detail::Manifest manifest;
    manifest.command_line = command_line;
    manifest.started = detail::iso_utc_now();

    trainer::TrainerState state;
    if (!opt.resume_path.empty()) {
        if (!opt.config_path.empty())
            throw ValidationError("train: give either --config or --resume, not both");
        state = trainer::load_checkpoint(opt.resume_path);
        manifest.config_digest = detail::file_digest(opt.resume_path);
        if (opt.epochs > 0) state.config.epochs = opt.epochs;
    } else {
        if (opt.config_path.empty())
            throw ValidationError("train: --config is required (or --resume)");
        const config::ConfigMap map = detail::load_config_file(opt.config_path);
        trainer::TrainConfig cfg = config::train_config_from(map);
        if (opt.m > 0) cfg.m = opt.m;
        if (opt.epochs > 0) cfg.epochs = opt.epochs;
        if (opt.batches_per_epoch > 0) cfg.batches_per_epoch = opt.batches_per_epoch;
        if (opt.batch_start > 0) cfg.batch_start = opt.batch_start;
        if (opt.batch_end > 0) cfg.batch_end = opt.batch_end;
        if (opt.learning_rate > 0) cfg.adam.lr = opt.learning_rate;
        if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
        if (!opt.mode.empty()) {
            cfg.mode = trainer::mode_from_string(opt.mode);
            if (cfg.mode == trainer::Mode::qam_demapper_only && !map.count("angle_min"))
                cfg.bps = cfg.bps.with_qam_span();
        }
        cfg.validate();
        state = trainer::init_trainer(cfg);
        manifest.config_digest = detail::file_digest(opt.config_path);
    }
    manifest.seed = state.config.seed;

    std::filesystem::create_directories(opt.out_dir);
    const std::string metrics_path =
        (std::filesystem::path(opt.out_dir) / "metrics.txt").string();
    const std::string ckpt_path =
        (std::filesystem::path(opt.out_dir) / "checkpoint.ckpt").string();

    std::ofstream metrics(metrics_path, state.epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open " + metrics_path);
    if (state.epoch == 0) metrics << "epoch batch_size temperature bce_bits bmi_bits\n";

    while (state.epoch < state.config.epochs) {
        const trainer::EpochMetrics em = trainer::train_epoch(state);
        char buf[128];
        std::snprintf(buf, sizeof buf, "%d %d %.6g %.6f %.6f\n", em.epoch, em.batch_size,
                      em.temperature, em.bce_bits, em.bmi_bits);
        metrics << buf;
        metrics.flush();
    }
    trainer::save_checkpoint(state, ckpt_path);

    manifest.outputs = {ckpt_path, metrics_path};
    manifest.finished = detail::iso_utc_now();
    manifest.write((std::filesystem::path(opt.out_dir) / "manifest.txt").string());
    return 0;
}

struct EvalCli {
    std::string checkpoint_path;
    std::string config_path;
    std::string out_dir = detail::default_out_dir();
    std::string out_name = "results.txt";
    std::vector<double> snr_db;
    std::vector<double> linewidth_hz;
    double offset_db = 0.0;
    int symbols = -1;
    std::int64_t seed = -1;
    int jobs = 1;
    std::string baseline;
};

inline int cmd_eval(const EvalCli& opt, const std::string& command_line) {
    detail::Manifest manifest;
    manifest.command_line = command_line;
    manifest.started = detail::iso_utc_now();

    const trainer::TrainerState state = trainer::load_checkpoint(opt.checkpoint_path);
    if (opt.baseline == "qam" && state.config.mode != trainer::Mode::qam_demapper_only)
        throw ValidationError("eval: --baseline qam needs a qam_demapper_only checkpoint");
    if (!opt.baseline.empty() && opt.baseline != "qam")
        throw ValidationError("eval: unknown baseline '" + opt.baseline + "'");

    evalsuite::SweepSpec spec;
    if (!opt.config_path.empty()) {
        spec = config::sweep_spec_from(detail::load_config_file(opt.config_path));
        manifest.config_digest = detail::file_digest(opt.config_path);
    } else {
        manifest.config_digest = detail::file_digest(opt.checkpoint_path);
    }
    if (!opt.snr_db.empty()) spec.snr_db = opt.snr_db;
    if (!opt.linewidth_hz.empty()) spec.linewidth_hz = opt.linewidth_hz;
    if (opt.symbols > 0) spec.symbols_per_point = opt.symbols;
    if (opt.seed >= 0) spec.seed = static_cast<std::uint64_t>(opt.seed);
    spec.misestimation_offset_db = opt.offset_db;
    spec.jobs = opt.jobs;
    manifest.seed = spec.seed;

    const evalsuite::SweepResult result = evalsuite::run_sweep(state, spec);

    std::filesystem::create_directories(opt.out_dir);
    const std::string out_path = (std::filesystem::path(opt.out_dir) / opt.out_name).string();
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw IoError("cannot open " + out_path);
    evalsuite::write_result_table(result, os);

    manifest.outputs = {out_path};
    manifest.finished = detail::iso_utc_now();
    manifest.write((std::filesystem::path(opt.out_dir) / "manifest.txt").string());
    return 0;
}

struct ExportCli {
    std::string checkpoint_path;
    std::string out_dir = detail::default_out_dir();
    std::vector<double> snr_db;
    std::vector<double> linewidth_hz;
};

inline int cmd_export_constellation(const ExportCli& opt, const std::string& command_line) {
    detail::Manifest manifest;
    manifest.command_line = command_line;
    manifest.started = detail::iso_utc_now();

    const trainer::TrainerState state = trainer::load_checkpoint(opt.checkpoint_path);
    manifest.config_digest = detail::file_digest(opt.checkpoint_path);
    manifest.seed = state.config.seed;

    manifest.outputs = evalsuite::export_constellation_sweep(state, opt.snr_db,
                                                             opt.linewidth_hz, opt.out_dir);
    manifest.finished = detail::iso_utc_now();
    manifest.write((std::filesystem::path(opt.out_dir) / "manifest.txt").string());
    return 0;
}

/// Entry point used by the binary (and by tests, which call it in-process).
inline int run(int argc, char** argv) {
    CLI::App app{"Geometric constellation shaping for phase-noise channels with "
                 "blind-phase-search carrier recovery"};
    app.require_subcommand(1);
    const std::string command_line = detail::join_args(argc, argv);

    TrainCli train_opt;
    CLI::App* train = app.add_subcommand("train", "Train a mapper/demapper pair end to end");
    train->add_option("--config", train_opt.config_path, "Config file (key = value)");
    train->add_option("--resume", train_opt.resume_path, "Continue from a checkpoint");
    train->add_option("--out-dir", train_opt.out_dir, "Output directory");
    train->add_option("--m", train_opt.m, "Bits per symbol override");
    train->add_option("--epochs", train_opt.epochs, "Epoch count override");
    train->add_option("--batches-per-epoch", train_opt.batches_per_epoch, "Batches per epoch");
    train->add_option("--batch-start", train_opt.batch_start, "Initial batch size");
    train->add_option("--batch-end", train_opt.batch_end, "Final batch size");
    train->add_option("--learning-rate", train_opt.learning_rate, "Adam learning rate");
    train->add_option("--seed", train_opt.seed, "Master seed override");
    train->add_option("--mode", train_opt.mode,
                      "parameterized | robust | qam_demapper_only");

    EvalCli eval_opt;
    CLI::App* eval = app.add_subcommand("eval", "Sweep BMI over an SNR x linewidth grid");
    eval->add_option("--checkpoint", eval_opt.checkpoint_path, "Trained checkpoint")->required();
    eval->add_option("--config", eval_opt.config_path, "Config file with the eval grid");
    eval->add_option("--out-dir", eval_opt.out_dir, "Output directory");
    eval->add_option("--out", eval_opt.out_name, "Result table file name");
    eval->add_option("--snr", eval_opt.snr_db, "SNR grid in dB");
    eval->add_option("--linewidth", eval_opt.linewidth_hz, "Linewidth grid in Hz");
    eval->add_option("--offset-db", eval_opt.offset_db,
                     "SNR misestimation applied to mapper+demapper conditioning");
    eval->add_option("--symbols", eval_opt.symbols, "Symbols per grid point");
    eval->add_option("--seed", eval_opt.seed, "Sweep master seed");
    eval->add_option("--jobs", eval_opt.jobs, "Parallel grid points");
    eval->add_option("--baseline", eval_opt.baseline, "qam: require the QAM baseline checkpoint");

    ExportCli export_opt;
    CLI::App* exp = app.add_subcommand("export-constellation",
                                       "Write learned constellations over a parameter grid");
    exp->add_option("--checkpoint", export_opt.checkpoint_path, "Trained checkpoint")->required();
    exp->add_option("--out-dir", export_opt.out_dir, "Output directory");
    exp->add_option("--snr", export_opt.snr_db, "SNR list in dB")->required()->expected(-1);
    exp->add_option("--linewidth", export_opt.linewidth_hz, "Linewidth list in Hz")
        ->required()
        ->expected(-1);

    std::string fault;
    CLI::App* selftest = app.add_subcommand("selftest", "Run the oracle/gradient check suite");
    selftest->add_option("--inject-fault", fault,
                         "Test hook: 'soft-bps-grad' perturbs the soft-BPS backward pass");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) return cmd_train(train_opt, command_line);
        if (eval->parsed()) return cmd_eval(eval_opt, command_line);
        if (exp->parsed()) return cmd_export_constellation(export_opt, command_line);
        if (selftest->parsed()) {
            if (fault == "soft-bps-grad")
                ad::softmin_grad_fault() = 1e-3;
            else if (!fault.empty())
                throw ValidationError("selftest: unknown fault '" + fault + "'");
            const int failed = selfcheck::run_selftest();
            ad::softmin_grad_fault() = 0.0;
            return failed == 0 ? 0 : 1;
        }
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

} // namespace bpshape::cli

#endif
