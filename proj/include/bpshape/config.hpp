// Flat key=value config files (TOML subset: numbers, quoted strings, arrays
// of numbers, # comments) with schema-checked conversion to the training and
// sweep configurations.
#ifndef BPSHAPE_CONFIG_HPP
#define BPSHAPE_CONFIG_HPP

#include <cctype>
#include <cstdlib>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bpshape/errors.hpp"
#include "bpshape/evalsuite.hpp"
#include "bpshape/trainer.hpp"

namespace bpshape::config {

struct Value {
    enum class Kind { number, string, list };
    Kind kind = Kind::number;
    double num = 0.0;
    std::string str;
    std::vector<double> list;
    long line = 0;
};

using ConfigMap = std::map<std::string, Value>;

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double parse_number(const std::string& s, long line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError("config: '" + s + "' is not a number", line);
    return v;
}

} // namespace detail

inline ConfigMap parse_config(std::istream& is) {
    ConfigMap map;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config: expected 'key = value'", lineno);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string raw = detail::trim(line.substr(eq + 1));
        if (key.empty() || raw.empty())
            throw ParseError("config: empty key or value", lineno);
        if (map.count(key)) throw ParseError("config: duplicate key '" + key + "'", lineno);

        Value v;
        v.line = lineno;
        if (raw.front() == '"') {
            if (raw.size() < 2 || raw.back() != '"')
                throw ParseError("config: unterminated string", lineno);
            v.kind = Value::Kind::string;
            v.str = raw.substr(1, raw.size() - 2);
        } else if (raw.front() == '[') {
            if (raw.back() != ']') throw ParseError("config: unterminated array", lineno);
            v.kind = Value::Kind::list;
            std::string body = raw.substr(1, raw.size() - 2);
            std::size_t pos = 0;
            while (pos < body.size()) {
                std::size_t comma = body.find(',', pos);
                if (comma == std::string::npos) comma = body.size();
                const std::string item = detail::trim(body.substr(pos, comma - pos));
                if (!item.empty()) v.list.push_back(detail::parse_number(item, lineno));
                pos = comma + 1;
            }
            if (v.list.empty()) throw ParseError("config: empty array", lineno);
        } else {
            v.kind = Value::Kind::number;
            v.num = detail::parse_number(raw, lineno);
        }
        map.emplace(key, std::move(v));
    }
    return map;
}

namespace detail {

class Schema {
public:
    explicit Schema(const ConfigMap& map) : map_(map) {}

    bool has(const std::string& key) {
        used_.insert(key);
        return map_.count(key) != 0;
    }
    double number(const std::string& key, double fallback) {
        used_.insert(key);
        auto it = map_.find(key);
        if (it == map_.end()) return fallback;
        if (it->second.kind != Value::Kind::number)
            throw ValidationError("config: '" + key + "' must be a number (line " +
                                  std::to_string(it->second.line) + ")");
        return it->second.num;
    }
    int integer(const std::string& key, int fallback) {
        const double v = number(key, fallback);
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ValidationError("config: '" + key + "' must be an integer");
        return i;
    }
    std::string string(const std::string& key, const std::string& fallback) {
        used_.insert(key);
        auto it = map_.find(key);
        if (it == map_.end()) return fallback;
        if (it->second.kind != Value::Kind::string)
            throw ValidationError("config: '" + key + "' must be a quoted string (line " +
                                  std::to_string(it->second.line) + ")");
        return it->second.str;
    }
    std::vector<double> list(const std::string& key, std::vector<double> fallback) {
        used_.insert(key);
        auto it = map_.find(key);
        if (it == map_.end()) return fallback;
        if (it->second.kind != Value::Kind::list)
            throw ValidationError("config: '" + key + "' must be an array (line " +
                                  std::to_string(it->second.line) + ")");
        return it->second.list;
    }
    void finish() const {
        for (const auto& [key, value] : map_)
            if (!used_.count(key))
                throw ValidationError("config: unknown key '" + key + "' (line " +
                                      std::to_string(value.line) + ")");
    }

private:
    const ConfigMap& map_;
    std::set<std::string> used_;
};

} // namespace detail

/// Builds the training config. The test-angle span defaults to the full
/// circle for learned constellations and to one quarter-turn symmetry
/// period for the square-QAM baseline; explicit angle_min/angle_max win.
inline trainer::TrainConfig train_config_from(const ConfigMap& map) {
    detail::Schema s(map);
    trainer::TrainConfig c;
    c.m = s.integer("m", c.m);
    c.epochs = s.integer("epochs", c.epochs);
    c.batches_per_epoch = s.integer("batches_per_epoch", c.batches_per_epoch);
    c.batch_start = s.integer("batch_start", c.batch_start);
    c.batch_end = s.integer("batch_end", c.batch_end);
    c.snr_db_min = s.number("snr_db_min", c.snr_db_min);
    c.snr_db_max = s.number("snr_db_max", c.snr_db_max);
    c.linewidth_hz_min = s.number("linewidth_hz_min", c.linewidth_hz_min);
    c.linewidth_hz_max = s.number("linewidth_hz_max", c.linewidth_hz_max);
    c.symbol_rate_baud = s.number("symbol_rate_baud", c.symbol_rate_baud);
    c.bps.num_test_angles = s.integer("num_test_angles", c.bps.num_test_angles);
    c.bps.window_size = s.integer("window_size", c.bps.window_size);
    c.temp_start = s.number("temp_start", c.temp_start);
    c.temp_end = s.number("temp_end", c.temp_end);
    c.seed = static_cast<std::uint64_t>(s.number("seed", static_cast<double>(c.seed)));
    c.mode = trainer::mode_from_string(s.string("mode", "parameterized"));
    const std::string sampling = s.string("sigma_sampling", "sigma");
    if (sampling == "sigma")
        c.sampling = trainer::SigmaSampling::sigma_uniform;
    else if (sampling == "db")
        c.sampling = trainer::SigmaSampling::db_uniform;
    else
        throw ValidationError("config: sigma_sampling must be \"sigma\" or \"db\"");
    c.adam.lr = s.number("learning_rate", c.adam.lr);

    const bool has_min = s.has("angle_min"), has_max = s.has("angle_max");
    if (has_min != has_max)
        throw ValidationError("config: angle_min and angle_max must be given together");
    if (has_min) {
        c.bps.angle_min = s.number("angle_min", 0.0);
        c.bps.angle_max = s.number("angle_max", 0.0);
    } else if (c.mode == trainer::Mode::qam_demapper_only) {
        c.bps = c.bps.with_qam_span();
    }

    // eval keys live in the same file; mark them as known here
    s.list("eval_snr_db", {});
    s.list("eval_linewidth_hz", {});
    s.number("symbols_per_point", 0);
    s.finish();
    c.validate();
    return c;
}

/// The sweep grid read from the same config file.
inline evalsuite::SweepSpec sweep_spec_from(const ConfigMap& map) {
    detail::Schema s(map);
    evalsuite::SweepSpec spec;
    spec.snr_db = s.list("eval_snr_db", {14, 15, 16, 17, 18, 20, 25});
    std::vector<double> default_lw;
    for (int i = 0; i < 10; ++i) default_lw.push_back(50e3 + i * (550e3 / 9.0));
    spec.linewidth_hz = s.list("eval_linewidth_hz", default_lw);
    spec.symbols_per_point = s.integer("symbols_per_point", spec.symbols_per_point);
    spec.seed = static_cast<std::uint64_t>(s.number("seed", static_cast<double>(spec.seed)));
    return spec;
}

} // namespace bpshape::config

#endif
