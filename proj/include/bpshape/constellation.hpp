// Labeled complex constellations: reference Gray-mapped square QAM,
// unit-mean-power normalization, and the tab-separated text file format.
#ifndef BPSHAPE_CONSTELLATION_HPP
#define BPSHAPE_CONSTELLATION_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "bpshape/errors.hpp"

namespace bpshape::constellation {

using cplx = std::complex<double>;

/// 2^m complex points with a bijective m-bit labeling. label(i) packs the
/// bit pattern mapped to points[i] with bit 0 of the pattern (the first
/// transmitted bit) in the most significant position of the m-bit field.
struct Constellation {
    int bits_per_symbol = 0;                 // m
    std::vector<cplx> points;                // size 2^m
    std::vector<std::uint32_t> labels;       // size 2^m, a permutation of [0, 2^m)

    std::size_t order() const noexcept { return points.size(); }

    double mean_power() const noexcept {
        double s = 0.0;
        for (const cplx& p : points) s += std::norm(p);
        return points.empty() ? 0.0 : s / static_cast<double>(points.size());
    }

    /// Throws ValidationError unless sizes match 2^m and labels are a
    /// permutation of all m-bit patterns.
    void validate() const {
        if (bits_per_symbol < 1 || bits_per_symbol > 12)
            throw ValidationError("constellation: bits per symbol must be in [1, 12], got " +
                                  std::to_string(bits_per_symbol));
        const std::size_t n = std::size_t{1} << bits_per_symbol;
        if (points.size() != n || labels.size() != n)
            throw ValidationError("constellation: expected " + std::to_string(n) +
                                  " points/labels, got " + std::to_string(points.size()) + "/" +
                                  std::to_string(labels.size()));
        std::vector<bool> seen(n, false);
        for (std::uint32_t lab : labels) {
            if (lab >= n) throw ValidationError("constellation: label out of range");
            if (seen[lab]) throw ValidationError("constellation: duplicate label " + std::to_string(lab));
            seen[lab] = true;
        }
    }
};

/// Scales all points by one positive real so the mean of |p|^2 is 1.
/// Labels are untouched. Throws DegenerateError on an all-zero input.
inline Constellation normalize(Constellation c) {
    const double p = c.mean_power();
    if (!(p > 0.0))
        throw DegenerateError("normalize: constellation has zero mean power");
    const double scale = 1.0 / std::sqrt(p);
    for (cplx& z : c.points) z *= scale;
    return c;
}

namespace detail {

constexpr std::uint32_t gray_encode(std::uint32_t i) noexcept { return i ^ (i >> 1); }

constexpr std::uint32_t gray_decode(std::uint32_t g) noexcept {
    std::uint32_t i = g;
    for (std::uint32_t shift = 1; shift < 32; shift <<= 1) i ^= i >> shift;
    return i;
}

} // namespace detail

/// Gray-mapped square QAM with 2^m points, m even. The first m/2 label bits
/// select the in-phase level and the last m/2 the quadrature level, each
/// through a reflected Gray code; output is normalized to unit mean power.
inline Constellation make_square_qam(int m) {
    if (m < 2 || m > 10 || (m % 2) != 0)
        throw std::invalid_argument("make_square_qam: m must be even and in [2, 10], got " +
                                    std::to_string(m));
    const int half = m / 2;
    const std::uint32_t side = 1u << half;
    const std::uint32_t n = 1u << m;

    Constellation c;
    c.bits_per_symbol = m;
    c.points.resize(n);
    c.labels.resize(n);
    auto level = [side](std::uint32_t idx) {
        return static_cast<double>(2 * idx + 1) - static_cast<double>(side);
    };
    for (std::uint32_t lab = 0; lab < n; ++lab) {
        const std::uint32_t gi = lab >> half;          // first m/2 bits
        const std::uint32_t gq = lab & (side - 1);     // last m/2 bits
        const std::uint32_t ii = detail::gray_decode(gi);
        const std::uint32_t iq = detail::gray_decode(gq);
        c.points[lab] = cplx(level(ii), level(iq));
        c.labels[lab] = lab;
    }
    return normalize(std::move(c));
}

/// Bit i (0 = first/most significant of the m-bit field) of a label.
inline int label_bit(std::uint32_t label, int m, int i) noexcept {
    return static_cast<int>((label >> (m - 1 - i)) & 1u);
}

inline std::string label_bits_string(std::uint32_t label, int m) {
    std::string s(static_cast<std::size_t>(m), '0');
    for (int i = 0; i < m; ++i)
        if (label_bit(label, m, i)) s[static_cast<std::size_t>(i)] = '1';
    return s;
}

// --- file format -----------------------------------------------------------
//
//   # m=<m>
//   <label bits as 0/1 string> TAB <Re> TAB <Im>
//
// one line per point, Re/Im with 12 significant digits.

inline void write_constellation(const Constellation& c, std::ostream& os) {
    c.validate();
    os << "# m=" << c.bits_per_symbol << "\n";
    char buf[96];
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s\t%.12g\t%.12g\n",
                      label_bits_string(c.labels[i], c.bits_per_symbol).c_str(),
                      c.points[i].real(), c.points[i].imag());
        os << buf;
    }
    if (!os) throw IoError("write_constellation: stream write failed");
}

inline Constellation read_constellation(std::istream& is) {
    std::string line;
    long lineno = 0;
    if (!std::getline(is, line)) throw ParseError("read_constellation: empty input", 1);
    ++lineno;
    int m = 0;
    if (std::sscanf(line.c_str(), "# m=%d", &m) != 1)
        throw ParseError("read_constellation: expected header '# m=<m>'", lineno);
    if (m < 1 || m > 12)
        throw ParseError("read_constellation: m out of range", lineno);

    Constellation c;
    c.bits_per_symbol = m;
    const std::size_t n = std::size_t{1} << m;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t tab1 = line.find('\t');
        const std::size_t tab2 = tab1 == std::string::npos ? std::string::npos
                                                           : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos)
            throw ParseError("read_constellation: expected '<bits>\\t<Re>\\t<Im>'", lineno);
        const std::string bits = line.substr(0, tab1);
        if (bits.size() != static_cast<std::size_t>(m))
            throw ParseError("read_constellation: label has wrong bit count", lineno);
        std::uint32_t lab = 0;
        for (char ch : bits) {
            if (ch != '0' && ch != '1')
                throw ParseError("read_constellation: label must be 0/1 characters", lineno);
            lab = (lab << 1) | static_cast<std::uint32_t>(ch - '0');
        }
        char* end = nullptr;
        const std::string res = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string ims = line.substr(tab2 + 1);
        const double re = std::strtod(res.c_str(), &end);
        if (end == res.c_str()) throw ParseError("read_constellation: bad Re value", lineno);
        const double im = std::strtod(ims.c_str(), &end);
        if (end == ims.c_str()) throw ParseError("read_constellation: bad Im value", lineno);
        if (c.points.size() >= n)
            throw ParseError("read_constellation: more than 2^m points", lineno);
        c.points.emplace_back(re, im);
        c.labels.push_back(lab);
    }
    c.validate();
    return c;
}

} // namespace bpshape::constellation

#endif
