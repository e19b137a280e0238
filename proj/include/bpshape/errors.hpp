#ifndef BPSHAPE_ERRORS_HPP
#define BPSHAPE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bpshape {

/// Invalid user-supplied configuration or file contents.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed text input; carries a 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, long line = -1)
        : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

/// Non-finite values or other numerical breakdown during computation.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Mismatched array/matrix dimensions.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Degenerate inputs (all-zero constellation, empty mask, ...).
class DegenerateError : public std::runtime_error {
public:
    explicit DegenerateError(const std::string& what) : std::runtime_error(what) {}
};

/// File/stream I/O failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace bpshape

#endif
