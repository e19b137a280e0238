#ifndef BPSHAPE_MAT_HPP
#define BPSHAPE_MAT_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "bpshape/errors.hpp"

namespace bpshape {

/// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xN.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

    static Mat scalar(double x) {
        Mat m(1, 1);
        m.v_[0] = x;
        return m;
    }
    static Mat row(std::vector<double> data) {
        Mat m;
        m.rows_ = 1;
        m.cols_ = data.size();
        m.v_ = std::move(data);
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return v_.size(); }
    bool empty() const noexcept { return v_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return v_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return v_[r * cols_ + c]; }
    double& operator[](std::size_t i) noexcept { return v_[i]; }
    double operator[](std::size_t i) const noexcept { return v_[i]; }

    double* data() noexcept { return v_.data(); }
    const double* data() const noexcept { return v_.data(); }
    std::vector<double>& storage() noexcept { return v_; }
    const std::vector<double>& storage() const noexcept { return v_; }

    bool same_shape(const Mat& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    void require_shape(std::size_t r, std::size_t c, const char* what) const {
        if (rows_ != r || cols_ != c)
            throw ShapeError(std::string(what) + ": expected " + std::to_string(r) + "x" +
                             std::to_string(c) + ", got " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

} // namespace bpshape

#endif
