// Row-major fixed-width time series storage.
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace dwm {

/// A time-indexed sequence of equally sized rows (one row per step).
///
/// Rows before t = 0 read as zero through at_or_zero(), which is how every
/// recursion in the library pads its history.
class Series {
public:
    Series() = default;
    explicit Series(std::size_t width) : width_(width) {}

    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return width_ == 0 ? rows_ : data_.size() / width_; }
    bool empty() const noexcept { return size() == 0; }

    void reserve(std::size_t rows) { data_.reserve(rows * width_); }

    void push_back(std::span<const double> row) {
        if (row.size() != width_) {
            throw std::invalid_argument("Series::push_back: row width mismatch");
        }
        data_.insert(data_.end(), row.begin(), row.end());
        ++rows_;
    }
    void push_back(const Eigen::VectorXd& row) {
        push_back(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
    void push_back(double value) { push_back(std::span<const double>(&value, 1)); }

    std::span<const double> row(std::size_t t) const {
        return {data_.data() + t * width_, width_};
    }
    std::span<double> row(std::size_t t) { return {data_.data() + t * width_, width_}; }

    double operator()(std::size_t t, std::size_t j = 0) const { return data_[t * width_ + j]; }
    double& operator()(std::size_t t, std::size_t j = 0) { return data_[t * width_ + j]; }

    /// Value at (possibly negative) time t; zero before the start or past the end.
    double at_or_zero(std::ptrdiff_t t, std::size_t j = 0) const {
        if (t < 0 || static_cast<std::size_t>(t) >= size()) {
            return 0.0;
        }
        return (*this)(static_cast<std::size_t>(t), j);
    }

    Eigen::VectorXd vec(std::size_t t) const {
        return Eigen::Map<const Eigen::VectorXd>(data_.data() + t * width_,
                                                 static_cast<Eigen::Index>(width_));
    }
    Eigen::VectorXd vec_or_zero(std::ptrdiff_t t) const {
        if (t < 0 || static_cast<std::size_t>(t) >= size()) {
            return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width_));
        }
        return vec(static_cast<std::size_t>(t));
    }

    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const Series&, const Series&) = default;

private:
    std::size_t width_ = 0;
    std::size_t rows_ = 0;
    std::vector<double> data_;
};

} // namespace dwm
