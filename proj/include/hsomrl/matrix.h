#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hsomrl
{
    /// Dense row-major matrix of doubles.
    class Matrix
    {
    public:
        Matrix() = default;
        Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
        Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

        static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
        static Matrix row_vector(std::span<const double> values);
        static Matrix identity(std::size_t n);

        std::size_t rows() const noexcept { return rows_; }
        std::size_t cols() const noexcept { return cols_; }
        std::size_t size() const noexcept { return data_.size(); }
        bool empty() const noexcept { return data_.empty(); }

        double &operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
        double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

        std::span<double> data() noexcept { return data_; }
        std::span<const double> data() const noexcept { return data_; }
        std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
        std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

        /// Single entry of a 1x1 matrix.
        double scalar() const;

        bool same_shape(const Matrix &other) const noexcept
        {
            return rows_ == other.rows_ && cols_ == other.cols_;
        }
        bool all_finite() const noexcept;

        friend bool operator==(const Matrix &, const Matrix &) = default;

    private:
        std::size_t rows_ = 0;
        std::size_t cols_ = 0;
        std::vector<double> data_;
    };

    std::string shape_string(const Matrix &m);
}
