#include "hsomrl/matrix.h"

#include <cmath>

#include "hsomrl/errors.h"

namespace hsomrl
{
    Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
        : rows_{rows}, cols_{cols}, data_(rows * cols, fill)
    {
    }

    Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_{rows}, cols_{cols}, data_{std::move(data)}
    {
        if (data_.size() != rows * cols) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " does not match "
                             + std::to_string(rows) + "x" + std::to_string(cols));
        }
    }

    Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows)
    {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto &row : rows) {
            if (row.size() != c) {
                throw ShapeError("Matrix::from_rows: ragged rows");
            }
            data.insert(data.end(), row.begin(), row.end());
        }
        return Matrix(r, c, std::move(data));
    }

    Matrix Matrix::row_vector(std::span<const double> values)
    {
        return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
    }

    Matrix Matrix::identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    double Matrix::scalar() const
    {
        if (rows_ != 1 || cols_ != 1) {
            throw ShapeError("Matrix::scalar: expected 1x1, got " + shape_string(*this));
        }
        return data_[0];
    }

    bool Matrix::all_finite() const noexcept
    {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    std::string shape_string(const Matrix &m)
    {
        return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
    }
}
