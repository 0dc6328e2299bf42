#include "iotad/matrix.hpp"

#include <algorithm>
#include <stdexcept>

namespace iotad {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    for (const auto& r : rows) {
        if (rows_ == 0) cols_ = r.size();
        if (r.size() != cols_) throw std::invalid_argument("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
        ++rows_;
    }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m;
    if (!rows.empty()) m.cols_ = rows.front().size();
    for (const auto& r : rows) m.append_row(r);
    return m;
}

void Matrix::reset_columns(std::size_t cols) {
    if (rows_ != 0) throw std::logic_error("reset_columns on a non-empty matrix");
    cols_ = cols;
}

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw std::invalid_argument("row width does not match matrix");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace iotad
