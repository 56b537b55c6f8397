#include "isoprune/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace isoprune {

std::string shape_to_string(const Shape& shape) {
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += "x";
        out += std::to_string(shape[i]);
    }
    return out.empty() ? "scalar" : out;
}

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    for (std::size_t d : shape_) {
        if (d == 0) {
            throw std::invalid_argument("Tensor: zero dimension in shape " +
                                        shape_to_string(shape_));
        }
    }
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    for (std::size_t d : shape_) {
        if (d == 0) {
            throw std::invalid_argument("Tensor: zero dimension in shape " +
                                        shape_to_string(shape_));
        }
    }
    if (data_.size() != shape_product(shape_)) {
        throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    if (r == 0) throw std::invalid_argument("Tensor::from_rows: no rows");
    const std::size_t c = rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw std::invalid_argument("Tensor::from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::invalid_argument("Tensor::dim: axis " + std::to_string(axis) +
                                    " out of range for shape " + shape_to_string(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::rows() const {
    if (rank() != 2) {
        throw std::invalid_argument("Tensor::rows: expected a matrix, got shape " +
                                    shape_to_string(shape_));
    }
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) {
        throw std::invalid_argument("Tensor::cols: expected a matrix, got shape " +
                                    shape_to_string(shape_));
    }
    return shape_[1];
}

void Tensor::fill(double v) { data_.assign(data_.size(), v); }

Tensor Tensor::transposed() const {
    if (rank() != 2) {
        throw std::invalid_argument("Tensor::transposed: expected a matrix, got shape " +
                                    shape_to_string(shape_));
    }
    Tensor out({shape_[1], shape_[0]});
    for (std::size_t i = 0; i < shape_[0]; ++i) {
        for (std::size_t j = 0; j < shape_[1]; ++j) {
            out(j, i) = (*this)(i, j);
        }
    }
    return out;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_product(new_shape) != data_.size()) {
        throw std::invalid_argument("Tensor::reshaped: cannot view " + shape_to_string(shape_) +
                                    " as " + shape_to_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

void Tensor::ensure_finite(const std::string& context) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(context + ": non-finite value in tensor of shape " +
                                     shape_to_string(shape_));
        }
    }
}

}  // namespace isoprune
