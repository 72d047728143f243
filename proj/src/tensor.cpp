#include "mp3net/tensor.hpp"

#include "mp3net/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mp3net {

std::size_t& Shape4::operator[](int axis) {
    switch (axis) {
        case 0: return b;
        case 1: return m;
        case 2: return n;
        case 3: return c;
        default: throw ShapeError("axis out of range");
    }
}

std::string Shape4::to_string() const {
    return std::to_string(b) + "x" + std::to_string(m) + "x" + std::to_string(n) + "x" + std::to_string(c);
}

Tensor::Tensor(Shape4 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data does not match shape " + shape_.to_string());
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mp3net
