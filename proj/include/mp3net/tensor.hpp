#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace mp3net {

// batch x blocks x bands x channels
struct Shape4 {
    std::size_t b = 1;
    std::size_t m = 1;
    std::size_t n = 1;
    std::size_t c = 1;

    std::size_t size() const noexcept { return b * m * n * c; }
    std::size_t operator[](int axis) const { return std::array<std::size_t, 4>{b, m, n, c}.at(static_cast<std::size_t>(axis)); }
    std::size_t& operator[](int axis);
    bool operator==(const Shape4&) const = default;
    std::string to_string() const;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape4 shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
    Tensor(Shape4 shape, std::vector<double> data);

    const Shape4& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t b, std::size_t m, std::size_t n, std::size_t c) { return data_[offset(b, m, n, c)]; }
    double at(std::size_t b, std::size_t m, std::size_t n, std::size_t c) const { return data_[offset(b, m, n, c)]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const;
    bool operator==(const Tensor&) const = default;

    std::size_t offset(std::size_t b, std::size_t m, std::size_t n, std::size_t c) const {
        return ((b * shape_.m + m) * shape_.n + n) * shape_.c + c;
    }

private:
    Shape4 shape_;
    std::vector<double> data_;
};

}  // namespace mp3net
