#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbl {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense row-major array of doubles. Shapes are explicit; no implicit
// broadcasting anywhere.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(numel_of(shape), fill) {}
  Array(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw std::invalid_argument("Array: data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Array zeros(std::vector<std::size_t> s) { return Array(std::move(s)); }
  static Array full(std::vector<std::size_t> s, double v) {
    return Array(std::move(s), v);
  }
  static Array scalar(double v) {
    Array a;
    a.data = {v};
    return a;
  }
  static Array vec(std::vector<double> d) {
    Array a;
    a.shape = {d.size()};
    a.data = std::move(d);
    return a;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  bool is_scalar() const { return shape.empty() && data.size() == 1; }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at2(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  bool has_nan() const {
    for (double v : data)
      if (std::isnan(v)) return true;
    return false;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace nbl
