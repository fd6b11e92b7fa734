#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dslam {

class Tape;

// Dense shape, up to 4 dimensions.
struct Shape {
  std::array<int, 4> d{1, 1, 1, 1};
  int ndim = 0;

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (dims.size() > 4) throw std::invalid_argument("Shape: more than 4 dims");
    ndim = int(dims.size());
    int i = 0;
    for (int v : dims) d[i++] = v;
  }

  int numel() const {
    int n = 1;
    for (int i = 0; i < ndim; ++i) n *= d[i];
    return n;
  }

  int operator[](int i) const { return d[i]; }

  bool operator==(const Shape& o) const {
    if (ndim != o.ndim) return false;
    for (int i = 0; i < ndim; ++i)
      if (d[i] != o.d[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < ndim; ++i) {
      if (i) s += ",";
      s += std::to_string(d[i]);
    }
    return s + "]";
  }
};

// Dense 64-bit real array. Copies share storage; recorded values are treated
// as immutable. A tensor produced by a recorded op carries its tape node id.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape s, double fill = 0.0)
      : shape_(s), data_(std::make_shared<std::vector<double>>(size_t(s.numel()), fill)) {}

  Tensor(Shape s, std::vector<double> values) : shape_(s) {
    if (int(values.size()) != s.numel())
      throw std::invalid_argument("Tensor: data length " + std::to_string(values.size()) +
                                  " does not match shape " + s.str());
    data_ = std::make_shared<std::vector<double>>(std::move(values));
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  static Tensor vector(std::vector<double> v) {
    int n = int(v.size());
    return Tensor(Shape{n}, std::move(v));
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int ndim() const { return shape_.ndim; }
  int dim(int i) const { return shape_[i]; }
  int numel() const { return shape_.numel(); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& vec() { return *data_; }
  const std::vector<double>& vec() const { return *data_; }

  double value() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::value on non-scalar " + shape_.str());
    return (*data_)[0];
  }

  double& at(int i) { return (*data_)[size_t(i)]; }
  double at(int i) const { return (*data_)[size_t(i)]; }
  double& at(int i, int j) { return (*data_)[size_t(i) * shape_[1] + j]; }
  double at(int i, int j) const { return (*data_)[size_t(i) * shape_[1] + j]; }
  double& at(int i, int j, int k) {
    return (*data_)[(size_t(i) * shape_[1] + j) * shape_[2] + k];
  }
  double at(int i, int j, int k) const {
    return (*data_)[(size_t(i) * shape_[1] + j) * shape_[2] + k];
  }

  bool all_finite() const {
    for (double v : *data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Deep copy with detached storage.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
  }

  Tensor reshaped(Shape s) const {
    if (s.numel() != numel())
      throw std::invalid_argument("reshape: numel mismatch " + shape_.str() + " -> " + s.str());
    Tensor t = *this;
    t.shape_ = s;
    return t;
  }

  // Tape linkage (set by recorded ops).
  Tape* tape = nullptr;
  int node = -1;
  bool recorded() const { return tape != nullptr && node >= 0; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace dslam
