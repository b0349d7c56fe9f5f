#include "wbgnn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace wbgnn {

Shape::Shape(std::initializer_list<int64_t> dims) {
  if (dims.size() > kMaxRank) throw std::invalid_argument("shape rank > 5");
  rank = static_cast<int>(dims.size());
  int i = 0;
  for (int64_t x : dims) {
    if (x <= 0) throw std::invalid_argument("shape dim must be positive");
    d[static_cast<size_t>(i++)] = x;
  }
}

int64_t Shape::numel() const {
  int64_t n = 1;
  for (int i = 0; i < rank; ++i) n *= d[static_cast<size_t>(i)];
  return n;
}

bool Shape::operator==(const Shape& o) const {
  if (rank != o.rank) return false;
  for (int i = 0; i < rank; ++i)
    if (d[static_cast<size_t>(i)] != o.d[static_cast<size_t>(i)]) return false;
  return true;
}

int64_t Shape::outer(int axis) const {
  int64_t n = 1;
  for (int i = 0; i < axis; ++i) n *= d[static_cast<size_t>(i)];
  return n;
}

int64_t Shape::inner(int axis) const {
  int64_t n = 1;
  for (int i = axis + 1; i < rank; ++i) n *= d[static_cast<size_t>(i)];
  return n;
}

Shape Shape::with_axis(int axis, int64_t n) const {
  Shape s = *this;
  s.d[static_cast<size_t>(axis)] = n;
  return s;
}

std::string Shape::str() const {
  std::string s = "(";
  for (int i = 0; i < rank; ++i) {
    if (i) s += ",";
    s += std::to_string(d[static_cast<size_t>(i)]);
  }
  return s + ")";
}

Tensor Tensor::full(const Shape& s, double c) {
  Tensor t(s);
  for (auto& x : t.v) x = c;
  return t;
}

Tensor Tensor::scalar(double c) {
  Tensor t(Shape{1});
  t.v[0] = c;
  return t;
}

Tensor Tensor::from(const Shape& s, std::initializer_list<double> vals) {
  Tensor t(s);
  if (static_cast<int64_t>(vals.size()) != s.numel())
    throw std::invalid_argument("from: value count mismatch");
  size_t i = 0;
  for (double x : vals) t.v[i++] = x;
  return t;
}

double& Tensor::at(std::initializer_list<int64_t> idx) {
  if (static_cast<int>(idx.size()) != shape.rank)
    throw std::invalid_argument("at: rank mismatch");
  int64_t off = 0;
  int i = 0;
  for (int64_t ix : idx) {
    if (ix < 0 || ix >= shape[i]) throw std::out_of_range("at: index");
    off = off * shape[i++] + ix;
  }
  return v[static_cast<size_t>(off)];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  if (static_cast<int>(idx.size()) != shape.rank)
    throw std::invalid_argument("at: rank mismatch");
  int64_t off = 0;
  int i = 0;
  for (int64_t ix : idx) {
    if (ix < 0 || ix >= shape[i]) throw std::out_of_range("at: index");
    off = off * shape[i++] + ix;
  }
  return v[static_cast<size_t>(off)];
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace wbgnn
