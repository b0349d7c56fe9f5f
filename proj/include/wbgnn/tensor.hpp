#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace wbgnn {

// Dense row-major double tensor, rank <= 5. The GNN state uses the full rank
// as (batch, rb, user-antenna, bs-antenna, channel); lower-rank tensors are
// common for scores and features.
struct Shape {
  static constexpr int kMaxRank = 5;

  int rank = 0;
  std::array<int64_t, kMaxRank> d{};

  Shape() = default;
  Shape(std::initializer_list<int64_t> dims);

  int64_t numel() const;
  int64_t operator[](int i) const { return d[static_cast<size_t>(i)]; }
  int64_t& operator[](int i) { return d[static_cast<size_t>(i)]; }
  bool operator==(const Shape& o) const;
  bool operator!=(const Shape& o) const { return !(*this == o); }

  // product of dims strictly before / strictly after axis
  int64_t outer(int axis) const;
  int64_t inner(int axis) const;

  Shape with_axis(int axis, int64_t n) const;
  std::string str() const;
};

struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(const Shape& s) : shape(s), v(static_cast<size_t>(s.numel()), 0.0) {}

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor full(const Shape& s, double c);
  static Tensor scalar(double c);
  static Tensor from(const Shape& s, std::initializer_list<double> vals);

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  double& at(std::initializer_list<int64_t> idx);
  double at(std::initializer_list<int64_t> idx) const;

  bool all_finite() const;
  double max_abs() const;
};

// max |a-b| over all elements; shapes must match
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace wbgnn
