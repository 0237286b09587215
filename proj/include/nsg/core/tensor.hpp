#ifndef NSG_CORE_TENSOR_HPP
#define NSG_CORE_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsg {

// Thrown on malformed inputs that violate an operation's shape contract.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown on bad configuration (unknown keys, out-of-range values).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown on bad or insufficient data (labels, datasets, files).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown when a computation produced non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense n-d array, C-order (last index fastest), backed by a flat Eigen array.
/// Rank is dynamic; the model code uses rank-3 {C,H,W}, rank-2 {R,C}, rank-1 {N}
/// and rank-0-like scalars stored as {1}.
template <typename Scalar>
struct Tensor {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  std::vector<int> shape;
  Array data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape)) { data.setZero(); }
  Tensor(std::vector<int> s, Scalar fill) : shape(std::move(s)), data(count(shape)) {
    data.setConstant(fill);
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("tensor dimension must be positive");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, Scalar v) { return Tensor(std::move(s), v); }
  static Tensor scalar(Scalar v) { return Tensor({1}, v); }

  static Tensor from(std::vector<int> s, std::initializer_list<Scalar> vals) {
    Tensor t(std::move(s));
    if (static_cast<int64_t>(vals.size()) != t.numel())
      throw ShapeError("initializer size does not match shape");
    int64_t i = 0;
    for (Scalar v : vals) t.data[i++] = v;
    return t;
  }

  static Tensor from(std::initializer_list<Scalar> vals) {
    return from({static_cast<int>(vals.size())}, vals);
  }

  // rank-3 accessors
  Scalar& at(int c, int h, int w) { return data[(static_cast<int64_t>(c) * dim(1) + h) * dim(2) + w]; }
  Scalar at(int c, int h, int w) const {
    return data[(static_cast<int64_t>(c) * dim(1) + h) * dim(2) + w];
  }
  // rank-2 accessors
  Scalar& at(int r, int c) { return data[static_cast<int64_t>(r) * dim(1) + c]; }
  Scalar at(int r, int c) const { return data[static_cast<int64_t>(r) * dim(1) + c]; }

  Scalar item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor");
    return data[0];
  }

  bool all_finite() const { return data.isFinite().all(); }

  void check_view(int rows, int cols) const {
    if (rows <= 0 || cols <= 0 || static_cast<int64_t>(rows) * cols != numel())
      throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not cover tensor " + shape_str(shape));
  }

  Scalar max_abs() const { return numel() ? data.abs().maxCoeff() : Scalar(0); }

  /// Row-major matrix view of a rank-2 tensor (or {rows, numel/rows} of any tensor).
  auto mat(int rows, int cols) {
    check_view(rows, cols);
    return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data(), rows, cols);
  }
  auto mat(int rows, int cols) const {
    check_view(rows, cols);
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data(), rows, cols);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.shape = shape;
    t.data = data.template cast<Other>();
    return t;
  }
};

}  // namespace nsg

#endif
