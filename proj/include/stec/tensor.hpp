#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stec::grad {

using Real = double;
using Arr = Eigen::ArrayXd;
using Vec = Eigen::VectorXd;
using MatRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatRM>;
using ConstMatMap = Eigen::Map<const MatRM>;
using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_numel(const Shape& s) {
  Eigen::Index n = 1;
  for (Eigen::Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Dense 64-bit array with row-major flat storage.
struct Tensor {
  Shape shape;
  Arr data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, Arr d, bool req = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(req) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                  " does not match buffer of " +
                                  std::to_string(data.size()));
  }

  static Tensor zeros(Shape s, bool req = false) {
    Arr d = Arr::Zero(shape_numel(s));
    return Tensor(std::move(s), std::move(d), req);
  }
  static Tensor full(Shape s, Real v, bool req = false) {
    Arr d = Arr::Constant(shape_numel(s), v);
    return Tensor(std::move(s), std::move(d), req);
  }
  static Tensor scalar(Real v, bool req = false) {
    return full({1}, v, req);
  }
  static Tensor from_matrix(const MatRM& m, bool req = false) {
    Tensor t;
    t.shape = {m.rows(), m.cols()};
    t.data = Eigen::Map<const Arr>(m.data(), m.size());
    t.requires_grad = req;
    return t;
  }
  static Tensor vector(const Arr& v, bool req = false) {
    return Tensor({v.size()}, v, req);
  }

  Eigen::Index numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  Eigen::Index dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  bool is_scalar() const { return numel() == 1; }
  Real scalar_value() const { return data[0]; }

  // rank-2 views over the flat storage
  MatMap mat() {
    check_rank2();
    return MatMap(data.data(), shape[0], shape[1]);
  }
  ConstMatMap mat() const {
    check_rank2();
    return ConstMatMap(data.data(), shape[0], shape[1]);
  }
  MatMap as_mat(Eigen::Index rows, Eigen::Index cols) {
    return MatMap(data.data(), rows, cols);
  }
  ConstMatMap as_mat(Eigen::Index rows, Eigen::Index cols) const {
    return ConstMatMap(data.data(), rows, cols);
  }

 private:
  void check_rank2() const {
    if (rank() != 2)
      throw std::logic_error("Tensor: rank-2 view of " + shape_str(shape));
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape;
}

}  // namespace stec::grad
