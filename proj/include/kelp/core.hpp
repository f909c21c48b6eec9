#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kelp {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

// All library failures surface as kelp::Error with a one-line message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Stable logistic helpers. Beyond |x| > 30 the exponential term is used
// directly so that exp never overflows.
template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
inline Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  if (x > Scalar(30)) return x + exp(-x);
  if (x < Scalar(-30)) return exp(x);
  return log1p(exp(x));
}

template <typename Scalar>
inline Scalar logit(Scalar p) {
  using std::log;
  return log(p / (Scalar(1) - p));
}

}  // namespace kelp
