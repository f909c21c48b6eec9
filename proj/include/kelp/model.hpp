#pragma once

#include "kelp/core.hpp"
#include "kelp/kernel.hpp"
#include "kelp/matrix_io.hpp"

#include <optional>

namespace kelp {

// Theta = rho 11' + alpha 1' + U V'.
template <typename Scalar>
struct ModelParams {
  Scalar rho = 0;
  Vec<Scalar> alpha;
  Mat<Scalar> u;  // n x r
  Mat<Scalar> v;  // p x r
  std::optional<Mat<Scalar>> gamma;  // q x r, present iff fitted with a kernel
  std::optional<KernelSpec> kernel;

  Index n() const { return u.rows(); }
  Index p() const { return v.rows(); }
  Index rank() const { return u.cols(); }

  void check_shapes() const {
    require(alpha.size() == u.rows(), "model: alpha length does not match U rows");
    require(u.cols() == v.cols(), "model: U and V ranks differ");
  }
};

using ModelParamsd = ModelParams<double>;

// Dense observations: y in {0,1}, weight 1 for entries in the loss and 0 for
// held-out entries.
template <typename Scalar>
struct Observations {
  Mat<Scalar> y;
  Mat<Scalar> weight;

  Index rows() const { return y.rows(); }
  Index cols() const { return y.cols(); }
};

template <typename Scalar = double>
Observations<Scalar> make_observations(const BinaryMatrix& y,
                                       const EntryMask* mask = nullptr) {
  Observations<Scalar> obs{y.dense<Scalar>(), Mat<Scalar>::Ones(y.rows(), y.cols())};
  if (mask) {
    require(mask->rows() == y.rows() && mask->cols() == y.cols(),
            "mask dimensions do not match the matrix");
    obs.weight = mask->observed_weights<Scalar>();
  }
  return obs;
}

template <typename Scalar>
Mat<Scalar> logits(const ModelParams<Scalar>& m) {
  m.check_shapes();
  Mat<Scalar> theta = m.u * m.v.transpose();
  theta.colwise() += m.alpha;
  theta.array() += m.rho;
  return theta;
}

// sum over weighted entries of softplus(theta) - y theta
template <typename Scalar>
Scalar nll_from_logits(const Mat<Scalar>& theta, const Observations<Scalar>& obs) {
  require(theta.rows() == obs.rows() && theta.cols() == obs.cols(),
          "nll: logits and data dimensions differ");
  const Index total = theta.size();
  const Scalar* t = theta.data();
  const Scalar* y = obs.y.data();
  const Scalar* w = obs.weight.data();
  Scalar acc = 0;
  for (Index k = 0; k < total; ++k)
    if (w[k] != Scalar(0)) acc += w[k] * (softplus(t[k]) - y[k] * t[k]);
  return acc;
}

template <typename Scalar>
Scalar nll(const ModelParams<Scalar>& m, const Observations<Scalar>& obs) {
  return nll_from_logits(logits(m), obs);
}

inline double nll(const ModelParamsd& m, const BinaryMatrix& y,
                  const EntryMask* mask = nullptr) {
  return nll(m, make_observations(y, mask));
}

// Loss over the held-out entries only.
inline double holdout_nll(const ModelParamsd& m, const BinaryMatrix& y, const EntryMask& mask) {
  const MatrixXd theta = logits(m);
  require(theta.rows() == y.rows() && theta.cols() == y.cols(),
          "holdout: model and data dimensions differ");
  double acc = 0.0;
  for (const auto& [i, j] : mask.held_out()) {
    const double t = theta(i, j);
    acc += softplus(t) - (y(i, j) ? t : 0.0);
  }
  return acc;
}

// |U'U - V'V|_F^2
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar balance_penalty(const Eigen::MatrixBase<DerivedU>& u,
                                          const Eigen::MatrixBase<DerivedV>& v) {
  require(u.cols() == v.cols(), "balance penalty: rank mismatch");
  return (u.transpose() * u - v.transpose() * v).squaredNorm();
}

template <typename Scalar>
Scalar regularized_objective(const ModelParams<Scalar>& m, const Observations<Scalar>& obs) {
  return nll(m, obs) + balance_penalty(m.u, m.v) / Scalar(4);
}

inline double regularized_objective(const ModelParamsd& m, const BinaryMatrix& y,
                                    const EntryMask* mask = nullptr) {
  return regularized_objective(m, make_observations(y, mask));
}

template <typename Scalar>
struct Gradients {
  Scalar rho = 0;
  Vec<Scalar> alpha;
  Mat<Scalar> u;
  Mat<Scalar> v;
};

// One pass over the entries: returns the weighted loss and fills the
// weighted residual w * (sigmoid(theta) - y).
template <typename Scalar>
Scalar loss_and_residual(const Mat<Scalar>& theta, const Observations<Scalar>& obs,
                         Mat<Scalar>& resid) {
  using std::exp;
  using std::log1p;
  require(theta.rows() == obs.rows() && theta.cols() == obs.cols(),
          "logits and data dimensions differ");
  resid.resize(theta.rows(), theta.cols());
  const Index total = theta.size();
  const Scalar* t = theta.data();
  const Scalar* y = obs.y.data();
  const Scalar* w = obs.weight.data();
  Scalar* out = resid.data();
  Scalar acc = 0;
  for (Index k = 0; k < total; ++k) {
    if (w[k] == Scalar(0)) {
      out[k] = Scalar(0);
      continue;
    }
    const Scalar x = t[k];
    const Scalar ax = x < Scalar(0) ? -x : x;
    const Scalar e = exp(-ax);
    const Scalar sp = (x > Scalar(0) ? x : Scalar(0)) + (ax > Scalar(30) ? e : log1p(e));
    const Scalar sig = x >= Scalar(0) ? Scalar(1) / (Scalar(1) + e) : e / (Scalar(1) + e);
    acc += w[k] * (sp - y[k] * x);
    out[k] = w[k] * (sig - y[k]);
  }
  return acc;
}

// Gradients of nll + g/4 from the weighted residual.
template <typename Scalar>
Gradients<Scalar> gradients_from_residual(const ModelParams<Scalar>& m,
                                          const Mat<Scalar>& resid) {
  const Mat<Scalar> imbalance = m.u.transpose() * m.u - m.v.transpose() * m.v;
  Gradients<Scalar> g;
  g.rho = resid.sum();
  g.alpha = resid.rowwise().sum();
  g.u = resid * m.v + m.u * imbalance;
  g.v = resid.transpose() * m.u - m.v * imbalance;
  return g;
}

template <typename Scalar>
Gradients<Scalar> gradients_from_logits(const ModelParams<Scalar>& m, const Mat<Scalar>& theta,
                                        const Observations<Scalar>& obs) {
  Mat<Scalar> resid;
  loss_and_residual(theta, obs, resid);
  return gradients_from_residual(m, resid);
}

template <typename Scalar>
Gradients<Scalar> gradients(const ModelParams<Scalar>& m, const Observations<Scalar>& obs) {
  return gradients_from_logits(m, logits(m), obs);
}

inline Gradients<double> gradients(const ModelParamsd& m, const BinaryMatrix& y,
                                   const EntryMask* mask = nullptr) {
  return gradients(m, make_observations(y, mask));
}

// Least-squares coefficients of V on Psi: D^{-1/2} Phi' V.
template <typename Scalar, typename Derived>
Mat<Scalar> kpca_coefficients(const KpcaBasis<Scalar>& basis,
                              const Eigen::MatrixBase<Derived>& v) {
  require(v.rows() == basis.p(), "coefficients: V rows do not match basis");
  return basis.mu.cwiseSqrt().cwiseInverse().asDiagonal() * (basis.phi.transpose() * v);
}

// v_new = Gamma' psi_new
template <typename Scalar, typename Derived>
Vec<Scalar> extend_embedding(const ModelParams<Scalar>& m, const KpcaBasis<Scalar>& basis,
                             const Eigen::MatrixBase<Derived>& psi_new) {
  require(m.gamma.has_value() && m.kernel.has_value() && !m.kernel->is_baseline(),
          "extend: model was fitted without a kernel");
  require(psi_new.size() == basis.q, "extend: feature length " + std::to_string(psi_new.size()) +
                                         " does not match basis dimension " +
                                         std::to_string(basis.q));
  const Mat<Scalar> coef = kpca_coefficients(basis, m.v);
  return coef.transpose() * psi_new.derived().reshaped();
}

}  // namespace kelp
