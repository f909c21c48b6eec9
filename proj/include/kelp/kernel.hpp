#pragma once

#include "kelp/core.hpp"
#include "kelp/matrix_io.hpp"

#include <optional>
#include <string>
#include <variant>

namespace kelp {

namespace kernels {
struct Linear {
  friend bool operator==(const Linear&, const Linear&) = default;
};
// exp(-gamma * |a - b|^2), gamma = 1 / (2 r^2).
struct Gaussian {
  double gamma;
  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};
// (a.b + offset)^degree
struct Polynomial {
  int degree;
  double offset;
  friend bool operator==(const Polynomial&, const Polynomial&) = default;
};
// No kernel: the column embeddings are unconstrained.
struct Baseline {
  friend bool operator==(const Baseline&, const Baseline&) = default;
};
}  // namespace kernels

class KernelSpec {
 public:
  using Variant =
      std::variant<kernels::Linear, kernels::Gaussian, kernels::Polynomial, kernels::Baseline>;

  KernelSpec() : v_(kernels::Linear{}) {}
  explicit KernelSpec(Variant v);

  static KernelSpec linear() { return KernelSpec(Variant{kernels::Linear{}}); }
  static KernelSpec gaussian(double gamma) { return KernelSpec(Variant{kernels::Gaussian{gamma}}); }
  static KernelSpec polynomial(int degree, double offset) {
    return KernelSpec(Variant{kernels::Polynomial{degree, offset}});
  }
  static KernelSpec baseline() { return KernelSpec(Variant{kernels::Baseline{}}); }

  // Grammar: linear | gaussian:<gamma> | poly:<degree>:<offset> | baseline
  static KernelSpec parse(const std::string& token);
  std::string to_string() const;

  bool is_baseline() const { return std::holds_alternative<kernels::Baseline>(v_); }
  const Variant& variant() const { return v_; }

  // Kernel value from the inner product <a, b> and the squared norms of a and b.
  template <typename Scalar>
  Scalar from_products(Scalar ab, Scalar aa, Scalar bb) const {
    using std::exp;
    using std::pow;
    return std::visit(
        [&](const auto& k) -> Scalar {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kernels::Linear>) {
            return ab;
          } else if constexpr (std::is_same_v<K, kernels::Gaussian>) {
            Scalar d2 = aa + bb - Scalar(2) * ab;
            if (d2 < Scalar(0)) d2 = Scalar(0);
            return exp(-Scalar(k.gamma) * d2);
          } else if constexpr (std::is_same_v<K, kernels::Polynomial>) {
            return pow(ab + Scalar(k.offset), k.degree);
          } else {
            throw Error("baseline has no kernel function");
          }
        },
        v_);
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;

 private:
  Variant v_;
};

// Gram matrix K_p = [k(e_j, e_j')]. Each unordered pair is evaluated once, so
// the result is exactly symmetric.
template <typename Derived>
Mat<typename Derived::Scalar> gram(const KernelSpec& spec, const Eigen::MatrixBase<Derived>& e) {
  using Scalar = typename Derived::Scalar;
  require(!spec.is_baseline(), "gram: baseline has no kernel");
  const Index p = e.rows();
  const Mat<Scalar> inner = e * e.transpose();
  Mat<Scalar> k(p, p);
  const bool stationary = std::holds_alternative<kernels::Gaussian>(spec.variant());
  for (Index j = 0; j < p; ++j) {
    // exact zero self-distance for the Gaussian kernel
    k(j, j) = stationary ? Scalar(1) : spec.from_products(inner(j, j), inner(j, j), inner(j, j));
    for (Index l = j + 1; l < p; ++l) {
      const Scalar v = spec.from_products(inner(l, j), inner(j, j), inner(l, l));
      k(l, j) = v;
      k(j, l) = v;
    }
  }
  return k;
}

inline MatrixXd gram(const KernelSpec& spec, const EmbeddingTable& e) {
  return gram(spec, e.matrix());
}

// Kernel values between every training row of e and a new point x, computed
// along the same arithmetic path as gram().
template <typename Derived, typename DerivedX>
Vec<typename Derived::Scalar> kernel_vector(const KernelSpec& spec,
                                            const Eigen::MatrixBase<Derived>& e,
                                            const Eigen::MatrixBase<DerivedX>& x) {
  using Scalar = typename Derived::Scalar;
  require(!spec.is_baseline(), "kernel_vector: baseline has no kernel");
  require(x.size() == e.cols(), "kernel_vector: dimension mismatch (got " +
                                    std::to_string(x.size()) + ", expected " +
                                    std::to_string(e.cols()) + ")");
  const Vec<Scalar> xv = x.derived().template cast<Scalar>().reshaped();
  const Vec<Scalar> cross = e * xv;
  const Scalar xx = xv.squaredNorm();
  Vec<Scalar> out(e.rows());
  for (Index j = 0; j < e.rows(); ++j) {
    const Scalar ee = e.row(j).squaredNorm();
    out(j) = spec.from_products(cross(j), ee, xx);
  }
  return out;
}

// J K J with J = I - 11'/p.
template <typename Derived>
Mat<typename Derived::Scalar> double_center(const Eigen::MatrixBase<Derived>& k) {
  using Scalar = typename Derived::Scalar;
  require(k.rows() == k.cols(), "double_center: matrix must be square");
  const Vec<Scalar> row_mean = k.rowwise().mean();
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> col_mean = k.colwise().mean();
  const Scalar grand = row_mean.mean();
  Mat<Scalar> c = k;
  c.colwise() -= row_mean;
  c.rowwise() -= col_mean;
  c.array() += grand;
  // the input is symmetric; remove rounding asymmetry
  Mat<Scalar> sym = Scalar(0.5) * (c + c.transpose());
  return sym;
}

// Either a fixed dimension q or an energy threshold delta: the smallest q
// whose leading eigenvalues carry at least 1 - delta of the spectrum.
struct RankSelector {
  std::optional<Index> fixed_q;
  double delta = 0.05;

  static RankSelector fixed(Index q) { return {q, 0.05}; }
  static RankSelector energy(double delta) { return {std::nullopt, delta}; }
};

template <typename Scalar>
struct KpcaBasis {
  Index q = 0;
  Mat<Scalar> phi;   // p x q, orthonormal columns, orthogonal to 1_p
  Vec<Scalar> mu;    // q positive, nonincreasing eigenvalues
  Mat<Scalar> psi;   // phi * diag(sqrt(mu))
  Vec<Scalar> kbar;  // column means of the raw Gram matrix
  double energy = 0.0;
  KernelSpec kernel;
  bool capped = false;  // a fixed q was reduced to the positive-eigenvalue count

  Index p() const { return phi.rows(); }

  // P = phi phi'
  template <typename Derived>
  Mat<Scalar> project(const Eigen::MatrixBase<Derived>& v) const {
    return phi * (phi.transpose() * v);
  }
};

using KpcaBasisd = KpcaBasis<double>;

struct RankChoice {
  Index q;
  Index positive;  // eigenvalues surviving the clamp
  double energy;
  bool capped;
};

// Selects q from eigenvalues sorted in nonincreasing order. Values at or
// below 1e-10 * max(mu_1, 1) are treated as zero.
template <typename Derived>
RankChoice select_rank(const Eigen::MatrixBase<Derived>& sorted_mu, const RankSelector& sel) {
  using Scalar = typename Derived::Scalar;
  const Index m = sorted_mu.size();
  require(m >= 1, "kpca: empty spectrum");
  const Scalar floor = Scalar(1e-10) * std::max<Scalar>(sorted_mu(0), Scalar(1));
  Index positive = 0;
  while (positive < m && sorted_mu(positive) > floor) ++positive;
  require(positive > 0, "kpca: degenerate kernel (no positive eigenvalues)");
  const Scalar total = sorted_mu.head(positive).sum();

  RankChoice choice{0, positive, 0.0, false};
  if (sel.fixed_q) {
    require(*sel.fixed_q >= 1, "kpca: fixed q must be at least 1");
    choice.q = std::min(*sel.fixed_q, positive);
    choice.capped = *sel.fixed_q > positive;
  } else {
    require(sel.delta > 0.0 && sel.delta < 1.0, "kpca: energy delta must lie in (0, 1)");
    const Scalar target = Scalar(1.0 - sel.delta) * total * Scalar(1.0 - 1e-12);
    Scalar cum = 0;
    Index q = 0;
    while (q < positive) {
      cum += sorted_mu(q);
      ++q;
      if (cum >= target) break;
    }
    choice.q = q;
  }
  choice.energy = static_cast<double>(sorted_mu.head(choice.q).sum() / total);
  return choice;
}

// Eigendecomposition of a doubly centered Gram matrix. kbar and kernel are
// left for the caller (see build_basis).
template <typename Derived>
KpcaBasis<typename Derived::Scalar> kpca(const Eigen::MatrixBase<Derived>& kc,
                                         const RankSelector& sel) {
  using Scalar = typename Derived::Scalar;
  require(kc.rows() == kc.cols(), "kpca: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(kc.derived());
  require(es.info() == Eigen::Success, "kpca: eigendecomposition failed");
  const Index p = kc.rows();
  const Vec<Scalar> mu_sorted = es.eigenvalues().reverse();
  const RankChoice choice = select_rank(mu_sorted, sel);

  KpcaBasis<Scalar> b;
  b.q = choice.q;
  b.mu = mu_sorted.head(b.q);
  b.phi = es.eigenvectors().rightCols(b.q).rowwise().reverse();
  // fix the sign so the largest-magnitude entry of each column is positive
  for (Index l = 0; l < b.q; ++l) {
    Index arg = 0;
    b.phi.col(l).cwiseAbs().maxCoeff(&arg);
    if (b.phi(arg, l) < Scalar(0)) b.phi.col(l) *= Scalar(-1);
  }
  b.psi = b.phi * b.mu.cwiseSqrt().asDiagonal();
  b.kbar = Vec<Scalar>::Zero(p);
  b.energy = choice.energy;
  b.capped = choice.capped;
  return b;
}

// gram -> double_center -> kpca, recording kbar and the kernel.
template <typename Derived>
KpcaBasis<typename Derived::Scalar> build_basis(const KernelSpec& spec,
                                                const Eigen::MatrixBase<Derived>& e,
                                                const RankSelector& sel) {
  const auto k = gram(spec, e);
  auto b = kpca(double_center(k), sel);
  b.kbar = k.colwise().mean().transpose();
  b.kernel = spec;
  return b;
}

inline KpcaBasisd build_basis(const KernelSpec& spec, const EmbeddingTable& e,
                              const RankSelector& sel) {
  return build_basis(spec, e.matrix(), sel);
}

// psi_new = D^{-1/2} Phi' (k_new - kbar) with k_new the raw kernel values
// against the training embeddings. A training point maps to its row of Psi.
template <typename Scalar, typename Derived, typename DerivedX>
Vec<Scalar> nystrom_features(const KpcaBasis<Scalar>& basis, const KernelSpec& spec,
                             const Eigen::MatrixBase<Derived>& e_train,
                             const Eigen::MatrixBase<DerivedX>& e_new) {
  require(spec == basis.kernel, "nystrom: kernel " + spec.to_string() +
                                    " does not match basis kernel " +
                                    basis.kernel.to_string());
  require(e_train.rows() == basis.p(), "nystrom: training embeddings do not match basis");
  const Vec<Scalar> k_new = kernel_vector(spec, e_train, e_new);
  return basis.mu.cwiseSqrt().cwiseInverse().asDiagonal() *
         (basis.phi.transpose() * (k_new - basis.kbar));
}

}  // namespace kelp
