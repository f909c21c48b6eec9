#pragma once

#include "kelp/core.hpp"
#include "kelp/kernel.hpp"
#include "kelp/model.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

namespace kelp {

// Feasible box: |alpha|_inf <= M, max_i |U_i|^2 <= M, |Gamma|_F^2 <= M,
// -M1 <= rho <= -M2.
struct BoxBounds {
  double m = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;

  void validate() const {
    require(m > 0.0, "box bounds: M must be positive");
    require(m1 > m2 && m2 > 0.0, "box bounds: require M1 > M2 > 0");
  }
};

struct FitConfig {
  Index rank = 8;
  KernelSpec kernel = KernelSpec::linear();
  RankSelector selector = RankSelector::energy(0.05);
  double eta = 0.5;
  Index max_iters = 2000;
  double tol = 1e-7;
  std::optional<BoxBounds> box;
  std::uint64_t seed = 0;
  double usvt_constant = 2.02;
  double clip = 1e-3;

  void validate() const {
    require(rank >= 1, "config: rank must be at least 1");
    require(eta > 0.0, "config: eta must be positive");
    require(max_iters >= 1, "config: iteration count must be at least 1");
    require(tol >= 0.0, "config: tolerance must be nonnegative");
    require(clip > 0.0 && clip < 0.5, "config: clip must lie in (0, 0.5)");
    require(usvt_constant > 0.0, "config: USVT constant must be positive");
    if (box) box->validate();
  }
};

struct StepSizes {
  double rho = 0.0;
  double alpha = 0.0;
  double u = 0.0;
  double v = 0.0;
};

template <typename Scalar>
struct FitResult {
  ModelParams<Scalar> params;
  std::vector<Scalar> objective_trace;  // initial value first
  Index iterations_run = 0;
  bool converged = false;
  StepSizes steps;
};

using FitResultd = FitResult<double>;

// Raised when the objective becomes non-finite; carries the trace so far.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, std::vector<double> trace)
      : Error(msg), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

// alpha - mean(alpha)
template <typename Derived>
Vec<typename Derived::Scalar> project_centering(const Eigen::MatrixBase<Derived>& alpha) {
  Vec<typename Derived::Scalar> out = alpha;
  if (out.size() > 0) out.array() -= out.mean();
  return out;
}

// Phi Phi' V
template <typename Scalar, typename Derived>
Mat<Scalar> project_subspace(const Eigen::MatrixBase<Derived>& v,
                             const KpcaBasis<Scalar>& basis) {
  require(v.rows() == basis.p(), "project_subspace: V has " + std::to_string(v.rows()) +
                                     " rows, basis has " + std::to_string(basis.p()));
  return basis.project(v);
}

namespace detail {

template <typename Scalar>
void clip_row_norms(Mat<Scalar>& x, Scalar max_sq) {
  using std::sqrt;
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar sq = x.row(i).squaredNorm();
    if (sq > max_sq) x.row(i) *= sqrt(max_sq / sq);
  }
}

// Euclidean projection onto {1'a = 0, |a|_inf <= bound}: a_i = clip(a_i - lam)
// with lam the root of the nonincreasing map lam -> sum clip(a_i - lam).
template <typename Scalar>
Vec<Scalar> project_centered_box(const Vec<Scalar>& a, Scalar bound) {
  if (a.size() == 0) return a;
  auto clipped = [&](Scalar lam) {
    return Vec<Scalar>((a.array() - lam).cwiseMax(-bound).cwiseMin(bound));
  };
  Scalar lo = a.minCoeff() - bound, hi = a.maxCoeff() + bound;
  for (int it = 0; it < 200 && lo < hi; ++it) {
    const Scalar mid = (lo + hi) / 2;
    if (mid <= lo || mid >= hi) break;
    if (clipped(mid).sum() > Scalar(0)) lo = mid;
    else hi = mid;
  }
  // solve exactly on the active set found by bisection
  const Scalar lam0 = (lo + hi) / 2;
  Scalar free_sum = 0, fixed_sum = 0;
  Index free = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const Scalar t = a(i) - lam0;
    if (t >= bound) fixed_sum += bound;
    else if (t <= -bound) fixed_sum -= bound;
    else {
      free_sum += a(i);
      ++free;
    }
  }
  const Scalar lam = free > 0 ? (free_sum + fixed_sum) / Scalar(free) : lam0;
  return clipped(lam);
}

}  // namespace detail

// Projections onto C_alpha, C_u, C_v and C_rho. Without a basis, V rows are
// clipped like U rows.
template <typename Scalar>
void project_box(ModelParams<Scalar>& m, const BoxBounds& box,
                 const std::type_identity_t<KpcaBasis<Scalar>>* basis) {
  using std::sqrt;
  const Scalar bound = Scalar(box.m);
  m.alpha = detail::project_centered_box(m.alpha, bound);
  detail::clip_row_norms(m.u, bound);
  if (basis) {
    const Scalar gnorm_sq = kpca_coefficients(*basis, m.v).squaredNorm();
    if (gnorm_sq > bound) m.v *= sqrt(bound / gnorm_sq);
  } else {
    detail::clip_row_norms(m.v, bound);
  }
  m.rho = std::clamp(m.rho, Scalar(-box.m1), Scalar(-box.m2));
}

// Spectral initializer: universal singular value thresholding of the observed
// entries (threshold c * sd * sqrt(max(n, p) * observed fraction), sd the
// Bernoulli standard deviation at the observed rate), clip and logit, split off intercept and row effects, then a
// balanced rank-r split of the remainder. In kernel mode V is projected last.
template <typename Scalar>
ModelParams<Scalar> initialize(const Observations<Scalar>& obs, const KpcaBasis<Scalar>* basis,
                               const FitConfig& config) {
  using std::sqrt;
  config.validate();
  const Index n = obs.rows();
  const Index p = obs.cols();
  const Index r = config.rank;
  require(r <= std::min(n, p), "rank " + std::to_string(r) + " exceeds min(n, p) = " +
                                   std::to_string(std::min(n, p)));
  require(config.kernel.is_baseline() || basis != nullptr,
          "initialize: kernel mode requires a basis");
  if (basis) require(basis->p() == p, "initialize: basis size does not match the matrix");

  const Scalar observed = obs.weight.sum();
  require(observed > Scalar(0), "initialize: no observed entries");
  const Scalar frac = observed / Scalar(n * p);

  const Mat<Scalar> filled = obs.y.cwiseProduct(obs.weight);
  // noise scale: Bernoulli standard deviation at the observed rate of ones
  const Scalar rate = std::clamp(filled.sum() / observed, Scalar(config.clip),
                                 Scalar(1) - Scalar(config.clip));
  const Scalar noise_sd = sqrt(rate * (Scalar(1) - rate));
  Eigen::BDCSVD<Mat<Scalar>> svd(filled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Scalar tau =
      Scalar(config.usvt_constant) * noise_sd * sqrt(Scalar(std::max(n, p)) * frac);
  const auto& sv = svd.singularValues();
  Index keep = 0;
  while (keep < sv.size() && sv(keep) > tau) ++keep;
  Mat<Scalar> phat = Mat<Scalar>::Zero(n, p);
  if (keep > 0)
    phat = svd.matrixU().leftCols(keep) * sv.head(keep).asDiagonal() *
           svd.matrixV().leftCols(keep).transpose() / frac;

  const Scalar lo = Scalar(config.clip);
  const Scalar hi = Scalar(1) - lo;
  Mat<Scalar> theta = phat.unaryExpr([&](Scalar x) { return logit(std::clamp(x, lo, hi)); });

  ModelParams<Scalar> m;
  m.rho = theta.mean();
  m.alpha = theta.rowwise().mean().array() - m.rho;
  theta.colwise() -= m.alpha;
  theta.array() -= m.rho;

  Eigen::BDCSVD<Mat<Scalar>> split(theta, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec<Scalar> root = split.singularValues().head(r).cwiseSqrt();
  m.u = split.matrixU().leftCols(r) * root.asDiagonal();
  m.v = split.matrixV().leftCols(r) * root.asDiagonal();
  if (basis) {
    m.v = project_subspace(m.v, *basis);
    m.kernel = basis->kernel;
  } else {
    m.kernel = KernelSpec::baseline();
  }
  return m;
}

// Step sizes eta/(np), eta/p and eta/|[U0; V0]|_2^2.
template <typename Scalar>
StepSizes step_sizes(const ModelParams<Scalar>& init, double eta) {
  const Index n = init.n();
  const Index p = init.p();
  Mat<Scalar> stack(n + p, init.rank());
  stack << init.u, init.v;
  StepSizes s;
  s.rho = eta / (static_cast<double>(n) * static_cast<double>(p));
  s.alpha = eta / static_cast<double>(p);
  double spec2 = 0.0;
  if (stack.size() > 0) {
    const Scalar top = Eigen::JacobiSVD<Mat<Scalar>>(stack).singularValues()(0);
    spec2 = static_cast<double>(top * top);
  }
  s.u = s.v = spec2 > 0.0 ? eta / spec2 : eta;
  return s;
}

// Projected gradient descent on nll + g/4. Each iteration takes a joint
// gradient step, centers alpha, projects V onto the KPCA span (kernel mode),
// and optionally projects onto the box.
template <typename Scalar>
FitResult<Scalar> pgd_fit(const Observations<Scalar>& obs,
                          const std::type_identity_t<KpcaBasis<Scalar>>* basis,
                          const FitConfig& config,
                          std::optional<std::type_identity_t<ModelParams<Scalar>>> start = std::nullopt) {
  using std::abs;
  using std::isfinite;
  config.validate();
  const bool kernel_mode = !config.kernel.is_baseline();
  require(kernel_mode == (basis != nullptr),
          "pgd_fit: a basis is required exactly when the kernel is not baseline");

  FitResult<Scalar> res;
  res.params = start ? std::move(*start) : initialize(obs, basis, config);
  ModelParams<Scalar>& m = res.params;
  m.check_shapes();
  require(m.n() == obs.rows() && m.p() == obs.cols(),
          "pgd_fit: parameter and data dimensions differ");
  m.kernel = kernel_mode ? basis->kernel : KernelSpec::baseline();
  res.steps = step_sizes(m, config.eta);
  const StepSizes& tau = res.steps;

  Mat<Scalar> resid;
  auto objective = [&]() {
    return loss_and_residual(logits(m), obs, resid) + balance_penalty(m.u, m.v) / 4;
  };
  Scalar prev = objective();
  res.objective_trace.push_back(prev);
  require(isfinite(prev), "pgd_fit: non-finite initial objective");

  for (Index t = 0; t < config.max_iters; ++t) {
    const Gradients<Scalar> g = gradients_from_residual(m, resid);
    m.rho -= Scalar(tau.rho) * g.rho;
    m.alpha -= Scalar(tau.alpha) * g.alpha;
    m.u -= Scalar(tau.u) * g.u;
    m.v -= Scalar(tau.v) * g.v;
    m.alpha = project_centering(m.alpha);
    if (kernel_mode) m.v = project_subspace(m.v, *basis);
    if (config.box) project_box(m, *config.box, basis);

    const Scalar cur = objective();
    res.objective_trace.push_back(cur);
    res.iterations_run = t + 1;
    if (!isfinite(cur)) {
      std::vector<double> trace(res.objective_trace.begin(), res.objective_trace.end());
      throw DivergenceError("pgd_fit: objective became non-finite at iteration " +
                                std::to_string(t + 1) + " (try a smaller eta)",
                            std::move(trace));
    }
    if (abs(cur - prev) <= Scalar(config.tol) * (Scalar(1) + abs(prev))) {
      res.converged = true;
      break;
    }
    prev = cur;
  }

  if (kernel_mode)
    m.gamma = kpca_coefficients(*basis, m.v);
  else
    m.gamma.reset();
  return res;
}

inline FitResultd pgd_fit(const BinaryMatrix& y, const KpcaBasisd* basis,
                          const FitConfig& config, const EntryMask* mask = nullptr) {
  return pgd_fit(make_observations(y, mask), basis, config);
}

inline ModelParamsd initialize(const BinaryMatrix& y, const KpcaBasisd* basis,
                               const FitConfig& config, const EntryMask* mask = nullptr) {
  return initialize(make_observations(y, mask), basis, config);
}

}  // namespace kelp
