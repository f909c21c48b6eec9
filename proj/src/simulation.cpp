#include "kelp/simulation.hpp"

#include "kelp/random.hpp"

#include <cmath>

namespace kelp {

namespace {

enum Stream : std::uint64_t {
  kCenters = 1,
  kTruth = 2,
  kSample = 3,
  kNoise = 4,
};

MatrixXd standard_normal(Rng& rng, Index rows, Index cols, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  MatrixXd out(rows, cols);
  // row-major draw order, independent of Eigen's storage order
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  return out;
}

void center_columns(MatrixXd& x) { x.rowwise() -= x.colwise().mean(); }

}  // namespace

Mapping parse_mapping(const std::string& name) {
  if (name == "linear") return Mapping::Linear;
  if (name == "nonlinear" || name == "tanh") return Mapping::NonlinearTanh;
  throw Error("unknown mapping '" + name + "' (expected linear | nonlinear)");
}

std::string to_string(Mapping m) { return m == Mapping::Linear ? "linear" : "nonlinear"; }

void SimConfig::validate() const {
  require(n >= 1 && p >= 1, "simulate: n and p must be positive");
  require(d >= 1, "simulate: d must be positive");
  require(rank >= 1, "simulate: rank must be positive");
  require(rank <= std::min(n, p), "rank " + std::to_string(rank) + " exceeds min(n, p) = " +
                                      std::to_string(std::min(n, p)));
  require(clusters >= 1 && clusters <= p, "simulate: cluster count must lie in [1, p]");
  require(perturb >= 0.0, "simulate: perturbation scale must be nonnegative");
  require(std::isfinite(rho_star), "simulate: rho* must be finite");
}

SemanticEmbeddings gen_semantic_embeddings(const SimConfig& config) {
  config.validate();
  auto rng = make_rng(config.seed, kCenters);
  MatrixXd centers = standard_normal(rng, config.clusters, config.d);
  centers.rowwise().normalize();

  std::uniform_int_distribution<Index> pick(0, config.clusters - 1);
  std::normal_distribution<double> normal;
  std::vector<Index> z(static_cast<std::size_t>(config.p));
  MatrixXd e(config.p, config.d);
  for (Index j = 0; j < config.p; ++j) {
    z[j] = pick(rng);
    for (Index k = 0; k < config.d; ++k)
      e(j, k) = centers(z[j], k) + config.perturb * normal(rng);
  }
  e.rowwise().normalize();
  return {EmbeddingTable(std::move(e)), std::move(z)};
}

GroundTruth gen_ground_truth(const SimConfig& config, const EmbeddingTable& e) {
  config.validate();
  require(e.rows() == config.p, "ground truth: embedding rows do not match p");
  const Index n = config.n, p = config.p, r = config.rank, d = e.dim();

  for (std::uint64_t attempt = 0; attempt < 5; ++attempt) {
    auto rng = make_rng(config.seed, kTruth + 16 * attempt);
    MatrixXd u = standard_normal(rng, n, r);
    center_columns(u);

    MatrixXd v(p, r);
    if (config.mapping == Mapping::Linear) {
      const MatrixXd w = standard_normal(rng, d, r, std::sqrt(2.0));
      v = e.matrix() * w;
    } else {
      for (Index k = 0; k < r; ++k) {
        const MatrixXd w1 = standard_normal(rng, d, 2 * r);
        const VectorXd w2 = standard_normal(rng, 2 * r, 1);
        const MatrixXd hidden = (e.matrix() * w1).array().square();
        v.col(k) = (hidden * w2).array().tanh();
      }
    }
    center_columns(v);

    // SVD of U V' through thin QR factors of each side
    Eigen::HouseholderQR<MatrixXd> qru(u), qrv(v);
    const MatrixXd qu = qru.householderQ() * MatrixXd::Identity(n, r);
    const MatrixXd qv = qrv.householderQ() * MatrixXd::Identity(p, r);
    const MatrixXd core = (qu.transpose() * u) * (qv.transpose() * v).transpose();
    Eigen::JacobiSVD<MatrixXd> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd& sv = svd.singularValues();
    if (!(sv(r - 1) > 1e-10 * sv(0))) continue;

    const VectorXd root = sv.cwiseSqrt();
    GroundTruth t;
    t.u_star = qu * svd.matrixU() * root.asDiagonal();
    t.v_star = qv * svd.matrixV() * root.asDiagonal();
    const double scale = std::pow(static_cast<double>(n) * static_cast<double>(p) /
                                      sv.squaredNorm(), 0.25);
    t.u_star *= scale;
    t.v_star *= scale;

    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    t.alpha_star.resize(n);
    for (Index i = 0; i < n; ++i) t.alpha_star(i) = unif(rng);
    t.alpha_star.array() -= t.alpha_star.mean();
    return with_intercept(t, config.rho_star);
  }
  throw Error("ground truth: U V' rank deficient after 5 attempts");
}

GroundTruth with_intercept(const GroundTruth& truth, double rho_star) {
  GroundTruth t = truth;
  t.rho_star = rho_star;
  t.theta_star = t.u_star * t.v_star.transpose();
  t.theta_star.colwise() += t.alpha_star;
  t.theta_star.array() += rho_star;
  return t;
}

BinaryMatrix sample_matrix(const GroundTruth& truth, std::uint64_t seed) {
  auto rng = make_rng(seed, kSample);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const MatrixXd& theta = truth.theta_star;
  std::vector<Coord> ones;
  for (Index i = 0; i < theta.rows(); ++i)
    for (Index j = 0; j < theta.cols(); ++j)
      if (unif(rng) < sigmoid(theta(i, j))) ones.emplace_back(i, j);
  return BinaryMatrix(theta.rows(), theta.cols(), std::move(ones));
}

double expected_one_fraction(const GroundTruth& truth) {
  return truth.theta_star.unaryExpr([](double x) { return sigmoid(x); }).mean();
}

double calibrate_intercept(const GroundTruth& truth, double target_fraction) {
  require(target_fraction > 0.0 && target_fraction < 1.0,
          "calibrate: target fraction must lie in (0, 1)");
  MatrixXd base = truth.u_star * truth.v_star.transpose();
  base.colwise() += truth.alpha_star;
  auto fraction = [&](double rho) {
    return base.unaryExpr([rho](double x) { return sigmoid(x + rho); }).mean();
  };
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (fraction(mid) < target_fraction ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

EmbeddingTable noise_embeddings(Index p, Index d, std::uint64_t seed) {
  auto rng = make_rng(seed, kNoise);
  MatrixXd e = standard_normal(rng, p, d);
  e.rowwise().normalize();
  return EmbeddingTable(std::move(e));
}

}  // namespace kelp
