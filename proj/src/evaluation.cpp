#include "kelp/evaluation.hpp"

#include <algorithm>
#include <numeric>

namespace kelp {

std::vector<std::pair<std::string, std::string>> MetricsReport::fields() const {
  std::vector<std::pair<std::string, std::string>> out;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) out.emplace_back(key, format_double(*v));
  };
  put("rel_theta_error", rel_theta_error);
  put("rel_U_error", rel_u_error);
  put("rel_V_error", rel_v_error);
  put("auroc", auroc);
  out.emplace_back("sparsity", format_double(sparsity));
  if (heldout_entries) out.emplace_back("heldout_entries", std::to_string(*heldout_entries));
  if (mask_seed) out.emplace_back("mask_seed", std::to_string(*mask_seed));
  return out;
}

double relative_theta_error(const MatrixXd& est, const MatrixXd& truth) {
  require(est.rows() == truth.rows() && est.cols() == truth.cols(),
          "relative error: dimension mismatch");
  const double denom = truth.norm();
  require(denom > 0.0, "relative error: truth matrix is zero");
  return (est - truth).norm() / denom;
}

MatrixXd procrustes_rotation(const MatrixXd& est, const MatrixXd& truth) {
  require(est.rows() == truth.rows() && est.cols() == truth.cols(),
          "procrustes: dimension mismatch");
  Eigen::JacobiSVD<MatrixXd> svd(truth.transpose() * est,
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

double procrustes_error(const MatrixXd& est, const MatrixXd& truth) {
  const double denom = truth.norm();
  require(denom > 0.0, "procrustes: truth matrix is zero");
  const MatrixXd o = procrustes_rotation(est, truth);
  return (est - truth * o).norm() / denom;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "auroc: scores and labels differ in length");
  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t k = 0; k < m;) {
    std::size_t end = k;
    while (end < m && scores[order[end]] == scores[order[k]]) ++end;
    const double midrank = 0.5 * static_cast<double>(k + 1 + end);
    for (std::size_t t = k; t < end; ++t) {
      const int lab = labels[order[t]];
      require(lab == 0 || lab == 1, "auroc: labels must be 0 or 1");
      if (lab == 1) {
        rank_sum += midrank;
        ++positives;
      }
    }
    k = end;
  }
  const std::size_t negatives = m - positives;
  require(positives > 0 && negatives > 0, "auroc: need at least one positive and one negative");
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport completion_eval(const BinaryMatrix& y, const EmbeddingTable* e,
                              const KernelSpec& spec, double mask_frac, const FitConfig& config,
                              std::uint64_t seed) {
  require(mask_frac > 0.0 && mask_frac < 1.0, "complete: mask fraction must lie in (0, 1)");
  const bool kernel_mode = !spec.is_baseline();
  require(!kernel_mode || e != nullptr, "complete: kernel " + spec.to_string() +
                                            " requires embeddings");
  if (e) require(e->rows() == y.cols(), "complete: embedding rows do not match matrix columns");

  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    const std::uint64_t s = seed + attempt;
    const EntryMask mask = sample_holdout_mask(y.rows(), y.cols(), mask_frac, s);
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(mask.size()));
    for (const auto& [i, j] : mask.held_out()) labels.push_back(y(i, j) ? 1 : 0);
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    if (pos == 0 || pos == static_cast<long>(labels.size())) continue;

    FitConfig cfg = config;
    cfg.kernel = spec;
    std::optional<KpcaBasisd> basis;
    if (kernel_mode) basis = build_basis(spec, *e, cfg.selector);
    const FitResultd fit = pgd_fit(y, basis ? &*basis : nullptr, cfg, &mask);
    const MatrixXd theta = logits(fit.params);
    std::vector<double> scores;
    scores.reserve(labels.size());
    for (const auto& [i, j] : mask.held_out()) scores.push_back(sigmoid(theta(i, j)));

    MetricsReport rep;
    rep.auroc = auroc(scores, labels);
    rep.sparsity = y.one_fraction();
    rep.heldout_entries = mask.size();
    rep.mask_seed = s;
    return rep;
  }
  throw Error("complete: held-out entries were single-class for 10 consecutive seeds");
}

}  // namespace kelp
