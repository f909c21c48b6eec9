#pragma once

#include "kelp/core.hpp"
#include "kelp/kernel.hpp"
#include "kelp/matrix_io.hpp"
#include "kelp/optimizer.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kelp {

struct MetricsReport {
  std::optional<double> rel_theta_error;
  std::optional<double> rel_u_error;
  std::optional<double> rel_v_error;
  std::optional<double> auroc;
  double sparsity = 0.0;
  std::optional<Index> heldout_entries;
  std::optional<std::uint64_t> mask_seed;

  // key = value lines, unset fields omitted
  std::vector<std::pair<std::string, std::string>> fields() const;
};

// |est - truth|_F / |truth|_F
double relative_theta_error(const MatrixXd& est, const MatrixXd& truth);

// Orthogonal matrix O minimizing |est - truth O|_F (reflections allowed).
MatrixXd procrustes_rotation(const MatrixXd& est, const MatrixXd& truth);

// min_O |est - truth O|_F / |truth|_F
double procrustes_error(const MatrixXd& est, const MatrixXd& truth);

// Mann-Whitney statistic with midranks for ties.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Masks mask_frac of the entries, fits on the rest and scores the held-out
// entries by sigmoid(Theta_hat). Resamples the mask while the held-out labels
// are single-class, up to 10 seeds.
MetricsReport completion_eval(const BinaryMatrix& y, const EmbeddingTable* e,
                              const KernelSpec& spec, double mask_frac, const FitConfig& config,
                              std::uint64_t seed);

}  // namespace kelp
