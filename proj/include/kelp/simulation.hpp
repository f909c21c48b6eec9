#pragma once

#include "kelp/core.hpp"
#include "kelp/matrix_io.hpp"

#include <cstdint>
#include <vector>

namespace kelp {

enum class Mapping { Linear, NonlinearTanh };

Mapping parse_mapping(const std::string& name);
std::string to_string(Mapping m);

struct SimConfig {
  Index n = 100;
  Index p = 1000;
  Index d = 50;
  Index clusters = 10;
  Index rank = 8;
  Mapping mapping = Mapping::Linear;
  double rho_star = -1.5;
  double perturb = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  double rho_star = 0.0;
  VectorXd alpha_star;
  MatrixXd u_star;
  MatrixXd v_star;
  MatrixXd theta_star;
};

struct SemanticEmbeddings {
  EmbeddingTable table;
  std::vector<Index> assignments;
};

// Unit-norm embeddings around clusters centers drawn uniformly on the sphere.
SemanticEmbeddings gen_semantic_embeddings(const SimConfig& config);

// Row/column embeddings, SVD-balanced and scaled to |U* V*'|_F^2 = np, plus
// centered row effects and the logit matrix.
GroundTruth gen_ground_truth(const SimConfig& config, const EmbeddingTable& e);

// y_ij ~ Bernoulli(sigmoid(Theta*_ij)).
BinaryMatrix sample_matrix(const GroundTruth& truth, std::uint64_t seed);

// Expected fraction of ones, mean of sigmoid(Theta*).
double expected_one_fraction(const GroundTruth& truth);

// Intercept giving a target expected one-fraction for fixed alpha*, U*, V*.
double calibrate_intercept(const GroundTruth& truth, double target_fraction);

// Returns a copy with rho* replaced and Theta* rebuilt.
GroundTruth with_intercept(const GroundTruth& truth, double rho_star);

// Independent standard normal embeddings with the same shape, normalized to
// unit rows; carries no information about the truth.
EmbeddingTable noise_embeddings(Index p, Index d, std::uint64_t seed);

}  // namespace kelp
