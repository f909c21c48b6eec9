#pragma once

#include "kelp/core.hpp"
#include "kelp/kernel.hpp"
#include "kelp/matrix_io.hpp"
#include "kelp/optimizer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kelp {

struct CandidateResult {
  KernelSpec kernel;
  std::optional<Index> q;  // unset for the baseline
  double energy = 0.0;
  double holdout_loss = 0.0;
  Index iterations = 0;
  bool converged = false;
  bool diverged = false;
  std::uint64_t mask_digest = 0;  // fingerprint of the held-out set used
  std::optional<FitResultd> fit;
};

struct SelectionReport {
  std::vector<CandidateResult> candidates;
  std::size_t chosen = 0;
  double pi = 0.1;
  std::uint64_t seed = 0;       // seed requested
  std::uint64_t mask_seed = 0;  // seed that produced the non-empty mask
  EntryMask mask{1, 1, {}};

  const CandidateResult& best() const { return candidates.at(chosen); }
};

// Linear, the three Gaussian widths 0.001, 0.01, 0.1, and the baseline.
std::vector<KernelSpec> default_candidates();

std::uint64_t mask_digest(const EntryMask& mask);

// Fits each candidate on the entries outside one shared hold-out mask and
// picks the lowest held-out negative log-likelihood (first wins on ties).
// Candidates are fitted on up to `threads` workers.
SelectionReport select_kernel(const BinaryMatrix& y, const EmbeddingTable* e,
                              const std::vector<KernelSpec>& candidates, double pi,
                              const FitConfig& config, std::uint64_t seed, int threads = 1);

}  // namespace kelp
