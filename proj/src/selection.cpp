#include "kelp/selection.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace kelp {

std::vector<KernelSpec> default_candidates() {
  return {KernelSpec::linear(), KernelSpec::gaussian(0.001), KernelSpec::gaussian(0.01),
          KernelSpec::gaussian(0.1), KernelSpec::baseline()};
}

std::uint64_t mask_digest(const EntryMask& mask) {
  // FNV-1a over the sorted coordinates
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(mask.rows()));
  mix(static_cast<std::uint64_t>(mask.cols()));
  for (const auto& [i, j] : mask.held_out()) {
    mix(static_cast<std::uint64_t>(i));
    mix(static_cast<std::uint64_t>(j));
  }
  return h;
}

namespace {

CandidateResult evaluate_candidate(const KernelSpec& spec, const BinaryMatrix& y,
                                   const EmbeddingTable* e, const Observations<double>& obs,
                                   const EntryMask& mask, const FitConfig& config) {
  CandidateResult c;
  c.kernel = spec;
  c.mask_digest = mask_digest(mask);
  FitConfig cfg = config;
  cfg.kernel = spec;
  std::optional<KpcaBasisd> basis;
  if (!spec.is_baseline()) {
    basis = build_basis(spec, *e, cfg.selector);
    c.q = basis->q;
    c.energy = basis->energy;
  }
  try {
    FitResultd fit = pgd_fit(obs, basis ? &*basis : nullptr, cfg);
    c.holdout_loss = holdout_nll(fit.params, y, mask);
    c.iterations = fit.iterations_run;
    c.converged = fit.converged;
    c.fit = std::move(fit);
  } catch (const DivergenceError& err) {
    c.diverged = true;
    c.iterations = static_cast<Index>(err.trace().size()) - 1;
    c.holdout_loss = std::numeric_limits<double>::infinity();
  }
  return c;
}

}  // namespace

SelectionReport select_kernel(const BinaryMatrix& y, const EmbeddingTable* e,
                              const std::vector<KernelSpec>& candidates, double pi,
                              const FitConfig& config, std::uint64_t seed, int threads) {
  require(!candidates.empty(), "select: candidate list is empty");
  for (const auto& c : candidates)
    if (!c.is_baseline()) {
      require(e != nullptr, "select: kernel " + c.to_string() + " requires embeddings");
      require(e->rows() == y.cols(), "select: embedding rows do not match matrix columns");
    }
  config.validate();

  SelectionReport rep;
  rep.pi = pi;
  rep.seed = seed;
  bool found = false;
  for (std::uint64_t attempt = 0; attempt < 10 && !found; ++attempt) {
    EntryMask m = sample_holdout_mask(y.rows(), y.cols(), pi, seed + attempt);
    if (!m.empty()) {
      rep.mask = std::move(m);
      rep.mask_seed = seed + attempt;
      found = true;
    }
  }
  require(found, "select: hold-out set empty for 10 consecutive seeds");

  const Observations<double> obs = make_observations(y, &rep.mask);
  rep.candidates.resize(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < candidates.size(); k = next++) {
      try {
        rep.candidates[k] = evaluate_candidate(candidates[k], y, e, obs, rep.mask, config);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);

  for (std::size_t k = 1; k < rep.candidates.size(); ++k)
    if (rep.candidates[k].holdout_loss < rep.candidates[rep.chosen].holdout_loss) rep.chosen = k;
  require(std::isfinite(rep.candidates[rep.chosen].holdout_loss),
          "select: every candidate diverged");
  return rep;
}

}  // namespace kelp
