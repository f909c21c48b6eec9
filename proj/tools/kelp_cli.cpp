#include "kelp/evaluation.hpp"
#include "kelp/kernel.hpp"
#include "kelp/matrix_io.hpp"
#include "kelp/optimizer.hpp"
#include "kelp/selection.hpp"
#include "kelp/serialization.hpp"
#include "kelp/simulation.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace kelp;

namespace {

struct Shared {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  int threads = 1;
};

struct FitFlags {
  std::string matrix;
  std::string embeddings;
  std::string kernel = "linear";
  Index rank = 8;
  double energy = 0.95;
  std::optional<Index> q;
  double eta = 0.5;
  Index iters = 2000;
  double tol = 1e-7;
  std::string box;
};

void echo(const std::string& key, const std::string& value) {
  std::cout << key << '=' << value << '\n';
}

void echo(const TextDocument& doc) {
  for (const auto& [k, v] : doc.scalars())
    if (k != "format") echo(k, v);
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  require(fs::is_directory(p), "cannot create output directory '" + dir + "'");
  return p;
}

std::optional<BoxBounds> parse_box(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) parts.push_back(parse_double(tok));
  require(parts.size() == 3, "--box-bounds expects M,M1,M2");
  BoxBounds b{parts[0], parts[1], parts[2]};
  b.validate();
  return b;
}

void add_shared(CLI::App* cmd, Shared& s) {
  cmd->add_option("--seed", s.seed, "random seed");
  cmd->add_option("--out-dir", s.out_dir, "output directory");
  cmd->add_option("--threads", s.threads, "worker thread cap")->check(CLI::PositiveNumber);
}

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool with_kernel = true) {
  cmd->add_option("--matrix", f.matrix, "binary matrix file")->required();
  cmd->add_option("--embeddings", f.embeddings, "semantic embedding CSV");
  if (with_kernel) cmd->add_option("--kernel", f.kernel, "linear | gaussian:<g> | poly:<d>:<o> | baseline");
  cmd->add_option("--rank", f.rank, "latent rank r");
  cmd->add_option("--energy", f.energy, "kernel PCA energy threshold");
  cmd->add_option("--q", f.q, "fixed kernel PCA rank");
  cmd->add_option("--eta", f.eta, "step size multiplier");
  cmd->add_option("--iters", f.iters, "maximum iterations");
  cmd->add_option("--tol", f.tol, "relative objective tolerance");
  cmd->add_option("--box-bounds", f.box, "optional box projection M,M1,M2");
}

FitConfig fit_config(const FitFlags& f, std::uint64_t seed) {
  require(f.energy > 0.0 && f.energy <= 1.0, "--energy must lie in (0, 1]");
  FitConfig cfg;
  cfg.rank = f.rank;
  cfg.kernel = KernelSpec::parse(f.kernel);
  cfg.selector = f.q ? RankSelector::fixed(*f.q) : RankSelector::energy(1.0 - f.energy);
  cfg.eta = f.eta;
  cfg.max_iters = f.iters;
  cfg.tol = f.tol;
  cfg.box = parse_box(f.box);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

std::optional<EmbeddingTable> maybe_embeddings(const std::string& path, bool needed,
                                               const BinaryMatrix& y) {
  if (path.empty()) {
    require(!needed, "--embeddings is required for kernel fits");
    return std::nullopt;
  }
  EmbeddingTable e = load_embeddings(path);
  require(e.rows() == y.cols(), "embedding rows (" + std::to_string(e.rows()) +
                                    ") do not match matrix columns (" +
                                    std::to_string(y.cols()) + ")");
  return e;
}

void check_rank(Index rank, const BinaryMatrix& y) {
  require(rank <= std::min(y.rows(), y.cols()),
          "rank " + std::to_string(rank) + " exceeds min(n, p) = " +
              std::to_string(std::min(y.rows(), y.cols())));
}

int run_simulate(const SimConfig& sc, const Shared& s) {
  sc.validate();
  const fs::path out = prepare_out_dir(s.out_dir);
  const auto emb = gen_semantic_embeddings(sc);
  const auto truth = gen_ground_truth(sc, emb.table);
  const auto y = sample_matrix(truth, sc.seed);
  save_binary_matrix(out / "matrix.txt", y);
  save_embeddings(out / "embeddings.csv", emb.table);
  truth_document(truth).save(out / "truth.txt");
  echo("n", std::to_string(y.rows()));
  echo("p", std::to_string(y.cols()));
  echo("mapping", to_string(sc.mapping));
  echo("sparsity", format_double(y.one_fraction()));
  echo("expected_sparsity", format_double(expected_one_fraction(truth)));
  return 0;
}

int run_fit(const FitFlags& f, const Shared& s) {
  const FitConfig cfg = fit_config(f, s.seed);
  const BinaryMatrix y = load_binary_matrix(f.matrix);
  check_rank(cfg.rank, y);
  const auto e = maybe_embeddings(f.embeddings, !cfg.kernel.is_baseline(), y);
  const fs::path out = prepare_out_dir(s.out_dir);

  std::optional<KpcaBasisd> basis;
  if (!cfg.kernel.is_baseline()) basis = build_basis(cfg.kernel, *e, cfg.selector);
  const auto fit = pgd_fit(y, basis ? &*basis : nullptr, cfg);

  model_document(fit.params).save(out / "model.txt");
  save_trace(out / "trace.txt", fit.objective_trace);
  if (basis) basis_document(*basis).save(out / "basis.txt");
  echo("kernel", cfg.kernel.to_string());
  if (basis) {
    echo("q", std::to_string(basis->q));
    echo("energy", format_double(basis->energy));
  }
  echo("iterations", std::to_string(fit.iterations_run));
  echo("converged", fit.converged ? "true" : "false");
  echo("objective", format_double(fit.objective_trace.back()));
  return 0;
}

int run_select(const FitFlags& f, const std::vector<std::string>& cand_tokens, double pi,
               bool refit, const Shared& s) {
  FitFlags base = f;
  base.kernel = "linear";
  FitConfig cfg = fit_config(base, s.seed);
  require(pi > 0.0 && pi < 1.0, "--pi must lie in (0, 1)");
  std::vector<KernelSpec> cands;
  for (const auto& t : cand_tokens) cands.push_back(KernelSpec::parse(t));
  if (cands.empty()) cands = default_candidates();
  bool any_kernel = false;
  for (const auto& c : cands) any_kernel = any_kernel || !c.is_baseline();

  const BinaryMatrix y = load_binary_matrix(f.matrix);
  check_rank(cfg.rank, y);
  const auto e = maybe_embeddings(f.embeddings, any_kernel, y);
  const fs::path out = prepare_out_dir(s.out_dir);

  const auto rep = select_kernel(y, e ? &*e : nullptr, cands, pi, cfg, s.seed, s.threads);
  const auto doc = selection_document(rep);
  doc.save(out / "selection.txt");
  echo(doc);

  if (refit) {
    cfg.kernel = rep.best().kernel;
    std::optional<KpcaBasisd> basis;
    if (!cfg.kernel.is_baseline()) basis = build_basis(cfg.kernel, *e, cfg.selector);
    const auto fit = pgd_fit(y, basis ? &*basis : nullptr, cfg);
    model_document(fit.params).save(out / "model.txt");
    save_trace(out / "trace.txt", fit.objective_trace);
    if (basis) basis_document(*basis).save(out / "basis.txt");
    echo("refit_iterations", std::to_string(fit.iterations_run));
    echo("refit_converged", fit.converged ? "true" : "false");
  }
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& truth_path, const Shared& s) {
  require(!truth_path.empty(), "--truth is required");
  const auto m = model_from_document(TextDocument::load(model_path));
  const auto t = truth_from_document(TextDocument::load(truth_path));
  require(m.u.rows() == t.u_star.rows() && m.v.rows() == t.v_star.rows(),
          "model and truth dimensions differ");
  const fs::path out = prepare_out_dir(s.out_dir);
  MetricsReport rep;
  rep.rel_theta_error = relative_theta_error(logits(m), t.theta_star);
  if (t.u_star.size() > 0 && t.u_star.cols() == m.u.cols()) {
    rep.rel_u_error = procrustes_error(m.u, t.u_star);
    rep.rel_v_error = procrustes_error(m.v, t.v_star);
  }
  rep.sparsity = expected_one_fraction(t);
  const auto doc = metrics_document(rep);
  doc.save(out / "metrics.txt");
  echo(doc);
  return 0;
}

int run_extend(const std::string& model_path, const std::string& basis_path,
               const std::string& emb_path, const std::string& new_path, const Shared& s) {
  const auto m = model_from_document(TextDocument::load(model_path));
  require(m.kernel && !m.kernel->is_baseline() && m.gamma,
          "extend: model was fitted without a kernel basis");
  require(!basis_path.empty(), "--basis is required");
  require(!emb_path.empty(), "--embeddings is required");
  const auto basis = basis_from_document(TextDocument::load(basis_path));
  const auto e = load_embeddings(emb_path);
  const auto fresh = load_embeddings(new_path);
  require(e.rows() == basis.p(), "training embeddings do not match the basis");
  require(fresh.dim() == e.dim(), "new embeddings have dimension " +
                                      std::to_string(fresh.dim()) + ", expected " +
                                      std::to_string(e.dim()));
  const fs::path out = prepare_out_dir(s.out_dir);
  MatrixXd v(fresh.rows(), m.rank());
  for (Index j = 0; j < fresh.rows(); ++j) {
    const VectorXd psi = nystrom_features(basis, *m.kernel, e.matrix(), fresh.row(j).transpose());
    v.row(j) = extend_embedding(m, basis, psi).transpose();
  }
  save_embeddings(out / "extended.csv", EmbeddingTable(v));
  echo("extended", std::to_string(fresh.rows()));
  echo("rank", std::to_string(m.rank()));
  return 0;
}

int run_complete(const FitFlags& f, double mask_frac, const Shared& s) {
  const FitConfig cfg = fit_config(f, s.seed);
  require(mask_frac > 0.0 && mask_frac < 1.0, "--mask-frac must lie in (0, 1)");
  const BinaryMatrix y = load_binary_matrix(f.matrix);
  check_rank(cfg.rank, y);
  const auto e = maybe_embeddings(f.embeddings, !cfg.kernel.is_baseline(), y);
  const fs::path out = prepare_out_dir(s.out_dir);
  const auto rep = completion_eval(y, e ? &*e : nullptr, cfg.kernel, mask_frac, cfg, s.seed);
  const auto doc = metrics_document(rep);
  doc.save(out / "metrics.txt");
  echo(doc);
  return 0;
}

std::string one_line(std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return msg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-embedded latent projection for binary matrices"};
  app.require_subcommand(1);

  Shared shared;
  FitFlags ff;

  SimConfig sc;
  std::string mapping = "linear";
  auto* sim = app.add_subcommand("simulate", "generate a planted binary matrix");
  add_shared(sim, shared);
  sim->add_option("--n", sc.n, "rows");
  sim->add_option("--p", sc.p, "columns");
  sim->add_option("--d", sc.d, "embedding dimension");
  sim->add_option("--clusters", sc.clusters, "embedding clusters");
  sim->add_option("--rank", sc.rank, "latent rank");
  sim->add_option("--mapping", mapping, "linear | nonlinear");
  sim->add_option("--rho", sc.rho_star, "intercept rho*");
  sim->add_option("--perturb", sc.perturb, "cluster perturbation scale");

  auto* fit = app.add_subcommand("fit", "fit a model");
  add_shared(fit, shared);
  add_fit_flags(fit, ff);

  std::vector<std::string> candidates;
  double pi = 0.1;
  bool refit = false;
  auto* sel = app.add_subcommand("select-kernel", "choose a kernel by hold-out loss");
  add_shared(sel, shared);
  add_fit_flags(sel, ff, false);
  sel->add_option("--candidates", candidates, "kernel candidates")->delimiter(',');
  sel->add_option("--pi", pi, "hold-out probability");
  sel->add_flag("--refit", refit, "refit the chosen kernel on all entries");

  std::string model_path, truth_path, basis_path, new_path;
  auto* eval = app.add_subcommand("evaluate", "compare a model with a truth bundle");
  add_shared(eval, shared);
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--truth", truth_path, "truth bundle");

  auto* ext = app.add_subcommand("extend", "embed unseen columns");
  add_shared(ext, shared);
  ext->add_option("--model", model_path, "model file")->required();
  ext->add_option("--basis", basis_path, "basis file");
  ext->add_option("--embeddings", ff.embeddings, "training embedding CSV");
  ext->add_option("--new-embeddings", new_path, "embeddings of new columns")->required();

  double mask_frac = 0.2;
  auto* comp = app.add_subcommand("complete", "masked completion AuROC");
  add_shared(comp, shared);
  add_fit_flags(comp, ff);
  comp->add_option("--mask-frac", mask_frac, "held-out fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*sim) {
      sc.mapping = parse_mapping(mapping);
      sc.seed = shared.seed;
      return run_simulate(sc, shared);
    }
    if (*fit) return run_fit(ff, shared);
    if (*sel) return run_select(ff, candidates, pi, refit, shared);
    if (*eval) return run_evaluate(model_path, truth_path, shared);
    if (*ext) return run_extend(model_path, basis_path, ff.embeddings, new_path, shared);
    if (*comp) return run_complete(ff, mask_frac, shared);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}
