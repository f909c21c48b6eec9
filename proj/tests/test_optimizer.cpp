#include "doctest.h"

#include "kelp/evaluation.hpp"
#include "kelp/optimizer.hpp"
#include "kelp/simulation.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace kelp;
using kelp::test::max_abs;
using kelp::test::random_normal;

namespace {

struct Problem {
  SimConfig sim;
  EmbeddingTable e;
  GroundTruth truth;
  BinaryMatrix y;
};

Problem small_problem(std::uint64_t seed, Index n = 40, Index p = 120, Index r = 2) {
  SimConfig sc;
  sc.n = n;
  sc.p = p;
  sc.d = 10;
  sc.clusters = 4;
  sc.rank = r;
  sc.seed = seed;
  auto emb = gen_semantic_embeddings(sc);
  auto truth = gen_ground_truth(sc, emb.table);
  auto y = sample_matrix(truth, seed);
  return {sc, std::move(emb.table), std::move(truth), std::move(y)};
}

FitConfig linear_config(Index r) {
  FitConfig cfg;
  cfg.rank = r;
  cfg.kernel = KernelSpec::linear();
  cfg.selector = RankSelector::energy(1e-9);
  cfg.max_iters = 300;
  return cfg;
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("centering projection examples") {
    CHECK(project_centering(Eigen::Vector2d(1, -1)) == Eigen::Vector2d(1, -1));
    CHECK(project_centering(Eigen::Vector2d(2, 0)) == Eigen::Vector2d(1, -1));
    CHECK(project_centering(VectorXd::Constant(5, 3.7)).isZero(1e-15));
    auto rng = make_rng(1);
    const VectorXd a = random_normal(rng, 9, 1);
    const VectorXd once = project_centering(a);
    CHECK(max_abs(project_centering(once) - once) < 1e-12);
  }

  TEST_CASE("subspace projection examples") {
    auto rng = make_rng(2);
    const MatrixXd e = random_normal(rng, 12, 3);
    const auto b = build_basis(KernelSpec::linear(), e, RankSelector::energy(1e-9));
    const MatrixXd inside = b.psi * random_normal(rng, b.q, 2);
    CHECK(max_abs(project_subspace(inside, b) - inside) < 1e-12);

    const MatrixXd constant = VectorXd::Ones(12) * Eigen::RowVector2d(0.7, -2.0);
    CHECK(max_abs(project_subspace(constant, b)) < 1e-12);

    const MatrixXd once = project_subspace(random_normal(rng, 12, 2), b);
    CHECK(max_abs(project_subspace(once, b) - once) < 1e-12);
    CHECK(max_abs(once.transpose() * VectorXd::Ones(12)) < 1e-8);
    CHECK_THROWS_AS(project_subspace(MatrixXd::Zero(5, 2), b), Error);
  }

  TEST_CASE("full centered span leaves centered matrices unchanged") {
    auto rng = make_rng(3);
    const MatrixXd e = random_normal(rng, 8, 10);
    const auto b = build_basis(KernelSpec::gaussian(0.05), e, RankSelector::fixed(8));
    CHECK(b.q == 7);
    MatrixXd v = random_normal(rng, 8, 3);
    v.rowwise() -= v.colwise().mean();
    CHECK(max_abs(project_subspace(v, b) - v) < 1e-10);
  }

  TEST_CASE("initializer on an all-zero matrix") {
    const BinaryMatrix y(6, 5, {});
    FitConfig cfg;
    cfg.rank = 1;
    cfg.kernel = KernelSpec::baseline();
    const auto m = initialize(y, nullptr, cfg);
    CHECK(m.rho == doctest::Approx(-6.906754778648554).epsilon(1e-12));
    CHECK(m.alpha.isZero(1e-12));
    CHECK(max_abs(m.u * m.v.transpose()) < 1e-10);
  }

  TEST_CASE("initializer gives zero row effects for equal row means") {
    MatrixXd d(4, 6);
    d << 1, 1, 1, 0, 0, 0,  //
        0, 0, 0, 1, 1, 1,   //
        1, 0, 1, 0, 1, 0,   //
        0, 1, 0, 1, 0, 1;
    FitConfig cfg;
    cfg.rank = 2;
    cfg.kernel = KernelSpec::baseline();
    const auto m = initialize(BinaryMatrix::from_dense(d), nullptr, cfg);
    CHECK(max_abs(m.alpha) < 1e-10);
  }

  TEST_CASE("initializer respects the subspace in kernel mode") {
    const auto prob = small_problem(4);
    FitConfig cfg = linear_config(2);
    cfg.selector = RankSelector::energy(0.1);
    const auto b = build_basis(cfg.kernel, prob.e, cfg.selector);
    const auto m = initialize(prob.y, &b, cfg);
    CHECK(max_abs(b.project(m.v) - m.v) < 1e-10);
    CHECK(std::abs(m.alpha.sum()) < 1e-8 * m.n());
  }

  TEST_CASE("initializer rejects a rank above min(n, p)") {
    const BinaryMatrix y(3, 5, {{0, 0}});
    FitConfig cfg;
    cfg.rank = 4;
    cfg.kernel = KernelSpec::baseline();
    CHECK_THROWS_AS(initialize(y, nullptr, cfg), Error);
  }

  TEST_CASE("config validation") {
    FitConfig cfg;
    cfg.eta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = FitConfig{};
    cfg.box = BoxBounds{1.0, 1.0, 2.0};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.box = BoxBounds{1.0, 3.0, 2.0};
    CHECK_NOTHROW(cfg.validate());
  }

  TEST_CASE("step sizes follow the scale rules") {
    ModelParamsd m;
    m.alpha = VectorXd::Zero(3);
    m.u = MatrixXd::Zero(3, 1);
    m.v = MatrixXd::Zero(4, 1);
    m.u(0, 0) = 3.0;
    m.v(1, 0) = 4.0;
    const auto s = step_sizes(m, 0.5);
    CHECK(s.rho == doctest::Approx(0.5 / 12));
    CHECK(s.alpha == doctest::Approx(0.5 / 4));
    CHECK(s.u == doctest::Approx(0.5 / 25));
    CHECK(s.v == s.u);
  }

  TEST_CASE("a stationary feasible start is a fixed point") {
    auto rng = make_rng(5);
    const auto y = BinaryMatrix::from_dense(MatrixXd::Identity(4, 4));
    std::vector<Coord> all;
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j) all.emplace_back(i, j);
    const EntryMask mask(4, 4, all);
    ModelParamsd start;
    start.rho = -0.4;
    start.alpha = project_centering(random_normal(rng, 4, 1));
    start.u = random_normal(rng, 4, 2);
    start.v = start.u;
    FitConfig cfg;
    cfg.rank = 2;
    cfg.kernel = KernelSpec::baseline();
    cfg.max_iters = 25;
    cfg.tol = 0.0;
    const auto fit = pgd_fit(make_observations(y, &mask), nullptr, cfg, start);
    // a zero objective change stops the loop after one step
    CHECK(fit.iterations_run == 1);
    CHECK(fit.converged);
    CHECK(fit.params.rho == start.rho);
    CHECK(max_abs(fit.params.alpha - start.alpha) < 1e-15);
    CHECK(max_abs(fit.params.u - start.u) < 1e-14);
    CHECK(max_abs(fit.params.v - start.v) < 1e-14);
  }

  TEST_CASE("fit keeps iterates feasible and refreshes Gamma") {
    const auto prob = small_problem(6);
    FitConfig cfg = linear_config(2);
    cfg.selector = RankSelector::energy(0.05);
    const auto b = build_basis(cfg.kernel, prob.e, cfg.selector);
    const auto fit = pgd_fit(prob.y, &b, cfg);
    const auto& m = fit.params;
    CHECK(std::abs(m.alpha.sum()) < 1e-8);
    CHECK(max_abs(b.project(m.v) - m.v) < 1e-8);
    CHECK(max_abs(m.v.transpose() * VectorXd::Ones(m.p())) < 1e-8);
    REQUIRE(m.gamma.has_value());
    CHECK(max_abs(b.psi * *m.gamma - m.v) < 1e-8);
    CHECK(fit.objective_trace.size() == static_cast<std::size_t>(fit.iterations_run + 1));

    FitConfig base = cfg;
    base.kernel = KernelSpec::baseline();
    const auto bfit = pgd_fit(prob.y, nullptr, base);
    CHECK_FALSE(bfit.params.gamma.has_value());
    CHECK(std::abs(bfit.params.alpha.sum()) < 1e-8);
  }

  TEST_CASE("basis presence must match the kernel") {
    const auto prob = small_problem(7);
    FitConfig cfg = linear_config(2);
    CHECK_THROWS_AS(pgd_fit(prob.y, nullptr, cfg), Error);
  }

  TEST_CASE("descent improves on the initializer") {
    const auto prob = small_problem(8, 60, 300, 2);
    FitConfig cfg = linear_config(2);
    const auto b = build_basis(cfg.kernel, prob.e, cfg.selector);
    const auto init = initialize(prob.y, &b, cfg);
    const auto fit = pgd_fit(prob.y, &b, cfg);
    CHECK(relative_theta_error(logits(fit.params), prob.truth.theta_star) <
          relative_theta_error(logits(init), prob.truth.theta_star));
    CHECK(fit.objective_trace.back() < fit.objective_trace.front());
  }

  TEST_CASE("halving eta keeps the first step a descent step") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto prob = small_problem(seed);
      FitConfig cfg = linear_config(2);
      cfg.max_iters = 1;
      const auto b = build_basis(cfg.kernel, prob.e, cfg.selector);
      for (double eta : {0.5, 0.25, 0.125}) {
        cfg.eta = eta;
        const auto fit = pgd_fit(prob.y, &b, cfg);
        CHECK(fit.objective_trace[1] <= fit.objective_trace[0]);
      }
    }
  }

  TEST_CASE("rotated starts give the same trace") {
    const auto prob = small_problem(9);
    FitConfig cfg = linear_config(2);
    cfg.max_iters = 100;
    cfg.tol = 0.0;
    const auto b = build_basis(cfg.kernel, prob.e, cfg.selector);
    const auto init = initialize(prob.y, &b, cfg);
    auto rng = make_rng(9);
    ModelParamsd rotated = init;
    const MatrixXd o = kelp::test::random_orthogonal(rng, 2);
    rotated.u = init.u * o;
    rotated.v = init.v * o;
    const auto a = pgd_fit(make_observations(prob.y), &b, cfg, init);
    const auto c = pgd_fit(make_observations(prob.y), &b, cfg, rotated);
    REQUIRE(a.objective_trace.size() == c.objective_trace.size());
    for (std::size_t k = 0; k < a.objective_trace.size(); ++k)
      CHECK(std::abs(a.objective_trace[k] - c.objective_trace[k]) < 1e-6);
  }

  TEST_CASE("balance does not deteriorate") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto prob = small_problem(seed + 20);
      FitConfig cfg = linear_config(2);
      const auto b = build_basis(cfg.kernel, prob.e, cfg.selector);
      const auto init = initialize(prob.y, &b, cfg);
      const auto fit = pgd_fit(prob.y, &b, cfg);
      CHECK(balance_penalty(fit.params.u, fit.params.v) <=
            balance_penalty(init.u, init.v) + 1e-8);
    }
  }

  TEST_CASE("box projections hold after every fit") {
    const auto prob = small_problem(10);
    for (bool kernel : {true, false}) {
      FitConfig cfg = linear_config(2);
      if (!kernel) cfg.kernel = KernelSpec::baseline();
      cfg.box = BoxBounds{0.5, 1.2, 1.0};
      std::optional<KpcaBasisd> b;
      if (kernel) b = build_basis(cfg.kernel, prob.e, cfg.selector);
      const auto fit = pgd_fit(prob.y, b ? &*b : nullptr, cfg);
      const auto& m = fit.params;
      CHECK(m.rho >= -1.2);
      CHECK(m.rho <= -1.0);
      CHECK(m.alpha.cwiseAbs().maxCoeff() <= 0.5 * (1 + 1e-12));
      CHECK(std::abs(m.alpha.sum()) < 1e-8);
      CHECK(m.u.rowwise().squaredNorm().maxCoeff() <= 0.5 * (1 + 1e-12));
      if (kernel) {
        CHECK(m.gamma->squaredNorm() <= 0.5 * (1 + 1e-9));
        CHECK(max_abs(b->project(m.v) - m.v) < 1e-8);
      } else {
        CHECK(m.v.rowwise().squaredNorm().maxCoeff() <= 0.5 * (1 + 1e-12));
      }
    }
  }

  TEST_CASE("an oversized step is reported as divergence") {
    const auto prob = small_problem(11);
    FitConfig cfg = linear_config(2);
    cfg.eta = 1e12;
    const auto b = build_basis(cfg.kernel, prob.e, cfg.selector);
    try {
      pgd_fit(prob.y, &b, cfg);
      FAIL("expected divergence");
    } catch (const DivergenceError& err) {
      CHECK(err.trace().size() >= 2);
      CHECK(std::isfinite(err.trace().front()));
      CHECK_FALSE(std::isfinite(err.trace().back()));
    }
  }

  TEST_CASE("centered box projection is exact and idempotent") {
    auto rng = make_rng(77);
    const BoxBounds box{0.7, 3.0, 0.5};
    for (int trial = 0; trial < 50; ++trial) {
      ModelParamsd m;
      m.rho = -1.0;
      m.alpha = 2.0 * random_normal(rng, 9, 1);
      m.u = random_normal(rng, 9, 2);
      m.v = random_normal(rng, 6, 2);
      const VectorXd a = m.alpha;
      project_box(m, box, nullptr);
      CHECK(std::abs(m.alpha.sum()) < 1e-12);
      CHECK(m.alpha.cwiseAbs().maxCoeff() <= 0.7 + 1e-15);
      // KKT: a - alpha = lam on free coordinates
      const VectorXd shift = a - m.alpha;
      for (Index i = 0; i < 9; ++i)
        for (Index k = 0; k < 9; ++k)
          if (std::abs(m.alpha(i)) < 0.7 - 1e-9 && std::abs(m.alpha(k)) < 0.7 - 1e-9)
            CHECK(std::abs(shift(i) - shift(k)) < 1e-12);
      ModelParamsd again = m;
      project_box(again, box, nullptr);
      CHECK(max_abs(again.alpha - m.alpha) <= 1e-12);
      CHECK(max_abs(again.u - m.u) <= 1e-12);
      CHECK(max_abs(again.v - m.v) <= 1e-12);
    }
    ModelParamsd tiny;
    tiny.rho = -1.0;
    tiny.alpha = Eigen::Vector3d(1, 0, -1);
    tiny.u = MatrixXd::Zero(3, 1);
    tiny.v = MatrixXd::Zero(2, 1);
    project_box(tiny, BoxBounds{0.5, 2.0, 0.5}, nullptr);
    CHECK(max_abs(tiny.alpha - Eigen::Vector3d(0.5, 0, -0.5)) < 1e-15);
  }
}

