#include "doctest.h"

#include "kelp/kernel.hpp"
#include "kelp/simulation.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace kelp;
using kelp::test::max_abs;

namespace {

SimConfig config(Index n, Index p, std::uint64_t seed, Mapping mapping = Mapping::Linear) {
  SimConfig sc;
  sc.n = n;
  sc.p = p;
  sc.seed = seed;
  sc.mapping = mapping;
  return sc;
}

void check_truth_invariants(const GroundTruth& t, Index n, Index p) {
  const double np = static_cast<double>(n * p);
  CHECK(std::abs(t.alpha_star.sum()) < 1e-8);
  CHECK(max_abs(t.v_star.transpose() * VectorXd::Ones(p)) < 1e-8 * std::sqrt(np));
  CHECK(max_abs(t.u_star.transpose() * VectorXd::Ones(n)) < 1e-8 * std::sqrt(np));
  CHECK((t.u_star * t.v_star.transpose()).squaredNorm() == doctest::Approx(np).epsilon(1e-8));
  const MatrixXd gu = t.u_star.transpose() * t.u_star;
  const MatrixXd gv = t.v_star.transpose() * t.v_star;
  CHECK(max_abs(gu - gv) < 1e-8 * gu.norm());
  MatrixXd rest = t.theta_star;
  rest.colwise() -= t.alpha_star;
  rest.array() -= t.rho_star;
  CHECK(rest.squaredNorm() == doctest::Approx(np).epsilon(1e-8));
}

}  // namespace

TEST_SUITE("simulation") {
  TEST_CASE("embeddings have unit rows") {
    const auto emb = gen_semantic_embeddings(config(10, 200, 1));
    CHECK(emb.table.rows() == 200);
    CHECK(emb.table.dim() == 50);
    const VectorXd norms = emb.table.matrix().rowwise().norm();
    CHECK(((norms.array() - 1.0).abs() < 1e-12).all());
    for (Index z : emb.assignments) CHECK((z >= 0 && z < 10));
  }

  TEST_CASE("zero perturbation puts every point on its center") {
    SimConfig sc = config(10, 60, 2);
    sc.perturb = 0.0;
    const auto emb = gen_semantic_embeddings(sc);
    const MatrixXd& e = emb.table.matrix();
    for (Index j = 0; j < e.rows(); ++j)
      for (Index l = 0; l < e.rows(); ++l)
        if (emb.assignments[j] == emb.assignments[l]) CHECK(e.row(j) == e.row(l));
  }

  TEST_CASE("clusters are tighter than the background") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto emb = gen_semantic_embeddings(config(10, 300, seed));
      const MatrixXd g = emb.table.matrix() * emb.table.matrix().transpose();
      double within = 0, across = 0;
      long nw = 0, na = 0;
      for (Index j = 0; j < g.rows(); ++j)
        for (Index l = j + 1; l < g.rows(); ++l) {
          if (emb.assignments[j] == emb.assignments[l]) {
            within += g(j, l);
            ++nw;
          } else {
            across += g(j, l);
            ++na;
          }
        }
      CHECK(within / nw > across / na);
    }
  }

  TEST_CASE("ground truth invariants for both mappings") {
    for (auto mapping : {Mapping::Linear, Mapping::NonlinearTanh}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const SimConfig sc = config(30, 150, seed, mapping);
        const auto emb = gen_semantic_embeddings(sc);
        const auto t = gen_ground_truth(sc, emb.table);
        CHECK(t.u_star.cols() == 8);
        check_truth_invariants(t, 30, 150);
      }
    }
  }

  TEST_CASE("linear truth lies in the linear-kernel KPCA span") {
    const SimConfig sc = config(30, 200, 4);
    const auto emb = gen_semantic_embeddings(sc);
    const auto t = gen_ground_truth(sc, emb.table);
    const auto b = build_basis(KernelSpec::linear(), emb.table, RankSelector::energy(1e-9));
    CHECK(b.q == 50);
    CHECK(max_abs(b.project(t.v_star) - t.v_star) < 1e-6);
  }

  TEST_CASE("very negative logits give an empty matrix") {
    GroundTruth t;
    t.theta_star = MatrixXd::Constant(5, 7, -1000.0);
    CHECK(sample_matrix(t, 1).nnz() == 0);
  }

  TEST_CASE("default intercept gives roughly 23 percent ones") {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const SimConfig sc = config(100, 1000, seed);
      const auto emb = gen_semantic_embeddings(sc);
      const auto t = gen_ground_truth(sc, emb.table);
      const double frac = sample_matrix(t, seed).one_fraction();
      CHECK(frac >= 0.20);
      CHECK(frac <= 0.26);
      total += frac;
    }
    CHECK(total / 5 == doctest::Approx(0.23).epsilon(0.1));
  }

  TEST_CASE("sampling is deterministic and separate from truth generation") {
    const SimConfig sc = config(20, 40, 5);
    const auto emb = gen_semantic_embeddings(sc);
    const auto t = gen_ground_truth(sc, emb.table);
    CHECK(sample_matrix(t, 3) == sample_matrix(t, 3));
    CHECK(sample_matrix(t, 3) != sample_matrix(t, 4));
    const auto again = gen_ground_truth(sc, emb.table);
    CHECK(again.theta_star == t.theta_star);
  }

  TEST_CASE("lower intercept gives fewer ones") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const SimConfig sc = config(50, 300, seed);
      const auto emb = gen_semantic_embeddings(sc);
      const auto t = gen_ground_truth(sc, emb.table);
      const auto sparse = with_intercept(t, -3.0);
      CHECK(expected_one_fraction(sparse) < expected_one_fraction(t));
      CHECK(sample_matrix(sparse, seed).one_fraction() < sample_matrix(t, seed).one_fraction());
    }
  }

  TEST_CASE("intercept calibration hits a target fraction") {
    const SimConfig sc = config(50, 300, 6);
    const auto emb = gen_semantic_embeddings(sc);
    const auto t = gen_ground_truth(sc, emb.table);
    const double rho = calibrate_intercept(t, 0.10);
    CHECK(expected_one_fraction(with_intercept(t, rho)) == doctest::Approx(0.10).epsilon(1e-9));
    CHECK(rho < -1.5);
  }

  TEST_CASE("invalid configurations are rejected") {
    SimConfig sc = config(10, 5, 1);
    sc.rank = 8;
    CHECK_THROWS_AS(sc.validate(), Error);
    sc = config(10, 5, 1);
    sc.rank = 2;
    sc.clusters = 6;
    CHECK_THROWS_AS(sc.validate(), Error);
    sc.clusters = 2;
    sc.perturb = -1;
    CHECK_THROWS_AS(sc.validate(), Error);
    CHECK_THROWS_AS(parse_mapping("cubic"), Error);
    CHECK(parse_mapping("nonlinear") == Mapping::NonlinearTanh);
  }

  TEST_CASE("noise embeddings are unit rows of the requested shape") {
    const auto e = noise_embeddings(30, 7, 2);
    CHECK(e.rows() == 30);
    CHECK(e.dim() == 7);
    CHECK(((e.matrix().rowwise().norm().array() - 1.0).abs() < 1e-12).all());
  }
}
