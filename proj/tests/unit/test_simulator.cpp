// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ibsynth/embedder.hpp"
#include "ibsynth/errors.hpp"
#include "ibsynth/simulator.hpp"

#include "support/oracles.hpp"

#include <cmath>
#include <set>

using namespace ibsynth;

TEST_CASE("brute-force MI reference values") {
  CHECK(brute_force_mi({{0.25, 0.25}, {0.25, 0.25}}) == doctest::Approx(0.0));
  CHECK(brute_force_mi({{0.5, 0.0}, {0.0, 0.5}}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // One use of a symmetric channel with flip 0.1: I = H(0.5) - H(0.1).
  const double i = brute_force_mi({{0.45, 0.05}, {0.05, 0.45}});
  CHECK(i == doctest::Approx(0.368064).epsilon(1e-6));
  CHECK(i == doctest::Approx(std::log(2.0) - oracle::h2(0.1)).epsilon(1e-12));
  CHECK_THROWS_AS(brute_force_mi({{0.5, 0.6}}), NumericError);
  CHECK_THROWS_AS(brute_force_mi({{-0.1, 1.1}}), NumericError);
  CHECK_THROWS_AS(brute_force_mi({}), NumericError);
}

TEST_CASE("MI is symmetric and non-negative") {
  const std::vector<std::vector<double>> t{{0.1, 0.2, 0.05}, {0.3, 0.05, 0.3}};
  std::vector<std::vector<double>> tt(3, std::vector<double>(2));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 3; ++b) tt[b][a] = t[a][b];
  CHECK(brute_force_mi(t) == doctest::Approx(brute_force_mi(tt)).epsilon(1e-12));
  CHECK(brute_force_mi(t) >= -1e-12);
}

TEST_CASE("MI toy: monotone convergence and noiseless limit") {
  const auto pts = theorem1_convergence_check(0.1, {1, 2, 3, 4});
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].mi_dz >= pts[i - 1].mi_dz);
    CHECK(pts[i].gap < pts[i - 1].gap);
  }
  for (const auto& p : pts) CHECK(p.gap >= -1e-12);
  const auto clean = theorem1_convergence_check(0.0, {1});
  CHECK(std::abs(clean[0].gap) < 1e-12);
  CHECK_THROWS(theorem1_convergence_check(0.6, {1}));
}

TEST_CASE("world descriptions: degenerate probabilities and determinism") {
  const auto u = default_concept_universe();
  CHECK(u.size() == 12);
  const LatentImage exact{{0, 3, 5}, 1.0, 0.0, 42};
  for (const auto& d : sample_world_descriptions(u, exact, 5)) {
    for (std::size_t c = 0; c < u.size(); ++c) {
      const bool mentioned = d.find(u[c]) != std::string::npos;
      CHECK(mentioned == (c == 0 || c == 3 || c == 5));
    }
  }
  const LatentImage noisy{{1, 2}, 0.5, 0.2, 7};
  CHECK(sample_world_descriptions(u, noisy, 10) == sample_world_descriptions(u, noisy, 10));
  const LatentImage never{{1}, 0.0, 0.0, 1};
  CHECK_THROWS_AS(sample_world_descriptions(u, never, 1), NumericError);
  CHECK_THROWS(sample_world_descriptions(u, exact, 0));
}

TEST_CASE("noiseless world gives perfect precision at any temperature") {
  PrecisionExperiment e;
  e.coverage_prob = 1.0;
  e.noise_prob = 0.0;
  e.trials = 20;
  for (double tau : {0.07, 1.0}) {
    e.tau = tau;
    for (const auto& p : run_precision_experiment(e).points) CHECK(p.mean_precision == 1.0);
  }
}

TEST_CASE("precision experiment is deterministic") {
  PrecisionExperiment e;
  e.trials = 30;
  const auto a = run_precision_experiment(e);
  e.workers = 1;
  const auto b = run_precision_experiment(e);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i].mean_precision == b.points[i].mean_precision);
  e.n_values = {5, 1};
  CHECK_THROWS(run_precision_experiment(e));
}

TEST_CASE("default universe embeds without bucket collisions") {
  const auto u = default_concept_universe();
  const PrecisionExperiment e;
  std::vector<std::string> texts = u;
  texts.push_back("The image shows");
  DeterministicEmbedder emb(e.embed_dim);
  const auto v = emb.embed_texts(texts);
  for (std::size_t a = 0; a < v.size(); ++a)
    for (std::size_t b = a + 1; b < v.size(); ++b) CHECK(oracle::dot(v[a].values, v[b].values) == 0.0);
}
