// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ibsynth {

/// Exact mutual information (nats) of a joint probability table p[a][b].
/// Throws NumericError unless entries are >= 0 and sum to 1 within 1e-9.
double brute_force_mi(const std::vector<std::vector<double>>& joint);

double binary_entropy(double p);  // nats

struct ConvergencePoint {
  int n = 0;
  double mi_dz = 0.0;  // I(D; Z)
  double mi_xz = 0.0;  // I(X; Z)
  double gap = 0.0;    // I(X; Z) - I(D; Z)
};

/// Toy world: X ~ Bernoulli(1/2); Z is X through a binary symmetric channel
/// with flip probability `z_flip`; each of n descriptions is an independent
/// copy of X through a channel with flip probability `eps`. I(D; Z) is
/// computed by enumerating all 2^n description vectors.
std::vector<ConvergencePoint> theorem1_convergence_check(double eps, const std::vector<int>& n_values,
                                                         double z_flip = 0.2);

/// Image in the synthetic world: a hidden subset of the concept universe.
struct LatentImage {
  std::vector<std::size_t> true_concepts;  // indices into the universe
  double coverage_prob = 1.0;              // each true concept mentioned
  double noise_prob = 0.0;                 // each other concept mentioned
  std::uint64_t seed = 0;
};

/// n descriptions, each independently mentioning true concepts with
/// coverage_prob and other concepts with noise_prob, in shuffled order.
/// Empty draws are resampled up to `resample_budget` times, then an error.
std::vector<std::string> sample_world_descriptions(const std::vector<std::string>& universe,
                                                   const LatentImage& latent, int n, int resample_budget = 50);

/// Twelve concept phrases with pairwise disjoint vocabulary.
std::vector<std::string> default_concept_universe();

struct PrecisionExperiment {
  std::vector<std::string> universe = default_concept_universe();
  std::size_t k = 4;
  double coverage_prob = 0.4;
  double noise_prob = 0.1;
  std::vector<int> n_values{1, 5, 10, 25};
  int trials = 200;
  double tau = 0.07;
  std::uint64_t seed = 20240601;
  std::size_t negatives = 32;
  int negative_images = 8;
  int descriptions_per_negative_image = 5;
  int embed_dim = 4096;
  int workers = 0;  // 0: hardware concurrency
};

struct PrecisionPoint {
  int n = 0;
  double mean_precision = 0.0;
  int trials = 0;
};

struct PrecisionCurve {
  std::vector<PrecisionPoint> points;
};

/// Per trial: hidden Z_true of size k, n descriptions (nested prefixes of
/// one draw across n values), negatives from other synthetic images, scoring
/// with the deterministic embedder, top-k by rank, precision against Z_true.
PrecisionCurve run_precision_experiment(const PrecisionExperiment& config);

nlohmann::ordered_json to_json(const PrecisionCurve& curve);
nlohmann::ordered_json to_json(const std::vector<ConvergencePoint>& points);

}  // namespace ibsynth
