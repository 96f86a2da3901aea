// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/simulator.hpp"

#include "ibsynth/concept_selector.hpp"
#include "ibsynth/embedder.hpp"
#include "ibsynth/errors.hpp"
#include "ibsynth/metrics.hpp"
#include "ibsynth/parallel.hpp"
#include "ibsynth/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace ibsynth {

double brute_force_mi(const std::vector<std::vector<double>>& joint) {
  if (joint.empty() || joint.front().empty()) throw NumericError("brute_force_mi: empty table");
  const std::size_t cols = joint.front().size();
  std::vector<double> pa(joint.size(), 0.0);
  std::vector<double> pb(cols, 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < joint.size(); ++a) {
    if (joint[a].size() != cols) throw NumericError("brute_force_mi: ragged table");
    for (std::size_t b = 0; b < cols; ++b) {
      const double p = joint[a][b];
      if (!(p >= 0.0) || !std::isfinite(p)) throw NumericError("brute_force_mi: negative or non-finite entry");
      pa[a] += p;
      pb[b] += p;
      total += p;
    }
  }
  if (std::abs(total - 1.0) > 1e-9) throw NumericError("brute_force_mi: table does not sum to 1");
  double mi = 0.0;
  for (std::size_t a = 0; a < joint.size(); ++a) {
    for (std::size_t b = 0; b < cols; ++b) {
      const double p = joint[a][b];
      if (p > 0.0) mi += p * std::log(p / (pa[a] * pb[b]));
    }
  }
  return std::max(mi, 0.0);
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

std::vector<ConvergencePoint> theorem1_convergence_check(double eps, const std::vector<int>& n_values,
                                                         double z_flip) {
  if (!(eps >= 0.0 && eps < 0.5)) throw NumericError("theorem1: eps must lie in [0, 0.5)");
  if (!(z_flip >= 0.0 && z_flip <= 1.0)) throw NumericError("theorem1: z_flip must lie in [0, 1]");

  auto channel = [](double flip, int in, int out) { return in == out ? 1.0 - flip : flip; };

  std::vector<std::vector<double>> xz(2, std::vector<double>(2, 0.0));
  for (int x = 0; x < 2; ++x) {
    for (int z = 0; z < 2; ++z) xz[x][z] = 0.5 * channel(z_flip, x, z);
  }
  const double mi_xz = brute_force_mi(xz);

  std::vector<ConvergencePoint> out;
  for (int n : n_values) {
    if (n < 1 || n > 20) throw NumericError("theorem1: n must lie in [1, 20]");
    const std::size_t outcomes = std::size_t{1} << n;
    std::vector<std::vector<double>> dz(outcomes, std::vector<double>(2, 0.0));
    for (std::size_t d = 0; d < outcomes; ++d) {
      for (int x = 0; x < 2; ++x) {
        double pd = 1.0;
        for (int i = 0; i < n; ++i) pd *= channel(eps, x, static_cast<int>((d >> i) & 1U));
        for (int z = 0; z < 2; ++z) dz[d][z] += 0.5 * pd * channel(z_flip, x, z);
      }
    }
    ConvergencePoint pt;
    pt.n = n;
    pt.mi_dz = brute_force_mi(dz);
    pt.mi_xz = mi_xz;
    pt.gap = mi_xz - pt.mi_dz;
    out.push_back(pt);
  }
  return out;
}

namespace {

// splitmix64 finalizer; keeps nearby run seeds from sharing trial streams.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

std::vector<std::size_t> sample_subset(std::size_t universe, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(universe);
  for (std::size_t i = 0; i < universe; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + bounded(rng, universe - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<std::string> sample_world_descriptions(const std::vector<std::string>& universe,
                                                   const LatentImage& latent, int n, int resample_budget) {
  if (n < 1) throw NumericError("sample_world_descriptions: n must be >= 1");
  if (latent.true_concepts.empty()) throw NumericError("sample_world_descriptions: empty true concept set");
  std::vector<bool> is_true(universe.size(), false);
  for (auto i : latent.true_concepts) {
    if (i >= universe.size()) throw NumericError("sample_world_descriptions: concept index out of range");
    is_true[i] = true;
  }
  std::mt19937_64 rng(latent.seed);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int d = 0; d < n; ++d) {
    std::vector<std::string> mentioned;
    for (int tries = 0; tries <= resample_budget && mentioned.empty(); ++tries) {
      for (std::size_t c = 0; c < universe.size(); ++c) {
        const double p = is_true[c] ? latent.coverage_prob : latent.noise_prob;
        if (uniform01(rng) < p) mentioned.push_back(universe[c]);
      }
    }
    if (mentioned.empty()) throw NumericError("sample_world_descriptions: every draw was empty");
    shuffle(mentioned, rng);
    out.push_back("The image shows " + join(mentioned, ", ") + ".");
  }
  return out;
}

std::vector<std::string> default_concept_universe() {
  return {"bright red plumage",   "black facial mask",   "pointed head crest",  "thick orange bill",
          "yellow throat patch",  "olive green back",    "white wing bars",     "streaked buff breast",
          "long forked tail",     "pale eye ring",       "webbed gray feet",    "chestnut flank stripes"};
}

PrecisionCurve run_precision_experiment(const PrecisionExperiment& cfg) {
  if (cfg.trials < 1) throw NumericError("precision experiment: trials must be >= 1");
  if (cfg.n_values.empty() || !std::is_sorted(cfg.n_values.begin(), cfg.n_values.end()) ||
      std::adjacent_find(cfg.n_values.begin(), cfg.n_values.end()) != cfg.n_values.end()) {
    throw NumericError("precision experiment: n_values must be strictly increasing");
  }
  if (cfg.k == 0 || cfg.k > cfg.universe.size()) throw NumericError("precision experiment: bad k");

  const int max_n = cfg.n_values.back();
  const std::size_t trials = static_cast<std::size_t>(cfg.trials);
  std::vector<std::vector<double>> precision(trials, std::vector<double>(cfg.n_values.size(), 0.0));
  ConceptSet concepts{"synthetic", cfg.universe};

  auto run_trial = [&](std::size_t t) {
    DeterministicEmbedder embedder(cfg.embed_dim);
    const std::uint64_t trial_seed = mix64(cfg.seed) ^ static_cast<std::uint64_t>(t);
    std::mt19937_64 rng(trial_seed);

    LatentImage target{sample_subset(cfg.universe.size(), cfg.k, rng), cfg.coverage_prob, cfg.noise_prob, rng()};
    const auto descriptions = sample_world_descriptions(cfg.universe, target, max_n);

    std::vector<PoolCandidate> others;
    for (int img = 0; img < cfg.negative_images; ++img) {
      LatentImage other{sample_subset(cfg.universe.size(), cfg.k, rng), cfg.coverage_prob, cfg.noise_prob, rng()};
      const std::string id = "neg" + std::to_string(img);
      for (auto& text : sample_world_descriptions(cfg.universe, other, cfg.descriptions_per_negative_image)) {
        others.push_back({id, std::move(text)});
      }
    }
    const NegativePool pool = build_negative_pool(others, "target", cfg.negatives, rng(), embedder);

    std::set<std::string> truth;
    for (auto i : target.true_concepts) truth.insert(cfg.universe[i]);

    for (std::size_t p = 0; p < cfg.n_values.size(); ++p) {
      DescriptionSet set;
      set.image_id = "target";
      for (int i = 0; i < cfg.n_values[p]; ++i) set.entries.push_back({"sim", i, descriptions[static_cast<std::size_t>(i)]});
      auto scored = score_all_concepts(set, concepts, pool, cfg.tau, embedder);
      std::vector<std::string> topk(cfg.k);
      for (const auto& s : scored) {
        if (s.rank <= static_cast<int>(cfg.k)) topk[static_cast<std::size_t>(s.rank - 1)] = s.text;
      }
      precision[t][p] = selection_precision(topk, truth, cfg.k);
    }
  };

  parallel_for(trials, cfg.workers > 0 ? static_cast<unsigned>(cfg.workers) : 0u, run_trial);

  PrecisionCurve curve;
  for (std::size_t p = 0; p < cfg.n_values.size(); ++p) {
    double sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) sum += precision[t][p];
    curve.points.push_back({cfg.n_values[p], sum / static_cast<double>(trials), cfg.trials});
  }
  return curve;
}

nlohmann::ordered_json to_json(const PrecisionCurve& curve) {
  nlohmann::ordered_json j;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : curve.points) {
    j["points"].push_back({{"n", p.n}, {"mean_precision", p.mean_precision}, {"trials", p.trials}});
  }
  return j;
}

nlohmann::ordered_json to_json(const std::vector<ConvergencePoint>& points) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    j.push_back({{"n", p.n}, {"mi_dz", p.mi_dz}, {"mi_xz", p.mi_xz}, {"gap", p.gap}});
  }
  return j;
}

}  // namespace ibsynth
