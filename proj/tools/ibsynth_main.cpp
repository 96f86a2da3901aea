// SPDX-License-Identifier: Apache-2.0
// ibsynth command line: concept selection, answer synthesis and simulation.
#include "ibsynth/errors.hpp"
#include "ibsynth/metrics.hpp"
#include "ibsynth/pipeline.hpp"
#include "ibsynth/simulator.hpp"
#include "ibsynth/text.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

namespace {

using namespace ibsynth;

constexpr int kExitConfig = 1;
constexpr int kExitRun = 2;

struct Overrides {
  std::string config;
  std::optional<double> beta;
  std::optional<double> tau;
  std::optional<int> num_descriptions;
  std::optional<int> num_candidates;
  std::optional<std::size_t> negatives;
  std::optional<int> rounds;
  std::optional<std::string> policy;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mock_lmm;
  std::optional<unsigned> workers;
};

RunConfig load_config(const Overrides& o) {
  if (o.config.empty()) throw ConfigError("--config is required for this subcommand");
  RunConfig c = load_run_config(o.config);
  if (o.beta) c.beta_hat = *o.beta;
  if (o.tau) c.tau = *o.tau;
  if (o.num_descriptions) c.num_descriptions = *o.num_descriptions;
  if (o.num_candidates) c.num_candidates = *o.num_candidates;
  if (o.negatives) c.negatives = *o.negatives;
  if (o.rounds) c.max_rounds = *o.rounds;
  if (o.policy) c.policy = filter_policy_from_string(*o.policy);
  if (o.seed) c.seed = *o.seed;
  if (o.mock_lmm) c.mock_lmm_script = fs::absolute(*o.mock_lmm);
  if (o.workers) c.workers = *o.workers;
  c.validate();
  return c;
}

void print_report(const RoundReport& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["counts"] = r.counts();
  j["new_examples"] = r.new_examples;
  j["cumulative_examples"] = r.cumulative_examples;
  j["dataset"] = r.dataset.string();
  std::cout << j.dump() << "\n";
}

std::vector<LabeledResponse> load_responses(const fs::path& path) {
  std::vector<LabeledResponse> out;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(read_existing_file(path))) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.value("image_id", std::string()), j.at("answer").get<std::string>(),
                     j.at("label").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw ConfigError(path.string() + " has no responses");
  return out;
}

nlohmann::ordered_json judge_json(const JudgeResult& r) {
  nlohmann::ordered_json j;
  j["available"] = r.available;
  j["value"] = r.value ? nlohmann::ordered_json(*r.value) : nlohmann::ordered_json(nullptr);
  j["evaluated"] = r.evaluated;
  j["missing"] = r.missing;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ibsynth: information-bottleneck guided synthesis of explanation data"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "run.toml path");
  app.add_option("--beta", o.beta, "selection threshold multiplier");
  app.add_option("--tau", o.tau, "InfoNCE temperature");
  app.add_option("--num-descriptions", o.num_descriptions, "descriptions per image (n)");
  app.add_option("--num-candidates", o.num_candidates, "candidates per image per round (m)");
  app.add_option("--negatives", o.negatives, "negative pool size (K)");
  app.add_option("--rounds", o.rounds, "maximum rejection-sampling rounds");
  app.add_option("--policy", o.policy, "paper_literal or label_first");
  app.add_option("--seed", o.seed, "run seed");
  app.add_option("--mock-lmm", o.mock_lmm, "mock LMM script (JSONL) for every chat endpoint");
  app.add_option("--workers", o.workers, "worker threads");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto* describe = app.add_subcommand("describe", "sample descriptions for every image");
  auto* score = app.add_subcommand("score-concepts", "describe, then score and select concepts");
  int round = 0;
  auto* synth = app.add_subcommand("synthesize", "build round 0 or run a rejection-sampling round");
  synth->add_option("--round", round, "round number")->required();
  int emit_round = 0;
  std::optional<std::string> mix_with;
  auto* emit = app.add_subcommand("emit", "write conversations JSONL for a round");
  emit->add_option("--round", emit_round, "round number")->required();
  emit->add_option("--mix-with", mix_with, "JSONL appended after the round's conversations");

  std::string sim_out = "simulate";
  PrecisionExperiment exp;
  double eps = 0.1;
  auto* sim = app.add_subcommand("simulate", "synthetic-world precision curve and MI convergence toy");
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--trials", exp.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
  sim->add_option("--coverage", exp.coverage_prob, "chance a true concept is mentioned")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--noise", exp.noise_prob, "chance a false concept is mentioned")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--eps", eps, "description channel flip probability for the MI toy");

  std::string responses;
  std::optional<std::string> eval_out;
  auto* eval = app.add_subcommand("eval", "accuracy and judge metrics over a responses JSONL");
  eval->add_option("--responses", responses, "JSONL of {image_id, answer, label}")->required();
  eval->add_option("--out", eval_out, "also write the metrics JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*sim) {
      if (o.seed) exp.seed = *o.seed;
      if (o.tau) exp.tau = *o.tau;
      if (o.negatives) exp.negatives = *o.negatives;
      if (o.workers) exp.workers = static_cast<int>(*o.workers);
      const PrecisionCurve curve = run_precision_experiment(exp);
      const auto toy = theorem1_convergence_check(eps, {1, 2, 3, 4});
      atomic_write(fs::path(sim_out) / "precision_curve.json", to_json(curve).dump(2) + "\n");
      atomic_write(fs::path(sim_out) / "theorem1.json", to_json(toy).dump(2) + "\n");
      std::cout << to_json(curve).dump() << "\n";
      return 0;
    }

    if (*eval) {
      const auto rs = load_responses(responses);
      nlohmann::ordered_json j;
      j["responses"] = rs.size();
      j["accuracy"] = accuracy(rs);
      if (!o.config.empty()) {
        const RunConfig c = load_config(o);
        if (c.judge) {
          auto judge = make_chat_provider(c, *c.judge, "judge");
          const ConceptLibrary lib = load_concept_sets(c.concepts);
          std::vector<JudgeItem> items;
          for (const auto& r : rs) {
            const std::string label = normalize_label(r.label);
            items.push_back({r.answer, label, lib.contains(label) ? lib.at(label).concepts : std::vector<std::string>{}});
          }
          j["ee"] = judge_json(judge_metric(items, *judge, JudgeMetric::EE, c.retry));
          j["cs"] = judge_json(judge_metric(items, *judge, JudgeMetric::CS, c.retry));
        }
      }
      if (eval_out) atomic_write(*eval_out, j.dump(2) + "\n");
      std::cout << j.dump() << "\n";
      return 0;
    }

    const RunConfig config = load_config(o);
    Pipeline pipeline(config, make_providers(config));

    if (*describe) {
      const auto outcomes = pipeline.describe();
      bool short_any = false;
      for (const auto& d : outcomes) short_any = short_any || !d || d->set.entries.empty();
      std::cout << "described " << outcomes.size() << " images\n";
      return short_any ? kExitRun : 0;
    }
    if (*score) {
      pipeline.score_concepts();
      std::cout << "scored " << pipeline.records().size() << " images\n";
      return 0;
    }
    if (*synth) {
      if (round < 0) throw ConfigError("--round must be >= 0");
      const RoundReport r = round == 0 ? pipeline.build_round0() : pipeline.run_round(round);
      print_report(r);
      return r.has_failures() ? kExitRun : 0;
    }
    if (*emit) {
      const fs::path out = pipeline.emit_finetune_dataset(emit_round, mix_with ? std::optional<fs::path>(*mix_with) : std::nullopt);
      std::cout << out.string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("run error: {}", e.what());
    return kExitRun;
  }
  return 0;
}
