#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfevo/dataset.hpp"
#include "selfevo/evolution.hpp"

namespace selfevo {

/// Greedy decoding on every instance. Needs a gold answer everywhere.
Metrics evaluate(const PolicyParams& params, const Dataset& data);

/// Exact greedy accuracy on closed questions as a fraction in [0,1].
double closed_accuracy(const PolicyParams& params, const Dataset& data);

/// Builds the base policy the generator intends: closed questions get a
/// gold probability above 1/2 on round(target * n_closed) instances spread
/// evenly over groups and below 1/2 elsewhere; open questions get the
/// profile stored with the instance (lure mass, cluster mass). Answers
/// outside an instance's candidates sit 30 nats below. Throws
/// InvalidArgument unless 0 < target < 1 and the closed count allows
/// hitting the target within 2 points.
PolicyParams fit_base_policy(const Dataset& data, double target_accuracy);

/// Strips labels, evolves, and evaluates snapshots against the golds.
EvolutionResult run_evolution(const Dataset& data, const PolicyParams& base, const EvolutionConfig& cfg);

struct HitrateRow {
  std::string method;  // "fpl" or "majority"
  std::size_t n = 0;
  double hit_rate = 0.0;
};

struct HitrateResult {
  std::vector<HitrateRow> rows;
  /// hits[k][i] for rows[k] and instance i (1 = pseudo label equals gold).
  std::vector<std::vector<int>> hits;
};

HitrateResult hitrate_experiment(const PolicyParams& params, const Dataset& data,
                                 const std::vector<std::size_t>& n_values, std::uint64_t seed,
                                 const SamplerConfig& sampler = {}, const EncoderSpec& encoder = {});

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Percentile bootstrap interval of mean(a) - mean(b) over paired samples.
Interval bootstrap_mean_gap(const std::vector<int>& a, const std::vector<int>& b, std::size_t resamples,
                            double level, std::uint64_t seed);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct AblationRow {
  std::string name;
  PseudoLabeler pseudo_labeler = PseudoLabeler::fpl;
  RewardScheme reward_scheme = RewardScheme::hsr;
  Metrics metrics;
  EvolutionCounters counters;
};

/// Rows: base, ttrl (majority + binary), fpl_only, hsr_only, full.
std::vector<AblationRow> ablation_run(const Dataset& data, const PolicyParams& base, const EvolutionConfig& cfg);

std::string metrics_json(const Metrics& m);
std::string hitrate_json(const HitrateResult& r);
std::string ablation_json(const std::vector<AblationRow>& rows);

/// Seeded default benchmark: 64 contexts, V = 66, D = 68, 200 steps.
struct Benchmark {
  SyntheticSpec spec;
  double target_accuracy = 0.7;
  EvolutionConfig config;
};
Benchmark default_benchmark();

/// All-open adversarial family used for pseudo-label hit rates.
SyntheticSpec adversarial_family(std::size_t n_instances = 240, std::uint64_t seed = 7);

}  // namespace selfevo
