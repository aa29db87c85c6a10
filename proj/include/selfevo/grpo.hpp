#pragma once

#include <span>
#include <vector>

#include "selfevo/policy.hpp"

namespace selfevo {

/// Rewards standardized within one rollout group.
struct AdvantageSet {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // population
  bool degenerate = false;  // stddev == 0, all values zero
};

/// A_i = (r_i - mean) / std with population statistics. Requires N >= 2.
AdvantageSet advantages(std::span<const double> rewards);

struct GrpoConfig {
  double epsilon = 0.2;
  double kl_coeff = 0.04;
  double learning_rate = 5e-7;
  std::size_t refresh_period = 1;
  std::size_t batch_size = 4;

  void validate() const;
};

/// One instance's training rollout: sampled answers with the reference
/// log-probabilities recorded at sampling time, plus their advantages.
struct Group {
  QuestionFeatures features;
  std::vector<Sample> samples;
  std::vector<double> rewards;
  AdvantageSet adv;
};

Group make_group(QuestionFeatures features, std::vector<Sample> samples, std::vector<double> rewards);

struct SurrogateTerm {
  double ratio = 1.0;
  double value = 0.0;
  bool clip_binding = false;  // clipped branch strictly below the unclipped one
};

struct SurrogateResult {
  double value = 0.0;  // mean over terms
  Matrix gradient;
  std::vector<SurrogateTerm> terms;
  double clipped_fraction = 0.0;
};

/// Clipped surrogate mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)
/// with rho_i = pi(a_i) / pi_old(a_i) from the recorded log-probabilities,
/// and its exact gradient. Throws NumericError on a non-finite ratio.
SurrogateResult clipped_surrogate(const PolicyParams& params, const Group& group, double epsilon);

struct ObjectiveResult {
  double value = 0.0;  // surrogate - kl_coeff * KL
  double surrogate = 0.0;
  double kl = 0.0;
  double clipped_fraction = 0.0;
  Matrix gradient;
};

ObjectiveResult objective(const PolicyParams& params, const PolicyParams& params_old, const Group& group,
                          const GrpoConfig& cfg);

struct StepReport {
  double objective_value = 0.0;
  double mean_reward = 0.0;
  double kl_value = 0.0;  // mean KL(new || old) over the batch after the update
  double clipped_fraction = 0.0;
  bool skipped = false;
};

struct StepResult {
  PolicyParams params;
  StepReport report;
};

/// One ascent step W += lr * mean_g grad J_g over all groups of the batch.
/// Degenerate groups contribute zero; an all-degenerate batch is skipped
/// and returns the parameters unchanged.
StepResult step(const PolicyParams& params, const PolicyParams& params_old, std::span<const Group> batch,
                const GrpoConfig& cfg);

/// Current and reference policies of a running optimization.
struct TrainerState {
  PolicyParams current;
  PolicyParams reference;
  std::size_t steps_done = 0;
};

/// reference <- copy of current.
TrainerState refresh_reference(TrainerState state);

}  // namespace selfevo
