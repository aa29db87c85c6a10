#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfevo/dataset.hpp"
#include "selfevo/embedder.hpp"
#include "selfevo/grpo.hpp"
#include "selfevo/policy.hpp"
#include "selfevo/reward.hpp"

namespace selfevo {

enum class PseudoLabeler { fpl, majority };
enum class RewardScheme { hsr, binary };

struct EvolutionConfig {
  std::size_t n_label = 32;  // responses used for pseudo-label selection
  std::size_t n_train = 16;  // leading responses used for rewards and GRPO
  SamplerConfig sampler;     // seed is overridden per instance and step
  RewardConfig reward;
  GrpoConfig grpo;
  std::size_t steps = 200;
  double ema_decay = 0.99;
  std::size_t eval_interval = 10;  // 0 disables snapshots
  PseudoLabeler pseudo_labeler = PseudoLabeler::fpl;
  RewardScheme reward_scheme = RewardScheme::hsr;
  EncoderSpec encoder;
  std::string encoder_table_path;  // set when the encoder came from a table file
  std::uint64_t seed = 0;

  void validate() const;
};

std::string config_to_json(const EvolutionConfig& cfg);
/// Keys present in `json` override `defaults`; unknown keys are an error.
EvolutionConfig config_from_json(std::string_view json, const EvolutionConfig& defaults = {});
std::uint64_t config_hash(const EvolutionConfig& cfg);

/// Greedy-decoding scores, percentages rounded to 2 decimals.
struct Metrics {
  double accuracy = 0.0;  // closed questions, exact match
  double recall = 0.0;    // open questions, token recall
  double rouge1 = 0.0;    // open questions, unigram F1
  std::size_t n_closed = 0;
  std::size_t n_open = 0;
};

struct RunRecord {
  std::size_t step = 0;
  StepReport report;
  double ema_reward = 0.0;
  std::optional<Metrics> eval;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t params_hash = 0;     // after the update
  std::uint64_t reference_hash = 0;  // reference policy after any refresh
};

/// How often each pseudo-labeler and reward route ran.
struct EvolutionCounters {
  std::size_t fpl_calls = 0;
  std::size_t majority_calls = 0;
  std::size_t binary_routes = 0;
  std::size_t soft_routes = 0;  // open-mode hard-soft rewards
  std::size_t skipped_steps = 0;
};

/// The label-free loop. It only ever holds an UnlabeledDataset, and each
/// step runs under a LabelSeal.
class Evolver {
 public:
  Evolver(UnlabeledDataset data, PolicyParams base, EvolutionConfig cfg);

  RunRecord step();

  const PolicyParams& params() const noexcept { return state_.current; }
  const PolicyParams& reference() const noexcept { return state_.reference; }
  std::size_t steps_done() const noexcept { return state_.steps_done; }
  const EvolutionCounters& counters() const noexcept { return counters_; }
  const EvolutionConfig& config() const noexcept { return cfg_; }

  /// Batch drawn at a given step (distinct instance positions).
  std::vector<std::size_t> batch_for_step(std::size_t step) const;
  /// Rollout group for one instance at one step, sampled from the reference.
  Group build_group(const UnlabeledInstance& inst, std::size_t step);

 private:
  UnlabeledDataset data_;
  EvolutionConfig cfg_;
  TrainerState state_;
  EvolutionCounters counters_;
  std::uint64_t config_hash_ = 0;
  double ema_ = 0.0;
};

using SnapshotFn = std::function<Metrics(const PolicyParams&)>;

struct EvolutionResult {
  PolicyParams final_params;
  std::vector<RunRecord> records;
  EvolutionCounters counters;
};

/// Runs cfg.steps steps. `snapshot` (optional) is called outside the seal
/// every eval_interval steps and after the last step.
EvolutionResult evolve(const UnlabeledDataset& data, const PolicyParams& base, const EvolutionConfig& cfg,
                       const SnapshotFn& snapshot = {});

std::string run_log_jsonl(const std::vector<RunRecord>& records);
/// Columns step,mean_reward,ema_reward,accuracy,recall,rouge1; eval columns
/// are blank on steps without a snapshot.
std::string metrics_csv(const std::vector<RunRecord>& records);

}  // namespace selfevo
