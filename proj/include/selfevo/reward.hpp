#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "selfevo/embedder.hpp"
#include "selfevo/fpl.hpp"

namespace selfevo {

enum class QuestionKind { closed, open };

const char* to_string(QuestionKind kind) noexcept;
QuestionKind question_kind_from_string(std::string_view s);

/// Fallback routing when an instance carries no kind annotation: every
/// candidate normalizes into {yes, no} means closed.
QuestionKind infer_question_kind(const std::vector<std::string>& candidate_answers);

/// Weights of the hard-soft reward. The semantic weight is 1 - alpha - beta.
struct RewardConfig {
  double alpha = 0.85;
  double beta = 0.05;

  double semantic_weight() const noexcept { return 1.0 - alpha - beta; }
  void validate() const;
};

struct RewardBreakdown {
  double binary = 0.0;
  double jaccard = 0.0;
  double semantic = 0.0;
  double composite = 0.0;
  QuestionKind mode = QuestionKind::closed;
};

/// 1 iff the normalized strings are equal.
double binary_reward(std::string_view candidate, std::string_view pseudo);

/// 1 - d_i / max_j d_j with d_j the L2 distance between the encodings of
/// texts[j] and `pseudo`. Returns 1 for every i when the max is 0.
double semantic_reward(const EncoderSpec& spec, const std::vector<std::string>& rollout_texts,
                       std::size_t i, std::string_view pseudo);

/// semantic_reward for every member, encoding each text once.
std::vector<double> semantic_rewards(const EncoderSpec& spec,
                                     const std::vector<std::string>& rollout_texts,
                                     std::string_view pseudo);

RewardBreakdown composite_reward(const RewardConfig& cfg, const EncoderSpec& spec,
                                 const std::vector<std::string>& rollout_texts, std::size_t i,
                                 std::string_view pseudo, QuestionKind mode);

/// One breakdown per response of the (training) rollout.
std::vector<RewardBreakdown> reward_rollout(const RewardConfig& cfg, const EncoderSpec& spec,
                                            const Rollout& rollout, const PseudoLabel& pseudo,
                                            QuestionKind mode);

}  // namespace selfevo
