#include "selfevo/reward.hpp"

#include <algorithm>

#include "selfevo/error.hpp"
#include "selfevo/textproc.hpp"

namespace selfevo {

const char* to_string(QuestionKind kind) noexcept {
  return kind == QuestionKind::closed ? "closed" : "open";
}

QuestionKind question_kind_from_string(std::string_view s) {
  if (s == "closed") return QuestionKind::closed;
  if (s == "open") return QuestionKind::open;
  throw InvalidArgument("unknown question kind \"" + std::string(s) + "\"");
}

QuestionKind infer_question_kind(const std::vector<std::string>& candidate_answers) {
  if (candidate_answers.empty()) return QuestionKind::open;
  for (const auto& a : candidate_answers) {
    const std::string n = normalize_answer(a);
    if (n != "yes" && n != "no") return QuestionKind::open;
  }
  return QuestionKind::closed;
}

void RewardConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta <= 1.0))
    throw InvalidArgument("reward weights need alpha >= 0, beta >= 0, alpha + beta <= 1");
}

double binary_reward(std::string_view candidate, std::string_view pseudo) {
  return normalize_answer(candidate) == normalize_answer(pseudo) ? 1.0 : 0.0;
}

std::vector<double> semantic_rewards(const EncoderSpec& spec,
                                     const std::vector<std::string>& rollout_texts,
                                     std::string_view pseudo) {
  if (rollout_texts.empty()) throw InvalidArgument("semantic reward over an empty rollout");
  const EmbeddingVector anchor = encode(spec, pseudo);
  std::vector<double> dist(rollout_texts.size());
  double max_dist = 0.0;
  for (std::size_t j = 0; j < rollout_texts.size(); ++j) {
    dist[j] = l2_distance(encode(spec, rollout_texts[j]).values, anchor.values);
    max_dist = std::max(max_dist, dist[j]);
  }
  std::vector<double> out(rollout_texts.size(), 1.0);
  if (max_dist == 0.0) return out;
  for (std::size_t j = 0; j < dist.size(); ++j) out[j] = 1.0 - dist[j] / max_dist;
  return out;
}

double semantic_reward(const EncoderSpec& spec, const std::vector<std::string>& rollout_texts,
                       std::size_t i, std::string_view pseudo) {
  if (i >= rollout_texts.size()) throw InvalidArgument("semantic_reward: index out of range");
  return semantic_rewards(spec, rollout_texts, pseudo)[i];
}

namespace {

RewardBreakdown combine(const RewardConfig& cfg, std::string_view candidate, std::string_view pseudo,
                        double semantic, QuestionKind mode) {
  RewardBreakdown b;
  b.mode = mode;
  b.binary = binary_reward(candidate, pseudo);
  if (mode == QuestionKind::closed) {
    b.composite = b.binary;
    return b;
  }
  b.jaccard = jaccard(tokenize(candidate), tokenize(pseudo));
  b.semantic = semantic;
  // Rounding can push the weighted sum an ulp past 1.
  b.composite = std::clamp(
      cfg.alpha * b.binary + cfg.beta * b.jaccard + cfg.semantic_weight() * b.semantic, 0.0, 1.0);
  return b;
}

}  // namespace

RewardBreakdown composite_reward(const RewardConfig& cfg, const EncoderSpec& spec,
                                 const std::vector<std::string>& rollout_texts, std::size_t i,
                                 std::string_view pseudo, QuestionKind mode) {
  cfg.validate();
  if (i >= rollout_texts.size()) throw InvalidArgument("composite_reward: index out of range");
  const double sem = mode == QuestionKind::open ? semantic_reward(spec, rollout_texts, i, pseudo) : 0.0;
  return combine(cfg, rollout_texts[i], pseudo, sem, mode);
}

std::vector<RewardBreakdown> reward_rollout(const RewardConfig& cfg, const EncoderSpec& spec,
                                            const Rollout& rollout, const PseudoLabel& pseudo,
                                            QuestionKind mode) {
  cfg.validate();
  const std::vector<std::string> texts = rollout.texts();
  std::vector<double> sem(texts.size(), 0.0);
  if (mode == QuestionKind::open) sem = semantic_rewards(spec, texts, pseudo.text);
  std::vector<RewardBreakdown> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i)
    out.push_back(combine(cfg, texts[i], pseudo.text, sem[i], mode));
  return out;
}

}  // namespace selfevo
