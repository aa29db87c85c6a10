#pragma once

#include <string>
#include <vector>

#include "selfevo/embedder.hpp"

namespace selfevo {

struct Response {
  std::string answer_text;
  double logprob_old = 0.0;  // log pi_old(answer | x), <= 0
  std::size_t answer_index = 0;
};

/// N sampled answers for one instance, kept in sampling order.
struct Rollout {
  std::string instance_id;
  std::vector<Response> responses;

  std::size_t size() const noexcept { return responses.size(); }
  std::vector<std::string> texts() const;
  /// The first `n` responses (the training subgroup).
  Rollout prefix(std::size_t n) const;
};

struct EmbeddedRollout {
  Rollout rollout;
  std::vector<EmbeddingVector> embeddings;  // aligned with responses
  std::vector<double> centroid;             // entrywise mean, not renormalized
};

struct PseudoLabel {
  std::string text;
  std::size_t source_index = 0;
  double distance_to_centroid = 0.0;  // -1 for majority votes
};

EmbeddedRollout embed_rollout(const EncoderSpec& spec, const Rollout& rollout);

/// Response nearest (L2) to the embedding centroid; ties go to the lowest
/// index. Requires N >= 2.
PseudoLabel select_pseudo_label(const EmbeddedRollout& er);

/// Most frequent normalized answer; ties go to the earliest first occurrence.
PseudoLabel majority_vote(const Rollout& rollout);

/// Fraction of labels whose normalized text equals the normalized gold.
double hit_rate(const std::vector<PseudoLabel>& labels, const std::vector<std::string>& golds);

}  // namespace selfevo
