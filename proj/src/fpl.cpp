#include "selfevo/fpl.hpp"

#include <map>

#include "selfevo/error.hpp"
#include "selfevo/textproc.hpp"

namespace selfevo {

std::vector<std::string> Rollout::texts() const {
  std::vector<std::string> out;
  out.reserve(responses.size());
  for (const auto& r : responses) out.push_back(r.answer_text);
  return out;
}

Rollout Rollout::prefix(std::size_t n) const {
  if (n > responses.size()) throw InvalidArgument("rollout prefix longer than rollout");
  return Rollout{instance_id, {responses.begin(), responses.begin() + static_cast<long>(n)}};
}

EmbeddedRollout embed_rollout(const EncoderSpec& spec, const Rollout& rollout) {
  if (rollout.responses.empty()) throw InvalidArgument("embed_rollout: empty rollout");
  EmbeddedRollout er{rollout, {}, std::vector<double>(spec.dim(), 0.0)};
  er.embeddings.reserve(rollout.size());
  for (const auto& r : rollout.responses) {
    er.embeddings.push_back(encode(spec, r.answer_text));
    const auto& v = er.embeddings.back().values;
    for (std::size_t k = 0; k < v.size(); ++k) er.centroid[k] += v[k];
  }
  const double n = static_cast<double>(rollout.size());
  for (double& c : er.centroid) c /= n;
  return er;
}

PseudoLabel select_pseudo_label(const EmbeddedRollout& er) {
  const std::size_t n = er.rollout.size();
  if (n < 2) throw InvalidArgument("pseudo-label selection needs at least 2 responses");
  if (er.embeddings.size() != n) throw InvalidArgument("embeddings not aligned with rollout");

  std::size_t best = 0;
  double best_dist = l2_distance(er.embeddings[0].values, er.centroid);
  for (std::size_t i = 1; i < n; ++i) {
    const double d = l2_distance(er.embeddings[i].values, er.centroid);
    if (d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return {er.rollout.responses[best].answer_text, best, best_dist};
}

PseudoLabel majority_vote(const Rollout& rollout) {
  if (rollout.responses.empty()) throw InvalidArgument("majority_vote: empty rollout");
  struct Tally {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::map<std::string, Tally> tally;
  for (std::size_t i = 0; i < rollout.size(); ++i) {
    auto [it, inserted] = tally.try_emplace(normalize_answer(rollout.responses[i].answer_text));
    if (inserted) it->second.first = i;
    ++it->second.count;
  }
  const Tally* best = nullptr;
  for (const auto& [key, t] : tally) {
    if (!best || t.count > best->count || (t.count == best->count && t.first < best->first))
      best = &t;
  }
  return {rollout.responses[best->first].answer_text, best->first, -1.0};
}

double hit_rate(const std::vector<PseudoLabel>& labels, const std::vector<std::string>& golds) {
  if (labels.size() != golds.size())
    throw InvalidArgument("hit_rate: " + std::to_string(labels.size()) + " labels vs " +
                          std::to_string(golds.size()) + " golds");
  if (labels.empty()) throw InvalidArgument("hit_rate: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    hits += normalize_answer(labels[i].text) == normalize_answer(golds[i]);
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace selfevo
