#include "selfevo/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "selfevo/error.hpp"
#include "selfevo/fpl.hpp"
#include "selfevo/rng.hpp"
#include "selfevo/textproc.hpp"

namespace selfevo {
namespace {

using json = nlohmann::ordered_json;

constexpr double kOffCandidateLogit = -30.0;

double percent2(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

QuestionFeatures features_of(const Dataset& data, const TestInstance& inst) {
  return to_features(inst.instance_id, inst.features, data.feature_dim);
}

const std::string& gold_of(const TestInstance& inst) {
  if (!inst.gold) throw InvalidArgument("instance " + inst.instance_id + " has no gold answer");
  return inst.gold->reveal();
}

// Deterministic value in [0,1) per instance for the base margins.
double instance_uniform(const std::string& id) {
  return static_cast<double>(splitmix64(fnv1a64(id)) >> 11) * 0x1.0p-53;
}

void write_column(PolicyParams& params, const TestInstance& inst, const std::map<std::size_t, double>& prob) {
  if (inst.features.empty()) throw InvalidArgument("instance " + inst.instance_id + " has no features");
  const FeatureEntry ctx = inst.features.front();
  if (ctx.value == 0.0) throw InvalidArgument("instance " + inst.instance_id + " has a zero context feature");
  for (std::size_t a = 0; a < params.vocab_size(); ++a) {
    const auto it = prob.find(a);
    const double logit = it == prob.end() ? kOffCandidateLogit : std::log(it->second);
    params.weights(a, ctx.index) = logit / ctx.value;
  }
}

const char* labeler_name(PseudoLabeler p) { return p == PseudoLabeler::fpl ? "fpl" : "majority"; }
const char* scheme_name(RewardScheme r) { return r == RewardScheme::hsr ? "hsr" : "binary"; }

json metrics_to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"recall", m.recall},   {"rouge1", m.rouge1},
          {"n_closed", m.n_closed}, {"n_open", m.n_open}};
}

}  // namespace

Metrics evaluate(const PolicyParams& params, const Dataset& data) {
  Metrics m;
  double correct = 0.0, recall = 0.0, rouge = 0.0;
  for (const auto& inst : data.instances) {
    const std::string& gold = gold_of(inst);
    const std::string& pred = data.vocab[greedy(params, features_of(data, inst))];
    if (data.kind_of(inst) == QuestionKind::closed) {
      ++m.n_closed;
      correct += normalize_answer(pred) == normalize_answer(gold);
    } else {
      ++m.n_open;
      const TokenSet p = tokenize(pred), g = tokenize(gold);
      recall += token_recall(p, g);
      rouge += rouge1_f1(p, g);
    }
  }
  if (m.n_closed) m.accuracy = percent2(correct / static_cast<double>(m.n_closed));
  if (m.n_open) {
    m.recall = percent2(recall / static_cast<double>(m.n_open));
    m.rouge1 = percent2(rouge / static_cast<double>(m.n_open));
  }
  return m;
}

double closed_accuracy(const PolicyParams& params, const Dataset& data) {
  std::size_t n = 0, correct = 0;
  for (const auto& inst : data.instances) {
    if (data.kind_of(inst) != QuestionKind::closed) continue;
    ++n;
    correct += normalize_answer(data.vocab[greedy(params, features_of(data, inst))]) ==
               normalize_answer(gold_of(inst));
  }
  return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

PolicyParams fit_base_policy(const Dataset& data, double target_accuracy) {
  if (!(target_accuracy > 0.0 && target_accuracy < 1.0))
    throw InvalidArgument("target accuracy must lie strictly between 0 and 1");
  PolicyParams params = PolicyParams::zeros(data.vocab.size(), data.feature_dim);

  // Closed questions, bucketed by their group column (second feature).
  std::map<std::size_t, std::vector<const TestInstance*>> groups;
  std::size_t n_closed = 0;
  for (const auto& inst : data.instances) {
    if (data.kind_of(inst) != QuestionKind::closed) continue;
    const std::size_t key = inst.features.size() > 1 ? inst.features[1].index : 0;
    groups[key].push_back(&inst);
    ++n_closed;
  }
  std::map<const TestInstance*, bool> wrong;
  if (n_closed > 0) {
    const auto n_right =
        static_cast<std::size_t>(std::llround(target_accuracy * static_cast<double>(n_closed)));
    const double reached = static_cast<double>(n_right) / static_cast<double>(n_closed);
    if (std::abs(reached - target_accuracy) > 0.02)
      throw InvalidArgument("target accuracy unreachable with " + std::to_string(n_closed) +
                            " closed questions (closest is " + std::to_string(reached) + ")");
    for (auto& [key, members] : groups) {
      std::stable_sort(members.begin(), members.end(), [](const TestInstance* a, const TestInstance* b) {
        return instance_uniform(a->instance_id + "#order") < instance_uniform(b->instance_id + "#order");
      });
    }
    std::map<std::size_t, std::size_t> taken;
    for (std::size_t k = 0; k < n_closed - n_right; ++k) {
      // Next error goes to the group with the lowest error fraction so far.
      std::size_t best_key = 0;
      double best_frac = 2.0;
      for (const auto& [key, members] : groups) {
        if (taken[key] == members.size()) continue;
        const double frac = static_cast<double>(taken[key]) / static_cast<double>(members.size());
        if (frac < best_frac) {
          best_frac = frac;
          best_key = key;
        }
      }
      wrong[groups[best_key][taken[best_key]++]] = true;
    }
  }

  for (const auto& inst : data.instances) {
    std::map<std::size_t, double> prob;
    const double u = instance_uniform(inst.instance_id);
    if (data.kind_of(inst) == QuestionKind::closed) {
      const auto gold = data.vocab.find(gold_of(inst));
      if (!gold) throw InvalidArgument("gold answer outside vocabulary for " + inst.instance_id);
      const double p_gold = wrong.count(&inst) ? 0.36 + 0.12 * u : 0.56 + 0.24 * u;
      std::vector<std::size_t> others;
      for (std::size_t c : inst.candidates)
        if (c != *gold) others.push_back(c);
      prob[*gold] = others.empty() ? 1.0 : p_gold;
      for (std::size_t c : others) prob[c] = (1.0 - p_gold) / static_cast<double>(others.size());
    } else if (!inst.base) {
      for (std::size_t c : inst.candidates) prob[c] = 1.0 / static_cast<double>(inst.candidates.size());
    } else {
      const auto gold = data.vocab.find(gold_of(inst));
      if (!gold) throw InvalidArgument("gold answer outside vocabulary for " + inst.instance_id);
      const TokenSet gold_tokens = tokenize(data.vocab[*gold]);
      std::vector<std::size_t> cluster, rest;
      for (std::size_t c : inst.candidates) {
        if (c == inst.base->lure) continue;
        const TokenSet t = tokenize(data.vocab[c]);
        (overlap(t, gold_tokens) == gold_tokens.size() ? cluster : rest).push_back(c);
      }
      const double lure = inst.base->lure_mass;
      const double rest_mass = rest.empty() ? 0.0 : 0.10;
      const double cluster_mass = 1.0 - lure - rest_mass;
      if (!(cluster_mass > 0.0) || cluster.empty())
        throw InvalidArgument("base profile leaves no mass for the answer cluster of " + inst.instance_id);
      prob[inst.base->lure] = lure;
      for (std::size_t c : rest) prob[c] = rest_mass / static_cast<double>(rest.size());
      if (inst.base->adversarial || cluster.size() == 1) {
        for (std::size_t c : cluster) prob[c] = cluster_mass / static_cast<double>(cluster.size());
      } else {
        for (std::size_t c : cluster)
          prob[c] = c == *gold ? cluster_mass / 2.0 : cluster_mass / 2.0 / static_cast<double>(cluster.size() - 1);
      }
    }
    write_column(params, inst, prob);
  }
  return params;
}

EvolutionResult run_evolution(const Dataset& data, const PolicyParams& base, const EvolutionConfig& cfg) {
  return evolve(strip_labels(data), base, cfg, [&](const PolicyParams& p) { return evaluate(p, data); });
}

HitrateResult hitrate_experiment(const PolicyParams& params, const Dataset& data,
                                 const std::vector<std::size_t>& n_values, std::uint64_t seed,
                                 const SamplerConfig& sampler, const EncoderSpec& encoder) {
  if (n_values.empty()) throw InvalidArgument("hitrate: no sample sizes given");
  HitrateResult out;
  for (std::size_t n : n_values) {
    if (n < 2) throw InvalidArgument("hitrate: sample sizes must be >= 2");
    std::vector<PseudoLabel> fpl, maj;
    std::vector<std::string> golds;
    std::vector<int> fpl_hits, maj_hits;
    for (const auto& inst : data.instances) {
      SamplerConfig s = sampler;
      s.seed = mix_seeds({seed, fnv1a64(inst.instance_id), n});
      Rollout rollout{inst.instance_id, {}};
      for (const Sample& d : sample(params, features_of(data, inst), s, n))
        rollout.responses.push_back({data.vocab[d.answer_index], d.logprob_old, d.answer_index});
      fpl.push_back(select_pseudo_label(embed_rollout(encoder, rollout)));
      maj.push_back(majority_vote(rollout));
      golds.push_back(gold_of(inst));
      fpl_hits.push_back(normalize_answer(fpl.back().text) == normalize_answer(golds.back()));
      maj_hits.push_back(normalize_answer(maj.back().text) == normalize_answer(golds.back()));
    }
    out.rows.push_back({"fpl", n, hit_rate(fpl, golds)});
    out.hits.push_back(std::move(fpl_hits));
    out.rows.push_back({"majority", n, hit_rate(maj, golds)});
    out.hits.push_back(std::move(maj_hits));
  }
  return out;
}

Interval bootstrap_mean_gap(const std::vector<int>& a, const std::vector<int>& b, std::size_t resamples,
                            double level, std::uint64_t seed) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("bootstrap: paired samples required");
  if (resamples == 0 || !(level > 0.0 && level < 1.0)) throw InvalidArgument("bootstrap: bad settings");
  const std::size_t n = a.size();
  Rng rng(seed);
  std::vector<double> gaps(resamples);
  for (auto& g : gaps) {
    long diff = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = rng.below(n);
      diff += a[i] - b[i];
    }
    g = static_cast<double>(diff) / static_cast<double>(n);
  }
  std::sort(gaps.begin(), gaps.end());
  const double tail = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
    return gaps[std::min(idx, resamples - 1)];
  };
  return {at(tail), at(1.0 - tail)};
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("spearman: need two aligned samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<AblationRow> ablation_run(const Dataset& data, const PolicyParams& base, const EvolutionConfig& cfg) {
  std::vector<AblationRow> rows;
  rows.push_back({"base", cfg.pseudo_labeler, cfg.reward_scheme, evaluate(base, data), {}});
  const UnlabeledDataset unlabeled = strip_labels(data);
  const struct {
    const char* name;
    PseudoLabeler labeler;
    RewardScheme scheme;
  } variants[] = {{"ttrl", PseudoLabeler::majority, RewardScheme::binary},
                  {"fpl_only", PseudoLabeler::fpl, RewardScheme::binary},
                  {"hsr_only", PseudoLabeler::majority, RewardScheme::hsr},
                  {"full", PseudoLabeler::fpl, RewardScheme::hsr}};
  for (const auto& v : variants) {
    EvolutionConfig c = cfg;
    c.pseudo_labeler = v.labeler;
    c.reward_scheme = v.scheme;
    EvolutionResult r = evolve(unlabeled, base, c);
    rows.push_back({v.name, v.labeler, v.scheme, evaluate(r.final_params, data), r.counters});
  }
  return rows;
}

std::string metrics_json(const Metrics& m) { return metrics_to_json(m).dump(); }

std::string hitrate_json(const HitrateResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back({{"method", row.method}, {"n", row.n}, {"hit_rate", row.hit_rate}});
  return json{{"rows", rows}}.dump();
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = {{"name", r.name}, {"metrics", metrics_to_json(r.metrics)}};
    if (r.name != "base") {
      j["pseudo_labeler"] = labeler_name(r.pseudo_labeler);
      j["reward_scheme"] = scheme_name(r.reward_scheme);
      j["counters"] = {{"fpl_calls", r.counters.fpl_calls},
                       {"majority_calls", r.counters.majority_calls},
                       {"binary_routes", r.counters.binary_routes},
                       {"soft_routes", r.counters.soft_routes},
                       {"skipped_steps", r.counters.skipped_steps}};
    }
    out.push_back(j);
  }
  return out.dump();
}

Benchmark default_benchmark() {
  Benchmark b;
  b.config.steps = 200;
  b.config.eval_interval = 10;
  b.config.grpo.learning_rate = 1.0;
  return b;
}

SyntheticSpec adversarial_family(std::size_t n_instances, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_contexts = n_instances;
  s.closed_fraction = 0.0;
  s.adversarial = true;
  s.seed = seed;
  return s;
}

}  // namespace selfevo
