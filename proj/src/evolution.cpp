#include "selfevo/evolution.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "selfevo/error.hpp"
#include "selfevo/fpl.hpp"
#include "selfevo/rng.hpp"

namespace selfevo {
namespace {

using json = nlohmann::ordered_json;

const char* to_string(PseudoLabeler p) { return p == PseudoLabeler::fpl ? "fpl" : "majority"; }
const char* to_string(RewardScheme r) { return r == RewardScheme::hsr ? "hsr" : "binary"; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw InvalidArgument("unknown config key \"" + where + key + "\"");
  }
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json encoder_json(const EvolutionConfig& cfg) {
  if (cfg.encoder.kind() == EncoderKind::external_table)
    return {{"kind", "external_table"}, {"path", cfg.encoder_table_path}};
  return {{"kind", "hashed_ngram"},
          {"dim", cfg.encoder.dim()},
          {"ngram_orders", cfg.encoder.ngram_orders()},
          {"seed", cfg.encoder.seed()}};
}

}  // namespace

void EvolutionConfig::validate() const {
  if (n_train < 2) throw InvalidArgument("n_train must be >= 2");
  if (n_label < n_train) throw InvalidArgument("n_label must be >= n_train");
  sampler.validate();
  reward.validate();
  grpo.validate();
  encoder.validate();
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw InvalidArgument("ema_decay must be in (0, 1)");
}

std::string config_to_json(const EvolutionConfig& cfg) {
  json j;
  j["n_label"] = cfg.n_label;
  j["n_train"] = cfg.n_train;
  j["steps"] = cfg.steps;
  j["ema_decay"] = cfg.ema_decay;
  j["eval_interval"] = cfg.eval_interval;
  j["seed"] = cfg.seed;
  j["pseudo_labeler"] = to_string(cfg.pseudo_labeler);
  j["reward_scheme"] = to_string(cfg.reward_scheme);
  j["sampler"] = {{"temperature", cfg.sampler.temperature}, {"top_p", cfg.sampler.top_p}};
  j["reward"] = {{"alpha", cfg.reward.alpha}, {"beta", cfg.reward.beta}};
  j["grpo"] = {{"epsilon", cfg.grpo.epsilon},
               {"kl_coeff", cfg.grpo.kl_coeff},
               {"learning_rate", cfg.grpo.learning_rate},
               {"refresh_period", cfg.grpo.refresh_period},
               {"batch_size", cfg.grpo.batch_size}};
  j["encoder"] = encoder_json(cfg);
  return j.dump();
}

EvolutionConfig config_from_json(std::string_view text, const EvolutionConfig& defaults) {
  EvolutionConfig cfg = defaults;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  try {
    reject_unknown(j,
                   {"n_label", "n_train", "steps", "ema_decay", "eval_interval", "seed", "pseudo_labeler",
                    "reward_scheme", "sampler", "reward", "grpo", "encoder"},
                   "");
    read_if(j, "n_label", cfg.n_label);
    read_if(j, "n_train", cfg.n_train);
    read_if(j, "steps", cfg.steps);
    read_if(j, "ema_decay", cfg.ema_decay);
    read_if(j, "eval_interval", cfg.eval_interval);
    read_if(j, "seed", cfg.seed);
    if (j.contains("pseudo_labeler")) {
      const auto s = j["pseudo_labeler"].get<std::string>();
      if (s == "fpl") cfg.pseudo_labeler = PseudoLabeler::fpl;
      else if (s == "majority") cfg.pseudo_labeler = PseudoLabeler::majority;
      else throw InvalidArgument("pseudo_labeler must be fpl or majority");
    }
    if (j.contains("reward_scheme")) {
      const auto s = j["reward_scheme"].get<std::string>();
      if (s == "hsr") cfg.reward_scheme = RewardScheme::hsr;
      else if (s == "binary") cfg.reward_scheme = RewardScheme::binary;
      else throw InvalidArgument("reward_scheme must be hsr or binary");
    }
    if (j.contains("sampler")) {
      const auto& s = j["sampler"];
      reject_unknown(s, {"temperature", "top_p"}, "sampler.");
      read_if(s, "temperature", cfg.sampler.temperature);
      read_if(s, "top_p", cfg.sampler.top_p);
    }
    if (j.contains("reward")) {
      const auto& r = j["reward"];
      reject_unknown(r, {"alpha", "beta"}, "reward.");
      read_if(r, "alpha", cfg.reward.alpha);
      read_if(r, "beta", cfg.reward.beta);
    }
    if (j.contains("grpo")) {
      const auto& g = j["grpo"];
      reject_unknown(g, {"epsilon", "kl_coeff", "learning_rate", "refresh_period", "batch_size"}, "grpo.");
      read_if(g, "epsilon", cfg.grpo.epsilon);
      read_if(g, "kl_coeff", cfg.grpo.kl_coeff);
      read_if(g, "learning_rate", cfg.grpo.learning_rate);
      read_if(g, "refresh_period", cfg.grpo.refresh_period);
      read_if(g, "batch_size", cfg.grpo.batch_size);
    }
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      reject_unknown(e, {"kind", "dim", "ngram_orders", "seed", "path"}, "encoder.");
      const auto kind = e.value("kind", std::string("hashed_ngram"));
      if (kind == "external_table") {
        cfg.encoder_table_path = e.at("path").get<std::string>();
        cfg.encoder = load_external_table(cfg.encoder_table_path);
      } else if (kind == "hashed_ngram") {
        std::size_t dim = cfg.encoder.kind() == EncoderKind::hashed_ngram ? cfg.encoder.dim()
                                                                           : EncoderSpec::kDefaultDim;
        std::vector<int> orders = cfg.encoder.kind() == EncoderKind::hashed_ngram
                                      ? cfg.encoder.ngram_orders()
                                      : std::vector<int>{1, 2};
        std::uint64_t seed = cfg.encoder.seed();
        read_if(e, "dim", dim);
        read_if(e, "ngram_orders", orders);
        read_if(e, "seed", seed);
        cfg.encoder = EncoderSpec::hashed(dim, orders, seed);
        cfg.encoder_table_path.clear();
      } else {
        throw InvalidArgument("encoder.kind must be hashed_ngram or external_table");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::uint64_t config_hash(const EvolutionConfig& cfg) { return fnv1a64(config_to_json(cfg)); }

Evolver::Evolver(UnlabeledDataset data, PolicyParams base, EvolutionConfig cfg)
    : data_(std::move(data)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (data_.instances.empty()) throw InvalidArgument("evolution needs at least one instance");
  if (base.vocab_size() != data_.vocab.size() || base.feature_dim() != data_.feature_dim)
    throw InvalidArgument("base policy shape does not match the dataset");
  state_.current = base;
  state_.reference = std::move(base);
  config_hash_ = config_hash(cfg_);
}

std::vector<std::size_t> Evolver::batch_for_step(std::size_t step) const {
  // Stratified by question kind so every batch mirrors the dataset's
  // closed/open mix; reward means are then comparable across steps.
  std::vector<std::size_t> closed, open;
  for (std::size_t i = 0; i < data_.instances.size(); ++i)
    (data_.instances[i].kind == QuestionKind::closed ? closed : open).push_back(i);
  const std::size_t n = data_.instances.size();
  const std::size_t b = std::min(cfg_.grpo.batch_size, n);
  auto n_closed = static_cast<std::size_t>(
      std::llround(static_cast<double>(b) * static_cast<double>(closed.size()) / static_cast<double>(n)));
  n_closed = std::clamp(n_closed, b > open.size() ? b - open.size() : 0, std::min(b, closed.size()));

  Rng rng(mix_seeds(cfg_.seed, "batch", step));
  std::vector<std::size_t> batch;
  auto draw = [&](std::vector<std::size_t>& pool, std::size_t k) {
    // Partial Fisher-Yates: the first k positions are the draw.
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    batch.insert(batch.end(), pool.begin(), pool.begin() + static_cast<long>(k));
  };
  draw(closed, n_closed);
  draw(open, b - n_closed);
  return batch;
}

Group Evolver::build_group(const UnlabeledInstance& inst, std::size_t step) {
  QuestionFeatures q = to_features(inst.instance_id, inst.features, data_.feature_dim);
  SamplerConfig sampler = cfg_.sampler;
  sampler.seed = mix_seeds({cfg_.seed, fnv1a64(inst.instance_id), step});
  std::vector<Sample> draws = sample(state_.reference, q, sampler, cfg_.n_label);

  Rollout rollout{inst.instance_id, {}};
  rollout.responses.reserve(draws.size());
  for (const Sample& s : draws) rollout.responses.push_back({data_.vocab[s.answer_index], s.logprob_old, s.answer_index});

  PseudoLabel pseudo;
  if (cfg_.pseudo_labeler == PseudoLabeler::fpl) {
    ++counters_.fpl_calls;
    pseudo = select_pseudo_label(embed_rollout(cfg_.encoder, rollout));
  } else {
    ++counters_.majority_calls;
    pseudo = majority_vote(rollout);
  }

  const Rollout train = rollout.prefix(cfg_.n_train);
  QuestionKind route = QuestionKind::closed;
  if (cfg_.reward_scheme == RewardScheme::hsr && inst.kind == QuestionKind::open) route = QuestionKind::open;
  ++(route == QuestionKind::open ? counters_.soft_routes : counters_.binary_routes);

  const auto breakdown = reward_rollout(cfg_.reward, cfg_.encoder, train, pseudo, route);
  std::vector<double> rewards;
  rewards.reserve(breakdown.size());
  for (const auto& b : breakdown) rewards.push_back(b.composite);
  draws.resize(cfg_.n_train);
  return make_group(std::move(q), std::move(draws), std::move(rewards));
}

RunRecord Evolver::step() {
  LabelSeal seal;
  const std::size_t t = state_.steps_done;
  std::vector<Group> batch;
  for (std::size_t idx : batch_for_step(t)) batch.push_back(build_group(data_.instances[idx], t));

  StepResult result = selfevo::step(state_.current, state_.reference, batch, cfg_.grpo);
  if (result.report.skipped) ++counters_.skipped_steps;
  state_.current = std::move(result.params);
  ++state_.steps_done;
  if (state_.steps_done % cfg_.grpo.refresh_period == 0) state_ = refresh_reference(std::move(state_));

  ema_ = t == 0 ? result.report.mean_reward
                : cfg_.ema_decay * ema_ + (1.0 - cfg_.ema_decay) * result.report.mean_reward;
  RunRecord rec;
  rec.step = t;
  rec.report = result.report;
  rec.ema_reward = ema_;
  rec.config_hash = config_hash_;
  rec.seed = cfg_.seed;
  rec.params_hash = params_fingerprint(state_.current);
  rec.reference_hash = params_fingerprint(state_.reference);
  return rec;
}

EvolutionResult evolve(const UnlabeledDataset& data, const PolicyParams& base, const EvolutionConfig& cfg,
                       const SnapshotFn& snapshot) {
  Evolver ev(data, base, cfg);
  EvolutionResult out;
  out.records.reserve(cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    RunRecord rec = ev.step();
    const bool due = cfg.eval_interval > 0 && ((t + 1) % cfg.eval_interval == 0 || t + 1 == cfg.steps);
    if (snapshot && due) rec.eval = snapshot(ev.params());
    out.records.push_back(std::move(rec));
  }
  out.final_params = ev.params();
  out.counters = ev.counters();
  return out;
}

std::string run_log_jsonl(const std::vector<RunRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["step"] = r.step;
    j["objective"] = r.report.objective_value;
    j["mean_reward"] = r.report.mean_reward;
    j["kl"] = r.report.kl_value;
    j["clipped_fraction"] = r.report.clipped_fraction;
    j["skipped"] = r.report.skipped;
    j["ema_reward"] = r.ema_reward;
    if (r.eval) {
      j["eval"] = {{"accuracy", r.eval->accuracy}, {"recall", r.eval->recall}, {"rouge1", r.eval->rouge1}};
    } else {
      j["eval"] = nullptr;
    }
    j["params_hash"] = hex64(r.params_hash);
    j["reference_hash"] = hex64(r.reference_hash);
    j["config_hash"] = hex64(r.config_hash);
    j["seed"] = r.seed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<RunRecord>& records) {
  std::string out = "step,mean_reward,ema_reward,accuracy,recall,rouge1\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.10f,%.10f", r.step, r.report.mean_reward, r.ema_reward);
    out += buf;
    if (r.eval) {
      std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%.2f\n", r.eval->accuracy, r.eval->recall, r.eval->rouge1);
    } else {
      std::snprintf(buf, sizeof buf, ",,,\n");
    }
    out += buf;
  }
  return out;
}

}  // namespace selfevo
