#include "selfevo/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "selfevo/error.hpp"

namespace selfevo {

AdvantageSet advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw InvalidArgument("advantages need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  AdvantageSet out;
  double sum = 0.0;
  for (double r : rewards) sum += r;
  out.mean = sum / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - out.mean) * (r - out.mean);
  out.stddev = std::sqrt(ss / n);
  out.values.assign(rewards.size(), 0.0);
  if (out.stddev == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) out.values[i] = (rewards[i] - out.mean) / out.stddev;
  return out;
}

void GrpoConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must be in (0, 1)");
  if (!(kl_coeff >= 0.0)) throw InvalidArgument("kl_coeff must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidArgument("learning_rate must be > 0");
  if (refresh_period == 0) throw InvalidArgument("refresh_period must be >= 1");
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
}

Group make_group(QuestionFeatures features, std::vector<Sample> samples, std::vector<double> rewards) {
  if (samples.size() != rewards.size()) throw InvalidArgument("samples and rewards differ in length");
  Group g{std::move(features), std::move(samples), std::move(rewards), {}};
  g.adv = advantages(g.rewards);
  return g;
}

SurrogateResult clipped_surrogate(const PolicyParams& params, const Group& group, double epsilon) {
  const std::size_t n = group.samples.size();
  if (n == 0 || group.adv.values.size() != n) throw InvalidArgument("group advantages not aligned");
  const std::vector<double> lp = log_probs(params, group.features);
  std::vector<double> pi(lp.size());
  for (std::size_t a = 0; a < lp.size(); ++a) pi[a] = std::exp(lp[a]);

  SurrogateResult out;
  out.gradient = Matrix(params.vocab_size(), params.feature_dim());
  out.terms.reserve(n);
  // Sum of coeff_i (e_{a_i} - pi) collapses to one vector before the outer product.
  std::vector<double> dz(lp.size(), 0.0);
  double coeff_total = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = group.samples[i];
    if (s.answer_index >= lp.size()) throw InvalidArgument("sample answer index out of range");
    const double a = group.adv.values[i];
    const double rho = std::exp(lp[s.answer_index] - s.logprob_old);
    if (!std::isfinite(rho))
      throw NumericError("non-finite probability ratio for sample " + std::to_string(i));
    const double unclipped = rho * a;
    const double clipped_val = std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon) * a;
    SurrogateTerm t{rho, std::min(unclipped, clipped_val), clipped_val < unclipped};
    out.value += t.value;
    if (t.clip_binding) {
      ++clipped;
    } else {
      const double coeff = unclipped;  // d(rho A)/dW = rho A grad log pi
      dz[s.answer_index] += coeff;
      coeff_total += coeff;
    }
    out.terms.push_back(t);
  }
  for (std::size_t a = 0; a < dz.size(); ++a) dz[a] -= coeff_total * pi[a];
  const double inv_n = 1.0 / static_cast<double>(n);
  out.gradient.add_outer(dz, group.features.phi, inv_n);
  out.value *= inv_n;
  out.clipped_fraction = static_cast<double>(clipped) * inv_n;
  return out;
}

ObjectiveResult objective(const PolicyParams& params, const PolicyParams& params_old, const Group& group,
                          const GrpoConfig& cfg) {
  SurrogateResult s = clipped_surrogate(params, group, cfg.epsilon);
  ObjectiveResult out;
  out.surrogate = s.value;
  out.clipped_fraction = s.clipped_fraction;
  out.gradient = std::move(s.gradient);
  if (cfg.kl_coeff != 0.0) {
    out.kl = kl_exact(params, params_old, group.features);
    out.gradient.add_scaled(kl_grad(params, params_old, group.features), -cfg.kl_coeff);
  }
  out.value = out.surrogate - cfg.kl_coeff * out.kl;
  return out;
}

StepResult step(const PolicyParams& params, const PolicyParams& params_old, std::span<const Group> batch,
                const GrpoConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw InvalidArgument("step: empty batch");

  StepReport report;
  double reward_sum = 0.0;
  std::size_t reward_count = 0;
  for (const Group& g : batch) {
    for (double r : g.rewards) reward_sum += r;
    reward_count += g.rewards.size();
  }
  report.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;

  const bool all_degenerate =
      std::all_of(batch.begin(), batch.end(), [](const Group& g) { return g.adv.degenerate; });
  if (all_degenerate) {
    report.skipped = true;
    for (const Group& g : batch) report.kl_value += kl_exact(params, params_old, g.features);
    report.kl_value /= static_cast<double>(batch.size());
    return {params, report};
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Matrix grad(params.vocab_size(), params.feature_dim());
  std::size_t active = 0;
  for (const Group& g : batch) {
    if (g.adv.degenerate) continue;
    ObjectiveResult r = objective(params, params_old, g, cfg);
    grad.add_scaled(r.gradient, inv_b);
    report.objective_value += r.value * inv_b;
    report.clipped_fraction += r.clipped_fraction;
    ++active;
  }
  report.clipped_fraction /= static_cast<double>(active);

  PolicyParams next = params;
  next.weights.add_scaled(grad, cfg.learning_rate);
  if (!next.weights.all_finite()) throw NumericError("policy update produced non-finite weights");
  for (const Group& g : batch) report.kl_value += kl_exact(next, params_old, g.features);
  report.kl_value *= inv_b;
  return {std::move(next), report};
}

TrainerState refresh_reference(TrainerState state) {
  state.reference = state.current;
  return state;
}

}  // namespace selfevo
