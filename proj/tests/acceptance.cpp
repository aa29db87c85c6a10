// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "selfevo/dataset.hpp"
#include "selfevo/error.hpp"
#include "selfevo/evolution.hpp"
#include "selfevo/experiments.hpp"
#include "selfevo/fpl.hpp"
#include "selfevo/grpo.hpp"
#include "selfevo/reward.hpp"
#include "selfevo/textproc.hpp"

using namespace selfevo;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Formats with printf semantics.
template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome advantage_normalization() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(101);
  std::uniform_int_distribution<std::size_t> size(2, 64);
  // Rewards, shifts and scales on dyadic grids so that s*r + c is computed
  // exactly; any invariance gap is then the implementation's own rounding.
  std::uniform_int_distribution<int> reward(0, 1 << 16), shift(-5 << 16, 5 << 16), scale(26, 2560);
  double worst_mean = 0, worst_std = 0, worst_inv = 0;
  int vectors = 0;
  while (vectors < 10000) {
    std::vector<double> r(size(g));
    for (auto& x : r) x = std::ldexp(reward(g), -16);
    if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; })) continue;
    ++vectors;
    const auto a = advantages(r);
    if (a.degenerate) return {false, "non-constant vector flagged degenerate"};
    long double m = 0, v = 0;
    for (double x : a.values) m += x;
    m /= a.values.size();
    for (double x : a.values) v += (x - m) * (x - m);
    v /= a.values.size();
    worst_mean = std::max(worst_mean, static_cast<double>(std::abs(m)));
    worst_std = std::max(worst_std, static_cast<double>(std::abs(std::sqrt(v) - 1)));
    const double c = std::ldexp(shift(g), -16), s = std::ldexp(scale(g), -8);  // c in [-5,5], s in [0.1,10]
    std::vector<double> moved(r);
    for (auto& x : moved) x = s * x + c;
    const auto b = advantages(moved);
    for (std::size_t i = 0; i < r.size(); ++i) worst_inv = std::max(worst_inv, std::abs(a.values[i] - b.values[i]));
  }
  const double secs = seconds_since(t0);
  return {worst_mean <= 1e-12 && worst_std <= 1e-9 && worst_inv <= 1e-12 && secs < 1.0,
          fmt("%d vectors, max|mean|=%.2e max|std-1|=%.2e max invariance gap=%.2e, %.3fs", vectors, worst_mean,
              worst_std, worst_inv, secs)};
}

// ---------------------------------------------------------------------------

double ref_surrogate(const PolicyParams& w, const Group& grp, double eps) {
  const auto p = oracle::softmax(oracle::logits(w, grp.features.phi));
  double s = 0;
  for (std::size_t i = 0; i < grp.samples.size(); ++i) {
    const double rho = p[grp.samples[i].answer_index] / std::exp(grp.samples[i].logprob_old);
    const double a = grp.adv.values[i];
    s += std::min(rho * a, std::clamp(rho, 1 - eps, 1 + eps) * a);
  }
  return s / static_cast<double>(grp.samples.size());
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(202);
  const GrpoConfig cfg{0.2, 0.04, 1e-3, 1, 4};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0, tried = 0;
  double worst[4] = {0, 0, 0, 0};
  while (checked < 100 && tried < 1000) {
    ++tried;
    const std::size_t v = 2 + g() % 7, d = 1 + g() % 4;
    const auto old = oracle::random_params(g, v, d, 0.6);
    auto w = old;
    w.weights += oracle::random_params(g, v, d, 0.3).weights;
    const auto phi = oracle::random_phi(g, d);
    const QuestionFeatures q{"q", phi};
    const auto samples = sample(old, q, {1.0, 1.0, g()}, 6);
    std::vector<double> rewards;
    for (int i = 0; i < 6; ++i) rewards.push_back(u(g));
    const Group grp = make_group(q, samples, rewards);
    const auto s = clipped_surrogate(w, grp, cfg.epsilon);
    bool boundary = false;
    for (const auto& term : s.terms)
      boundary |= std::abs(term.ratio - (1 - cfg.epsilon)) < 1e-3 || std::abs(term.ratio - (1 + cfg.epsilon)) < 1e-3;
    if (boundary) continue;
    ++checked;

    const std::size_t a = g() % v;
    const auto fd_lp = oracle::finite_difference(
        [&](const PolicyParams& p) { return std::log(oracle::softmax(oracle::logits(p, phi))[a]); }, w);
    worst[0] = std::max(worst[0], oracle::relative_error(log_prob_grad(w, q, a), fd_lp));

    const auto q_old = oracle::softmax(oracle::logits(old, phi));
    const auto fd_kl = oracle::finite_difference(
        [&](const PolicyParams& p) { return oracle::kl(oracle::softmax(oracle::logits(p, phi)), q_old); }, w);
    worst[1] = std::max(worst[1], oracle::relative_error(kl_grad(w, old, q), fd_kl));

    const auto fd_s =
        oracle::finite_difference([&](const PolicyParams& p) { return ref_surrogate(p, grp, cfg.epsilon); }, w);
    worst[2] = std::max(worst[2], oracle::relative_error(s.gradient, fd_s));

    const auto fd_o = oracle::finite_difference(
        [&](const PolicyParams& p) {
          return ref_surrogate(p, grp, cfg.epsilon) -
                 cfg.kl_coeff * oracle::kl(oracle::softmax(oracle::logits(p, phi)), q_old);
        },
        w);
    worst[3] = std::max(worst[3], oracle::relative_error(objective(w, old, grp, cfg).gradient, fd_o));
  }
  const double secs = seconds_since(t0);
  bool ok = checked >= 100 && secs < 10.0;
  for (double e : worst) ok &= e < 1e-5;
  return {ok, fmt("%d instances, max rel err log_prob=%.1e kl=%.1e surrogate=%.1e objective=%.1e, %.2fs", checked,
                  worst[0], worst[1], worst[2], worst[3], secs)};
}

// ---------------------------------------------------------------------------

Outcome reward_bounds() {
  static const char* open_pool[] = {"left lung",  "left lung lobe", "the left lung", "right kidney", "kidney",
                                    "liver mass", "mass",           "pleural effusion", "effusion", "lobe"};
  std::mt19937_64 g(303);
  const EncoderSpec enc;
  const RewardConfig cfg, binary_only{1.0, 0.0};
  std::size_t bad_bounds = 0, bad_anchor = 0, bad_closed = 0, bad_reduce = 0;
  for (int t = 0; t < 10000; ++t) {
    const bool closed = t % 4 == 0;
    const std::size_t n = 2 + g() % 15;
    Rollout r{"q" + std::to_string(t), {}};
    for (std::size_t i = 0; i < n; ++i) {
      const std::string text = closed ? (g() % 2 ? "yes" : "no") : open_pool[g() % 10];
      r.responses.push_back({text, -1.0, i});
    }
    // Half the time the pseudo label comes from FPL, otherwise a random member.
    const PseudoLabel pl = t % 2 ? select_pseudo_label(embed_rollout(enc, r))
                                 : PseudoLabel{r.responses[g() % n].answer_text, 0, 0.0};
    const auto kind = closed ? QuestionKind::closed : QuestionKind::open;
    const auto rw = reward_rollout(cfg, enc, r, pl, kind);
    double best = 0;
    for (const auto& b : rw) {
      for (double x : {b.binary, b.jaccard, b.semantic, b.composite}) bad_bounds += !(x >= 0.0 && x <= 1.0);
      best = std::max(best, b.composite);
    }
    if (closed) {
      for (const auto& b : rw) bad_closed += !(b.composite == 0.0 || b.composite == 1.0);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (normalize_answer(r.responses[i].answer_text) == normalize_answer(pl.text)) bad_anchor += rw[i].composite != best;
      const auto rb = reward_rollout(binary_only, enc, r, pl, kind);
      for (const auto& b : rb) bad_reduce += b.composite != b.binary;
    }
  }
  return {bad_bounds + bad_anchor + bad_closed + bad_reduce == 0,
          fmt("10000 rollouts: %zu out of [0,1], %zu anchor misses, %zu non-binary closed, %zu alpha=1 mismatches",
              bad_bounds, bad_anchor, bad_closed, bad_reduce)};
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  static const char* pool[] = {"left", "right", "lung", "lobe", "kidney", "liver", "mass", "no", "yes", "a"};
  std::mt19937_64 g(404);
  double worst = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<std::string> a, b;
    for (std::size_t k = g() % 7; k > 0; --k) a.push_back(pool[g() % 10]);
    for (std::size_t k = g() % 7; k > 0; --k) b.push_back(pool[g() % 10]);
    const TokenSet sa(a), sb(b);
    worst = std::max({worst, std::abs(jaccard(sa, sb) - oracle::jaccard(a, b)),
                      std::abs(token_recall(sa, sb) - oracle::recall(a, b)),
                      std::abs(rouge1_f1(sa, sb) - oracle::rouge1(a, b))});
  }
  return {worst <= 1e-12, fmt("10000 pairs, max deviation %.1e", worst)};
}

// ---------------------------------------------------------------------------

Outcome fpl_vs_majority() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = generate_dataset(adversarial_family());
  const auto base = fit_base_policy(data, 0.5);
  const auto r = hitrate_experiment(base, data, {8, 16}, 0);
  bool ok = data.instances.size() >= 200;
  std::string detail = fmt("%zu open instances", data.instances.size());
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& f = r.rows[2 * k];
    const auto& m = r.rows[2 * k + 1];
    const auto ci = bootstrap_mean_gap(r.hits[2 * k], r.hits[2 * k + 1], 2000, 0.95, 11 + k);
    ok &= f.hit_rate > m.hit_rate && ci.lower > 0.0;
    detail += fmt("; n=%zu fpl=%.4f majority=%.4f gap 95%% CI [%.4f, %.4f]", f.n, f.hit_rate, m.hit_rate, ci.lower,
                  ci.upper);
  }
  const double secs = seconds_since(t0);
  ok &= secs < 30.0;
  return {ok, detail + fmt(", %.2fs", secs)};
}

// ---------------------------------------------------------------------------

Outcome improvement_and_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bench = default_benchmark();
  const auto data = generate_dataset(bench.spec);
  const auto base = fit_base_policy(data, bench.target_accuracy);
  const auto rows = ablation_run(data, base, bench.config);
  auto acc = [&](const char* name) {
    for (const auto& r : rows)
      if (r.name == name) return r.metrics.accuracy;
    throw Error(std::string("missing ablation row ") + name);
  };
  const double b = acc("base"), full = acc("full"), fo = acc("fpl_only"), ho = acc("hsr_only"), tt = acc("ttrl");
  const double secs = seconds_since(t0);
  const bool ok = full > b && full >= fo && full >= ho && fo >= b && ho >= b && secs < 60.0;
  return {ok, fmt("closed accuracy base=%.2f ttrl=%.2f fpl_only=%.2f hsr_only=%.2f full=%.2f, %.2fs", b, tt, fo, ho,
                  full, secs)};
}

// ---------------------------------------------------------------------------

Outcome reward_performance_correlation() {
  const auto bench = default_benchmark();
  const auto data = generate_dataset(bench.spec);
  const auto base = fit_base_policy(data, bench.target_accuracy);
  const auto run = run_evolution(data, base, bench.config);
  std::vector<double> ema, acc;
  for (const auto& rec : run.records)
    if (rec.eval) {
      ema.push_back(rec.ema_reward);
      acc.push_back(rec.eval->accuracy);
    }
  const double rho = ema.size() >= 2 ? spearman(ema, acc) : 0.0;
  return {rho > 0.5, fmt("%zu snapshots, Spearman %.4f", ema.size(), rho)};
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "selfevo_acceptance";
  std::filesystem::create_directories(dir);
  const auto bench = default_benchmark();
  auto produce = [&](const std::string& tag) {
    const auto data = generate_dataset(bench.spec);
    save_dataset(data, dir / (tag + ".jsonl"), dir / (tag + "_vocab.json"));
    const auto run = run_evolution(data, fit_base_policy(data, bench.target_accuracy), bench.config);
    write_file(dir / (tag + "_run.jsonl"), run_log_jsonl(run.records));
    write_file(dir / (tag + "_metrics.csv"), metrics_csv(run.records));
  };
  produce("a");
  produce("b");
  std::size_t same = 0;
  const char* suffixes[] = {".jsonl", "_vocab.json", "_run.jsonl", "_metrics.csv"};
  for (const char* s : suffixes) {
    const auto x = read_file(dir / (std::string("a") + s)), y = read_file(dir / (std::string("b") + s));
    same += !x.empty() && x == y;
  }
  std::filesystem::remove_all(dir);
  return {same == 4, fmt("%zu/4 files byte-identical (dataset, vocabulary, run log, metrics)", same)};
}

// ---------------------------------------------------------------------------

Outcome degenerate_handling() {
  std::mt19937_64 g(909);
  std::size_t skipped = 0, identical = 0;
  const GrpoConfig cfg{0.2, 0.04, 0.5, 1, 4};
  for (int t = 0; t < 200; ++t) {
    const std::size_t v = 2 + g() % 7, d = 1 + g() % 4;
    const auto old = oracle::random_params(g, v, d, 0.6);
    auto w = old;
    w.weights += oracle::random_params(g, v, d, 0.3).weights;
    const QuestionFeatures q{"q", oracle::random_phi(g, d)};
    std::vector<Group> batch;
    for (int k = 0; k < 3; ++k) {
      const double level = (g() % 3) / 2.0;  // 0, 0.5 or 1 for every member
      batch.push_back(make_group(q, sample(old, q, {1.0, 1.0, g()}, 8), std::vector<double>(8, level)));
    }
    const auto res = step(w, old, batch, cfg);
    skipped += res.report.skipped;
    identical += res.params.weights.data().size() == w.weights.data().size() &&
                 std::memcmp(res.params.weights.data().data(), w.weights.data().data(),
                             w.weights.data().size() * sizeof(double)) == 0;
  }

  // Every response equal to the pseudo label: zero semantic denominator.
  std::size_t all_one = 0, trials = 0;
  const EncoderSpec enc;
  for (const char* text : {"left lung", "yes", "pleural effusion", ""}) {
    for (std::size_t n : {2u, 5u, 16u}) {
      ++trials;
      const std::vector<std::string> texts(n, text);
      const auto s = semantic_rewards(enc, texts, text);
      all_one += std::all_of(s.begin(), s.end(), [](double x) { return x == 1.0; });
    }
  }
  return {skipped == 200 && identical == 200 && all_one == trials,
          fmt("%zu/200 flat batches skipped, %zu/200 bit-identical; %zu/%zu zero-denominator rollouts all 1.0",
              skipped, identical, all_one, trials)};
}

// ---------------------------------------------------------------------------

template <class T>
concept CarriesGold = requires(T t) { t.gold; };
static_assert(CarriesGold<TestInstance>);
static_assert(!CarriesGold<UnlabeledInstance>, "the evolution path must not see gold answers");

Outcome label_hygiene() {
  auto data = generate_dataset(SyntheticSpec{});
  const auto base = fit_base_policy(data, 0.7);
  for (auto& inst : data.instances) inst.gold.emplace("sentinel::" + inst.instance_id);
  EvolutionConfig cfg = default_benchmark().config;
  cfg.steps = 20;
  const auto before = GoldAnswer::reveal_count();
  evolve(strip_labels(data), base, cfg);
  const auto reads = GoldAnswer::reveal_count() - before;

  bool trapped = false;
  {
    LabelSeal seal;
    try {
      data.instances.front().gold->reveal();
    } catch (const LabelLeak&) {
      trapped = true;
    }
  }
  return {reads == 0 && trapped,
          fmt("static separation holds; sentinel reads during evolve=%llu; sealed read trapped=%s",
              static_cast<unsigned long long>(reads), trapped ? "yes" : "no")};
}

}  // namespace

int main() {
  const struct {
    const char* name;
    std::function<Outcome()> run;
  } criteria[] = {
      {"advantage normalization", advantage_normalization},
      {"gradient correctness", gradient_correctness},
      {"reward bounds and anchors", reward_bounds},
      {"metric oracle equivalence", metric_oracles},
      {"fpl vs majority voting", fpl_vs_majority},
      {"self-evolution improvement and ablation ordering", improvement_and_ordering},
      {"reward-performance correlation", reward_performance_correlation},
      {"determinism", determinism},
      {"degenerate handling", degenerate_handling},
      {"label hygiene", label_hygiene},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
