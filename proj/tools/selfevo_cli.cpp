// Command-line front end. Talks to the library only through the C API.
//
// Settings are layered: built-in defaults (seed from SELFEVO_SEED when set),
// then the --config file, then individual flags.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "selfevo/selfevo.h"

namespace {

using json = nlohmann::ordered_json;

struct Failure {
  int code;
};

void check(selfevo_status s) {
  if (s == SELFEVO_OK) return;
  std::cerr << "selfevo: " << selfevo_status_name(s) << ": " << selfevo_last_error() << "\n";
  throw Failure{s == SELFEVO_INVALID_ARGUMENT ? 2 : 1};
}

[[noreturn]] void usage_error(const std::string& msg) {
  std::cerr << "selfevo: " << msg << "\n";
  throw Failure{2};
}

struct StringDeleter {
  void operator()(char* s) const { selfevo_string_free(s); }
};
struct DatasetDeleter {
  void operator()(selfevo_dataset* d) const { selfevo_dataset_free(d); }
};
struct PolicyDeleter {
  void operator()(selfevo_policy* p) const { selfevo_policy_free(p); }
};
using DatasetPtr = std::unique_ptr<selfevo_dataset, DatasetDeleter>;
using PolicyPtr = std::unique_ptr<selfevo_policy, PolicyDeleter>;

std::string take(char* s) {
  std::unique_ptr<char, StringDeleter> guard(s);
  return s;
}

json library_json(selfevo_status (*fn)(char**)) {
  char* out = nullptr;
  check(fn(&out));
  return json::parse(take(out));
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("SELFEVO_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(v, &used);
    if (used != std::strlen(v)) throw std::invalid_argument(v);
    return seed;
  } catch (const std::exception&) {
    usage_error(std::string("SELFEVO_SEED is not an unsigned integer: ") + v);
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) usage_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    usage_error("config file " + path + ": " + e.what());
  }
}

// A config file holds either one section or a bundle with "spec",
// "target_accuracy" and "config" keys (the shape `selfevo benchmark` prints).
json section_of(const json& file, const char* key) {
  const bool bundle = file.is_object() && (file.contains("spec") || file.contains("config"));
  if (!bundle) return file;
  return file.contains(key) ? file.at(key) : json::object();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) usage_error("cannot write " + path);
}

// Flag values that, when given, override the lower layers.
template <class T>
void put(json& j, const std::optional<T>& v, const char* key) {
  if (v) j[key] = *v;
}

struct DataFiles {
  std::string dataset, vocab;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "dataset JSONL")->required();
    app->add_option("--vocab", vocab, "vocabulary JSON")->required();
  }
  DatasetPtr load() const {
    selfevo_dataset* d = nullptr;
    check(selfevo_dataset_load(dataset.c_str(), vocab.c_str(), &d));
    return DatasetPtr(d);
  }
};

PolicyPtr load_policy(const std::string& path, const selfevo_dataset* data) {
  selfevo_policy* p = nullptr;
  check(selfevo_policy_load(path.c_str(), data, &p));
  return PolicyPtr(p);
}

// Evolution settings shared by evolve, ablate and hitrate.
struct EvolutionFlags {
  std::string config_file;
  bool benchmark = false;
  std::optional<std::size_t> n_label, n_train, steps, eval_interval, batch_size, refresh_period;
  std::optional<double> temperature, top_p, alpha, beta, epsilon, kl_coeff, learning_rate, ema_decay;
  std::optional<std::string> pseudo_labeler, reward_scheme, encoder_table;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--config", config_file, "evolution config JSON (or a benchmark bundle)");
    app->add_flag("--benchmark", benchmark, "start from the seeded benchmark settings instead of library defaults");
    app->add_option("--n-label", n_label, "responses sampled for pseudo-label selection");
    app->add_option("--n-train", n_train, "leading responses used for training");
    app->add_option("--steps", steps, "optimisation steps");
    app->add_option("--eval-interval", eval_interval, "steps between evaluation snapshots (0 = final only)");
    app->add_option("--batch-size", batch_size, "questions per step");
    app->add_option("--refresh-period", refresh_period, "steps between reference refreshes");
    app->add_option("--temperature", temperature, "sampling temperature");
    app->add_option("--top-p", top_p, "nucleus mass");
    app->add_option("--alpha", alpha, "binary reward weight");
    app->add_option("--beta", beta, "lexical reward weight");
    app->add_option("--epsilon", epsilon, "ratio clip range");
    app->add_option("--kl-coeff", kl_coeff, "KL penalty weight");
    app->add_option("--lr", learning_rate, "learning rate");
    app->add_option("--ema-decay", ema_decay, "reward EMA decay");
    app->add_option("--pseudo-labeler", pseudo_labeler, "fpl or majority")
        ->check(CLI::IsMember({"fpl", "majority"}));
    app->add_option("--reward-scheme", reward_scheme, "hsr or binary")->check(CLI::IsMember({"hsr", "binary"}));
    app->add_option("--encoder-table", encoder_table, "external embedding table (TSV)");
    app->add_option("--seed", seed, "run seed");
  }

  std::string resolve() const {
    json j;
    if (benchmark) {
      j = library_json(selfevo_benchmark).at("config");
    } else {
      j = library_json(selfevo_default_config);
    }
    if (auto s = env_seed()) j["seed"] = *s;
    if (!config_file.empty()) j.merge_patch(section_of(read_json_file(config_file), "config"));

    put(j, n_label, "n_label");
    put(j, n_train, "n_train");
    put(j, steps, "steps");
    put(j, eval_interval, "eval_interval");
    put(j, ema_decay, "ema_decay");
    put(j, pseudo_labeler, "pseudo_labeler");
    put(j, reward_scheme, "reward_scheme");
    put(j, seed, "seed");
    put(j["sampler"], temperature, "temperature");
    put(j["sampler"], top_p, "top_p");
    put(j["reward"], alpha, "alpha");
    put(j["reward"], beta, "beta");
    put(j["grpo"], epsilon, "epsilon");
    put(j["grpo"], kl_coeff, "kl_coeff");
    put(j["grpo"], learning_rate, "learning_rate");
    put(j["grpo"], batch_size, "batch_size");
    put(j["grpo"], refresh_period, "refresh_period");
    if (encoder_table) j["encoder"] = {{"kind", "external_table"}, {"path", *encoder_table}};
    return j.dump();
  }
};

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-free test-time self-evolution on synthetic VQA-like tasks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(selfevo_version()));

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset and its vocabulary");
  std::string gen_config, gen_out, gen_vocab;
  bool gen_benchmark = false;
  std::optional<std::size_t> n_contexts, answers_per_context, paraphrases, closed_groups;
  std::optional<double> closed_fraction, distractor_concentration;
  std::optional<bool> adversarial;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "synthetic spec JSON (or a benchmark bundle)");
  gen->add_flag("--benchmark", gen_benchmark, "start from the seeded benchmark spec");
  gen->add_option("--n-contexts", n_contexts, "number of questions");
  gen->add_option("--answers-per-context", answers_per_context, "open-question candidates");
  gen->add_option("--paraphrases", paraphrases, "surface forms per correct answer");
  gen->add_option("--closed-fraction", closed_fraction, "share of yes/no questions");
  gen->add_option("--distractor-concentration", distractor_concentration, "base mass on the lure answer");
  gen->add_option("--closed-groups", closed_groups, "yes/no question groups");
  gen->add_flag("--adversarial,!--no-adversarial", adversarial, "spread the correct mass over its paraphrases");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "dataset JSONL to write")->required();
  gen->add_option("--vocab", gen_vocab, "vocabulary JSON to write")->required();

  // fit-base
  auto* fit = app.add_subcommand("fit-base", "construct the base policy for a dataset");
  DataFiles fit_files;
  fit_files.add(fit);
  std::string fit_config, fit_out;
  std::optional<double> target;
  fit->add_option("--config", fit_config, "benchmark bundle supplying target_accuracy");
  fit->add_option("--target", target, "closed-question accuracy of the base policy, in (0,1)");
  fit->add_option("--out", fit_out, "checkpoint to write")->required();

  // evolve
  auto* evo = app.add_subcommand("evolve", "run label-free self-evolution from a checkpoint");
  DataFiles evo_files;
  evo_files.add(evo);
  EvolutionFlags evo_flags;
  evo_flags.add(evo);
  std::string evo_base, evo_out, run_log, metrics_csv;
  evo->add_option("--base", evo_base, "starting checkpoint")->required();
  evo->add_option("--out", evo_out, "final checkpoint to write")->required();
  evo->add_option("--run-log", run_log, "run log JSONL to write");
  evo->add_option("--metrics", metrics_csv, "metrics CSV to write");

  // eval
  auto* ev = app.add_subcommand("eval", "greedy accuracy, recall and ROUGE-1 of a checkpoint");
  DataFiles ev_files;
  ev_files.add(ev);
  std::string ev_policy;
  ev->add_option("--policy", ev_policy, "checkpoint")->required();

  // hitrate
  auto* hr = app.add_subcommand("hitrate", "pseudo-label hit rates of FPL and majority voting");
  DataFiles hr_files;
  hr_files.add(hr);
  EvolutionFlags hr_flags;
  hr_flags.add(hr);
  std::string hr_policy;
  std::vector<std::size_t> hr_n{8, 16};
  bool hr_json = false;
  hr->add_option("--policy", hr_policy, "checkpoint")->required();
  hr->add_option("--n", hr_n, "rollout sizes")->delimiter(',');
  hr->add_flag("--json", hr_json, "print JSON instead of a table");

  // ablate
  auto* ab = app.add_subcommand("ablate", "evolve the base, ttrl, fpl_only, hsr_only and full variants");
  DataFiles ab_files;
  ab_files.add(ab);
  EvolutionFlags ab_flags;
  ab_flags.add(ab);
  std::string ab_base, ab_out;
  bool ab_json = false;
  ab->add_option("--base", ab_base, "starting checkpoint")->required();
  ab->add_option("--out", ab_out, "write the JSON result here as well");
  ab->add_flag("--json", ab_json, "print JSON instead of a table");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "print the seeded benchmark settings as a config bundle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors share the invalid-argument code
  }

  try {
    if (*gen) {
      json j = gen_benchmark ? library_json(selfevo_benchmark).at("spec") : library_json(selfevo_default_spec);
      if (auto s = env_seed()) j["seed"] = *s;
      if (!gen_config.empty()) j.merge_patch(section_of(read_json_file(gen_config), "spec"));
      put(j, n_contexts, "n_contexts");
      put(j, answers_per_context, "answers_per_context");
      put(j, paraphrases, "paraphrases_per_cluster");
      put(j, closed_fraction, "closed_fraction");
      put(j, distractor_concentration, "distractor_concentration");
      put(j, closed_groups, "closed_groups");
      put(j, adversarial, "adversarial");
      put(j, gen_seed, "seed");
      selfevo_dataset* raw = nullptr;
      check(selfevo_dataset_generate(j.dump().c_str(), &raw));
      DatasetPtr data(raw);
      check(selfevo_dataset_save(data.get(), gen_out.c_str(), gen_vocab.c_str()));
      std::cout << "wrote " << selfevo_dataset_size(data.get()) << " instances, "
                << selfevo_dataset_vocab_size(data.get()) << " answers, feature dim "
                << selfevo_dataset_feature_dim(data.get()) << "\n";
    } else if (*fit) {
      double t = library_json(selfevo_benchmark).at("target_accuracy").get<double>();
      if (!fit_config.empty()) {
        const json file = read_json_file(fit_config);
        if (file.contains("target_accuracy")) t = file.at("target_accuracy").get<double>();
      }
      if (target) t = *target;
      auto data = fit_files.load();
      selfevo_policy* raw = nullptr;
      check(selfevo_policy_fit_base(data.get(), t, &raw));
      PolicyPtr policy(raw);
      check(selfevo_policy_save(policy.get(), fit_out.c_str()));
      selfevo_metrics m{};
      check(selfevo_evaluate(policy.get(), data.get(), &m));
      std::cout << "base accuracy " << fmt2(m.accuracy) << " recall " << fmt2(m.recall) << " rouge1 "
                << fmt2(m.rouge1) << "\n";
    } else if (*evo) {
      const std::string cfg = evo_flags.resolve();
      auto data = evo_files.load();
      auto base = load_policy(evo_base, data.get());
      selfevo_policy* raw = nullptr;
      check(selfevo_evolve(data.get(), base.get(), cfg.c_str(), run_log.empty() ? nullptr : run_log.c_str(),
                           metrics_csv.empty() ? nullptr : metrics_csv.c_str(), &raw));
      PolicyPtr evolved(raw);
      check(selfevo_policy_save(evolved.get(), evo_out.c_str()));
      std::cout << "wrote " << evo_out << "\n";
    } else if (*ev) {
      auto data = ev_files.load();
      auto policy = load_policy(ev_policy, data.get());
      selfevo_metrics m{};
      check(selfevo_evaluate(policy.get(), data.get(), &m));
      json j = {{"accuracy", m.accuracy}, {"recall", m.recall}, {"rouge1", m.rouge1},
                {"n_closed", m.n_closed}, {"n_open", m.n_open}};
      std::cout << j.dump() << "\n";
    } else if (*hr) {
      const std::string cfg = hr_flags.resolve();
      const auto seed = json::parse(cfg).at("seed").get<std::uint64_t>();
      auto data = hr_files.load();
      auto policy = load_policy(hr_policy, data.get());
      char* raw = nullptr;
      check(selfevo_hitrate(policy.get(), data.get(), hr_n.data(), hr_n.size(), seed, cfg.c_str(), &raw));
      const std::string out = take(raw);
      if (hr_json) {
        std::cout << out << "\n";
      } else {
        const json j = json::parse(out);
        std::cout << "method    n   hit_rate\n";
        for (const auto& r : j.at("rows"))
          std::printf("%-8s %3zu   %s\n", r.at("method").get<std::string>().c_str(), r.at("n").get<std::size_t>(),
                      fmt4(r.at("hit_rate").get<double>()).c_str());
        for (const auto& g : j.at("fpl_minus_majority"))
          std::printf("n=%zu fpl-majority %s  95%% CI [%s, %s]\n", g.at("n").get<std::size_t>(),
                      fmt4(g.at("gap").get<double>()).c_str(), fmt4(g.at("ci95")[0].get<double>()).c_str(),
                      fmt4(g.at("ci95")[1].get<double>()).c_str());
      }
    } else if (*ab) {
      const std::string cfg = ab_flags.resolve();
      auto data = ab_files.load();
      auto base = load_policy(ab_base, data.get());
      char* raw = nullptr;
      check(selfevo_ablate(data.get(), base.get(), cfg.c_str(), &raw));
      const std::string out = take(raw);
      if (!ab_out.empty()) write_text(ab_out, out + "\n");
      if (ab_json) {
        std::cout << out << "\n";
      } else {
        std::cout << "variant     accuracy   recall   rouge1\n";
        for (const auto& r : json::parse(out)) {
          const auto& m = r.at("metrics");
          std::printf("%-10s %9s %8s %8s\n", r.at("name").get<std::string>().c_str(),
                      fmt2(m.at("accuracy").get<double>()).c_str(), fmt2(m.at("recall").get<double>()).c_str(),
                      fmt2(m.at("rouge1").get<double>()).c_str());
        }
      }
    } else if (*bench) {
      std::cout << library_json(selfevo_benchmark).dump(2) << "\n";
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
