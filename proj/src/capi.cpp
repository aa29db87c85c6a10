#include "selfevo/selfevo.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfevo/dataset.hpp"
#include "selfevo/error.hpp"
#include "selfevo/evolution.hpp"
#include "selfevo/experiments.hpp"

struct selfevo_dataset {
  selfevo::Dataset data;
};

struct selfevo_policy {
  selfevo::PolicyParams params;
  std::uint64_t vocab_fingerprint = 0;
};

namespace {

using json = nlohmann::ordered_json;

thread_local std::string last_error;

selfevo_status fail(selfevo_status s, const char* what) {
  last_error = what;
  return s;
}

// Maps the exception in flight to a status code.
selfevo_status translate() {
  try {
    throw;
  } catch (const selfevo::InvalidArgument& e) {
    return fail(SELFEVO_INVALID_ARGUMENT, e.what());
  } catch (const selfevo::IoError& e) {
    return fail(SELFEVO_IO, e.what());
  } catch (const selfevo::ParseError& e) {
    return fail(SELFEVO_PARSE, e.what());
  } catch (const selfevo::MissingKey& e) {
    return fail(SELFEVO_MISSING_KEY, e.what());
  } catch (const selfevo::LabelLeak& e) {
    return fail(SELFEVO_LABEL_LEAK, e.what());
  } catch (const selfevo::NumericError& e) {
    return fail(SELFEVO_NUMERIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SELFEVO_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SELFEVO_INTERNAL, e.what());
  } catch (...) {
    return fail(SELFEVO_INTERNAL, "unknown error");
  }
}

template <class F>
selfevo_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return SELFEVO_OK;
  } catch (...) {
    return translate();
  }
}

void require(const void* p, const char* name) {
  if (!p) throw selfevo::InvalidArgument(std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

selfevo::EvolutionConfig config_of(const char* config_json) {
  return config_json ? selfevo::config_from_json(config_json) : selfevo::EvolutionConfig{};
}

bool fully_labelled(const selfevo::Dataset& data) {
  for (const auto& inst : data.instances)
    if (!inst.gold) return false;
  return true;
}

}  // namespace

extern "C" {

const char* selfevo_version(void) { return "0.1.0"; }

const char* selfevo_last_error(void) { return last_error.c_str(); }

const char* selfevo_status_name(selfevo_status status) {
  switch (status) {
    case SELFEVO_OK: return "ok";
    case SELFEVO_INVALID_ARGUMENT: return "invalid argument";
    case SELFEVO_IO: return "i/o error";
    case SELFEVO_PARSE: return "parse error";
    case SELFEVO_MISSING_KEY: return "missing key";
    case SELFEVO_LABEL_LEAK: return "label leak";
    case SELFEVO_NUMERIC: return "numeric error";
    case SELFEVO_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void selfevo_string_free(char* s) { std::free(s); }

selfevo_status selfevo_default_spec(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = dup_string(selfevo::spec_to_json(selfevo::SyntheticSpec{}));
  });
}

selfevo_status selfevo_default_config(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = dup_string(selfevo::config_to_json(selfevo::EvolutionConfig{}));
  });
}

selfevo_status selfevo_benchmark(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    const auto b = selfevo::default_benchmark();
    json j;
    j["spec"] = json::parse(selfevo::spec_to_json(b.spec));
    j["target_accuracy"] = b.target_accuracy;
    j["config"] = json::parse(selfevo::config_to_json(b.config));
    *out_json = dup_string(j.dump(2));
  });
}

selfevo_status selfevo_dataset_generate(const char* spec_json, selfevo_dataset** out) {
  return guarded([&] {
    require(out, "out");
    const auto spec = spec_json ? selfevo::spec_from_json(spec_json) : selfevo::SyntheticSpec{};
    *out = new selfevo_dataset{selfevo::generate_dataset(spec)};
  });
}

selfevo_status selfevo_dataset_load(const char* dataset_path, const char* vocab_path, selfevo_dataset** out) {
  return guarded([&] {
    require(dataset_path, "dataset_path");
    require(vocab_path, "vocab_path");
    require(out, "out");
    *out = new selfevo_dataset{selfevo::load_dataset(dataset_path, vocab_path)};
  });
}

selfevo_status selfevo_dataset_save(const selfevo_dataset* data, const char* dataset_path,
                                    const char* vocab_path) {
  return guarded([&] {
    require(data, "data");
    require(dataset_path, "dataset_path");
    require(vocab_path, "vocab_path");
    selfevo::save_dataset(data->data, dataset_path, vocab_path);
  });
}

size_t selfevo_dataset_size(const selfevo_dataset* data) { return data ? data->data.instances.size() : 0; }
size_t selfevo_dataset_vocab_size(const selfevo_dataset* data) { return data ? data->data.vocab.size() : 0; }
size_t selfevo_dataset_feature_dim(const selfevo_dataset* data) { return data ? data->data.feature_dim : 0; }

void selfevo_dataset_free(selfevo_dataset* data) { delete data; }

selfevo_status selfevo_policy_fit_base(const selfevo_dataset* data, double target_accuracy,
                                       selfevo_policy** out) {
  return guarded([&] {
    require(data, "data");
    require(out, "out");
    *out = new selfevo_policy{selfevo::fit_base_policy(data->data, target_accuracy),
                              data->data.vocab.fingerprint()};
  });
}

selfevo_status selfevo_policy_load(const char* path, const selfevo_dataset* expect, selfevo_policy** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    std::optional<std::uint64_t> fp;
    if (expect) fp = expect->data.vocab.fingerprint();
    auto ck = selfevo::load_checkpoint(path, fp);
    if (expect && (ck.params.vocab_size() != expect->data.vocab.size() ||
                   ck.params.feature_dim() != expect->data.feature_dim))
      throw selfevo::InvalidArgument("checkpoint shape does not match the dataset");
    *out = new selfevo_policy{std::move(ck.params), ck.vocab_fingerprint};
  });
}

selfevo_status selfevo_policy_save(const selfevo_policy* policy, const char* path) {
  return guarded([&] {
    require(policy, "policy");
    require(path, "path");
    selfevo::save_checkpoint(policy->params, policy->vocab_fingerprint, path);
  });
}

uint64_t selfevo_policy_fingerprint(const selfevo_policy* policy) {
  return policy ? selfevo::params_fingerprint(policy->params) : 0;
}

void selfevo_policy_free(selfevo_policy* policy) { delete policy; }

selfevo_status selfevo_evolve(const selfevo_dataset* data, const selfevo_policy* base, const char* config_json,
                              const char* run_log_path, const char* metrics_csv_path, selfevo_policy** out) {
  return guarded([&] {
    require(data, "data");
    require(base, "base");
    require(out, "out");
    const auto cfg = config_of(config_json);
    const auto result = fully_labelled(data->data)
                            ? selfevo::run_evolution(data->data, base->params, cfg)
                            : selfevo::evolve(selfevo::strip_labels(data->data), base->params, cfg);
    if (run_log_path) selfevo::write_file(run_log_path, selfevo::run_log_jsonl(result.records));
    if (metrics_csv_path) selfevo::write_file(metrics_csv_path, selfevo::metrics_csv(result.records));
    *out = new selfevo_policy{result.final_params, data->data.vocab.fingerprint()};
  });
}

selfevo_status selfevo_evaluate(const selfevo_policy* policy, const selfevo_dataset* data,
                                selfevo_metrics* out) {
  return guarded([&] {
    require(policy, "policy");
    require(data, "data");
    require(out, "out");
    const auto m = selfevo::evaluate(policy->params, data->data);
    *out = {m.accuracy, m.recall, m.rouge1, m.n_closed, m.n_open};
  });
}

selfevo_status selfevo_hitrate(const selfevo_policy* policy, const selfevo_dataset* data, const size_t* n_values,
                               size_t n_count, uint64_t seed, const char* config_json, char** out_json) {
  return guarded([&] {
    require(policy, "policy");
    require(data, "data");
    require(n_values, "n_values");
    require(out_json, "out_json");
    const auto cfg = config_of(config_json);
    const std::vector<std::size_t> ns(n_values, n_values + n_count);
    const auto r = selfevo::hitrate_experiment(policy->params, data->data, ns, seed, cfg.sampler, cfg.encoder);
    json j = json::parse(selfevo::hitrate_json(r));
    // Rows come in (fpl, majority) pairs per n.
    json gaps = json::array();
    for (std::size_t k = 0; k + 1 < r.rows.size(); k += 2) {
      const auto ci = selfevo::bootstrap_mean_gap(r.hits[k], r.hits[k + 1], 2000, 0.95, seed);
      gaps.push_back({{"n", r.rows[k].n},
                      {"gap", r.rows[k].hit_rate - r.rows[k + 1].hit_rate},
                      {"ci95", {ci.lower, ci.upper}}});
    }
    j["fpl_minus_majority"] = gaps;
    *out_json = dup_string(j.dump());
  });
}

selfevo_status selfevo_ablate(const selfevo_dataset* data, const selfevo_policy* base, const char* config_json,
                              char** out_json) {
  return guarded([&] {
    require(data, "data");
    require(base, "base");
    require(out_json, "out_json");
    *out_json = dup_string(selfevo::ablation_json(selfevo::ablation_run(data->data, base->params,
                                                                         config_of(config_json))));
  });
}

}  // extern "C"
