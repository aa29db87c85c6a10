#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>

#include "oracles.hpp"
#include "selfevo/dataset.hpp"
#include "selfevo/error.hpp"
#include "selfevo/experiments.hpp"
#include "selfevo/textproc.hpp"

using namespace selfevo;

namespace {

std::vector<double> dense(const Dataset& d, const TestInstance& inst) {
  std::vector<double> phi(d.feature_dim, 0.0);
  for (const auto& f : inst.features) phi[f.index] += f.value;
  return phi;
}

// Greedy answer by the oracle matrix-vector product.
std::size_t oracle_argmax(const PolicyParams& w, const std::vector<double>& phi) {
  const auto z = oracle::logits(w, phi);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_NOTHROW(SyntheticSpec{}.validate());
  SyntheticSpec s;
  s.n_contexts = 0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.paraphrases_per_cluster = kMaxParaphrases + 1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.answers_per_context = s.paraphrases_per_cluster;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.answers_per_context = s.paraphrases_per_cluster + kFindingCount;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.closed_fraction = 1.5;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.distractor_concentration = 0.0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("spec json round trip") {
  SyntheticSpec s;
  s.n_contexts = 10;
  s.adversarial = false;
  s.seed = 99;
  const auto back = spec_from_json(spec_to_json(s));
  CHECK(back.n_contexts == 10);
  CHECK_FALSE(back.adversarial);
  CHECK(back.seed == 99);
  CHECK(spec_from_json("{\"closed_groups\": 2}").closed_groups == 2);
  CHECK_THROWS_AS(spec_from_json("{\"bogus\": 1}"), InvalidArgument);
  CHECK_THROWS_AS(spec_from_json("{\"n_contexts\": \"x\"}"), ParseError);
  CHECK_THROWS_AS(spec_from_json("[1]"), ParseError);
  CHECK_THROWS_AS(spec_from_json("{\"n_contexts\": 0}"), InvalidArgument);
}

TEST_CASE("default dataset shape") {
  const auto d = generate_dataset(SyntheticSpec{});
  CHECK(d.instances.size() == 64);
  CHECK(d.vocab.size() == 2 + kFindingCount * 4);
  CHECK(d.feature_dim == 64 + 4);
  std::size_t closed = 0;
  for (const auto& inst : d.instances) {
    REQUIRE(inst.gold.has_value());
    if (d.kind_of(inst) == QuestionKind::closed) {
      ++closed;
      REQUIRE(inst.candidates == std::vector<std::size_t>{0, 1});
    } else {
      REQUIRE(inst.candidates.size() == 6);
      REQUIRE(inst.base.has_value());
      // Gold is the canonical form; its paraphrases all contain it.
      const auto gold = tokenize(inst.gold->reveal());
      std::size_t cluster = 0;
      for (std::size_t c : inst.candidates) cluster += overlap(tokenize(d.vocab[c]), gold) == gold.size();
      REQUIRE(cluster == 4);
      REQUIRE(std::find(inst.candidates.begin(), inst.candidates.end(), inst.base->lure) != inst.candidates.end());
    }
  }
  CHECK(closed == 32);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  SyntheticSpec s;
  CHECK(dataset_to_jsonl(generate_dataset(s)) == dataset_to_jsonl(generate_dataset(s)));
  s.seed = 1;
  const auto other = dataset_to_jsonl(generate_dataset(s));
  s.seed = 0;
  CHECK(other != dataset_to_jsonl(generate_dataset(s)));
}

TEST_CASE("closed_fraction 1 gives only yes/no questions") {
  SyntheticSpec s;
  s.closed_fraction = 1.0;
  const auto d = generate_dataset(s);
  for (const auto& inst : d.instances) {
    REQUIRE(inst.kind == QuestionKind::closed);
    REQUIRE(inst.candidates == std::vector<std::size_t>{0, 1});
  }
}

TEST_CASE("jsonl round trip") {
  const auto d = generate_dataset(SyntheticSpec{});
  const auto dir = std::filesystem::temp_directory_path();
  save_dataset(d, dir / "selfevo_test_ds.jsonl", dir / "selfevo_test_vocab.json");
  const auto back = load_dataset(dir / "selfevo_test_ds.jsonl", dir / "selfevo_test_vocab.json");
  CHECK(dataset_to_jsonl(back) == dataset_to_jsonl(d));
  CHECK(back.vocab.answers() == d.vocab.answers());
  CHECK(back.feature_dim == d.feature_dim);
  CHECK(read_file(dir / "selfevo_test_vocab.json") == vocabulary_to_json(d.vocab));
  CHECK_THROWS_AS(read_file(dir / "selfevo_missing_file"), IoError);
}

TEST_CASE("jsonl errors carry line numbers") {
  const AnswerVocabulary v({"yes", "no", "mass"});
  const std::string ok = R"({"instance_id":"a","features":{"dim":2,"active":[[0,1.0]]},"candidates":[0,1],"gold":"yes"})";
  const auto one = dataset_from_jsonl(ok + "\n", v);
  CHECK(one.kind_of(one.instances[0]) == QuestionKind::closed);
  auto line_of = [&](const std::string& bad) {
    try {
      dataset_from_jsonl(ok + "\n" + bad + "\n", v);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("{") == 2);
  CHECK(line_of(R"({"instance_id":"b","features":{"dim":2,"active":[[5,1.0]]},"candidates":[0]})") == 2);
  CHECK(line_of(R"({"instance_id":"b","features":{"dim":2,"active":[]},"candidates":[7]})") == 2);
  CHECK(line_of(R"({"instance_id":"b","features":{"dim":3,"active":[]},"candidates":[0]})") == 2);
  CHECK(line_of(R"({"instance_id":"b","features":{"dim":2,"active":[]},"candidates":[0],"gold":"liver"})") == 2);
  CHECK(line_of(R"({"instance_id":"b","kind":"closed","features":{"dim":2,"active":[]},"candidates":[2]})") == 2);
  CHECK(line_of(R"({"instance_id":"b","kind":"maybe","features":{"dim":2,"active":[]},"candidates":[2]})") == 2);
  CHECK_THROWS_AS(dataset_from_jsonl("", v), ParseError);
  CHECK_THROWS_AS(vocabulary_from_json("{}"), ParseError);
  CHECK_THROWS_AS(vocabulary_from_json("[1, 2]"), ParseError);
  CHECK_THROWS_AS(vocabulary_from_json("[\"a\", \"A\"]"), InvalidArgument);
}

TEST_CASE("fit_base_policy preconditions") {
  const auto d = generate_dataset(SyntheticSpec{});
  CHECK_THROWS_AS(fit_base_policy(d, 1.0), InvalidArgument);
  CHECK_THROWS_AS(fit_base_policy(d, 0.0), InvalidArgument);
  SyntheticSpec tiny;
  tiny.n_contexts = 4;
  tiny.closed_fraction = 0.5;
  // Two closed questions can only score 0, 50 or 100 percent.
  CHECK_THROWS_AS(fit_base_policy(generate_dataset(tiny), 0.7), InvalidArgument);
}

TEST_CASE("fit_base_policy hits the target exactly by enumeration") {
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    for (double target : {0.3, 0.5, 0.7, 0.9}) {
      SyntheticSpec s;
      s.seed = seed;
      const auto d = generate_dataset(s);
      const auto w = fit_base_policy(d, target);
      std::size_t n = 0, right = 0;
      for (const auto& inst : d.instances) {
        if (d.kind_of(inst) != QuestionKind::closed) continue;
        ++n;
        right += d.vocab[oracle_argmax(w, dense(d, inst))] == inst.gold->reveal();
      }
      const double acc = static_cast<double>(right) / static_cast<double>(n);
      REQUIRE(std::abs(acc - target) <= 0.02);
      REQUIRE(closed_accuracy(w, d) == doctest::Approx(acc));
    }
  }
}

TEST_CASE("fit_base_policy leaves unused columns at zero and follows the profile") {
  auto d = generate_dataset(SyntheticSpec{});
  d.feature_dim += 3;  // columns no instance activates
  const auto w = fit_base_policy(d, 0.7);
  for (std::size_t c = d.feature_dim - 3; c < d.feature_dim; ++c)
    for (std::size_t a = 0; a < d.vocab.size(); ++a) REQUIRE(w.weights(a, c) == 0.0);

  // Open instance: lure holds the concentration, the rest of the mass is as designed.
  for (const auto& inst : d.instances) {
    if (d.kind_of(inst) != QuestionKind::open) continue;
    const auto p = oracle::softmax(oracle::logits(w, dense(d, inst)));
    REQUIRE(p[inst.base->lure] == doctest::Approx(0.25).epsilon(1e-9));
    const auto gold = *d.vocab.find(inst.gold->reveal());
    REQUIRE(p[gold] == doctest::Approx(0.65 / 4).epsilon(1e-9));
    REQUIRE(p[gold] < p[inst.base->lure]);
  }
}

TEST_CASE("adversarial base: the lure is the expected plurality winner at N=16") {
  auto s = adversarial_family(40, 3);
  const auto d = generate_dataset(s);
  const auto w = fit_base_policy(d, 0.5);
  std::mt19937_64 g(17);
  for (const auto& inst : d.instances) {
    const auto p = oracle::softmax(oracle::logits(w, dense(d, inst)));
    std::discrete_distribution<std::size_t> draw(p.begin(), p.end());
    std::map<std::size_t, int> wins;
    const int trials = 2500;
    for (int t = 0; t < trials; ++t) {
      std::vector<int> count(p.size(), 0);
      std::vector<std::size_t> first_seen;
      for (int k = 0; k < 16; ++k) {
        const auto a = draw(g);
        if (count[a]++ == 0) first_seen.push_back(a);
      }
      std::size_t best = first_seen.front();
      for (std::size_t a : first_seen)
        if (count[a] > count[best]) best = a;
      ++wins[best];
    }
    const auto gold = *d.vocab.find(inst.gold->reveal());
    for (const auto& [a, n] : wins)
      if (a != inst.base->lure) REQUIRE(wins[inst.base->lure] > n);
    REQUIRE(wins[inst.base->lure] > wins[gold]);
  }
}

TEST_CASE("strip_labels keeps everything but the labels") {
  const auto d = generate_dataset(SyntheticSpec{});
  const auto u = strip_labels(d);
  REQUIRE(u.instances.size() == d.instances.size());
  CHECK(u.feature_dim == d.feature_dim);
  for (std::size_t i = 0; i < d.instances.size(); ++i) {
    CHECK(u.instances[i].instance_id == d.instances[i].instance_id);
    CHECK(u.instances[i].features == d.instances[i].features);
    CHECK(u.instances[i].candidates == d.instances[i].candidates);
    CHECK(u.instances[i].kind == d.kind_of(d.instances[i]));
  }
}
