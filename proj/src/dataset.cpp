#include "selfevo/dataset.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "selfevo/error.hpp"
#include "selfevo/rng.hpp"

namespace selfevo {
namespace {

thread_local int seal_depth = 0;
std::atomic<std::uint64_t> reveals{0};

constexpr std::array<std::string_view, kFindingCount> kFindings = {
    "left lung",   "right kidney",  "liver lesion", "heart shadow",     "brain stem", "spinal cord",
    "upper abdomen", "pelvic cavity", "bladder neck", "colon mass",      "rib fracture", "pleural effusion",
    "lymph node",  "soft tissue",   "bone marrow",  "small bowel"};

// Paraphrases extend the canonical phrase, so every form of a cluster
// contains its tokens.
constexpr std::array<std::string_view, kMaxParaphrases - 1> kTemplates = {
    "{} region", "{} area", "the {}", "{} on imaging", "visible {}", "{} zone"};

std::string apply_template(std::string_view tmpl, std::string_view phrase) {
  std::string out(tmpl);
  out.replace(out.find("{}"), 2, phrase);
  return out;
}

using json = nlohmann::ordered_json;

}  // namespace

LabelSeal::LabelSeal() noexcept { ++seal_depth; }
LabelSeal::~LabelSeal() { --seal_depth; }
bool LabelSeal::active() noexcept { return seal_depth > 0; }

const std::string& GoldAnswer::reveal() const {
  if (LabelSeal::active()) throw LabelLeak("gold answer read inside the evolution loop");
  reveals.fetch_add(1, std::memory_order_relaxed);
  return text_;
}

std::uint64_t GoldAnswer::reveal_count() noexcept { return reveals.load(std::memory_order_relaxed); }

QuestionKind Dataset::kind_of(const TestInstance& inst) const {
  if (inst.kind) return *inst.kind;
  std::vector<std::string> texts;
  for (std::size_t c : inst.candidates) texts.push_back(vocab[c]);
  return infer_question_kind(texts);
}

UnlabeledDataset strip_labels(const Dataset& data) {
  UnlabeledDataset out{data.vocab, data.feature_dim, {}};
  out.instances.reserve(data.instances.size());
  for (const auto& inst : data.instances)
    out.instances.push_back({inst.instance_id, inst.features, data.kind_of(inst), inst.candidates});
  return out;
}

QuestionFeatures to_features(const std::string& id, const std::vector<FeatureEntry>& entries,
                             std::size_t dim) {
  QuestionFeatures q{id, std::vector<double>(dim, 0.0)};
  for (const auto& e : entries) {
    if (e.index >= dim) throw InvalidArgument("feature index out of range for " + id);
    q.phi[e.index] += e.value;
  }
  return q;
}

void SyntheticSpec::validate() const {
  if (n_contexts == 0) throw InvalidArgument("n_contexts must be >= 1");
  if (paraphrases_per_cluster == 0 || paraphrases_per_cluster > kMaxParaphrases)
    throw InvalidArgument("paraphrases_per_cluster must be in [1, " + std::to_string(kMaxParaphrases) + "]");
  if (answers_per_context <= paraphrases_per_cluster)
    throw InvalidArgument("answers_per_context must exceed paraphrases_per_cluster (need a distractor)");
  if (answers_per_context - paraphrases_per_cluster > kFindingCount - 1)
    throw InvalidArgument("more distractors requested than the finding pool holds");
  if (!(closed_fraction >= 0.0 && closed_fraction <= 1.0))
    throw InvalidArgument("closed_fraction must be in [0, 1]");
  if (!(distractor_concentration > 0.0 && distractor_concentration < 0.9))
    throw InvalidArgument("distractor_concentration must be in (0, 0.9)");
  if (closed_groups == 0) throw InvalidArgument("closed_groups must be >= 1");
}

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t p = spec.paraphrases_per_cluster;

  std::vector<std::string> answers = {"yes", "no"};
  for (std::string_view finding : kFindings) {
    answers.emplace_back(finding);
    for (std::size_t t = 0; t + 1 < p; ++t) answers.push_back(apply_template(kTemplates[t], finding));
  }
  auto cluster_begin = [&](std::size_t finding) { return 2 + finding * p; };

  const auto n_closed =
      static_cast<std::size_t>(std::llround(spec.closed_fraction * static_cast<double>(spec.n_contexts)));
  std::vector<std::size_t> order(spec.n_contexts);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng layout(mix_seeds(spec.seed, "layout"));
  layout.shuffle(order.begin(), order.end());
  std::vector<bool> is_closed(spec.n_contexts, false);
  for (std::size_t k = 0; k < n_closed; ++k) is_closed[order[k]] = true;

  const std::size_t groups = n_closed ? std::min(spec.closed_groups, n_closed) : 0;
  std::vector<std::size_t> group_gold(groups);
  Rng group_rng(mix_seeds(spec.seed, "groups"));
  for (auto& g : group_gold) g = group_rng.below(2);  // 0 = yes, 1 = no

  Dataset data;
  data.vocab = AnswerVocabulary(std::move(answers));
  data.feature_dim = spec.n_contexts + groups;

  Rng rng(mix_seeds(spec.seed, "instances"));
  std::size_t closed_ordinal = 0;
  for (std::size_t i = 0; i < spec.n_contexts; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "q%04zu", i);
    TestInstance inst;
    inst.instance_id = id;
    if (is_closed[i]) {
      const std::size_t g = closed_ordinal++ % groups;
      inst.features.push_back({i, kClosedContextWeight});
      inst.features.push_back({spec.n_contexts + g, kClosedGroupWeight});
      inst.kind = QuestionKind::closed;
      inst.candidates = {0, 1};
      inst.gold.emplace(data.vocab[group_gold[g]]);
    } else {
      inst.features.push_back({i, 1.0});
      const std::size_t gold = rng.below(kFindingCount);
      std::vector<std::size_t> others;
      for (std::size_t f = 0; f < kFindingCount; ++f)
        if (f != gold) others.push_back(f);
      rng.shuffle(others.begin(), others.end());
      others.resize(spec.answers_per_context - p);

      inst.kind = QuestionKind::open;
      for (std::size_t t = 0; t < p; ++t) inst.candidates.push_back(cluster_begin(gold) + t);
      for (std::size_t f : others) inst.candidates.push_back(cluster_begin(f));
      std::sort(inst.candidates.begin(), inst.candidates.end());
      inst.gold.emplace(data.vocab[cluster_begin(gold)]);
      inst.base = BaseProfile{cluster_begin(others.front()), spec.distractor_concentration, spec.adversarial};
    }
    data.instances.push_back(std::move(inst));
  }
  return data;
}

std::string vocabulary_to_json(const AnswerVocabulary& vocab) {
  return json(vocab.answers()).dump() + "\n";
}

AnswerVocabulary vocabulary_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("vocabulary: ") + e.what());
  }
  if (!j.is_array()) throw ParseError("vocabulary must be a JSON array of strings");
  std::vector<std::string> answers;
  for (const auto& a : j) {
    if (!a.is_string()) throw ParseError("vocabulary entries must be strings");
    answers.push_back(a.get<std::string>());
  }
  return AnswerVocabulary(std::move(answers));
}

std::string dataset_to_jsonl(const Dataset& data) {
  std::string out;
  for (const auto& inst : data.instances) {
    json j;
    j["instance_id"] = inst.instance_id;
    if (inst.kind) j["kind"] = to_string(*inst.kind);
    json active = json::array();
    for (const auto& f : inst.features) active.push_back(json::array({f.index, f.value}));
    j["features"] = {{"dim", data.feature_dim}, {"active", active}};
    j["candidates"] = inst.candidates;
    if (inst.gold) j["gold"] = inst.gold->reveal();
    if (inst.base)
      j["base"] = {{"lure", inst.base->lure},
                   {"lure_mass", inst.base->lure_mass},
                   {"adversarial", inst.base->adversarial}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_jsonl(std::string_view jsonl, AnswerVocabulary vocab) {
  Dataset data;
  data.vocab = std::move(vocab);
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TestInstance inst;
      inst.instance_id = j.at("instance_id").get<std::string>();
      if (j.contains("kind")) inst.kind = question_kind_from_string(j["kind"].get<std::string>());
      const auto& feats = j.at("features");
      const auto dim = feats.at("dim").get<std::size_t>();
      if (data.feature_dim == 0) data.feature_dim = dim;
      if (dim != data.feature_dim) throw ParseError("inconsistent feature dim", line_no);
      for (const auto& f : feats.at("active")) {
        FeatureEntry e{f.at(0).get<std::size_t>(), f.at(1).get<double>()};
        if (e.index >= dim || !std::isfinite(e.value)) throw ParseError("bad feature entry", line_no);
        inst.features.push_back(e);
      }
      inst.candidates = j.at("candidates").get<std::vector<std::size_t>>();
      for (std::size_t c : inst.candidates)
        if (c >= data.vocab.size()) throw ParseError("candidate index outside vocabulary", line_no);
      if (j.contains("gold")) {
        const auto gold = j["gold"].get<std::string>();
        if (!data.vocab.find(gold)) throw ParseError("gold answer \"" + gold + "\" not in vocabulary", line_no);
        inst.gold.emplace(gold);
      }
      if (j.contains("base")) {
        const auto& b = j["base"];
        inst.base = BaseProfile{b.at("lure").get<std::size_t>(), b.at("lure_mass").get<double>(),
                                b.value("adversarial", true)};
      }
      const QuestionKind kind = data.kind_of(inst);
      if (kind == QuestionKind::closed)
        for (std::size_t c : inst.candidates)
          if (c >= data.vocab.size() || infer_question_kind({data.vocab[c]}) != QuestionKind::closed)
            throw ParseError("closed instance with a non yes/no candidate", line_no);
      data.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw ParseError(std::string("dataset: ") + e.what(), line_no);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (data.instances.empty()) throw ParseError("dataset has no instances");
  return data;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void save_dataset(const Dataset& data, const std::filesystem::path& dataset_path,
                  const std::filesystem::path& vocab_path) {
  write_file(dataset_path, dataset_to_jsonl(data));
  write_file(vocab_path, vocabulary_to_json(data.vocab));
}

Dataset load_dataset(const std::filesystem::path& dataset_path, const std::filesystem::path& vocab_path) {
  return dataset_from_jsonl(read_file(dataset_path), vocabulary_from_json(read_file(vocab_path)));
}

std::string spec_to_json(const SyntheticSpec& spec) {
  nlohmann::ordered_json j;
  j["n_contexts"] = spec.n_contexts;
  j["answers_per_context"] = spec.answers_per_context;
  j["paraphrases_per_cluster"] = spec.paraphrases_per_cluster;
  j["closed_fraction"] = spec.closed_fraction;
  j["distractor_concentration"] = spec.distractor_concentration;
  j["closed_groups"] = spec.closed_groups;
  j["adversarial"] = spec.adversarial;
  j["seed"] = spec.seed;
  return j.dump();
}

SyntheticSpec spec_from_json(std::string_view text, const SyntheticSpec& defaults) {
  SyntheticSpec spec = defaults;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ParseError("synthetic spec must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "n_contexts") spec.n_contexts = value.get<std::size_t>();
      else if (key == "answers_per_context") spec.answers_per_context = value.get<std::size_t>();
      else if (key == "paraphrases_per_cluster") spec.paraphrases_per_cluster = value.get<std::size_t>();
      else if (key == "closed_fraction") spec.closed_fraction = value.get<double>();
      else if (key == "distractor_concentration") spec.distractor_concentration = value.get<double>();
      else if (key == "closed_groups") spec.closed_groups = value.get<std::size_t>();
      else if (key == "adversarial") spec.adversarial = value.get<bool>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else throw InvalidArgument("unknown synthetic spec key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace selfevo
