#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfevo/policy.hpp"
#include "selfevo/reward.hpp"

namespace selfevo {

/// While at least one seal is alive on a thread, reading any gold answer on
/// that thread throws LabelLeak. The evolution loop holds a seal for the
/// duration of every step.
class LabelSeal {
 public:
  LabelSeal() noexcept;
  ~LabelSeal();
  LabelSeal(const LabelSeal&) = delete;
  LabelSeal& operator=(const LabelSeal&) = delete;

  static bool active() noexcept;
};

/// Evaluation-only answer. The text is reachable only through reveal().
class GoldAnswer {
 public:
  explicit GoldAnswer(std::string text) : text_(std::move(text)) {}

  const std::string& reveal() const;
  /// Process-wide count of reveal() calls, for audits.
  static std::uint64_t reveal_count() noexcept;

 private:
  std::string text_;
};

struct FeatureEntry {
  std::size_t index = 0;
  double value = 0.0;
  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

/// Generator hint describing the intended base distribution of an open
/// instance: one lure answer holding `lure_mass`.
struct BaseProfile {
  std::size_t lure = 0;
  double lure_mass = 0.0;
  bool adversarial = true;
};

struct TestInstance {
  std::string instance_id;
  std::vector<FeatureEntry> features;  // sparse phi
  std::optional<QuestionKind> kind;    // inferred from candidates when absent
  std::vector<std::size_t> candidates; // vocabulary indices legal here
  std::optional<GoldAnswer> gold;
  std::optional<BaseProfile> base;
};

/// What the evolution loop sees: no gold, no generator hints.
struct UnlabeledInstance {
  std::string instance_id;
  std::vector<FeatureEntry> features;
  QuestionKind kind = QuestionKind::open;
  std::vector<std::size_t> candidates;
};

struct Dataset {
  AnswerVocabulary vocab;
  std::size_t feature_dim = 0;
  std::vector<TestInstance> instances;

  QuestionKind kind_of(const TestInstance& inst) const;
};

struct UnlabeledDataset {
  AnswerVocabulary vocab;
  std::size_t feature_dim = 0;
  std::vector<UnlabeledInstance> instances;
};

UnlabeledDataset strip_labels(const Dataset& data);

QuestionFeatures to_features(const std::string& id, const std::vector<FeatureEntry>& entries,
                             std::size_t dim);

/// Desk-scale stand-in for a medical VQA test split.
///
/// Open instances ask for one of a fixed pool of findings; the correct
/// answer is a cluster of surface forms (a canonical phrase plus longer
/// paraphrases that contain it), the rest of the candidates are canonical
/// phrases of other findings. Closed instances are yes/no questions
/// organised in label-pure groups that share one feature column.
struct SyntheticSpec {
  std::size_t n_contexts = 64;
  std::size_t answers_per_context = 6;  // open candidates: cluster + distractors
  std::size_t paraphrases_per_cluster = 4;
  double closed_fraction = 0.5;
  double distractor_concentration = 0.25;  // base mass on the single lure
  std::size_t closed_groups = 4;
  bool adversarial = true;  // cluster mass spread evenly so the lure is the modal form
  std::uint64_t seed = 0;

  void validate() const;
};

/// Number of findings in the answer pool and paraphrase templates per finding.
inline constexpr std::size_t kFindingCount = 16;
inline constexpr std::size_t kMaxParaphrases = 7;
/// Closed questions carry a weak per-image feature next to their group
/// feature, so most of what is learned on one question is shared by its group.
inline constexpr double kClosedContextWeight = 0.25;
inline constexpr double kClosedGroupWeight = 0.3;

Dataset generate_dataset(const SyntheticSpec& spec);

std::string spec_to_json(const SyntheticSpec& spec);
/// Keys present override `defaults`; unknown keys are an error.
SyntheticSpec spec_from_json(std::string_view json, const SyntheticSpec& defaults = {});

// Dataset JSONL, one instance per line:
//   {"instance_id":..., "kind":"open"|"closed", "features":{"dim":D,"active":[[i,v],...]},
//    "candidates":[...], "gold":"..." (optional), "base":{...} (optional)}
// Vocabulary file: JSON array of answer strings.
std::string dataset_to_jsonl(const Dataset& data);
std::string vocabulary_to_json(const AnswerVocabulary& vocab);
Dataset dataset_from_jsonl(std::string_view jsonl, AnswerVocabulary vocab);
AnswerVocabulary vocabulary_from_json(std::string_view json);

void save_dataset(const Dataset& data, const std::filesystem::path& dataset_path,
                  const std::filesystem::path& vocab_path);
Dataset load_dataset(const std::filesystem::path& dataset_path, const std::filesystem::path& vocab_path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace selfevo
