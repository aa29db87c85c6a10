#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace selfevo {

/// Dense row-major real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix& operator+=(const Matrix& other);
  Matrix& operator*=(double s);
  /// this += s * other
  void add_scaled(const Matrix& other, double s);
  /// this += s * u v^T
  void add_outer(std::span<const double> u, std::span<const double> v, double s);

  bool all_finite() const;
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Ordered answer strings with unique normalized forms.
class AnswerVocabulary {
 public:
  AnswerVocabulary() = default;
  explicit AnswerVocabulary(std::vector<std::string> answers);

  std::size_t size() const noexcept { return answers_.size(); }
  const std::string& operator[](std::size_t i) const { return answers_.at(i); }
  const std::vector<std::string>& answers() const noexcept { return answers_; }
  std::optional<std::size_t> find(std::string_view text) const;
  /// FNV-1a of the answers joined by newlines; stamped into checkpoints.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> answers_;
};

/// Conditioning input of the policy: a dense feature vector for one instance.
struct QuestionFeatures {
  std::string instance_id;
  std::vector<double> phi;
};

/// Linear-softmax categorical policy: logits = W phi, W of shape V x D.
struct PolicyParams {
  Matrix weights;

  std::size_t vocab_size() const noexcept { return weights.rows(); }
  std::size_t feature_dim() const noexcept { return weights.cols(); }
  static PolicyParams zeros(std::size_t vocab, std::size_t features) {
    return PolicyParams{Matrix(vocab, features)};
  }
  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Exploration settings; never part of the optimized distribution.
struct SamplerConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  std::size_t answer_index = 0;
  double logprob_old = 0.0;  // untempered, untruncated log-probability
};

std::vector<double> logits(const PolicyParams& params, const QuestionFeatures& q);
/// Stable log-softmax of the untempered logits.
std::vector<double> log_probs(const PolicyParams& params, const QuestionFeatures& q);
std::vector<double> probs(const PolicyParams& params, const QuestionFeatures& q);
double log_prob(const PolicyParams& params, const QuestionFeatures& q, std::size_t answer_index);

/// Indices of the top-p nucleus of softmax(z / temperature), in descending
/// probability order (ties by index), together with their renormalized mass.
struct Nucleus {
  std::vector<std::size_t> indices;
  std::vector<double> probs;
};
Nucleus nucleus(const PolicyParams& params, const QuestionFeatures& q, const SamplerConfig& sampler);

/// n independent draws, deterministic in sampler.seed.
std::vector<Sample> sample(const PolicyParams& params, const QuestionFeatures& q,
                           const SamplerConfig& sampler, std::size_t n);

/// Index of the largest logit, lowest index on ties.
std::size_t greedy(const PolicyParams& params, const QuestionFeatures& q);

/// d log pi(a|x) / dW = (e_a - pi) phi^T.
Matrix log_prob_grad(const PolicyParams& params, const QuestionFeatures& q, std::size_t answer_index);

/// KL(pi_new || pi_old) over the full vocabulary.
double kl_exact(const PolicyParams& params_new, const PolicyParams& params_old,
                const QuestionFeatures& q);
/// Gradient of kl_exact with respect to params_new.
Matrix kl_grad(const PolicyParams& params_new, const PolicyParams& params_old,
               const QuestionFeatures& q);

/// FNV-1a over the raw bytes of the weights; used in run logs.
std::uint64_t params_fingerprint(const PolicyParams& params);

// Checkpoint format (text, one value per token):
//   selfevo-policy 1
//   <V> <D> <vocabulary fingerprint as 16 hex digits>
//   V lines of D values printed with %.17g
void save_checkpoint(const PolicyParams& params, std::uint64_t vocab_fingerprint,
                     const std::filesystem::path& path);
std::string checkpoint_to_string(const PolicyParams& params, std::uint64_t vocab_fingerprint);

struct Checkpoint {
  PolicyParams params;
  std::uint64_t vocab_fingerprint = 0;
};
Checkpoint parse_checkpoint(std::string_view contents);
/// Throws InvalidArgument when `expected_vocab` is given and does not match.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab = std::nullopt);

}  // namespace selfevo
