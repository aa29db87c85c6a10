#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace selfevo {

/// Fixed-length real vector produced by an encoder.
struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double l2_distance(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

enum class EncoderKind { hashed_ngram, external_table };

/// Precomputed answer embeddings keyed by normalized answer text.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, EmbeddingVector> rows;  // unit-normalized
};

/// Immutable description of a sentence encoder.
///
/// The hashed kind maps each word n-gram of the normalized text to a bucket
/// and a sign taken from a seeded 64-bit hash, accumulates, and
/// L2-normalizes. The hash is 64-bit FNV-1a over the n-gram bytes (words
/// joined by one space) with offset basis `0xcbf29ce484222325 ^
/// splitmix64(seed)`, followed by the splitmix64 finalizer; the bucket is
/// that value modulo `dim` and its top bit selects sign -1. Both functions
/// are public and fixed, so vectors agree across processes and platforms.
class EncoderSpec {
 public:
  static constexpr std::size_t kDefaultDim = 256;

  /// Default hashed word n-gram encoder (orders {1,2}, dim 256, seed 0).
  EncoderSpec();
  static EncoderSpec hashed(std::size_t dim = kDefaultDim, std::vector<int> ngram_orders = {1, 2},
                            std::uint64_t seed = 0);
  static EncoderSpec from_table(std::shared_ptr<const EmbeddingTable> table);

  EncoderKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<int>& ngram_orders() const noexcept { return ngram_orders_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const EmbeddingTable* table() const noexcept { return table_.get(); }

  /// Throws InvalidArgument unless dim >= 2 and every n-gram order >= 1.
  void validate() const;

 private:
  EncoderKind kind_ = EncoderKind::hashed_ngram;
  std::size_t dim_ = kDefaultDim;
  std::vector<int> ngram_orders_{1, 2};
  std::uint64_t seed_ = 0;
  std::shared_ptr<const EmbeddingTable> table_;
};

/// Bucket and sign for one n-gram string under the hashed encoder.
struct HashedFeature {
  std::size_t bucket;
  int sign;
};
HashedFeature hash_ngram(std::string_view ngram, std::size_t dim, std::uint64_t seed);

/// Word n-grams of the normalized text for the given orders (with repeats).
std::vector<std::string> word_ngrams(std::string_view text, const std::vector<int>& orders);

/// Encodes `text`. Unit norm always; empty or fully cancelled input maps to
/// e0. External tables throw MissingKey for unknown texts.
EmbeddingVector encode(const EncoderSpec& spec, std::string_view text);

/// Reads `<answer>\t<v1> <v2> ...` records, optional `#dim=<d>` header.
EncoderSpec load_external_table(const std::filesystem::path& path);
EncoderSpec parse_external_table(std::string_view contents);

}  // namespace selfevo
