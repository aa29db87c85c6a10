#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace selfevo {

/// Lowercase, trim, collapse whitespace runs, drop trailing .,;:!?
std::string normalize_answer(std::string_view text);

/// Set of normalized, non-empty tokens kept in sorted order.
class TokenSet {
 public:
  TokenSet() = default;
  /// Accepts tokens in any order; empties are dropped and duplicates merged.
  explicit TokenSet(std::vector<std::string> tokens);

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  bool contains(std::string_view token) const;

  friend bool operator==(const TokenSet&, const TokenSet&) = default;

 private:
  std::vector<std::string> tokens_;
};

/// Whitespace split of normalize_answer(text).
TokenSet tokenize(std::string_view text);

/// Size of the intersection of two token sets.
std::size_t overlap(const TokenSet& a, const TokenSet& b);

// The three metrics below return 1.0 when both inputs are empty.
double jaccard(const TokenSet& a, const TokenSet& b);
double token_recall(const TokenSet& candidate, const TokenSet& reference);
double rouge1_f1(const TokenSet& candidate, const TokenSet& reference);

}  // namespace selfevo
