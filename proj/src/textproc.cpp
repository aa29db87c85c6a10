#include "selfevo/textproc.hpp"

#include <algorithm>
#include <iterator>

namespace selfevo {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ascii_lower(c));
  }
  // "yes ." and "no!!" both reduce to the bare word.
  while (!out.empty() && (is_terminal_punct(out.back()) || out.back() == ' ')) out.pop_back();
  return out;
}

TokenSet::TokenSet(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  std::erase_if(tokens_, [](const std::string& t) { return t.empty(); });
  std::sort(tokens_.begin(), tokens_.end());
  tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
}

bool TokenSet::contains(std::string_view token) const {
  return std::binary_search(tokens_.begin(), tokens_.end(), token,
                            [](std::string_view a, std::string_view b) { return a < b; });
}

TokenSet tokenize(std::string_view text) {
  const std::string norm = normalize_answer(text);
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    tokens.emplace_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return TokenSet(std::move(tokens));
}

std::size_t overlap(const TokenSet& a, const TokenSet& b) {
  std::size_t n = 0;
  auto ia = a.tokens().begin();
  auto ib = b.tokens().begin();
  while (ia != a.tokens().end() && ib != b.tokens().end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

double jaccard(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  const std::size_t inter = overlap(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double token_recall(const TokenSet& candidate, const TokenSet& reference) {
  if (reference.empty()) return 1.0;
  return static_cast<double>(overlap(candidate, reference)) / static_cast<double>(reference.size());
}

double rouge1_f1(const TokenSet& candidate, const TokenSet& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  const std::size_t inter = overlap(candidate, reference);
  if (inter == 0) return 0.0;
  const double p = static_cast<double>(inter) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(inter) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

}  // namespace selfevo
