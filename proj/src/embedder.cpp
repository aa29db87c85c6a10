#include "selfevo/embedder.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "selfevo/error.hpp"
#include "selfevo/rng.hpp"
#include "selfevo/textproc.hpp"

namespace selfevo {

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("l2_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double l2_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("cosine: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
  const double na = l2_norm(a.values), nb = l2_norm(b.values);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (na * nb);
}

EncoderSpec::EncoderSpec() = default;

EncoderSpec EncoderSpec::hashed(std::size_t dim, std::vector<int> ngram_orders, std::uint64_t seed) {
  EncoderSpec s;
  s.kind_ = EncoderKind::hashed_ngram;
  s.dim_ = dim;
  s.ngram_orders_ = std::move(ngram_orders);
  s.seed_ = seed;
  s.validate();
  return s;
}

EncoderSpec EncoderSpec::from_table(std::shared_ptr<const EmbeddingTable> table) {
  if (!table) throw InvalidArgument("embedding table is null");
  EncoderSpec s;
  s.kind_ = EncoderKind::external_table;
  s.dim_ = table->dim;
  s.ngram_orders_.clear();
  s.table_ = std::move(table);
  s.validate();
  return s;
}

void EncoderSpec::validate() const {
  if (dim_ < 2) throw InvalidArgument("encoder dim must be >= 2");
  if (kind_ == EncoderKind::hashed_ngram) {
    if (ngram_orders_.empty()) throw InvalidArgument("ngram_orders must be non-empty");
    for (int n : ngram_orders_)
      if (n < 1) throw InvalidArgument("ngram orders must be >= 1");
  } else if (!table_ || table_->dim != dim_) {
    throw InvalidArgument("external table encoder without a matching table");
  }
}

HashedFeature hash_ngram(std::string_view ngram, std::size_t dim, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(fnv1a64(ngram, 0xCBF29CE484222325ULL ^ splitmix64(seed)));
  return {static_cast<std::size_t>(h % dim), (h >> 63) ? -1 : 1};
}

std::vector<std::string> word_ngrams(std::string_view text, const std::vector<int>& orders) {
  const std::string norm = normalize_answer(text);
  std::vector<std::string> words;
  std::istringstream in(norm);
  for (std::string w; in >> w;) words.push_back(std::move(w));

  std::vector<std::string> grams;
  for (int order : orders) {
    const auto n = static_cast<std::size_t>(order);
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string g = words[i];
      for (std::size_t k = 1; k < n; ++k) {
        g.push_back(' ');
        g += words[i + k];
      }
      grams.push_back(std::move(g));
    }
  }
  return grams;
}

namespace {

EmbeddingVector unit_or_e0(std::vector<double> v) {
  const double norm = l2_norm(v);
  if (norm == 0.0) {
    std::fill(v.begin(), v.end(), 0.0);
    v[0] = 1.0;
  } else {
    for (double& x : v) x /= norm;
  }
  return EmbeddingVector{std::move(v)};
}

}  // namespace

EmbeddingVector encode(const EncoderSpec& spec, std::string_view text) {
  if (spec.kind() == EncoderKind::external_table) {
    const std::string key = normalize_answer(text);
    const auto it = spec.table()->rows.find(key);
    if (it == spec.table()->rows.end()) throw MissingKey(key);
    return it->second;
  }
  std::vector<double> acc(spec.dim(), 0.0);
  for (const std::string& g : word_ngrams(text, spec.ngram_orders())) {
    const HashedFeature f = hash_ngram(g, spec.dim(), spec.seed());
    acc[f.bucket] += f.sign;
  }
  return unit_or_e0(std::move(acc));
}

EncoderSpec parse_external_table(std::string_view contents) {
  auto table = std::make_shared<EmbeddingTable>();
  std::size_t declared_dim = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (end == contents.size()) break;
      continue;
    }
    if (line_no == 1 && line.starts_with("#dim=")) {
      const auto digits = line.substr(5);
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), declared_dim);
      if (ec != std::errc() || p != digits.data() + digits.size() || declared_dim < 2)
        throw ParseError("bad #dim header", line_no);
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError("missing TAB separator", line_no);
    const std::string key = normalize_answer(line.substr(0, tab));

    std::vector<double> values;
    std::istringstream in{std::string(line.substr(tab + 1))};
    std::string tok;
    while (in >> tok) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v))
        throw ParseError("bad number \"" + tok + "\"", line_no);
      values.push_back(v);
    }
    if (values.empty()) throw ParseError("row has no values", line_no);
    if (table->dim == 0) table->dim = declared_dim ? declared_dim : values.size();
    if (values.size() != table->dim)
      throw ParseError("dimension mismatch: expected " + std::to_string(table->dim) + ", got " +
                           std::to_string(values.size()),
                       line_no);
    const double norm = l2_norm(values);
    if (norm == 0.0) throw ParseError("zero vector for \"" + key + "\"", line_no);
    for (double& v : values) v /= norm;
    if (!table->rows.emplace(key, EmbeddingVector{std::move(values)}).second)
      throw ParseError("duplicate key \"" + key + "\"", line_no);
  }
  if (table->rows.empty()) throw ParseError("embedding table is empty");
  return EncoderSpec::from_table(std::move(table));
}

EncoderSpec load_external_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_external_table(buf.str());
}

}  // namespace selfevo
