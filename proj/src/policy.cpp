#include "selfevo/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "selfevo/error.hpp"
#include "selfevo/rng.hpp"
#include "selfevo/textproc.hpp"

namespace selfevo {

Matrix& Matrix::operator+=(const Matrix& other) {
  add_scaled(other, 1.0);
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

void Matrix::add_scaled(const Matrix& other, double s) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw InvalidArgument("matrix shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
}

void Matrix::add_outer(std::span<const double> u, std::span<const double> v, double s) {
  if (u.size() != rows_ || v.size() != cols_) throw InvalidArgument("outer product shape mismatch");
  for (std::size_t r = 0; r < rows_; ++r) {
    const double ur = s * u[r];
    if (ur == 0.0) continue;
    double* row = data_.data() + r * cols_;
    for (std::size_t c = 0; c < cols_; ++c)
      if (v[c] != 0.0) row[c] += ur * v[c];
  }
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

AnswerVocabulary::AnswerVocabulary(std::vector<std::string> answers) : answers_(std::move(answers)) {
  if (answers_.size() < 2) throw InvalidArgument("vocabulary needs at least 2 answers");
  std::vector<std::string> norm;
  norm.reserve(answers_.size());
  for (const auto& a : answers_) norm.push_back(normalize_answer(a));
  std::sort(norm.begin(), norm.end());
  const auto dup = std::adjacent_find(norm.begin(), norm.end());
  if (dup != norm.end()) throw InvalidArgument("duplicate vocabulary answer \"" + *dup + "\"");
}

std::optional<std::size_t> AnswerVocabulary::find(std::string_view text) const {
  const std::string key = normalize_answer(text);
  for (std::size_t i = 0; i < answers_.size(); ++i)
    if (normalize_answer(answers_[i]) == key) return i;
  return std::nullopt;
}

std::uint64_t AnswerVocabulary::fingerprint() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& a : answers_) {
    h = fnv1a64(a, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void SamplerConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidArgument("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("top_p must be in (0, 1]");
}

namespace {

void check_shapes(const PolicyParams& params, const QuestionFeatures& q) {
  if (q.phi.size() != params.feature_dim())
    throw InvalidArgument("feature dimension " + std::to_string(q.phi.size()) +
                          " does not match policy dimension " + std::to_string(params.feature_dim()));
}

void check_index(const PolicyParams& params, std::size_t a) {
  if (a >= params.vocab_size()) throw InvalidArgument("answer index out of range");
}

std::vector<double> log_softmax(std::vector<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double x : z) s += std::exp(x - m);
  const double lse = m + std::log(s);
  for (double& x : z) x -= lse;
  return z;
}

}  // namespace

std::vector<double> logits(const PolicyParams& params, const QuestionFeatures& q) {
  check_shapes(params, q);
  const Matrix& w = params.weights;
  std::vector<double> z(w.rows(), 0.0);
  for (std::size_t c = 0; c < w.cols(); ++c) {
    const double f = q.phi[c];
    if (f == 0.0) continue;
    for (std::size_t r = 0; r < w.rows(); ++r) z[r] += w(r, c) * f;
  }
  return z;
}

std::vector<double> log_probs(const PolicyParams& params, const QuestionFeatures& q) {
  return log_softmax(logits(params, q));
}

std::vector<double> probs(const PolicyParams& params, const QuestionFeatures& q) {
  std::vector<double> p = log_probs(params, q);
  for (double& x : p) x = std::exp(x);
  return p;
}

double log_prob(const PolicyParams& params, const QuestionFeatures& q, std::size_t answer_index) {
  check_index(params, answer_index);
  return log_probs(params, q)[answer_index];
}

Nucleus nucleus(const PolicyParams& params, const QuestionFeatures& q, const SamplerConfig& sampler) {
  sampler.validate();
  std::vector<double> z = logits(params, q);
  for (double& x : z) x /= sampler.temperature;
  std::vector<double> p = log_softmax(std::move(z));
  for (double& x : p) x = std::exp(x);

  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  Nucleus n;
  double mass = 0.0;
  for (std::size_t idx : order) {
    n.indices.push_back(idx);
    n.probs.push_back(p[idx]);
    mass += p[idx];
    // Slack absorbs rounding so top_p = 1 never drops the tail.
    if (mass >= sampler.top_p - 1e-12) break;
  }
  for (double& x : n.probs) x /= mass;
  return n;
}

std::vector<Sample> sample(const PolicyParams& params, const QuestionFeatures& q,
                           const SamplerConfig& sampler, std::size_t n) {
  if (n == 0) throw InvalidArgument("sample count must be >= 1");
  const Nucleus nuc = nucleus(params, q, sampler);
  const std::vector<double> lp = log_probs(params, q);
  Rng rng(sampler.seed);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t pick = nuc.indices.back();
    for (std::size_t j = 0; j < nuc.indices.size(); ++j) {
      cum += nuc.probs[j];
      if (u < cum) {
        pick = nuc.indices[j];
        break;
      }
    }
    out.push_back({pick, lp[pick]});
  }
  return out;
}

std::size_t greedy(const PolicyParams& params, const QuestionFeatures& q) {
  const std::vector<double> z = logits(params, q);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

Matrix log_prob_grad(const PolicyParams& params, const QuestionFeatures& q, std::size_t answer_index) {
  check_index(params, answer_index);
  std::vector<double> g = probs(params, q);
  for (double& x : g) x = -x;
  g[answer_index] += 1.0;
  Matrix out(params.vocab_size(), params.feature_dim());
  out.add_outer(g, q.phi, 1.0);
  return out;
}

double kl_exact(const PolicyParams& params_new, const PolicyParams& params_old,
                const QuestionFeatures& q) {
  const std::vector<double> lp = log_probs(params_new, q);
  const std::vector<double> lq = log_probs(params_old, q);
  if (lp.size() != lq.size()) throw InvalidArgument("kl_exact: vocabulary mismatch");
  double kl = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  return std::max(kl, 0.0);
}

Matrix kl_grad(const PolicyParams& params_new, const PolicyParams& params_old,
               const QuestionFeatures& q) {
  const std::vector<double> lp = log_probs(params_new, q);
  const std::vector<double> lq = log_probs(params_old, q);
  if (lp.size() != lq.size()) throw InvalidArgument("kl_grad: vocabulary mismatch");
  double kl = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  // dKL/dz_j = p_j (log p_j - log q_j - KL)
  std::vector<double> g(lp.size());
  for (std::size_t a = 0; a < lp.size(); ++a) g[a] = std::exp(lp[a]) * (lp[a] - lq[a] - kl);
  Matrix out(params_new.vocab_size(), params_new.feature_dim());
  out.add_outer(g, q.phi, 1.0);
  return out;
}

std::uint64_t params_fingerprint(const PolicyParams& params) {
  const auto d = params.weights.data();
  std::uint64_t h = fnv1a64(std::to_string(params.vocab_size()) + "x" + std::to_string(params.feature_dim()));
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double)), h);
}

std::string checkpoint_to_string(const PolicyParams& params, std::uint64_t vocab_fingerprint) {
  std::string out = "selfevo-policy 1\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu %zu %016" PRIx64 "\n", params.vocab_size(), params.feature_dim(),
                vocab_fingerprint);
  out += buf;
  for (std::size_t r = 0; r < params.vocab_size(); ++r) {
    for (std::size_t c = 0; c < params.feature_dim(); ++c) {
      std::snprintf(buf, sizeof buf, c ? " %.17g" : "%.17g", params.weights(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void save_checkpoint(const PolicyParams& params, std::uint64_t vocab_fingerprint,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(params, vocab_fingerprint);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint parse_checkpoint(std::string_view contents) {
  std::istringstream in{std::string(contents)};
  std::string magic, version;
  in >> magic >> version;
  if (magic != "selfevo-policy") throw ParseError("not a policy checkpoint", 1);
  if (version != "1") throw ParseError("unsupported checkpoint version " + version, 1);
  std::size_t v = 0, d = 0;
  std::string fp;
  if (!(in >> v >> d >> fp) || fp.size() != 16) throw ParseError("bad checkpoint header", 2);
  Checkpoint ck;
  auto [p, ec] = std::from_chars(fp.data(), fp.data() + fp.size(), ck.vocab_fingerprint, 16);
  if (ec != std::errc() || p != fp.data() + fp.size()) throw ParseError("bad vocabulary fingerprint", 2);
  if (v < 2 || d < 1) throw ParseError("bad checkpoint shape", 2);
  ck.params = PolicyParams::zeros(v, d);
  for (std::size_t r = 0; r < v; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      std::string tok;
      if (!(in >> tok)) throw ParseError("checkpoint truncated", r + 3);
      double x = 0.0;
      auto [q, e] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (e != std::errc() || q != tok.data() + tok.size() || !std::isfinite(x))
        throw ParseError("bad weight \"" + tok + "\"", r + 3);
      ck.params.weights(r, c) = x;
    }
  }
  std::string extra;
  if (in >> extra) throw ParseError("trailing data in checkpoint");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Checkpoint ck = parse_checkpoint(buf.str());
  if (expected_vocab && *expected_vocab != ck.vocab_fingerprint)
    throw InvalidArgument("checkpoint was written for a different vocabulary");
  return ck;
}

}  // namespace selfevo
