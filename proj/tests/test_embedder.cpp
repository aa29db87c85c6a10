#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "selfevo/embedder.hpp"
#include "selfevo/error.hpp"

using namespace selfevo;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  const auto p = std::filesystem::temp_directory_path() / ("selfevo_test_" + name);
  std::ofstream(p, std::ios::binary) << contents;
  return p;
}

}  // namespace

TEST_CASE("reference hash matches published vectors") {
  CHECK(oracle::fnv1a("", 14695981039346656037ULL) == 0xcbf29ce484222325ULL);
  CHECK(oracle::fnv1a("a", 14695981039346656037ULL) == 0xaf63dc4c8601ec8cULL);
  CHECK(oracle::fnv1a("foobar", 14695981039346656037ULL) == 0x85944171f73967e8ULL);
  CHECK(oracle::splitmix(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("hash_ngram follows the documented construction") {
  for (std::uint64_t seed : {0ULL, 1ULL, 12345ULL}) {
    for (const char* g : {"left", "lung", "left lung", "yes", "no"}) {
      const std::uint64_t h = oracle::splitmix(oracle::fnv1a(g, 0xcbf29ce484222325ULL ^ oracle::splitmix(seed)));
      const auto f = hash_ngram(g, 256, seed);
      CHECK(f.bucket == h % 256);
      CHECK(f.sign == ((h >> 63) ? -1 : 1));
    }
  }
}

TEST_CASE("word_ngrams") {
  CHECK(word_ngrams("Left  Lung.", {1, 2}) == std::vector<std::string>{"left", "lung", "left lung"});
  CHECK(word_ngrams("a b c", {2}) == std::vector<std::string>{"a b", "b c"});
  CHECK(word_ngrams("", {1, 2}).empty());
  CHECK(word_ngrams("a", {2}).empty());
}

TEST_CASE("encode against the hand-built reference") {
  const EncoderSpec spec;
  CHECK(spec.kind() == EncoderKind::hashed_ngram);
  CHECK(spec.dim() == 256);
  CHECK(spec.ngram_orders() == std::vector<int>{1, 2});
  CHECK(encode(spec, "left lung").values == oracle::encode({"left", "lung", "left lung"}, 256, 0));
  CHECK(encode(spec, "right kidney").values == oracle::encode({"right", "kidney", "right kidney"}, 256, 0));
}

TEST_CASE("encode examples") {
  const EncoderSpec spec;
  CHECK(encode(spec, "left lung") == encode(spec, "left lung"));
  const auto e = encode(spec, "");
  CHECK(e.values[0] == 1.0);
  for (std::size_t i = 1; i < e.dim(); ++i) REQUIRE(e.values[i] == 0.0);

  const auto ll = oracle::encode({"left", "lung", "left lung"}, 256, 0);
  const auto lll = oracle::encode({"left", "lung", "lobe", "left lung", "lung lobe"}, 256, 0);
  const auto rk = oracle::encode({"right", "kidney", "right kidney"}, 256, 0);
  CHECK(dot(ll, lll) > dot(ll, rk));
  CHECK(cosine(encode(spec, "left lung"), encode(spec, "left lung lobe")) >
        cosine(encode(spec, "left lung"), encode(spec, "right kidney")));
}

TEST_CASE("yes and no land in distinct buckets at seed 0") {
  const auto y = hash_ngram("yes", 256, 0), n = hash_ngram("no", 256, 0);
  CHECK(y.bucket != n.bucket);
  CHECK(l2_distance(encode(EncoderSpec{}, "yes").values, encode(EncoderSpec{}, "no").values) ==
        doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("unit norm and bag invariance") {
  std::mt19937_64 g(3);
  const char* words[] = {"left", "right", "lung", "lobe", "mass", "upper", "small"};
  const auto unigram = EncoderSpec::hashed(64, {1}, 9);
  for (int t = 0; t < 2000; ++t) {
    std::vector<std::string> w;
    for (int k = std::uniform_int_distribution<int>(0, 5)(g); k > 0; --k)
      w.push_back(words[std::uniform_int_distribution<int>(0, 6)(g)]);
    std::string text;
    for (const auto& s : w) text += s + " ";
    REQUIRE(l2_norm(encode(EncoderSpec{}, text).values) == doctest::Approx(1.0).epsilon(1e-9));
    // With unigrams only, any permutation has the same n-gram multiset.
    std::shuffle(w.begin(), w.end(), g);
    std::string permuted;
    for (const auto& s : w) permuted += s + " ";
    REQUIRE(encode(unigram, text) == encode(unigram, permuted));
  }
}

TEST_CASE("encoder spec validation") {
  CHECK_THROWS_AS(EncoderSpec::hashed(1), InvalidArgument);
  CHECK_THROWS_AS(EncoderSpec::hashed(8, {}), InvalidArgument);
  CHECK_THROWS_AS(EncoderSpec::hashed(8, {0}), InvalidArgument);
  CHECK_THROWS_AS(EncoderSpec::from_table(nullptr), InvalidArgument);
}

TEST_CASE("external table load") {
  const auto path = temp_file("table.tsv", "#dim=4\nLeft Lung\t3 0 0 4\nright kidney\t0 1 0 0\nyes\t1 1 1 1\n");
  const auto spec = load_external_table(path);
  CHECK(spec.kind() == EncoderKind::external_table);
  CHECK(spec.dim() == 4);
  CHECK(spec.table()->rows.size() == 3);
  CHECK(encode(spec, "left lung").values == std::vector<double>{0.6, 0.0, 0.0, 0.8});
  CHECK(encode(spec, "YES.").values == std::vector<double>{0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(encode(spec, "liver"), MissingKey);
  std::filesystem::remove(path);
}

TEST_CASE("external table errors") {
  try {
    parse_external_table("a\t1 0\nb\t0 1\nA\t1 1\n");
    FAIL("duplicate accepted");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("\"a\"") != std::string::npos);
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_external_table("a 1 0\n"), ParseError);
  CHECK_THROWS_AS(parse_external_table("a\t1 x\n"), ParseError);
  CHECK_THROWS_AS(parse_external_table("a\t1 0\nb\t1 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_external_table("#dim=3\na\t1 0\n"), ParseError);
  CHECK_THROWS_AS(parse_external_table("a\t0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_external_table(""), ParseError);
  CHECK_THROWS_AS(load_external_table("/nonexistent/table.tsv"), IoError);
}
