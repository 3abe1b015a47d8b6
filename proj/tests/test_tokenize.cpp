#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "ramm/codebook.hpp"
#include "ramm/text_vocab.hpp"

using namespace ramm;

TEST_CASE("vocabulary over the caption template is counted exactly") {
  SynthConfig cfg;
  cfg.shapes = {"circle", "square", "triangle"};
  cfg.colors = {"red", "green", "blue"};
  cfg.backgrounds = {"white", "slate"};
  cfg.n_train = 100;
  cfg.seed = 1;
  SynthCorpus corpus = synth_corpus(cfg);
  TextVocab tv = TextVocab::fit(corpus.train);

  // Enumerated independently from the template: {a, on, background} plus
  // every attribute word.
  std::set<std::string> expected = {"a", "on", "background"};
  for (auto& s : cfg.shapes) expected.insert(s);
  for (auto& c : cfg.colors) expected.insert(c);
  for (auto& b : cfg.backgrounds) expected.insert(b);
  CHECK(tv.size() == static_cast<int>(expected.size()));
  for (const auto& word : expected) CHECK(tv.contains(word));

  TextVocab tv2 = TextVocab::fit(corpus.train);
  CHECK(tv == tv2);
}

TEST_CASE("encode/decode round trip and errors") {
  const auto& tv = testing::tiny_world().tv;
  CHECK(tv.decode(tv.encode("a red circle")) == "a red circle");
  CHECK(tv.encode("").empty());
  CHECK(tv.decode({}).empty());
  CHECK_THROWS_AS(tv.encode("a crimson circle"), std::invalid_argument);
  CHECK(tv.decode(tv.encode("a  red   circle")) == "a red circle");
}

TEST_CASE("vocab ids are contiguous above the reserved range") {
  const auto& tv = testing::tiny_world().tv;
  for (int i = 0; i < tv.size(); ++i) {
    const std::string& word = tv.word_of(kNumReservedIds + i);
    CHECK(tv.id_of(word) == kNumReservedIds + i);
  }
  CHECK_THROWS(tv.word_of(0));
  CHECK_THROWS(tv.word_of(kNumReservedIds + tv.size()));
}

TEST_CASE("vocab binary round trip") {
  const auto& tv = testing::tiny_world().tv;
  std::string dir = testing::temp_dir("vocab_io");
  tv.save(dir + "/tv.bin");
  CHECK(TextVocab::load(dir + "/tv.bin") == tv);
}

TEST_CASE("flat-color images with k=2 quantize exactly") {
  // Degenerate input: every image one flat color, two colors in the
  // collection. Each centroid lands on one color patch and the
  // quantization error is zero.
  std::vector<Image> images;
  for (uint8_t v : {100, 200}) {
    Image img;
    img.width = img.height = 8;
    img.rgb.assign(8 * 8 * 3, v);
    images.push_back(img);
  }
  Codebook::FitStats stats;
  Codebook cb = Codebook::fit(images, 2, 4, 5, 0, &stats);
  std::set<std::vector<double>> got, expected;
  for (int c = 0; c < 2; ++c) {
    std::vector<double> row(cb.centroids().cols());
    for (int j = 0; j < cb.centroids().cols(); ++j)
      row[j] = cb.centroids()(c, j);
    got.insert(std::move(row));
  }
  for (double v : {100.0, 200.0})
    expected.insert(std::vector<double>(48, v / 255.0));
  CHECK(got == expected);
  CHECK(stats.objective_per_iter.back() == doctest::Approx(0.0));
  for (const Image& img : images)
    CHECK(cb.detokenize(cb.tokenize(img), 8) == img);
}

TEST_CASE("k-means objective is non-increasing") {
  const auto& w = testing::tiny_world();
  std::vector<Image> images;
  for (int i = 0; i < 60; ++i)
    images.push_back(w.corpus.train[i].segments[1].pixels);
  Codebook::FitStats stats;
  Codebook::fit(images, 16, 4, 12, 9, &stats);
  REQUIRE(stats.objective_per_iter.size() == 12);
  for (size_t i = 1; i < stats.objective_per_iter.size(); ++i)
    CHECK(stats.objective_per_iter[i] <=
          stats.objective_per_iter[i - 1] + 1e-12);
}

TEST_CASE("codebook fitting is deterministic given the seed") {
  const auto& w = testing::tiny_world();
  std::vector<Image> images;
  for (int i = 0; i < 40; ++i)
    images.push_back(w.corpus.train[i].segments[1].pixels);
  Codebook a = Codebook::fit(images, 8, 4, 10, 42);
  Codebook b = Codebook::fit(images, 8, 4, 10, 42);
  CHECK(a.centroids() == b.centroids());
  Codebook c = Codebook::fit(images, 8, 4, 10, 43);
  CHECK(a.centroids() != c.centroids());
}

TEST_CASE("fewer distinct patches than k is an error") {
  std::vector<Image> images;
  Image img;
  img.width = img.height = 8;
  img.rgb.assign(8 * 8 * 3, 7);
  images.push_back(img);  // exactly one distinct patch
  CHECK_THROWS_AS(Codebook::fit(images, 2, 4, 5, 0),
                  std::invalid_argument);
}

TEST_CASE("token count is constant and ids in range") {
  const auto& w = testing::tiny_world();
  const int tpi = w.cb.tokens_per_image(16);
  CHECK(tpi == 16);
  for (int i = 0; i < 20; ++i) {
    auto codes = w.cb.tokenize(w.corpus.train[i].segments[1].pixels);
    CHECK(static_cast<int>(codes.size()) == tpi);
    for (int c : codes) {
      CHECK(c >= 0);
      CHECK(c < w.cb.k());
    }
  }
}

TEST_CASE("tokenize(detokenize(t)) is a fixed point on 100 random lists") {
  const auto& w = testing::tiny_world();
  // Guard: the fixed point requires distinct snapped centroids.
  std::set<std::vector<double>> uniq;
  for (int c = 0; c < w.cb.k(); ++c) {
    std::vector<double> row(w.cb.centroids().cols());
    for (int j = 0; j < w.cb.centroids().cols(); ++j)
      row[j] = w.cb.centroids()(c, j);
    uniq.insert(std::move(row));
  }
  REQUIRE(static_cast<int>(uniq.size()) == w.cb.k());

  Rng rng(77);
  const int tpi = w.cb.tokens_per_image(16);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> codes(tpi);
    for (int& c : codes) c = static_cast<int>(rng.below(w.cb.k()));
    Image img = w.cb.detokenize(codes, 16);
    CHECK(w.cb.tokenize(img) == codes);
  }
}

TEST_CASE("quantization is idempotent on real images") {
  const auto& w = testing::tiny_world();
  for (int i = 0; i < 10; ++i) {
    const Image& img = w.corpus.train[i].segments[1].pixels;
    Image once = w.cb.detokenize(w.cb.tokenize(img), 16);
    Image twice = w.cb.detokenize(w.cb.tokenize(once), 16);
    CHECK(once == twice);
  }
}

TEST_CASE("equidistant patch quantizes to the lower id") {
  // Centroids 3 and 7 straddle the patch at equal distance; everything else
  // is far away.
  const int dim = 4 * 4 * 3;
  Eigen::MatrixXd cents = Eigen::MatrixXd::Constant(8, dim, 200.0 / 255.0);
  cents.row(3) = Eigen::RowVectorXd::Constant(dim, 0.0);
  cents.row(7) = Eigen::RowVectorXd::Constant(dim, 2.0 / 255.0);
  Codebook cb = Codebook::from_centroids(cents, 4);
  Image img;
  img.width = img.height = 4;
  img.rgb.assign(dim, 1);  // exactly between rows 3 and 7
  auto codes = cb.tokenize(img);
  REQUIRE(codes.size() == 1);
  CHECK(codes[0] == 3);
}

TEST_CASE("detokenize rejects out-of-range ids and wrong counts") {
  const auto& w = testing::tiny_world();
  std::vector<int> codes(w.cb.tokens_per_image(16), 0);
  codes[0] = w.cb.k();
  CHECK_THROWS_AS(w.cb.detokenize(codes, 16), std::invalid_argument);
  CHECK_THROWS_AS(w.cb.detokenize({0, 1}, 16), std::invalid_argument);
}

TEST_CASE("codebook binary round trip") {
  const auto& w = testing::tiny_world();
  std::string dir = testing::temp_dir("codebook_io");
  w.cb.save(dir + "/cb.bin");
  Codebook back = Codebook::load(dir + "/cb.bin");
  CHECK(back.centroids() == w.cb.centroids());
  CHECK(back.patch_size() == w.cb.patch_size());
  CHECK(back.fit_seed() == w.cb.fit_seed());
}
