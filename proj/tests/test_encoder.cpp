#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "ramm/encoder.hpp"

using namespace ramm;

namespace {
const testing::TinyWorld& W() { return testing::tiny_world(); }

std::vector<int> some_text_tokens(int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    out.push_back(kNumReservedIds + (i % W().tv.size()));
  return out;
}
}  // namespace

TEST_CASE("embeddings are unit norm") {
  for (int n : {1, 3, 9}) {
    Embedding e = embed_text(some_text_tokens(n), W().enc.params);
    CHECK(std::abs(e.values.norm() - 1.0) < 1e-6);
    CHECK(e.values.allFinite());
  }
  Embedding e = embed_image({0, 1, 2, 3}, W().enc.params);
  CHECK(std::abs(e.values.norm() - 1.0) < 1e-6);
}

TEST_CASE("mean pooling is order- and multiplicity-invariant") {
  std::vector<int> tokens = some_text_tokens(5);
  Embedding a = embed_text(tokens, W().enc.params);
  std::reverse(tokens.begin(), tokens.end());
  Embedding b = embed_text(tokens, W().enc.params);
  CHECK(a.values == b.values);

  std::vector<int> one = {kNumReservedIds + 2};
  std::vector<int> two = {kNumReservedIds + 2, kNumReservedIds + 2};
  CHECK(embed_text(one, W().enc.params).values ==
        embed_text(two, W().enc.params).values);
}

TEST_CASE("empty input is an error") {
  CHECK_THROWS_AS(embed_text({}, W().enc.params), std::invalid_argument);
  CHECK_THROWS_AS(embed_image({}, W().enc.params), std::invalid_argument);
}

TEST_CASE("embed_document: single-part documents pass through") {
  const Document& pair_doc = W().corpus.train[0];
  Document text_only = text_part_doc(pair_doc);
  Embedding via_doc = W().enc.embed_document(text_only);
  Embedding via_text =
      embed_text(W().tv.encode(*text_part(pair_doc)), W().enc.params);
  CHECK(via_doc.values == via_text.values);

  Document image_only = image_part_doc(pair_doc);
  Embedding via_doc_img = W().enc.embed_document(image_only);
  Embedding via_img = embed_image(
      W().cb.tokenize(pair_doc.segments[1].pixels), W().enc.params);
  CHECK(via_doc_img.values == via_img.values);
}

TEST_CASE("embed_document equals independently computed mean+normalize") {
  for (int i = 0; i < 10; ++i) {
    const Document& doc = W().corpus.train[i];
    Embedding both = W().enc.embed_document(doc);
    Embedding t = W().enc.embed_document(text_part_doc(doc));
    Embedding v = W().enc.embed_document(image_part_doc(doc));
    Eigen::VectorXd mean = 0.5 * (t.values + v.values);
    Eigen::VectorXd expected = mean / mean.norm();
    CHECK((both.values - expected).norm() < 1e-6);
    CHECK(std::abs(both.values.norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("averaging orthogonal part embeddings gives (u+v)/sqrt(2)") {
  // Hand-computed: normalize((u+v)/2) = (u+v)/sqrt(2) for unit u ⟂ v.
  Eigen::VectorXd u = Eigen::VectorXd::Zero(4), v = Eigen::VectorXd::Zero(4);
  u(0) = 1;
  v(1) = 1;
  Eigen::VectorXd mean = 0.5 * (u + v);
  Eigen::VectorXd got = mean / mean.norm();
  Eigen::VectorXd expected = (u + v) / std::sqrt(2.0);
  CHECK((got - expected).norm() < 1e-12);
}

TEST_CASE("relevance properties") {
  Embedding e = embed_text(some_text_tokens(4), W().enc.params);
  CHECK(relevance(e, e) == doctest::Approx(1.0).epsilon(1e-6));
  Embedding neg{-e.values};
  CHECK(relevance(e, neg) == doctest::Approx(-1.0).epsilon(1e-6));

  Embedding u{Eigen::VectorXd::Zero(4)}, v{Eigen::VectorXd::Zero(4)};
  u.values(0) = 1;
  v.values(1) = 1;
  CHECK(relevance(u, v) == 0.0);

  Embedding other = embed_image({0, 1}, W().enc.params);
  CHECK(relevance(e, other) == relevance(other, e));

  Embedding short_vec{Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(relevance(e, short_vec), std::invalid_argument);
}

TEST_CASE("contrastive gradients match central finite differences") {
  // Tiny dims, 3-pair batch, 64-bit arithmetic.
  DualEncoderConfig cfg;
  cfg.dim = 5;
  cfg.hidden = 4;
  cfg.seed = 13;
  DualEncoderParams params;
  params.config = cfg;
  params.temperature = 0.31;
  Rng rng(99);
  auto randm = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = 0.4 * rng.normal();
    return m;
  };
  params.text.table = randm(6, cfg.hidden);
  params.text.w = randm(cfg.dim, cfg.hidden);
  params.text.b = randm(cfg.dim, 1).col(0);
  params.image.table = randm(4, cfg.hidden);
  params.image.w = randm(cfg.dim, cfg.hidden);
  params.image.b = randm(cfg.dim, 1).col(0);

  std::vector<ContrastivePair> batch = {
      {{kNumReservedIds + 0, kNumReservedIds + 2}, {0, 1}},
      {{kNumReservedIds + 3}, {2, 3, 1}},
      {{kNumReservedIds + 4, kNumReservedIds + 5, kNumReservedIds + 1}, {3}},
  };

  EncoderGrads grads;
  contrastive_loss_and_grads(params, batch, &grads);
  auto loss_of = [&]() {
    return contrastive_loss_and_grads(params, batch, nullptr);
  };

  const double h = 1e-6;
  double max_rel = 0;
  auto check_block = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& grad) {
    for (int i = 0; i < param.rows(); ++i)
      for (int j = 0; j < param.cols(); ++j) {
        double fd = testing::central_diff(&param(i, j), h, loss_of);
        double denom = std::max({std::abs(fd), std::abs(grad(i, j)), 1e-8});
        max_rel = std::max(max_rel, std::abs(fd - grad(i, j)) / denom);
      }
  };
  check_block(params.text.table, grads.text.table);
  check_block(params.text.w, grads.text.w);
  check_block(params.image.table, grads.image.table);
  check_block(params.image.w, grads.image.w);
  Eigen::MatrixXd tb = params.text.b, gtb = grads.text.b;
  for (int i = 0; i < tb.rows(); ++i) {
    double fd = testing::central_diff(&params.text.b(i), h, loss_of);
    double denom = std::max({std::abs(fd), std::abs(grads.text.b(i)), 1e-8});
    max_rel = std::max(max_rel, std::abs(fd - grads.text.b(i)) / denom);
  }
  {
    double fd = testing::central_diff(&params.temperature, h, loss_of);
    double denom =
        std::max({std::abs(fd), std::abs(grads.temperature), 1e-8});
    max_rel = std::max(max_rel, std::abs(fd - grads.temperature) / denom);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  std::vector<ContrastivePair> pairs;
  for (int i = 0; i < 8; ++i)
    pairs.push_back({{kNumReservedIds + (i % W().tv.size())},
                     {i % W().cb.k(), (i + 1) % W().cb.k()}});
  DualEncoderConfig cfg;
  cfg.dim = 8;
  cfg.hidden = 8;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 0.0;
  cfg.seed = 5;
  DualEncoderParams trained = train_dual_encoder(pairs, cfg);
  cfg.epochs = 3;  // more zero-lr epochs change nothing
  DualEncoderParams trained3 = train_dual_encoder(pairs, cfg);
  CHECK(trained.text.table == trained3.text.table);
  CHECK(trained.image.w == trained3.image.w);
  CHECK(trained.temperature == trained3.temperature);
}

TEST_CASE("batch_size < 2 is rejected") {
  std::vector<ContrastivePair> pairs = {{{kNumReservedIds}, {0}},
                                        {{kNumReservedIds + 1}, {1}}};
  DualEncoderConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(train_dual_encoder(pairs, cfg), std::invalid_argument);
  CHECK_THROWS_AS(contrastive_loss_and_grads(W().enc.params,
                                             {pairs[0]}, nullptr),
                  std::invalid_argument);
}

TEST_CASE("trained encoder separates matching from mismatched pairs") {
  // >= 95% of eval pairs score their own image above a mismatched image.
  const auto& w = W();
  int wins = 0, total = 0;
  const auto& docs = w.corpus.train;
  for (size_t i = 0; i < 200 && i < docs.size(); ++i) {
    const Document& a = docs[i];
    const Document& b = docs[(i + 57) % docs.size()];
    if (*text_part(a) == *text_part(b)) continue;
    Embedding text = w.enc.embed_document(text_part_doc(a));
    Embedding own = w.enc.embed_document(image_part_doc(a));
    Embedding other = w.enc.embed_document(image_part_doc(b));
    wins += relevance(text, own) > relevance(text, other) ? 1 : 0;
    ++total;
  }
  REQUIRE(total >= 150);
  CHECK(static_cast<double>(wins) / total >= 0.95);
}

TEST_CASE("encoder params round trip through the checkpoint container") {
  std::string dir = testing::temp_dir("enc_io");
  W().enc.params.save(dir + "/enc.ckpt");
  DualEncoderParams back = DualEncoderParams::load(dir + "/enc.ckpt");
  CHECK(back.text.table == W().enc.params.text.table);
  CHECK(back.image.b == W().enc.params.image.b);
  CHECK(back.temperature == W().enc.params.temperature);
  CHECK(back.config.dim == W().enc.params.config.dim);
}

TEST_CASE("embedding apply paths are deterministic") {
  std::vector<int> tokens = some_text_tokens(6);
  Embedding a = embed_text(tokens, W().enc.params);
  Embedding b = embed_text(tokens, W().enc.params);
  CHECK(a.values == b.values);
}
