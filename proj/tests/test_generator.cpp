#include <doctest.h>

#include <algorithm>
#include <cstring>

#include "helpers.hpp"
#include "ramm/generator.hpp"

using namespace ramm;

namespace {

const testing::TinyWorld& W() { return testing::tiny_world(); }

GeneratorConfig tiny_gcfg(int d = 16, int layers = 2, int heads = 2) {
  GeneratorConfig g;
  g.text_vocab_size = 8;
  g.codebook_size = 6;
  g.d_model = d;
  g.n_heads = heads;
  g.n_layers = layers;
  g.max_seq_len = 64;
  return g;
}

std::vector<int> random_tokens(const GeneratorConfig& g, int len,
                               uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out(len);
  for (int& t : out) t = static_cast<int>(rng.below(g.vocab_size()));
  return out;
}

TokenStream stream_with_roles(const std::vector<int>& tokens, int main_begin) {
  TokenStream s;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i)
    s.push(tokens[i], i < main_begin ? Role::retrieved : Role::main);
  s.main_begin = main_begin;
  return s;
}

}  // namespace

TEST_CASE("forward shapes and softmax normalization") {
  GeneratorConfig g = tiny_gcfg();
  Rng rng(1);
  GeneratorParams p = GeneratorParams::init(g, rng);

  Eigen::MatrixXd one = generator_forward(p, {3});
  CHECK(one.rows() == 1);
  CHECK(one.cols() == g.vocab_size());

  std::vector<int> tokens = random_tokens(g, 20, 5);
  Eigen::MatrixXd logits = generator_forward(p, tokens);
  REQUIRE(logits.rows() == 20);
  for (int t = 0; t < logits.rows(); ++t) {
    Eigen::VectorXd probs = softmax(logits.row(t).transpose());
    CHECK(std::abs(probs.sum() - 1.0) < 1e-6);
  }

  CHECK_THROWS_AS(generator_forward(p, {g.vocab_size()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(generator_forward(p, random_tokens(g, 65, 0)),
                  std::length_error);
}

TEST_CASE("causality: perturbing a future token leaves earlier logits bitwise unchanged") {
  GeneratorConfig g = tiny_gcfg(32, 2, 4);
  Rng rng(2);
  GeneratorParams p = GeneratorParams::init(g, rng);
  Rng trial_rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> tokens = random_tokens(g, 24, 1000 + trial);
    const int j = 1 + static_cast<int>(trial_rng.below(23));
    std::vector<int> perturbed = tokens;
    perturbed[j] = static_cast<int>((perturbed[j] + 1 + trial_rng.below(4)) %
                                    g.vocab_size());
    Eigen::MatrixXd a = generator_forward(p, tokens);
    Eigen::MatrixXd b = generator_forward(p, perturbed);
    bool identical = true;
    for (int t = 0; t < j && identical; ++t)
      identical = std::memcmp(a.row(t).eval().data(), b.row(t).eval().data(),
                              sizeof(double) * g.vocab_size()) == 0;
    CHECK(identical);
  }
}

TEST_CASE("two streams sharing a prefix produce identical prefix logits") {
  // Across different sequence lengths Eigen picks different GEMM kernels,
  // so equality here is to rounding noise; the bitwise causality guarantee
  // is the fixed-length perturbation test above.
  GeneratorConfig g = tiny_gcfg();
  Rng rng(3);
  GeneratorParams p = GeneratorParams::init(g, rng);
  std::vector<int> a = random_tokens(g, 16, 7);
  std::vector<int> b = a;
  b.resize(10);
  Eigen::MatrixXd la = generator_forward(p, a);
  Eigen::MatrixXd lb = generator_forward(p, b);
  for (int t = 0; t < 10; ++t)
    CHECK((la.row(t) - lb.row(t)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("loss: alpha=0 equals main exactly, and linearity in alpha") {
  GeneratorConfig g = tiny_gcfg();
  Rng rng(4);
  GeneratorParams p = GeneratorParams::init(g, rng);
  TokenStream s = stream_with_roles(random_tokens(g, 18, 11), 8);
  Eigen::MatrixXd logits = generator_forward(p, s.tokens);

  LossBreakdown l0 = sequence_loss(logits, s, 0.0);
  CHECK(l0.total == l0.main);

  LossBreakdown l01 = sequence_loss(logits, s, 0.1);
  CHECK(l01.total == doctest::Approx(l01.main + 0.1 * l01.retr).epsilon(1e-12));

  LossBreakdown lhalf = sequence_loss(logits, s, 0.5);
  LossBreakdown l1 = sequence_loss(logits, s, 1.0);
  CHECK(std::abs(lhalf.total - (l0.total + l1.total) / 2.0) < 1e-12);

  // Role partition: counts add up to all targets.
  CHECK(l0.main_targets + l0.retr_targets == s.size() - 1);
}

TEST_CASE("analytic gradients match central finite differences (tiny model)") {
  GeneratorConfig g = tiny_gcfg(16, 2, 2);
  Rng rng(6);
  GeneratorParams p = GeneratorParams::init(g, rng);
  TokenStream s = stream_with_roles(random_tokens(g, 12, 21), 5);
  const double alpha = 0.3;

  auto loss_of = [&]() {
    Eigen::MatrixXd logits = generator_forward(p, s.tokens);
    return sequence_loss(logits, s, alpha).total;
  };

  GeneratorParams grads = GeneratorParams::zeros_like(p);
  {
    CacheBox cache;
    Eigen::MatrixXd logits = generator_forward(p, s.tokens, cache.get());
    LossBreakdown lb = sequence_loss(logits, s, alpha);
    Eigen::MatrixXd dlogits = loss_dlogits(
        logits, s, lb.main_targets ? 1.0 / lb.main_targets : 0.0,
        lb.retr_targets ? alpha / lb.retr_targets : 0.0);
    generator_backward(p, s.tokens, *cache.get(), dlogits, grads);
  }

  // Sample coordinates from every tensor; full sweep would be slow.
  auto pviews = tensor_views(p);
  auto gviews = tensor_views(grads);
  Rng pick(31);
  double max_rel = 0;
  std::string worst;
  for (size_t vi = 0; vi < pviews.size(); ++vi) {
    const size_t n = pviews[vi].size;
    for (int probe = 0; probe < 6; ++probe) {
      const size_t i = pick.below(n);
      double analytic = gviews[vi].data[i];
      double fd =
          testing::central_diff(&pviews[vi].data[i], 1e-5, loss_of);
      double denom = std::max({std::abs(analytic), std::abs(fd), 1e-7});
      double rel = std::abs(analytic - fd) / denom;
      if (rel > max_rel) {
        max_rel = rel;
        worst = pviews[vi].name;
      }
    }
  }
  INFO("worst tensor: ", worst);
  CHECK(max_rel < 1e-4);
}

TEST_CASE("to_infill_instance: identity, worked example, length") {
  const VocabLayout layout{8, 6};
  GeneratorConfig g = tiny_gcfg();

  SUBCASE("p_infill = 0 is the identity") {
    TokenStream s = stream_with_roles(random_tokens(g, 10, 3), 0);
    Rng rng(1);
    CHECK(to_infill_instance(s, rng, 0.0, 0.25, layout) == s);
  }
  SUBCASE("single span moves to the end after <infill>") {
    // [a b c d e] masking (b c) -> [a <mask> d e <infill> b c]
    // Constructed directly: the rng drives span choice, so instead verify
    // every possible outcome has the canonical shape via reconstruction,
    // and check one specific draw by brute-force search over seeds.
    const int a = layout.text_base(), b = a + 1, c = a + 2, d = a + 3,
              e = a + 4;
    TokenStream s = stream_with_roles({a, b, c, d, e}, 0);
    bool found_expected = false;
    for (uint64_t seed = 0; seed < 200 && !found_expected; ++seed) {
      Rng rng(seed);
      TokenStream out = to_infill_instance(s, rng, 1.0, 0.5, layout);
      std::vector<int> expected = {a, kMaskId, d, e, kInfillId, b, c};
      found_expected = out.tokens == expected;
    }
    CHECK(found_expected);
  }
  SUBCASE("output length = input + 2 when a span is masked") {
    TokenStream s = stream_with_roles(random_tokens(g, 20, 9), 0);
    Rng rng(5);
    TokenStream out = to_infill_instance(s, rng, 1.0, 0.25, layout);
    CHECK(out.size() == s.size() + 2);
  }
}

TEST_CASE("infill round-trip inverts exactly on 500 random documents") {
  const auto& w = W();
  const VocabLayout layout = VocabLayout::from(w.tv, w.cb);
  Rng rng(123);
  int infilled_count = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Document& doc =
        w.corpus.train[rng.below(w.corpus.train.size())];
    TokenStream s = serialize_document(doc, w.tv, w.cb);
    TokenStream infilled = to_infill_instance(s, rng, 0.5, 0.25, layout);
    if (infilled.tokens != s.tokens) ++infilled_count;
    TokenStream back = reconstruct_from_infill(infilled);
    CHECK(back.tokens == s.tokens);
  }
  CHECK(infilled_count > 150);  // p_infill = 0.5 actually fires
}

TEST_CASE("spans never cover structural markers") {
  const auto& w = W();
  const VocabLayout layout = VocabLayout::from(w.tv, w.cb);
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    TokenStream s = serialize_document(w.corpus.train[trial % 100], w.tv, w.cb);
    TokenStream out = to_infill_instance(s, rng, 1.0, 0.25, layout);
    // The structural skeleton survives: same marker multiset plus one
    // <mask> and one <infill>.
    auto count = [](const TokenStream& t, int id) {
      return std::count(t.tokens.begin(), t.tokens.end(), id);
    };
    CHECK(count(out, kImgAltId) == count(s, kImgAltId));
    CHECK(count(out, kSrcId) == count(s, kSrcId));
    CHECK(count(out, kImgEndId) == count(s, kImgEndId));
    CHECK(count(out, kMaskId) == 1);
    CHECK(count(out, kInfillId) == 1);
  }
}

TEST_CASE("sequence_nll: uniform logits, partition, loss cross-check") {
  GeneratorConfig g = tiny_gcfg();
  const VocabLayout layout = g.layout();

  SUBCASE("uniform logits give per-token NLL of ln V") {
    std::vector<int> tokens = random_tokens(g, 9, 2);
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(9, g.vocab_size());
    TokenStream s = stream_with_roles(tokens, 0);
    auto [sum, count] = sequence_nll(logits, s, layout, NllFilter::all);
    CHECK(count == 8);
    CHECK(sum / count ==
          doctest::Approx(std::log(g.vocab_size())).epsilon(1e-12));
  }
  SUBCASE("text and image target counts partition the content targets") {
    Rng rng(8);
    GeneratorParams p = GeneratorParams::init(g, rng);
    std::vector<int> tokens = random_tokens(g, 30, 4);
    TokenStream s = stream_with_roles(tokens, 0);
    Eigen::MatrixXd logits = generator_forward(p, tokens);
    auto [asum, acount] = sequence_nll(logits, s, layout, NllFilter::all);
    auto [tsum, tcount] =
        sequence_nll(logits, s, layout, NllFilter::text_targets);
    auto [isum, icount] =
        sequence_nll(logits, s, layout, NllFilter::image_targets);
    long structural = 0;
    for (int t = 1; t < s.size(); ++t)
      structural += layout.is_structural(s.tokens[t]) ? 1 : 0;
    CHECK(acount == tcount + icount + structural);
    CHECK(asum >= tsum + isum - 1e-9);
  }
  SUBCASE("sequence_nll agrees with sequence_loss on a single-role stream") {
    Rng rng(9);
    GeneratorParams p = GeneratorParams::init(g, rng);
    std::vector<int> tokens = random_tokens(g, 14, 6);
    TokenStream s = stream_with_roles(tokens, 0);  // all main
    Eigen::MatrixXd logits = generator_forward(p, tokens);
    auto [sum, count] = sequence_nll(logits, s, layout, NllFilter::all);
    LossBreakdown lb = sequence_loss(logits, s, 0.7);
    CHECK(std::abs(lb.main * count - sum) < 1e-9);
    CHECK(lb.retr == 0.0);
  }
}

TEST_CASE("sampling: determinism, argmax, grammar constraints") {
  GeneratorConfig g = tiny_gcfg();
  Rng rng(10);
  GeneratorParams p = GeneratorParams::init(g, rng);
  const VocabLayout layout = g.layout();
  std::vector<int> prompt = {kImgAltId, layout.text_base(), kSrcId};

  SamplingConfig sampling;
  sampling.temperature = 1.0;
  sampling.top_p = 0.9;

  SUBCASE("same seed, same continuation") {
    Rng r1(5), r2(5);
    auto a = sample_continuation(p, prompt, sampling,
                                 ContinuationKind::image_span, 4, r1);
    auto b = sample_continuation(p, prompt, sampling,
                                 ContinuationKind::image_span, 4, r2);
    CHECK(a == b);
  }
  SUBCASE("image span: exactly n image ids then the closing marker") {
    Rng r(6);
    auto out = sample_continuation(p, prompt, sampling,
                                   ContinuationKind::image_span, 4, r);
    REQUIRE(out.size() == 5);
    for (int i = 0; i < 4; ++i) CHECK(layout.is_image(out[i]));
    CHECK(out.back() == kImgEndId);
  }
  SUBCASE("image fill: exactly n image ids, no closing marker") {
    Rng r(61);
    auto out = sample_continuation(p, prompt, sampling,
                                   ContinuationKind::image_fill, 3, r);
    REQUIRE(out.size() == 3);
    for (int id : out) CHECK(layout.is_image(id));
  }
  SUBCASE("temperature 0 is argmax decoding, independent of the seed") {
    SamplingConfig greedy = sampling;
    greedy.temperature = 0.0;
    Rng r1(1), r2(848484);
    auto a = sample_continuation(p, prompt, greedy,
                                 ContinuationKind::image_span, 4, r1);
    auto b = sample_continuation(p, prompt, greedy,
                                 ContinuationKind::image_span, 4, r2);
    CHECK(a == b);
  }
  SUBCASE("caption mode emits only text ids and stops at max_new") {
    SamplingConfig cap = sampling;
    cap.max_new = 6;
    Rng r(7);
    auto out = sample_continuation(p, prompt, cap, ContinuationKind::caption,
                                   0, r);
    CHECK(out.size() <= 6);
    for (int id : out) CHECK(layout.is_text(id));
  }
  SUBCASE("prompt overflow raises") {
    SamplingConfig cap = sampling;
    cap.max_new = 64;
    Rng r(3);
    std::vector<int> long_prompt = random_tokens(g, 60, 1);
    CHECK_THROWS_AS(sample_continuation(p, long_prompt, cap,
                                        ContinuationKind::caption, 0, r),
                    std::length_error);
  }
}

TEST_CASE("init is deterministic and zeros_like matches the layout") {
  GeneratorConfig g = tiny_gcfg();
  Rng r1(5), r2(5);
  GeneratorParams a = GeneratorParams::init(g, r1);
  GeneratorParams b = GeneratorParams::init(g, r2);
  CHECK(a.tok_emb == b.tok_emb);
  CHECK(a.layers[1].w_fc == b.layers[1].w_fc);

  GeneratorParams z = GeneratorParams::zeros_like(a);
  auto av = tensor_views(a);
  auto zv = tensor_views(z);
  REQUIRE(av.size() == zv.size());
  for (size_t i = 0; i < av.size(); ++i) {
    CHECK(av[i].name == zv[i].name);
    CHECK(av[i].size == zv[i].size);
  }
}
