#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "ramm/memory.hpp"

using namespace ramm;

namespace {

const testing::TinyWorld& W() { return testing::tiny_world(); }

// Documents with distinct ids for raw-embedding indexes.
std::vector<Document> dummy_docs(int n) {
  std::vector<Document> docs;
  for (int i = 0; i < n; ++i) {
    Document d;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "doc-%04d", i);
    d.id = buf;
    d.segments.push_back(Segment::make_text("x"));
    docs.push_back(std::move(d));
  }
  return docs;
}

Eigen::MatrixXd random_unit_rows(int n, int d, uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
    m.row(i) /= m.row(i).norm();
  }
  return m;
}

// Independent brute-force oracle: full sort by (score desc, id asc) with
// its own dot products.
std::vector<std::pair<std::string, double>> brute_force_top(
    const std::vector<std::string>& ids, const Eigen::MatrixXd& rows,
    const Eigen::VectorXd& q, int n) {
  std::vector<int> order(rows.rows());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(rows.rows());
  for (int i = 0; i < rows.rows(); ++i) {
    double s = 0;
    for (int j = 0; j < rows.cols(); ++j) s += rows(i, j) * q(j);
    scores[i] = s;
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<std::pair<std::string, double>> out;
  for (int i = 0; i < std::min<int>(n, static_cast<int>(order.size())); ++i)
    out.emplace_back(ids[order[i]], scores[order[i]]);
  return out;
}

}  // namespace

TEST_CASE("build_index: row count, unit rows, bitwise rebuild, id order") {
  std::vector<Document> docs(W().corpus.train.begin(),
                             W().corpus.train.begin() + 50);
  MemoryIndex a = MemoryIndex::build(docs, W().enc);
  MemoryIndex b = MemoryIndex::build(docs, W().enc);
  CHECK(a.size() == 50);
  CHECK(a.embeddings() == b.embeddings());
  for (int i = 0; i < a.size(); ++i)
    CHECK(std::abs(a.embeddings().row(i).norm() - 1.0) < 1e-6);
  CHECK(std::is_sorted(a.doc_ids().begin(), a.doc_ids().end()));

  std::vector<Document> dup = docs;
  dup.push_back(docs[0]);
  CHECK_THROWS_AS(MemoryIndex::build(dup, W().enc), std::invalid_argument);
}

TEST_CASE("search matches the brute-force oracle on 1000 random docs") {
  const int n = 1000, d = 64;
  auto docs = dummy_docs(n);
  std::vector<std::string> ids;
  for (auto& doc : docs) ids.push_back(doc.id);
  Eigen::MatrixXd rows = random_unit_rows(n, d, 2024);
  MemoryIndex index = MemoryIndex::from_raw(ids, rows, docs);

  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd q(d);
    for (int j = 0; j < d; ++j) q(j) = rng.normal();
    q /= q.norm();
    auto got = index.search({q}, 10);
    auto expected = brute_force_top(ids, rows, q, 10);
    REQUIRE(got.size() == expected.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].doc_id == expected[i].first);
      CHECK(got[i].score == expected[i].second);
    }
  }
}

TEST_CASE("search: exact self-match, tie rule, n overflow") {
  const int n = 6, d = 8;
  auto docs = dummy_docs(n);
  std::vector<std::string> ids;
  for (auto& doc : docs) ids.push_back(doc.id);
  Eigen::MatrixXd rows = random_unit_rows(n, d, 7);
  rows.row(4) = rows.row(2);  // planted exact tie between ids 2 and 4
  MemoryIndex index = MemoryIndex::from_raw(ids, rows, docs);

  SUBCASE("query equal to a distinct row returns it first with score 1") {
    auto hits = index.search({Eigen::VectorXd(rows.row(0).transpose())}, 1);
    CHECK(hits[0].doc_id == "doc-0000");
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("identical embeddings rank by ascending id") {
    auto hits = index.search({Eigen::VectorXd(rows.row(2).transpose())}, 2);
    CHECK(hits[0].doc_id == "doc-0002");
    CHECK(hits[1].doc_id == "doc-0004");
    CHECK(hits[0].score == hits[1].score);
  }
  SUBCASE("n larger than the index returns the full ranking") {
    auto hits = index.search({Eigen::VectorXd(rows.row(0).transpose())}, 99);
    CHECK(hits.size() == 6);
  }
  SUBCASE("n < 1 rejected") {
    CHECK_THROWS_AS(index.search({Eigen::VectorXd(rows.row(0).transpose())}, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("index binary round trip") {
  std::vector<Document> docs(W().corpus.train.begin(),
                             W().corpus.train.begin() + 20);
  MemoryIndex index = MemoryIndex::build(docs, W().enc);
  std::string dir = testing::temp_dir("index_io");
  index.save(dir + "/idx.bin");
  MemoryIndex back = MemoryIndex::load(dir + "/idx.bin", docs);
  CHECK(back.size() == index.size());
  CHECK(back.doc_ids() == index.doc_ids());
  // f32 storage: rows match to float precision.
  CHECK((back.embeddings() - index.embeddings()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("query_dropout: identity, concentration, determinism, floor") {
  const auto& w = W();
  Document doc = w.corpus.train[0];

  SUBCASE("rate 0 is the identity") {
    Rng rng(1);
    Document out = query_dropout(doc, 0.0, rng, w.cb);
    CHECK(out == doc);
  }
  SUBCASE("kept fraction concentrates around 0.8") {
    // 10,000 word tokens through a rate-0.2 dropout.
    std::string long_text;
    for (int i = 0; i < 10000; ++i)
      long_text += (i ? " a" : "a");
    Document big;
    big.id = "big";
    big.segments.push_back(Segment::make_text(long_text));
    Rng rng(42);
    Document out = query_dropout(big, 0.2, rng, w.cb);
    const double kept =
        static_cast<double>(split_words(out.segments[0].text).size()) / 10000.0;
    CHECK(kept > 0.78);
    CHECK(kept < 0.82);
  }
  SUBCASE("image segments drop patches into kept_patches") {
    Rng rng(9);
    Document out = query_dropout(image_part_doc(doc), 0.3, rng, w.cb);
    REQUIRE(out.segments.size() == 1);
    CHECK(!out.segments[0].kept_patches.empty());
    CHECK(out.segments[0].kept_patches.size() <
          static_cast<size_t>(w.cb.tokens_per_image(16)));
  }
  SUBCASE("same seed, same output") {
    Rng r1(123), r2(123);
    CHECK(query_dropout(doc, 0.4, r1, w.cb) ==
          query_dropout(doc, 0.4, r2, w.cb));
  }
  SUBCASE("at least one token survives even at extreme rates") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      Document out = query_dropout(doc, 0.99, rng, w.cb);
      CHECK(!split_words(out.segments[0].text).empty());
      CHECK(!out.segments[1].kept_patches.empty());
    }
  }
  SUBCASE("rate out of range") {
    Rng rng(0);
    CHECK_THROWS_AS(query_dropout(doc, 1.0, rng, w.cb),
                    std::invalid_argument);
  }
}

TEST_CASE("sample_K is uniform over {0,1,2}") {
  Rng rng(2718);
  int counts[3] = {0, 0, 0};
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    int k = sample_K(rng);
    REQUIRE(k >= 0);
    REQUIRE(k <= 2);
    ++counts[k];
  }
  for (int v = 0; v < 3; ++v) {
    double freq = static_cast<double>(counts[v]) / n;
    CHECK(std::abs(freq - 1.0 / 3.0) < 0.01);
  }
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(sample_K(a) == sample_K(b));
}

TEST_CASE("retrieve walks the ranked pool with redundancy skipping") {
  // Planted pool: c1 scores 0.95 (too close to the query), c2 0.85, c3 0.84
  // with rel(c2,c3)=0.95, c4 0.5. Expected selection: c2 then c4.
  const int dim = 8;
  Eigen::MatrixXd gram(5, 5);
  // order: q, c1, c2, c3, c4
  gram << 1.00, 0.95, 0.85, 0.84, 0.50,
          0.95, 1.00, 0.80, 0.80, 0.40,
          0.85, 0.80, 1.00, 0.95, 0.30,
          0.84, 0.80, 0.95, 1.00, 0.30,
          0.50, 0.40, 0.30, 0.30, 1.00;
  Eigen::MatrixXd vecs = testing::vectors_from_gram(gram, dim);

  auto docs = dummy_docs(4);
  std::vector<std::string> ids;
  for (auto& d : docs) ids.push_back(d.id);
  MemoryIndex index = MemoryIndex::from_raw(ids, vecs.bottomRows(4), docs);

  // Sanity: planted relevances realized exactly.
  CHECK(index.pair_relevance(1, 2) == doctest::Approx(0.95).epsilon(1e-9));

  Embedding q{vecs.row(0).transpose()};
  RetrievalStrategy strategy;
  strategy.tau_dup = 0.9;
  strategy.pool_size = 10;

  auto hits = index.search(q, 10);
  REQUIRE(hits.size() == 4);
  CHECK(hits[0].doc_id == "doc-0000");  // c1, score 0.95, skipped below

  auto selected = retrieve_with_query(index, q, 2, strategy);
  REQUIRE(selected.size() == 2);
  CHECK(selected[0].doc.id == "doc-0001");  // c2: highest survivor
  CHECK(selected[1].doc.id == "doc-0003");  // c4: c3 is redundant with c2
  CHECK(selected[0].score == doctest::Approx(0.85).epsilon(1e-9));
  CHECK(selected[1].score == doctest::Approx(0.50).epsilon(1e-9));
}

TEST_CASE("retrieve end-to-end honors K, exclusions and the tau filter") {
  const auto& w = W();
  const Document& probe = w.corpus.train[0];
  RetrievalStrategy strategy;
  strategy.pool_size = 100;
  Rng rng(4);

  SUBCASE("K=0 returns nothing") {
    auto out = retrieve(w.index, text_part_doc(probe), 0, strategy,
                        RetrievalMode::infer, rng, w.enc);
    CHECK(out.empty());
  }
  SUBCASE("self-exclusion removes the query document") {
    RetrievalStrategy s = strategy;
    s.exclude_ids.insert(probe.id);
    auto out = retrieve(w.index, probe, 5, s, RetrievalMode::infer, rng,
                        w.enc);
    for (const Document& d : out) CHECK(d.id != probe.id);
  }
  SUBCASE("selection invariants hold") {
    auto out = retrieve_scored(w.index, text_part_doc(probe), 2, strategy,
                               RetrievalMode::infer, rng, w.enc);
    CHECK(out.size() <= 2);
    Embedding q = w.enc.embed_document(text_part_doc(probe));
    for (size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].score <= strategy.tau_dup);
      for (size_t j = i + 1; j < out.size(); ++j) {
        CHECK(w.index.pair_relevance(out[i].row, out[j].row) <=
              strategy.tau_dup);
        CHECK(out[i].score >= out[j].score);
      }
    }
  }
  SUBCASE("infer mode is deterministic and never consults the rng") {
    Rng r1(1), r2(999);  // different states, same results
    auto a = retrieve(w.index, text_part_doc(probe), 2, strategy,
                      RetrievalMode::infer, r1, w.enc);
    auto b = retrieve(w.index, text_part_doc(probe), 2, strategy,
                      RetrievalMode::infer, r2, w.enc);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
    // And the rng state itself is untouched by the call.
    Rng before(31);
    std::string state = before.save_state();
    retrieve(w.index, text_part_doc(probe), 2, strategy,
             RetrievalMode::infer, before, w.enc);
    CHECK(before.save_state() == state);
  }
  SUBCASE("fewer survivors than K yields a shorter list") {
    RetrievalStrategy harsh = strategy;
    harsh.tau_dup = 1e-9;  // skip everything similar to the query at all
    harsh.pool_size = 5;
    auto out = retrieve(w.index, text_part_doc(probe), 3, harsh,
                        RetrievalMode::infer, rng, w.enc);
    CHECK(out.size() < 3);
  }
}

TEST_CASE("strategy validation") {
  RetrievalStrategy s;
  s.tau_dup = 0;
  CHECK_THROWS_AS(validate_strategy(s), std::invalid_argument);
  s = RetrievalStrategy{};
  s.query_dropout_rate = 1.0;
  CHECK_THROWS_AS(validate_strategy(s), std::invalid_argument);
  s = RetrievalStrategy{};
  s.pool_size = 0;
  CHECK_THROWS_AS(validate_strategy(s), std::invalid_argument);
}
