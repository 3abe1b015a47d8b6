#include "ramm/memory.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

#include "ramm/binary_io.hpp"

namespace ramm {

MemoryIndex MemoryIndex::build(const std::vector<Document>& docs,
                               const FrozenEncoder& enc) {
  if (docs.empty()) throw std::invalid_argument("build_index: no documents");
  std::vector<const Document*> by_id;
  by_id.reserve(docs.size());
  for (const auto& d : docs) by_id.push_back(&d);
  std::sort(by_id.begin(), by_id.end(),
            [](const Document* a, const Document* b) { return a->id < b->id; });
  for (size_t i = 1; i < by_id.size(); ++i)
    if (by_id[i]->id == by_id[i - 1]->id)
      throw std::invalid_argument("build_index: duplicate doc id " +
                                  by_id[i]->id);

  MemoryIndex idx;
  idx.doc_ids_.reserve(docs.size());
  idx.docs_.reserve(docs.size());
  const int d = enc.params.config.dim;
  idx.embeddings_.resize(static_cast<Eigen::Index>(docs.size()), d);
  for (size_t i = 0; i < by_id.size(); ++i) {
    idx.doc_ids_.push_back(by_id[i]->id);
    idx.docs_.push_back(*by_id[i]);
    Embedding e = enc.embed_document(*by_id[i]);
    if (e.dim() != d)
      throw std::runtime_error("build_index: embedding dim mismatch");
    idx.embeddings_.row(static_cast<Eigen::Index>(i)) = e.values.transpose();
  }
  return idx;
}

MemoryIndex MemoryIndex::from_raw(std::vector<std::string> doc_ids,
                                  Eigen::MatrixXd embeddings,
                                  std::vector<Document> docs) {
  if (doc_ids.size() != static_cast<size_t>(embeddings.rows()) ||
      doc_ids.size() != docs.size())
    throw std::invalid_argument("from_raw: size mismatch");
  if (doc_ids.empty()) throw std::invalid_argument("from_raw: empty index");

  std::vector<size_t> order(doc_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return doc_ids[a] < doc_ids[b];
  });

  std::map<std::string, size_t> doc_pos;
  for (size_t i = 0; i < docs.size(); ++i) {
    if (!doc_pos.emplace(docs[i].id, i).second)
      throw std::invalid_argument("from_raw: duplicate doc id " + docs[i].id);
  }

  MemoryIndex idx;
  idx.embeddings_.resize(embeddings.rows(), embeddings.cols());
  for (size_t i = 0; i < order.size(); ++i) {
    const std::string& id = doc_ids[order[i]];
    auto it = doc_pos.find(id);
    if (it == doc_pos.end())
      throw std::invalid_argument("from_raw: no document for id " + id);
    idx.doc_ids_.push_back(id);
    idx.docs_.push_back(docs[it->second]);
    idx.embeddings_.row(static_cast<Eigen::Index>(i)) =
        embeddings.row(static_cast<Eigen::Index>(order[i]));
  }
  for (size_t i = 1; i < idx.doc_ids_.size(); ++i)
    if (idx.doc_ids_[i] == idx.doc_ids_[i - 1])
      throw std::invalid_argument("from_raw: duplicate doc id " +
                                  idx.doc_ids_[i]);
  return idx;
}

std::vector<MemoryIndex::Hit> MemoryIndex::search(const Embedding& query,
                                                  int n) const {
  if (n < 1) throw std::invalid_argument("search: n must be >= 1");
  if (query.dim() != dim())
    throw std::invalid_argument("search: query dimension mismatch");
  const int count = std::min<int>(n, size());

  Eigen::VectorXd scores = embeddings_ * query.values;
  std::vector<int> order(size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;  // rows are in ascending id order
  };
  std::partial_sort(order.begin(), order.begin() + count, order.end(), better);

  std::vector<Hit> hits;
  hits.reserve(count);
  for (int i = 0; i < count; ++i)
    hits.push_back({doc_ids_[order[i]], scores(order[i]), order[i]});
  return hits;
}

const Document& MemoryIndex::doc_by_id(const std::string& id) const {
  auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), id);
  if (it == doc_ids_.end() || *it != id)
    throw std::invalid_argument("index has no document with id " + id);
  return docs_[static_cast<size_t>(it - doc_ids_.begin())];
}

namespace {
constexpr char kIndexMagic[4] = {'R', 'M', 'I', 'X'};
}

void MemoryIndex::save(const std::string& path) const {
  BinWriter w(path);
  write_magic(w, kIndexMagic, 1);
  w.u64(static_cast<uint64_t>(size()));
  w.u64(static_cast<uint64_t>(dim()));
  for (int r = 0; r < size(); ++r)
    for (int c = 0; c < dim(); ++c)
      w.f32(static_cast<float>(embeddings_(r, c)));
  for (const auto& id : doc_ids_) w.str(id);
  w.close();
}

MemoryIndex MemoryIndex::load(const std::string& path,
                              const std::vector<Document>& docs) {
  BinReader r(path);
  expect_magic(r, kIndexMagic, 1, "memory index");
  const auto n = static_cast<Eigen::Index>(r.u64());
  const auto d = static_cast<Eigen::Index>(r.u64());
  Eigen::MatrixXd emb(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) emb(i, j) = r.f32();
  std::vector<std::string> ids;
  ids.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ids.push_back(r.str());
  return from_raw(std::move(ids), std::move(emb), docs);
}

void validate_strategy(const RetrievalStrategy& s) {
  if (!(s.tau_dup > 0.0 && s.tau_dup <= 1.0))
    throw std::invalid_argument("strategy: tau_dup must be in (0, 1]");
  if (!(s.query_dropout_rate >= 0.0 && s.query_dropout_rate < 1.0))
    throw std::invalid_argument(
        "strategy: query_dropout_rate must be in [0, 1)");
  if (s.pool_size < 1)
    throw std::invalid_argument("strategy: pool_size must be >= 1");
}

Document query_dropout(const Document& query_doc, double rate, Rng& rng,
                       const Codebook& cb) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("query_dropout: rate must be in [0, 1)");
  if (rate == 0.0) return query_doc;

  Document out = query_doc;
  for (Segment& seg : out.segments) {
    if (seg.kind == SegmentKind::text) {
      std::vector<std::string> words = split_words(seg.text);
      std::vector<std::string> kept;
      // Resample until at least one word survives.
      do {
        kept.clear();
        for (const auto& w : words)
          if (!rng.bernoulli(rate)) kept.push_back(w);
      } while (kept.empty());
      std::string joined;
      for (size_t i = 0; i < kept.size(); ++i) {
        if (i > 0) joined += ' ';
        joined += kept[i];
      }
      seg.text = std::move(joined);
    } else {
      const int tpi = cb.tokens_per_image(seg.pixels.width);
      std::vector<int> kept;
      do {
        kept.clear();
        for (int i = 0; i < tpi; ++i)
          if (!rng.bernoulli(rate)) kept.push_back(i);
      } while (kept.empty());
      seg.kept_patches = std::move(kept);
    }
  }
  return out;
}

int sample_K(Rng& rng) { return static_cast<int>(rng.below(3)); }

std::vector<RetrievedDoc> retrieve_with_query(const MemoryIndex& index,
                                              const Embedding& query, int K,
                                              const RetrievalStrategy& strategy) {
  std::vector<RetrievedDoc> selected;
  const int pool = std::max(strategy.pool_size, K);
  for (const MemoryIndex::Hit& hit : index.search(query, pool)) {
    if (strategy.exclude_ids.count(hit.doc_id)) continue;
    if (strategy.redundancy_skip) {
      if (hit.score > strategy.tau_dup) continue;  // too similar to the query
      bool dup = false;
      for (const RetrievedDoc& s : selected) {
        if (index.pair_relevance(hit.row, s.row) > strategy.tau_dup) {
          dup = true;
          break;
        }
      }
      if (dup) continue;
    }
    selected.push_back({index.doc(hit.row), hit.score, hit.row});
    if (static_cast<int>(selected.size()) == K) break;
  }
  return selected;
}

std::vector<RetrievedDoc> retrieve_scored(const MemoryIndex& index,
                                          const Document& query_doc, int K,
                                          const RetrievalStrategy& strategy,
                                          RetrievalMode mode, Rng& rng,
                                          const FrozenEncoder& enc) {
  if (K < 0) throw std::invalid_argument("retrieve: K must be >= 0");
  validate_strategy(strategy);
  if (K == 0) return {};  // the index is not consulted at all

  Document query = query_doc;
  if (mode == RetrievalMode::train && strategy.query_dropout_rate > 0.0)
    query = query_dropout(query_doc, strategy.query_dropout_rate, rng,
                          enc.codebook);
  return retrieve_with_query(index, enc.embed_document(query), K, strategy);
}

std::vector<Document> retrieve(const MemoryIndex& index,
                               const Document& query_doc, int K,
                               const RetrievalStrategy& strategy,
                               RetrievalMode mode, Rng& rng,
                               const FrozenEncoder& enc) {
  std::vector<Document> docs;
  for (auto& r : retrieve_scored(index, query_doc, K, strategy, mode, rng, enc))
    docs.push_back(std::move(r.doc));
  return docs;
}

}  // namespace ramm
