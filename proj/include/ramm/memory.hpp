#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ramm/encoder.hpp"
#include "ramm/rng.hpp"

namespace ramm {

// The external memory: exact flat MIPS index over document embeddings.
// Immutable after build; rebuild rather than update.
class MemoryIndex {
 public:
  struct Hit {
    std::string doc_id;
    double score;
    int row;
  };

  static MemoryIndex build(const std::vector<Document>& docs,
                           const FrozenEncoder& enc);

  // Test/load hook: adopt explicit unit-norm rows. `docs` must match
  // `doc_ids` one-to-one (any order).
  static MemoryIndex from_raw(std::vector<std::string> doc_ids,
                              Eigen::MatrixXd embeddings,
                              std::vector<Document> docs);

  // Exactly the top-n by inner product, ties broken by ascending doc id
  // (row order == id order). n > size returns the full ranking.
  std::vector<Hit> search(const Embedding& query, int n) const;

  int size() const { return static_cast<int>(doc_ids_.size()); }
  int dim() const { return static_cast<int>(embeddings_.cols()); }
  const Eigen::MatrixXd& embeddings() const { return embeddings_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const Document& doc(int row) const { return docs_[row]; }
  const Document& doc_by_id(const std::string& id) const;
  double pair_relevance(int row_a, int row_b) const {
    return embeddings_.row(row_a).dot(embeddings_.row(row_b));
  }

  // Versioned binary: header (n, d), row-major f32 embeddings, id table.
  void save(const std::string& path) const;
  static MemoryIndex load(const std::string& path,
                          const std::vector<Document>& docs);

 private:
  std::vector<std::string> doc_ids_;  // ascending
  Eigen::MatrixXd embeddings_;        // n x d, unit rows
  std::vector<Document> docs_;        // aligned with doc_ids_
};

struct RetrievalStrategy {
  double tau_dup = 0.9;            // skip candidates above this relevance
  bool redundancy_skip = true;     // the "avoid redundancy" technique
  double query_dropout_rate = 0.20;  // train only
  int pool_size = 100;
  std::set<std::string> exclude_ids;
};

void validate_strategy(const RetrievalStrategy& s);

enum class RetrievalMode { train, infer };

// Drops each content token of the query (text words, image patches)
// independently with probability `rate`, never emptying a present part.
// rate == 0 returns the input untouched and consumes no randomness.
Document query_dropout(const Document& query_doc, double rate, Rng& rng,
                       const Codebook& cb);

// K ~ Uniform({0,1,2}).
int sample_K(Rng& rng);

// The full retrieval walk: dropout (train only), MIPS pool fetch, then
// top-down selection skipping over-similar or excluded candidates.
// Returned documents are in descending relevance order.
std::vector<Document> retrieve(const MemoryIndex& index,
                               const Document& query_doc, int K,
                               const RetrievalStrategy& strategy,
                               RetrievalMode mode, Rng& rng,
                               const FrozenEncoder& enc);

// As above but also reports each selected document's relevance score.
struct RetrievedDoc {
  Document doc;
  double score;
  int row;
};
std::vector<RetrievedDoc> retrieve_scored(const MemoryIndex& index,
                                          const Document& query_doc, int K,
                                          const RetrievalStrategy& strategy,
                                          RetrievalMode mode, Rng& rng,
                                          const FrozenEncoder& enc);

// The selection walk itself, on an already-embedded query: fetch the pool,
// then take candidates top-down, skipping excluded ids, candidates too
// similar to the query, and candidates too similar to anything already
// selected. retrieve() is dropout + embed + this.
std::vector<RetrievedDoc> retrieve_with_query(const MemoryIndex& index,
                                              const Embedding& query, int K,
                                              const RetrievalStrategy& strategy);

}  // namespace ramm
