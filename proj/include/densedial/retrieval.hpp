#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "densedial/common.hpp"
#include "densedial/encoder.hpp"
#include "densedial/index.hpp"

namespace densedial {

enum class Provenance { parallel, nonparallel_in, nonparallel_out };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct StoredResponse {
  std::string source_id;  // id from the input file
  std::string text;
  Provenance provenance = Provenance::parallel;
};

// Resolves index entry ids (dense positions 0..N-1) to response texts and
// keeps the response embeddings so index search and pipeline rerank score
// against the same vectors.
class ResponseStore {
 public:
  ResponseStore(std::vector<StoredResponse> items, MatrixF embeddings);
  // Text-resolution-only store (no rerank scoring possible).
  explicit ResponseStore(std::vector<StoredResponse> items);

  std::size_t size() const { return items_.size(); }
  const StoredResponse& item(EntryId id) const;
  bool has_embeddings() const { return embeddings_.rows() > 0; }
  const MatrixF& embeddings() const { return embeddings_; }
  VectorF embedding(EntryId id) const;

  // All entry ids whose text matches exactly (empty if none).
  std::vector<EntryId> find_by_text(const std::string& text) const;

 private:
  std::vector<StoredResponse> items_;
  MatrixF embeddings_;  // N x d, res tower
  std::unordered_map<std::string, std::vector<EntryId>> by_text_;
};

struct IndexBuildOptions {
  IndexKind kind = IndexKind::flat;
  IvfBuildParams ivf;
  LshBuildParams lsh;
  int threads = 1;  // parallel response encoding; output independent of thread count
};

struct OfflineIndex {
  VectorIndex index;
  ResponseStore store;
};

// Encodes every response with the res tower and builds the requested index
// over positions 0..N-1. Nonparallel sentences are admitted identically to
// gold responses; provenance is preserved in the store.
OfflineIndex build_offline_index(const DualEncoder& enc, std::vector<StoredResponse> responses,
                                 const IndexBuildOptions& options);

struct RankedResponse {
  EntryId id;
  float score;
  std::string text;
  Provenance provenance;
};

// End-to-end search: encode the context, query the vector index, resolve ids
// through the store. Order is the index order.
std::vector<RankedResponse> e2e_search(const DualEncoder& enc, const VectorIndex& index,
                                       const ResponseStore& store,
                                       std::span<const std::string> context,
                                       const SearchParams& params);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Okapi BM25 over stored contexts; each document is one whole concatenated
// context paired with a response id. idf uses the +1-smoothed form
// ln((N - df + 0.5)/(df + 0.5) + 1), which is non-negative.
class Bm25Index {
 public:
  static Bm25Index build(std::span<const std::pair<std::string, EntryId>> docs,
                         Bm25Params params = {});

  double score(std::span<const std::string> query_tokens, std::size_t doc) const;

  // Documents ranked by score descending (ties by ascending doc id);
  // zero-score documents are not recalled. Returns (response id, score).
  std::vector<std::pair<EntryId, double>> recall(std::span<const std::string> query_tokens,
                                                 std::size_t n) const;

  std::size_t num_docs() const { return doc_lengths_.size(); }
  EntryId response_of(std::size_t doc) const { return doc_response_[doc]; }
  const Bm25Params& params() const { return params_; }

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_lengths_;
  std::vector<EntryId> doc_response_;
  double avgdl_ = 0.0;
  Bm25Params params_;

  double idf(const std::string& token) const;
  double term_score(double tf, std::uint32_t doc_len) const;
};

// BM25 recall over contexts followed by exact dense rerank of the recalled
// responses. Shares the response embeddings with e2e search, so the pipeline
// top-1 score can never exceed the e2e top-1 score. Empty recall yields an
// empty result.
std::vector<RankedResponse> pipeline_search(const DualEncoder& enc, const Bm25Index& bm25,
                                            const ResponseStore& store,
                                            std::span<const std::string> context,
                                            std::size_t recall_size, std::size_t topk);

struct ScoredCandidate {
  std::size_t position;  // index into the input candidate list
  float score;
};

// Scores each candidate text against the context with the dense model and
// sorts descending; ties keep input order. The result is a permutation of
// the input positions.
std::vector<ScoredCandidate> rerank_candidates(const DualEncoder& enc,
                                               std::span<const std::string> context,
                                               std::span<const std::string> candidates);

}  // namespace densedial
