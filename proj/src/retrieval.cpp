#include "densedial/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_set>

namespace densedial {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::parallel: return "parallel";
    case Provenance::nonparallel_in: return "nonparallel_in";
    case Provenance::nonparallel_out: return "nonparallel_out";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "parallel") return Provenance::parallel;
  if (s == "nonparallel_in") return Provenance::nonparallel_in;
  if (s == "nonparallel_out") return Provenance::nonparallel_out;
  throw ConfigError("unknown provenance: " + s);
}

// --- ResponseStore ----------------------------------------------------------

ResponseStore::ResponseStore(std::vector<StoredResponse> items, MatrixF embeddings)
    : items_(std::move(items)), embeddings_(std::move(embeddings)) {
  if (items_.empty()) throw DataError("response store requires at least one response");
  if (embeddings_.rows() > 0 &&
      static_cast<Eigen::Index>(items_.size()) != embeddings_.rows())
    throw ShapeError("response count does not match embedding row count");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].text.empty()) throw DataError("empty response text at position " + std::to_string(i));
    by_text_[items_[i].text].push_back(static_cast<EntryId>(i));
  }
}

ResponseStore::ResponseStore(std::vector<StoredResponse> items)
    : ResponseStore(std::move(items), MatrixF()) {}

const StoredResponse& ResponseStore::item(EntryId id) const {
  if (id >= items_.size()) throw DataError("response id out of range: " + std::to_string(id));
  return items_[static_cast<std::size_t>(id)];
}

VectorF ResponseStore::embedding(EntryId id) const {
  if (!has_embeddings()) throw ConfigError("response store was built without embeddings");
  if (id >= items_.size()) throw DataError("response id out of range: " + std::to_string(id));
  return embeddings_.row(static_cast<Eigen::Index>(id)).transpose();
}

std::vector<EntryId> ResponseStore::find_by_text(const std::string& text) const {
  const auto it = by_text_.find(text);
  return it == by_text_.end() ? std::vector<EntryId>{} : it->second;
}

// --- offline index ----------------------------------------------------------

namespace {

// Chunked parallel loop; each index is processed exactly once and results are
// written to disjoint slots, so the output is independent of thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& run) {
  if (threads <= 1 || n < 2) {
    run(0, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(run, begin, end);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

OfflineIndex build_offline_index(const DualEncoder& enc, std::vector<StoredResponse> responses,
                                 const IndexBuildOptions& options) {
  if (responses.empty()) throw DataError("cannot build an index over zero responses");

  MatrixF embeddings(responses.size(), enc.config.d);
  std::exception_ptr error;
  std::mutex error_mutex;
  parallel_for(responses.size(), options.threads, [&](std::size_t begin, std::size_t end) {
    try {
      for (std::size_t i = begin; i < end; ++i)
        embeddings.row(static_cast<Eigen::Index>(i)) =
            encode_response(enc, responses[i].text).transpose();
    } catch (...) {
      const std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  });
  if (error) std::rethrow_exception(error);

  std::vector<EntryId> ids(responses.size());
  std::iota(ids.begin(), ids.end(), EntryId{0});

  auto make_index = [&]() -> VectorIndex {
    switch (options.kind) {
      case IndexKind::flat:
        return VectorIndex(FlatIndex(ids, embeddings));
      case IndexKind::ivf:
        return VectorIndex(IvfIndex::build(ids, embeddings, options.ivf));
      case IndexKind::lsh:
        return VectorIndex(LshIndex::build(ids, embeddings, options.lsh));
    }
    throw ConfigError("unknown index kind");
  };

  VectorIndex index = make_index();
  ResponseStore store(std::move(responses), std::move(embeddings));
  return {std::move(index), std::move(store)};
}

std::vector<RankedResponse> e2e_search(const DualEncoder& enc, const VectorIndex& index,
                                       const ResponseStore& store,
                                       std::span<const std::string> context,
                                       const SearchParams& params) {
  const VectorF query = encode_context(enc, context);
  const auto hits = index.search(query, params);
  std::vector<RankedResponse> out;
  out.reserve(hits.size());
  for (const auto& hit : hits) {
    const auto& item = store.item(hit.id);
    out.push_back({hit.id, hit.score, item.text, item.provenance});
  }
  return out;
}

// --- BM25 -------------------------------------------------------------------

Bm25Index Bm25Index::build(std::span<const std::pair<std::string, EntryId>> docs,
                           Bm25Params params) {
  if (docs.empty()) throw DataError("BM25 index requires at least one document");
  if (params.k1 < 0 || params.b < 0 || params.b > 1)
    throw ConfigError("BM25 parameters out of range (k1 >= 0, 0 <= b <= 1)");

  Bm25Index index;
  index.params_ = params;
  index.doc_lengths_.reserve(docs.size());
  index.doc_response_.reserve(docs.size());

  std::uint64_t total_len = 0;
  for (std::size_t doc = 0; doc < docs.size(); ++doc) {
    const auto tokens = split_tokens(docs[doc].first);
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (auto& [token, count] : tf)
      index.postings_[token].push_back({static_cast<std::uint32_t>(doc), count});
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    index.doc_response_.push_back(docs[doc].second);
    total_len += tokens.size();
  }
  index.avgdl_ = docs.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(docs.size());
  if (index.avgdl_ <= 0.0) throw DataError("BM25 corpus has no tokens");
  return index;
}

double Bm25Index::idf(const std::string& token) const {
  const auto it = postings_.find(token);
  if (it == postings_.end()) return 0.0;
  const double n = static_cast<double>(num_docs());
  const double df = static_cast<double>(it->second.size());
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double Bm25Index::term_score(double tf, std::uint32_t doc_len) const {
  const double norm = params_.k1 * (1.0 - params_.b +
                                    params_.b * static_cast<double>(doc_len) / avgdl_);
  return tf * (params_.k1 + 1.0) / (tf + norm);
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::size_t doc) const {
  if (doc >= num_docs()) throw DataError("document id out of range: " + std::to_string(doc));
  double total = 0.0;
  for (const auto& token : query_tokens) {
    const auto it = postings_.find(token);
    if (it == postings_.end()) continue;
    const auto& posts = it->second;
    const auto pos = std::lower_bound(posts.begin(), posts.end(), static_cast<std::uint32_t>(doc),
                                      [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    if (pos == posts.end() || pos->doc != doc) continue;
    total += idf(token) * term_score(static_cast<double>(pos->tf), doc_lengths_[doc]);
  }
  return total;
}

std::vector<std::pair<EntryId, double>> Bm25Index::recall(
    std::span<const std::string> query_tokens, std::size_t n) const {
  if (n == 0) throw ConfigError("recall size must be >= 1");

  // accumulate per-document scores over the query terms (query is a multiset:
  // repeated terms contribute repeatedly)
  std::unordered_map<std::uint32_t, double> scores;
  for (const auto& token : query_tokens) {
    const auto it = postings_.find(token);
    if (it == postings_.end()) continue;
    const double token_idf = idf(token);
    for (const auto& post : it->second)
      scores[post.doc] += token_idf * term_score(static_cast<double>(post.tf),
                                                 doc_lengths_[post.doc]);
  }

  std::vector<std::pair<std::uint32_t, double>> ranked;
  ranked.reserve(scores.size());
  for (const auto& [doc, s] : scores)
    if (s > 0.0) ranked.emplace_back(doc, s);

  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > n) ranked.resize(n);

  std::vector<std::pair<EntryId, double>> out;
  out.reserve(ranked.size());
  for (const auto& [doc, s] : ranked) out.emplace_back(doc_response_[doc], s);
  return out;
}

// --- pipeline ---------------------------------------------------------------

std::vector<RankedResponse> pipeline_search(const DualEncoder& enc, const Bm25Index& bm25,
                                            const ResponseStore& store,
                                            std::span<const std::string> context,
                                            std::size_t recall_size, std::size_t topk) {
  if (recall_size == 0) throw ConfigError("recall_size must be >= 1");
  if (topk == 0) throw ConfigError("topk must be >= 1");

  std::string joined;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i > 0) joined.push_back(' ');
    joined += context[i];
  }
  const auto query_tokens = split_tokens(joined);
  const auto recalled = bm25.recall(query_tokens, recall_size);
  if (recalled.empty()) return {};

  const VectorF query = encode_context(enc, context);

  // dedupe response ids while keeping deterministic candidate set
  std::unordered_set<EntryId> seen;
  std::vector<RankedResponse> out;
  out.reserve(recalled.size());
  for (const auto& [id, bm25_score] : recalled) {
    if (!seen.insert(id).second) continue;
    const auto& item = store.item(id);
    const VectorF emb = store.embedding(id);
    out.push_back({id, dot(query, emb), item.text, item.provenance});
  }

  std::sort(out.begin(), out.end(), [](const RankedResponse& a, const RankedResponse& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (out.size() > topk) out.resize(topk);
  return out;
}

std::vector<ScoredCandidate> rerank_candidates(const DualEncoder& enc,
                                               std::span<const std::string> context,
                                               std::span<const std::string> candidates) {
  const VectorF query = encode_context(enc, context);
  std::vector<ScoredCandidate> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const VectorF emb = encode_response(enc, candidates[i]);
    out.push_back({i, dot(query, emb)});
  }
  // stable: equal scores keep input order
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.score > b.score; });
  return out;
}

}  // namespace densedial
