#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "densedial/common.hpp"
#include "densedial/corpus.hpp"
#include "densedial/encoder.hpp"
#include "densedial/retrieval.hpp"

namespace densedial {

// Per-session metrics over a candidate list in rank order (best first).
// Binary metrics reject labels outside {0,1}. Sessions with no positive
// (or zero ideal DCG) return nullopt and are skipped by the aggregators.

// Douban-convention recall: positives in the top k / total positives.
std::optional<double> session_recall_at_k(std::span<const double> labels, std::size_t k);
std::optional<double> session_average_precision(std::span<const double> labels);
std::optional<double> session_reciprocal_rank(std::span<const double> labels);
std::optional<double> session_precision_at_1(std::span<const double> labels);
// Graded-gain NDCG: DCG@k = sum (2^rel - 1)/log2(i + 1), normalized by the
// label-sorted ideal ordering.
std::optional<double> session_ndcg_at_k(std::span<const double> labels, std::size_t k);

// Corpus-level means over the non-skipped sessions.
double recall_at_k(std::span<const std::vector<double>> sessions, std::size_t k);
double mean_average_precision(std::span<const std::vector<double>> sessions);
double mean_reciprocal_rank(std::span<const std::vector<double>> sessions);
double precision_at_1(std::span<const std::vector<double>> sessions);
double ndcg_at_k(std::span<const std::vector<double>> sessions, std::size_t k);

struct MetricReport {
  std::size_t sessions = 0;
  std::size_t skipped_no_positive = 0;  // binary metrics
  std::size_t skipped_zero_idcg = 0;    // ndcg
  std::optional<double> map, mrr, p1;
  std::map<std::size_t, double> recall_at;  // k -> value
  std::map<std::size_t, double> ndcg_at;    // k -> value
};

struct MetricRequest {
  bool map = false, mrr = false, p1 = false;
  std::vector<std::size_t> recall_ks;
  std::vector<std::size_t> ndcg_ks;
};

// Parses "map,mrr,p1,r10@1,r10@2,r10@5,ndcg@3,ndcg@5"-style lists.
MetricRequest parse_metric_request(const std::string& metrics);

// Reranks each session's candidates with the dense model and aggregates the
// requested metrics. Binary metrics raise DataError when labels are graded.
MetricReport evaluate_rerank(const DualEncoder& enc, std::span<const EvalSession> sessions,
                             const MetricRequest& request);

// A full-rank query: context plus the gold response text, resolved to store
// ids at evaluation time.
struct FullrankQuery {
  std::vector<std::string> context;
  std::string gold_text;
};

using SearchFn = std::function<std::vector<RankedResponse>(std::span<const std::string> context,
                                                           std::size_t topk)>;

struct FullrankReport {
  std::size_t queries = 0;
  std::size_t unresolved_gold = 0;  // gold text absent from the store
  double recall_at_1 = 0.0;
  double recall_at_10 = 0.0;
  std::map<std::string, std::size_t> top1_provenance;  // hits by provenance
};

// Gold-recovery evaluation over the full candidate pool: a query counts as
// recovered at k when any store id carrying the gold text ranks in the top k.
FullrankReport evaluate_fullrank(const SearchFn& system, const ResponseStore& store,
                                 std::span<const FullrankQuery> queries);

struct LatencyReport {
  double avg_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t corpus_size = 0;
  std::size_t query_count = 0;  // measured (warmup excluded)
  std::size_t warmup = 0;
};

// Wall-clock per-query timing; the first `warmup` queries run unmeasured.
// Callers must run this single-threaded for comparability.
LatencyReport bench_latency(const std::function<void(std::size_t)>& run_query,
                            std::size_t num_queries, std::size_t warmup = 10,
                            std::size_t corpus_size = 0);

}  // namespace densedial
