#include "densedial/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace densedial {

namespace {

bool is_binary(std::span<const double> labels) {
  return std::all_of(labels.begin(), labels.end(),
                     [](double r) { return r == 0.0 || r == 1.0; });
}

void require_binary(std::span<const double> labels, const char* metric) {
  if (!is_binary(labels))
    throw DataError(std::string(metric) + " requires binary {0,1} relevance labels");
}

std::size_t count_positives(std::span<const double> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1.0));
}

// mean over non-skipped sessions
template <typename Fn>
double aggregate(std::span<const std::vector<double>> sessions, const Fn& per_session) {
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& labels : sessions) {
    if (const auto value = per_session(labels)) {
      total += *value;
      ++used;
    }
  }
  if (used == 0) throw DataError("no scorable sessions (all skipped)");
  return total / static_cast<double>(used);
}

}  // namespace

std::optional<double> session_recall_at_k(std::span<const double> labels, std::size_t k) {
  require_binary(labels, "recall@k");
  if (k == 0) throw ConfigError("k must be >= 1");
  const std::size_t positives = count_positives(labels);
  if (positives == 0) return std::nullopt;
  std::size_t hits = 0;
  const std::size_t upto = std::min(k, labels.size());
  for (std::size_t i = 0; i < upto; ++i)
    if (labels[i] == 1.0) ++hits;
  return static_cast<double>(hits) / static_cast<double>(positives);
}

std::optional<double> session_average_precision(std::span<const double> labels) {
  require_binary(labels, "MAP");
  const std::size_t positives = count_positives(labels);
  if (positives == 0) return std::nullopt;
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1.0) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

std::optional<double> session_reciprocal_rank(std::span<const double> labels) {
  require_binary(labels, "MRR");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1.0) return 1.0 / static_cast<double>(i + 1);
  return std::nullopt;
}

std::optional<double> session_precision_at_1(std::span<const double> labels) {
  require_binary(labels, "P@1");
  if (count_positives(labels) == 0) return std::nullopt;
  return labels[0] == 1.0 ? 1.0 : 0.0;
}

std::optional<double> session_ndcg_at_k(std::span<const double> labels, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  for (const double rel : labels)
    if (rel < 0.0 || !std::isfinite(rel)) throw DataError("NDCG requires finite labels >= 0");

  const auto dcg = [k](std::span<const double> rels) {
    double total = 0.0;
    const std::size_t upto = std::min(k, rels.size());
    for (std::size_t i = 0; i < upto; ++i)
      total += (std::exp2(rels[i]) - 1.0) / std::log2(static_cast<double>(i + 2));
    return total;
  };

  std::vector<double> ideal(labels.begin(), labels.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>{});
  const double idcg = dcg(ideal);
  if (idcg == 0.0) return std::nullopt;
  return dcg(labels) / idcg;
}

double recall_at_k(std::span<const std::vector<double>> sessions, std::size_t k) {
  return aggregate(sessions, [k](const auto& s) { return session_recall_at_k(s, k); });
}
double mean_average_precision(std::span<const std::vector<double>> sessions) {
  return aggregate(sessions, [](const auto& s) { return session_average_precision(s); });
}
double mean_reciprocal_rank(std::span<const std::vector<double>> sessions) {
  return aggregate(sessions, [](const auto& s) { return session_reciprocal_rank(s); });
}
double precision_at_1(std::span<const std::vector<double>> sessions) {
  return aggregate(sessions, [](const auto& s) { return session_precision_at_1(s); });
}
double ndcg_at_k(std::span<const std::vector<double>> sessions, std::size_t k) {
  return aggregate(sessions, [k](const auto& s) { return session_ndcg_at_k(s, k); });
}

MetricRequest parse_metric_request(const std::string& metrics) {
  MetricRequest req;
  std::stringstream ss(metrics);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "map") {
      req.map = true;
    } else if (item == "mrr") {
      req.mrr = true;
    } else if (item == "p1") {
      req.p1 = true;
    } else if (item.starts_with("ndcg@")) {
      const std::size_t k = std::stoul(item.substr(5));
      if (k == 0) throw ConfigError("metric " + item + ": k must be >= 1");
      req.ndcg_ks.push_back(k);
    } else if (item.starts_with("r")) {
      // r<n>@<k>, e.g. r10@1; <n> is the nominal candidate count and is
      // informational only
      const auto at = item.find('@');
      if (at == std::string::npos || at < 2)
        throw ConfigError("unknown metric: " + item);
      const std::size_t k = std::stoul(item.substr(at + 1));
      if (k == 0) throw ConfigError("metric " + item + ": k must be >= 1");
      req.recall_ks.push_back(k);
    } else {
      throw ConfigError("unknown metric: " + item);
    }
  }
  if (!req.map && !req.mrr && !req.p1 && req.recall_ks.empty() && req.ndcg_ks.empty())
    throw ConfigError("no metrics requested");
  return req;
}

MetricReport evaluate_rerank(const DualEncoder& enc, std::span<const EvalSession> sessions,
                             const MetricRequest& request) {
  if (sessions.empty()) throw DataError("no evaluation sessions");

  // rank candidates with the dense model, then collect label sequences
  std::vector<std::vector<double>> ranked_labels;
  ranked_labels.reserve(sessions.size());
  for (const auto& session : sessions) {
    std::vector<std::string> texts;
    texts.reserve(session.candidates.size());
    for (const auto& c : session.candidates) texts.push_back(c.text);
    const auto order = rerank_candidates(enc, session.context, texts);
    std::vector<double> labels;
    labels.reserve(order.size());
    for (const auto& sc : order) labels.push_back(session.candidates[sc.position].rel);
    ranked_labels.push_back(std::move(labels));
  }

  MetricReport report;
  report.sessions = sessions.size();
  for (const auto& labels : ranked_labels) {
    if (is_binary(labels) && count_positives(labels) == 0) ++report.skipped_no_positive;
    std::vector<double> ideal(labels.begin(), labels.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>{});
    if (!request.ndcg_ks.empty() && (ideal.empty() || ideal.front() == 0.0))
      ++report.skipped_zero_idcg;
  }

  const std::span<const std::vector<double>> span(ranked_labels);
  if (request.map) report.map = mean_average_precision(span);
  if (request.mrr) report.mrr = mean_reciprocal_rank(span);
  if (request.p1) report.p1 = precision_at_1(span);
  for (const std::size_t k : request.recall_ks) report.recall_at[k] = recall_at_k(span, k);
  for (const std::size_t k : request.ndcg_ks) report.ndcg_at[k] = ndcg_at_k(span, k);
  return report;
}

FullrankReport evaluate_fullrank(const SearchFn& system, const ResponseStore& store,
                                 std::span<const FullrankQuery> queries) {
  if (queries.empty()) throw DataError("no full-rank queries");

  FullrankReport report;
  std::size_t hits1 = 0, hits10 = 0;
  std::size_t scored = 0;
  for (const auto& query : queries) {
    const auto gold_ids = store.find_by_text(query.gold_text);
    if (gold_ids.empty()) {
      ++report.unresolved_gold;
      continue;
    }
    ++scored;
    const auto results = system(query.context, 10);
    const auto is_gold = [&gold_ids](EntryId id) {
      return std::find(gold_ids.begin(), gold_ids.end(), id) != gold_ids.end();
    };
    for (std::size_t r = 0; r < results.size(); ++r) {
      if (is_gold(results[r].id)) {
        if (r == 0) ++hits1;
        ++hits10;
        break;
      }
    }
    if (!results.empty()) ++report.top1_provenance[to_string(results.front().provenance)];
  }
  report.queries = scored;
  if (scored == 0) throw DataError("no full-rank query had a resolvable gold response");
  report.recall_at_1 = static_cast<double>(hits1) / static_cast<double>(scored);
  report.recall_at_10 = static_cast<double>(hits10) / static_cast<double>(scored);
  return report;
}

LatencyReport bench_latency(const std::function<void(std::size_t)>& run_query,
                            std::size_t num_queries, std::size_t warmup,
                            std::size_t corpus_size) {
  if (num_queries <= warmup)
    throw ConfigError("need more queries (" + std::to_string(num_queries) + ") than warmup (" +
                      std::to_string(warmup) + ")");

  std::vector<double> samples;
  samples.reserve(num_queries - warmup);
  for (std::size_t q = 0; q < num_queries; ++q) {
    const auto t0 = std::chrono::steady_clock::now();
    run_query(q);
    const auto t1 = std::chrono::steady_clock::now();
    if (q >= warmup) samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&sorted](double p) {
    const std::size_t idx = std::min(
        sorted.size() - 1,
        static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size()))) -
            (p > 0.0 ? 1 : 0));
    return sorted[idx];
  };

  LatencyReport report;
  report.warmup = warmup;
  report.query_count = samples.size();
  report.corpus_size = corpus_size;
  double total = 0.0;
  for (const double s : samples) total += s;
  report.avg_ms = total / static_cast<double>(samples.size());
  report.median_ms = quantile(0.5);
  report.p95_ms = quantile(0.95);
  return report;
}

}  // namespace densedial
