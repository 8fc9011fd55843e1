// densedial: train a dual encoder for dialogue response selection, build and
// query MIPS indexes over response corpora, and evaluate both the end-to-end
// and BM25 recall-then-rerank frameworks.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "densedial/corpus.hpp"
#include "densedial/encoder.hpp"
#include "densedial/eval.hpp"
#include "densedial/index.hpp"
#include "densedial/retrieval.hpp"
#include "densedial/serialize.hpp"
#include "densedial/training.hpp"
#include "densedial/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace densedial;

namespace {

std::string fnv1a_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input for digest: " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf), in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// Every command that writes a primary output goes through this: temp file
// plus rename, so interrupted runs leave no partial files.
void write_text_atomic(const fs::path& path, const std::string& contents) {
  AtomicFile file(path);
  file.stream() << contents;
  file.commit();
}

void emit_result(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text << "\n";
  else
    write_text_atomic(out_path, text + "\n");
}

struct ManifestInfo {
  std::string path;                 // empty -> not requested
  std::vector<fs::path> inputs;     // files to digest
  std::optional<std::uint64_t> seed;
};

void write_manifest(const ManifestInfo& info, const CLI::App& sub, double wall_ms) {
  if (info.path.empty()) return;
  json flags = json::object();
  for (const auto* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name.empty() || name == "--help") continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      if (results.empty())
        flags[name] = true;  // plain flag
      else if (results.size() == 1)
        flags[name] = results[0];
      else
        flags[name] = results;
    } else {
      flags[name] = opt->get_default_str();
    }
  }
  json inputs = json::object();
  for (const auto& p : info.inputs) inputs[p.string()] = fnv1a_hex(p);
  json manifest = {{"command", sub.get_name()},
                   {"version", kVersion},
                   {"flags", flags},
                   {"inputs", inputs},
                   {"wall_ms", wall_ms}};
  if (info.seed) manifest["seed"] = *info.seed;
  write_text_atomic(info.path, manifest.dump(2));
}

std::vector<std::string> split_context_line(const std::string& line) {
  // one context per line; utterances separated by tabs
  std::vector<std::string> utterances;
  std::size_t begin = 0;
  while (begin <= line.size()) {
    const std::size_t end = line.find('\t', begin);
    const std::string part =
        line.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    if (!part.empty()) utterances.push_back(part);
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return utterances;
}

std::vector<std::vector<std::string>> read_context_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open queries file: " + path.string());
  std::vector<std::vector<std::string>> contexts;
  std::string line;
  while (std::getline(in, line)) {
    auto utterances = split_context_line(line);
    if (!utterances.empty()) contexts.push_back(std::move(utterances));
  }
  if (contexts.empty()) throw DataError("no queries in " + path.string());
  return contexts;
}

std::vector<StoredResponse> load_response_files(const std::vector<std::string>& files,
                                                const std::vector<std::string>& provenances) {
  if (!provenances.empty() && provenances.size() != 1 && provenances.size() != files.size())
    throw ConfigError("--provenance must be given once or once per --responses file");
  std::vector<StoredResponse> out;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const std::string prov_name = provenances.empty()
                                      ? "parallel"
                                      : provenances[provenances.size() == 1 ? 0 : f];
    const Provenance prov = provenance_from_string(prov_name);
    const auto corpus = load_sessions(files[f], CorpusFormat::nonparallel_jsonl);
    for (const auto& s : corpus.sentences) out.push_back({s.id, s.text, prov});
  }
  return out;
}

// gold-recovery queries from a paired file: context is everything before the
// last utterance, the last utterance is the gold response
std::vector<FullrankQuery> fullrank_queries(const fs::path& path, std::size_t* skipped) {
  const auto corpus = load_sessions(path, CorpusFormat::paired_jsonl);
  std::vector<FullrankQuery> queries;
  std::size_t short_sessions = 0;
  for (const auto& s : corpus.sessions) {
    if (s.utterances.size() < 2) {
      ++short_sessions;
      continue;
    }
    FullrankQuery q;
    q.context.assign(s.utterances.begin(), s.utterances.end() - 1);
    q.gold_text = s.utterances.back();
    queries.push_back(std::move(q));
  }
  if (skipped) *skipped = short_sessions;
  if (queries.empty()) throw DataError("no usable test sessions in " + path.string());
  return queries;
}

json report_to_json(const FullrankReport& r) {
  return {{"queries", r.queries},
          {"unresolved_gold", r.unresolved_gold},
          {"recall_at_1", r.recall_at_1},
          {"recall_at_10", r.recall_at_10},
          {"top1_provenance", r.top1_provenance}};
}

json report_to_json(const LatencyReport& r) {
  return {{"avg_ms", r.avg_ms},     {"median_ms", r.median_ms},
          {"p95_ms", r.p95_ms},     {"corpus_size", r.corpus_size},
          {"query_count", r.query_count}, {"warmup", r.warmup}};
}

const char* origin_name(PairOrigin origin) {
  return origin == PairOrigin::original ? "original" : "augmented";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale dense retrieval for dialogue response selection"};
  app.set_version_flag("--version", std::string("densedial ") + kVersion);
  app.require_subcommand(1);

  // --- augment ---------------------------------------------------------
  auto* augment = app.add_subcommand("augment", "expand sessions into fine-grained pairs");
  std::string aug_in, aug_out;
  int aug_k = 5;
  augment->add_option("--in", aug_in, "paired jsonl input")->required();
  augment->add_option("--out", aug_out, "pairs jsonl output")->required();
  augment->add_option("--k", aug_k, "fine-grained degree")->capture_default_str();

  // --- train -----------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train the dual encoder");
  std::string train_in, train_out, train_loss = "contrastive";
  TrainConfig train_cfg;
  EncoderConfig train_enc_cfg;
  std::size_t vocab_size = 30000, min_freq = 1;
  train_cmd->add_option("--train", train_in, "paired jsonl train set")->required();
  train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
  train_cmd->add_option("--k", train_cfg.fine_grained_k, "fine-grained degree")->capture_default_str();
  train_cmd->add_option("--loss", train_loss, "contrastive|triplet")->capture_default_str();
  train_cmd->add_option("--batch", train_cfg.batch_size, "batch size")->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.learning_rate, "learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", train_cfg.epochs, "epochs")->capture_default_str();
  train_cmd->add_option("--clip", train_cfg.grad_clip_norm, "global gradient clip norm")->capture_default_str();
  train_cmd->add_option("--margin", train_cfg.margin, "triplet margin")->capture_default_str();
  train_cmd->add_option("--warmup", train_cfg.warmup_ratio, "warmup ratio")->capture_default_str();
  train_cmd->add_option("--weight-decay", train_cfg.weight_decay, "AdamW weight decay")->capture_default_str();
  train_cmd->add_option("--seed", train_cfg.seed, "random seed")->capture_default_str();
  train_cmd->add_option("--d-emb", train_enc_cfg.d_emb, "embedding width")->capture_default_str();
  train_cmd->add_option("--dim", train_enc_cfg.d, "output dimension")->capture_default_str();
  train_cmd->add_option("--max-ctx", train_enc_cfg.max_ctx_tokens, "context token cap")->capture_default_str();
  train_cmd->add_option("--max-res", train_enc_cfg.max_res_tokens, "response token cap")->capture_default_str();
  train_cmd->add_option("--vocab-size", vocab_size, "max vocabulary size")->capture_default_str();
  train_cmd->add_option("--min-freq", min_freq, "min token frequency")->capture_default_str();

  // --- build-index -----------------------------------------------------
  auto* build_cmd = app.add_subcommand("build-index", "encode responses and build a MIPS index");
  std::string bi_ckpt, bi_out, bi_kind = "flat";
  std::vector<std::string> bi_responses, bi_provenance;
  IvfBuildParams bi_ivf;
  LshBuildParams bi_lsh;
  std::uint64_t bi_seed = 0;
  int bi_threads = 1;
  build_cmd->add_option("--ckpt", bi_ckpt, "encoder checkpoint")->required();
  build_cmd->add_option("--responses", bi_responses, "nonparallel jsonl response files")
      ->required()
      ->expected(-1);
  build_cmd->add_option("--provenance", bi_provenance,
                        "provenance per responses file (parallel|nonparallel_in|nonparallel_out)")
      ->expected(-1);
  build_cmd->add_option("--kind", bi_kind, "flat|ivf|lsh")->capture_default_str();
  build_cmd->add_option("--out", bi_out, "index output path")->required();
  build_cmd->add_option("--nlist", bi_ivf.nlist, "IVF list count")->capture_default_str();
  build_cmd->add_option("--kmeans-iters", bi_ivf.kmeans_iters, "IVF k-means iterations")->capture_default_str();
  build_cmd->add_option("--bits", bi_lsh.bits, "LSH signature bits")->capture_default_str();
  build_cmd->add_option("--seed", bi_seed, "random seed")->capture_default_str();
  build_cmd->add_option("--threads", bi_threads, "encoding threads")->capture_default_str();

  // --- search ----------------------------------------------------------
  auto* search_cmd = app.add_subcommand("search", "query an index, one context per stdin line");
  std::string se_idx, se_ckpt;
  std::vector<std::string> se_responses;
  SearchParams se_params;
  search_cmd->add_option("--idx", se_idx, "index file")->required();
  search_cmd->add_option("--ckpt", se_ckpt, "encoder checkpoint")->required();
  search_cmd->add_option("--topk", se_params.topk, "results per query")->capture_default_str();
  search_cmd->add_option("--nprobe", se_params.nprobe, "IVF probes")->capture_default_str();
  search_cmd->add_option("--rescore", se_params.rescore_c, "LSH rescore depth")->capture_default_str();
  search_cmd->add_option("--responses", se_responses,
                         "response files (same order as build-index) to resolve texts")
      ->expected(-1);

  // --- evaluate --------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "re-rank metrics over an eval jsonl file");
  std::string ev_ckpt, ev_test, ev_metrics = "map,mrr,p1,r10@1,r10@2,r10@5", ev_out;
  eval_cmd->add_option("--ckpt", ev_ckpt, "encoder checkpoint")->required();
  eval_cmd->add_option("--test", ev_test, "eval jsonl file")->required();
  eval_cmd->add_option("--metrics", ev_metrics, "comma-separated metric list")->capture_default_str();
  eval_cmd->add_option("--out", ev_out, "write the JSON report here instead of stdout");

  // --- e2e-eval --------------------------------------------------------
  auto* e2e_cmd = app.add_subcommand("e2e-eval", "gold-recovery over the full index");
  std::string ee_ckpt, ee_idx, ee_test, ee_out;
  std::vector<std::string> ee_responses, ee_provenance;
  SearchParams ee_params;
  e2e_cmd->add_option("--ckpt", ee_ckpt, "encoder checkpoint")->required();
  e2e_cmd->add_option("--idx", ee_idx, "index file")->required();
  e2e_cmd->add_option("--responses", ee_responses, "response files (same order as build-index)")
      ->required()
      ->expected(-1);
  e2e_cmd->add_option("--provenance", ee_provenance, "provenance per responses file")->expected(-1);
  e2e_cmd->add_option("--test", ee_test, "paired jsonl test set")->required();
  e2e_cmd->add_option("--nprobe", ee_params.nprobe, "IVF probes")->capture_default_str();
  e2e_cmd->add_option("--rescore", ee_params.rescore_c, "LSH rescore depth")->capture_default_str();
  e2e_cmd->add_option("--out", ee_out, "write the JSON report here instead of stdout");

  // --- pipeline-eval ---------------------------------------------------
  auto* pipe_cmd = app.add_subcommand("pipeline-eval", "BM25 recall-then-rerank gold recovery");
  std::string pe_ckpt, pe_train, pe_test, pe_out;
  std::size_t pe_recall = 100;
  pipe_cmd->add_option("--ckpt", pe_ckpt, "encoder checkpoint")->required();
  pipe_cmd->add_option("--train", pe_train, "paired jsonl corpus backing the pipeline")->required();
  pipe_cmd->add_option("--test", pe_test, "paired jsonl test set")->required();
  pipe_cmd->add_option("--recall-size", pe_recall, "BM25 recall size")->capture_default_str();
  pipe_cmd->add_option("--out", pe_out, "write the JSON report here instead of stdout");

  // --- bench -----------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "single-threaded query latency");
  std::string be_mode, be_idx, be_ckpt, be_train, be_queries, be_out;
  std::size_t be_warmup = 10, be_recall = 100;
  SearchParams be_params;
  bench_cmd->add_option("--mode", be_mode, "flat|ivf|lsh|bm25-pipeline")->required();
  bench_cmd->add_option("--queries", be_queries, "one context per line")->required();
  bench_cmd->add_option("--idx", be_idx, "index file (flat/ivf/lsh modes)");
  bench_cmd->add_option("--ckpt", be_ckpt, "encoder checkpoint")->required();
  bench_cmd->add_option("--train", be_train, "paired jsonl corpus (bm25-pipeline mode)");
  bench_cmd->add_option("--topk", be_params.topk, "results per query")->capture_default_str();
  bench_cmd->add_option("--nprobe", be_params.nprobe, "IVF probes")->capture_default_str();
  bench_cmd->add_option("--rescore", be_params.rescore_c, "LSH rescore depth")->capture_default_str();
  bench_cmd->add_option("--recall-size", be_recall, "BM25 recall size")->capture_default_str();
  bench_cmd->add_option("--warmup", be_warmup, "unmeasured warmup queries")->capture_default_str();
  bench_cmd->add_option("--out", be_out, "write the JSON report here instead of stdout");

  // manifest flag on every subcommand
  std::string manifest_path;
  for (auto* sub : app.get_subcommands({}))
    sub->add_option("--manifest", manifest_path, "write a run manifest JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  ManifestInfo manifest;
  manifest.path = manifest_path;
  const auto started = std::chrono::steady_clock::now();

  try {
    if (sub == augment) {
      manifest.inputs = {aug_in};
      const auto corpus = load_sessions(aug_in, CorpusFormat::paired_jsonl);
      TrainSetStats stats;
      const auto pairs = build_train_set(corpus.sessions, aug_k, &stats);
      std::string lines;
      for (const auto& p : pairs) {
        json j = {{"context", p.context},
                  {"response", p.response},
                  {"label", p.label},
                  {"origin", origin_name(p.origin)}};
        lines += j.dump();
        lines += "\n";
      }
      write_text_atomic(aug_out, lines);
      std::cerr << "augment: sessions=" << stats.sessions_used
                << " skipped=" << stats.sessions_skipped << " pairs=" << stats.pairs << "\n";
    } else if (sub == train_cmd) {
      manifest.inputs = {train_in};
      manifest.seed = train_cfg.seed;
      if (train_loss == "contrastive")
        train_cfg.loss = LossKind::contrastive;
      else if (train_loss == "triplet")
        train_cfg.loss = LossKind::triplet;
      else
        throw ConfigError("--loss must be contrastive or triplet");

      const auto corpus = load_sessions(train_in, CorpusFormat::paired_jsonl);
      std::vector<std::string> texts;
      for (const auto& s : corpus.sessions)
        texts.insert(texts.end(), s.utterances.begin(), s.utterances.end());
      const auto vocab = build_vocab(texts, vocab_size, min_freq);
      std::cerr << "train: sessions=" << corpus.sessions.size() << " vocab=" << vocab.size()
                << "\n";

      const auto hook = [&train_out](const EpochLog& log, const DualEncoder& enc) {
        save_checkpoint(enc, train_out);
        json j = {{"epoch", log.epoch},
                  {"mean_loss", log.mean_loss},
                  {"wall_ms", log.wall_ms},
                  {"batches", log.batches},
                  {"pairs", log.pairs}};
        std::cout << j.dump() << "\n";
      };
      train(corpus.sessions, train_enc_cfg, vocab, train_cfg, hook);
    } else if (sub == build_cmd) {
      manifest.inputs.assign(bi_responses.begin(), bi_responses.end());
      manifest.inputs.push_back(bi_ckpt);
      manifest.seed = bi_seed;
      const auto enc = load_checkpoint(bi_ckpt);
      auto responses = load_response_files(bi_responses, bi_provenance);

      IndexBuildOptions options;
      options.threads = bi_threads;
      bi_ivf.seed = bi_seed;
      bi_lsh.seed = bi_seed;
      options.ivf = bi_ivf;
      options.lsh = bi_lsh;
      if (bi_kind == "flat")
        options.kind = IndexKind::flat;
      else if (bi_kind == "ivf")
        options.kind = IndexKind::ivf;
      else if (bi_kind == "lsh")
        options.kind = IndexKind::lsh;
      else
        throw ConfigError("--kind must be flat, ivf or lsh");

      const auto offline = build_offline_index(enc, std::move(responses), options);
      offline.index.save(bi_out);
      std::cerr << "build-index: kind=" << bi_kind << " entries=" << offline.index.size()
                << " d=" << offline.index.dim() << " -> " << bi_out << "\n";
    } else if (sub == search_cmd) {
      manifest.inputs = {se_idx, se_ckpt};
      const auto enc = load_checkpoint(se_ckpt);
      const auto index = VectorIndex::load(se_idx);
      std::vector<std::string> texts;
      if (!se_responses.empty()) {
        for (const auto& r : load_response_files(se_responses, {}))
          texts.push_back(r.text);
        if (texts.size() != index.size())
          throw DataError("--responses holds " + std::to_string(texts.size()) +
                          " texts but the index has " + std::to_string(index.size()));
      }

      std::string line;
      std::size_t query_no = 0;
      while (std::getline(std::cin, line)) {
        const auto context = split_context_line(line);
        if (context.empty()) continue;
        const VectorF q = encode_context(enc, context);
        const auto hits = index.search(q, se_params);
        json results = json::array();
        for (const auto& h : hits) {
          json r = {{"id", h.id}, {"score", h.score}};
          if (!texts.empty()) r["text"] = texts[h.id];
          results.push_back(std::move(r));
        }
        std::cout << json{{"query", query_no++}, {"results", results}}.dump() << "\n";
      }
    } else if (sub == eval_cmd) {
      manifest.inputs = {ev_ckpt, ev_test};
      const auto enc = load_checkpoint(ev_ckpt);
      const auto corpus = load_sessions(ev_test, CorpusFormat::eval_jsonl);
      const auto request = parse_metric_request(ev_metrics);
      const auto report = evaluate_rerank(enc, corpus.eval_sessions, request);

      json j = {{"sessions", report.sessions},
                {"skipped_no_positive", report.skipped_no_positive},
                {"skipped_zero_idcg", report.skipped_zero_idcg}};
      if (report.map) j["map"] = *report.map;
      if (report.mrr) j["mrr"] = *report.mrr;
      if (report.p1) j["p1"] = *report.p1;
      for (const auto& [k, v] : report.recall_at) j["r@" + std::to_string(k)] = v;
      for (const auto& [k, v] : report.ndcg_at) j["ndcg@" + std::to_string(k)] = v;
      emit_result(j.dump(2), ev_out);
    } else if (sub == e2e_cmd) {
      manifest.inputs.assign(ee_responses.begin(), ee_responses.end());
      manifest.inputs.push_back(ee_ckpt);
      manifest.inputs.push_back(ee_idx);
      manifest.inputs.push_back(ee_test);
      const auto enc = load_checkpoint(ee_ckpt);
      const auto index = VectorIndex::load(ee_idx);
      auto responses = load_response_files(ee_responses, ee_provenance);
      if (responses.size() != index.size())
        throw DataError("--responses holds " + std::to_string(responses.size()) +
                        " texts but the index has " + std::to_string(index.size()));
      const ResponseStore store(std::move(responses));

      std::size_t skipped = 0;
      const auto queries = fullrank_queries(ee_test, &skipped);
      const SearchFn system = [&](std::span<const std::string> context, std::size_t topk) {
        SearchParams params = ee_params;
        params.topk = topk;
        return e2e_search(enc, index, store, context, params);
      };
      auto report = evaluate_fullrank(system, store, queries);
      json j = report_to_json(report);
      j["skipped_short_sessions"] = skipped;
      j["framework"] = "e2e";
      emit_result(j.dump(2), ee_out);
    } else if (sub == pipe_cmd) {
      manifest.inputs = {pe_ckpt, pe_train, pe_test};
      const auto enc = load_checkpoint(pe_ckpt);
      const auto corpus = load_sessions(pe_train, CorpusFormat::paired_jsonl);
      const auto pairs = build_train_set(corpus.sessions, 1);
      if (pairs.empty()) throw DataError("pipeline corpus has no usable pairs");

      std::vector<StoredResponse> responses;
      std::vector<std::pair<std::string, EntryId>> docs;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        responses.push_back({"p" + std::to_string(i), pairs[i].response, Provenance::parallel});
        std::string joined;
        for (std::size_t u = 0; u < pairs[i].context.size(); ++u) {
          if (u > 0) joined.push_back(' ');
          joined += pairs[i].context[u];
        }
        docs.emplace_back(std::move(joined), EntryId{i});
      }
      IndexBuildOptions options;  // flat; only the store embeddings matter here
      const auto offline = build_offline_index(enc, std::move(responses), options);
      const auto bm25 = Bm25Index::build(docs);

      std::size_t skipped = 0;
      const auto queries = fullrank_queries(pe_test, &skipped);
      const SearchFn system = [&](std::span<const std::string> context, std::size_t topk) {
        return pipeline_search(enc, bm25, offline.store, context, pe_recall, topk);
      };
      auto report = evaluate_fullrank(system, offline.store, queries);
      json j = report_to_json(report);
      j["skipped_short_sessions"] = skipped;
      j["framework"] = "bm25-pipeline";
      j["recall_size"] = pe_recall;
      emit_result(j.dump(2), pe_out);
    } else if (sub == bench_cmd) {
      manifest.inputs = {be_queries, be_ckpt};
      const auto enc = load_checkpoint(be_ckpt);
      const auto contexts = read_context_lines(be_queries);

      LatencyReport report;
      if (be_mode == "flat" || be_mode == "ivf" || be_mode == "lsh") {
        if (be_idx.empty()) throw ConfigError("--idx is required for index benchmarks");
        manifest.inputs.push_back(be_idx);
        const auto index = VectorIndex::load(be_idx);
        report = bench_latency(
            [&](std::size_t q) {
              const VectorF query = encode_context(enc, contexts[q % contexts.size()]);
              index.search(query, be_params);
            },
            contexts.size(), be_warmup, index.size());
      } else if (be_mode == "bm25-pipeline") {
        if (be_train.empty()) throw ConfigError("--train is required for bm25-pipeline");
        manifest.inputs.push_back(be_train);
        const auto corpus = load_sessions(be_train, CorpusFormat::paired_jsonl);
        const auto pairs = build_train_set(corpus.sessions, 1);
        std::vector<StoredResponse> responses;
        std::vector<std::pair<std::string, EntryId>> docs;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          responses.push_back({"p" + std::to_string(i), pairs[i].response, Provenance::parallel});
          std::string joined;
          for (std::size_t u = 0; u < pairs[i].context.size(); ++u) {
            if (u > 0) joined.push_back(' ');
            joined += pairs[i].context[u];
          }
          docs.emplace_back(std::move(joined), EntryId{i});
        }
        const auto offline = build_offline_index(enc, std::move(responses), IndexBuildOptions{});
        const auto bm25 = Bm25Index::build(docs);
        report = bench_latency(
            [&](std::size_t q) {
              pipeline_search(enc, bm25, offline.store, contexts[q % contexts.size()], be_recall,
                              be_params.topk);
            },
            contexts.size(), be_warmup, bm25.num_docs());
      } else {
        throw ConfigError("--mode must be flat, ivf, lsh or bm25-pipeline");
      }
      json j = report_to_json(report);
      j["mode"] = be_mode;
      emit_result(j.dump(2), be_out);
    }

    const double wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - started)
                               .count();
    write_manifest(manifest, *sub, wall_ms);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
