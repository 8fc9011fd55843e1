#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "densedial/retrieval.hpp"

using namespace densedial;

namespace {

// small untrained model; retrieval behavior here is structural, not learned
DualEncoder test_encoder(std::uint64_t seed = 1) {
  const std::vector<std::string> texts = {
      "the red fox jumps over a lazy dog tonight maybe",
      "blue sky rain water fire stone tree leaf wind cloud"};
  EncoderConfig cfg;
  cfg.d_emb = 8;
  cfg.d = 8;
  return init_encoder(cfg, build_vocab(texts, 64, 1), seed);
}

std::vector<StoredResponse> responses(std::initializer_list<const char*> texts,
                                      Provenance prov = Provenance::parallel) {
  std::vector<StoredResponse> out;
  int i = 0;
  for (const char* t : texts) out.push_back({"r" + std::to_string(i++), t, prov});
  return out;
}

}  // namespace

TEST_CASE("build_offline_index encodes and stores every response") {
  const auto enc = test_encoder();
  auto items = responses({"red fox", "lazy dog", "blue sky", "rain water", "stone tree"});
  items[3].provenance = Provenance::nonparallel_in;
  items[4].provenance = Provenance::nonparallel_out;

  IndexBuildOptions options;
  options.kind = IndexKind::flat;
  const auto offline = build_offline_index(enc, items, options);
  CHECK(offline.index.size() == 5);
  CHECK(offline.store.size() == 5);
  CHECK(offline.store.item(3).provenance == Provenance::nonparallel_in);
  CHECK(offline.store.item(4).provenance == Provenance::nonparallel_out);

  // store embeddings are exactly the res-tower encodings
  CHECK(offline.store.embedding(1) == encode_response(enc, "lazy dog"));

  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(build_offline_index(enc, {}, options), DataError);
  }
  SUBCASE("threads do not change the result") {
    IndexBuildOptions threaded = options;
    threaded.threads = 4;
    const auto parallel = build_offline_index(enc, items, threaded);
    CHECK(parallel.store.embeddings() == offline.store.embeddings());
  }
}

TEST_CASE("e2e_search resolves ids through the store") {
  const auto enc = test_encoder();
  IndexBuildOptions options;
  const auto offline = build_offline_index(enc, responses({"red fox"}), options);
  const std::vector<std::string> context = {"the red fox"};

  SearchParams params;
  params.topk = 10;
  const auto hits = e2e_search(enc, offline.index, offline.store, context, params);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].text == "red fox");
  CHECK(hits[0].id == 0);
}

TEST_CASE("e2e_search output is identical across flat and exhaustive IVF") {
  const auto enc = test_encoder();
  const auto items =
      responses({"red fox", "lazy dog", "blue sky", "rain water", "stone tree", "leaf wind"});

  IndexBuildOptions flat_opts;
  flat_opts.kind = IndexKind::flat;
  const auto flat = build_offline_index(enc, items, flat_opts);

  IndexBuildOptions ivf_opts;
  ivf_opts.kind = IndexKind::ivf;
  ivf_opts.ivf.nlist = 3;
  const auto ivf = build_offline_index(enc, items, ivf_opts);

  const std::vector<std::string> context = {"fire and rain", "tree leaf"};
  SearchParams flat_params;
  flat_params.topk = 6;
  SearchParams ivf_params;
  ivf_params.topk = 6;
  ivf_params.nprobe = 3;  // nprobe = nlist: exact

  const auto a = e2e_search(enc, flat.index, flat.store, context, flat_params);
  const auto b = e2e_search(enc, ivf.index, ivf.store, context, ivf_params);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].score == b[i].score);
  }
}

TEST_CASE("bm25_score matches the Okapi formula by hand") {
  const std::vector<std::pair<std::string, EntryId>> docs = {{"a b", 0}};
  const auto index = Bm25Index::build(docs);

  const std::vector<std::string> query = {"a", "b"};
  // N=1, df=1: idf = ln(0.5/1.5 + 1) = ln(4/3); dl = avgdl -> tf term is 1
  const double expected = 2.0 * std::log(4.0 / 3.0);
  CHECK(index.score(query, 0) == doctest::Approx(expected).epsilon(1e-12));

  SUBCASE("no shared token scores zero") {
    const std::vector<std::string> miss = {"zzz"};
    CHECK(index.score(miss, 0) == 0.0);
  }
  SUBCASE("empty corpus is an error") {
    CHECK_THROWS_AS(Bm25Index::build({}), DataError);
  }
}

TEST_CASE("bm25 with b=0 ignores document length") {
  const std::vector<std::pair<std::string, EntryId>> docs = {{"x y", 0}, {"x y z w q", 1}};
  Bm25Params params;
  params.b = 0.0;
  const auto index = Bm25Index::build(docs, params);
  const std::vector<std::string> query = {"x"};
  CHECK(index.score(query, 0) == index.score(query, 1));
}

TEST_CASE("bm25 scores are non-negative and tf components are stable") {
  // same-length unrelated document changes idf but not the tf component
  const std::vector<std::pair<std::string, EntryId>> one = {{"cat dog", 0}};
  const std::vector<std::pair<std::string, EntryId>> two = {{"cat dog", 0}, {"fish owl", 1}};
  const auto idx1 = Bm25Index::build(one);
  const auto idx2 = Bm25Index::build(two);

  const std::vector<std::string> query = {"cat"};
  const double idf1 = std::log((1.0 - 1.0 + 0.5) / (1.0 + 0.5) + 1.0);
  const double idf2 = std::log((2.0 - 1.0 + 0.5) / (1.0 + 0.5) + 1.0);
  const double tf1 = idx1.score(query, 0) / idf1;
  const double tf2 = idx2.score(query, 0) / idf2;
  CHECK(tf1 == doctest::Approx(tf2).epsilon(1e-12));
  CHECK(idx1.score(query, 0) >= 0.0);
  CHECK(idx2.score(query, 0) >= 0.0);
}

TEST_CASE("bm25_recall ranks by score with ascending-id ties and skips zero scores") {
  const std::vector<std::pair<std::string, EntryId>> docs = {
      {"common alpha", 10}, {"common alpha", 11}, {"common beta", 12}, {"nothing here", 13}};
  const auto index = Bm25Index::build(docs);

  const std::vector<std::string> query = {"alpha"};
  const auto recalled = index.recall(query, 10);
  REQUIRE(recalled.size() == 2);  // the beta and unrelated docs score zero
  CHECK(recalled[0].first == 10);  // tie: lower doc id first
  CHECK(recalled[1].first == 11);

  const std::vector<std::string> none = {"qqq"};
  CHECK(index.recall(none, 10).empty());
}

namespace {

struct PipelineFixture {
  DualEncoder enc = test_encoder(3);
  std::vector<std::pair<std::string, std::string>> pairs;  // (context text, response text)
  OfflineIndex offline;
  Bm25Index bm25;

  PipelineFixture()
      : pairs({{"the red fox jumps", "lazy dog"},
               {"blue sky tonight", "rain water"},
               {"stone tree leaf", "wind cloud"},
               {"over a lazy dog", "red fox"}}),
        offline(make_offline()),
        bm25(make_bm25()) {}

  OfflineIndex make_offline() {
    std::vector<StoredResponse> items;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      items.push_back({"r" + std::to_string(i), pairs[i].second, Provenance::parallel});
    IndexBuildOptions options;
    return build_offline_index(enc, items, options);
  }

  Bm25Index make_bm25() {
    std::vector<std::pair<std::string, EntryId>> docs;
    for (std::size_t i = 0; i < pairs.size(); ++i) docs.emplace_back(pairs[i].first, EntryId{i});
    return Bm25Index::build(docs);
  }
};

}  // namespace

TEST_CASE("pipeline with full recall equals the dense exact ranking") {
  PipelineFixture fx;
  // every stored context shares "the"/"a"-free tokens? use a query hitting all
  const std::vector<std::string> context = {"the blue fox over stone sky tonight tree lazy"};

  const auto pipeline =
      pipeline_search(fx.enc, fx.bm25, fx.offline.store, context, /*recall=*/100, /*topk=*/4);
  SearchParams params;
  params.topk = 4;
  const auto dense = e2e_search(fx.enc, fx.offline.index, fx.offline.store, context, params);

  REQUIRE(pipeline.size() == dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    CHECK(pipeline[i].id == dense[i].id);
    CHECK(pipeline[i].score == dense[i].score);
  }
}

TEST_CASE("pipeline misses gold responses whose context the recall step drops") {
  PipelineFixture fx;
  // query shares tokens only with contexts 0 and 3; response of pair 1 can
  // never be recalled
  const std::vector<std::string> context = {"red fox lazy"};
  const auto recalled_only =
      pipeline_search(fx.enc, fx.bm25, fx.offline.store, context, /*recall=*/2, /*topk=*/4);
  for (const auto& hit : recalled_only) CHECK(hit.id != 1);

  SearchParams params;
  params.topk = 4;
  const auto dense = e2e_search(fx.enc, fx.offline.index, fx.offline.store, context, params);
  const bool gold_in_dense =
      std::any_of(dense.begin(), dense.end(), [](const auto& h) { return h.id == 1; });
  CHECK(gold_in_dense);  // e2e scores all responses, recall cannot drop any
}

TEST_CASE("pipeline top-1 dense score never exceeds the e2e top-1 score") {
  PipelineFixture fx;
  const std::vector<std::vector<std::string>> queries = {
      {"red fox"}, {"blue sky"}, {"stone leaf tree"}, {"lazy dog tonight"}, {"the a over"}};
  for (const auto& context : queries) {
    const auto pipeline =
        pipeline_search(fx.enc, fx.bm25, fx.offline.store, context, /*recall=*/2, /*topk=*/1);
    SearchParams params;
    params.topk = 1;
    const auto dense = e2e_search(fx.enc, fx.offline.index, fx.offline.store, context, params);
    REQUIRE(dense.size() == 1);
    if (!pipeline.empty()) CHECK(pipeline[0].score <= dense[0].score);
  }
}

TEST_CASE("pipeline returns empty when BM25 recalls nothing") {
  PipelineFixture fx;
  const std::vector<std::string> context = {"zzzz qqqq"};
  CHECK(pipeline_search(fx.enc, fx.bm25, fx.offline.store, context, 10, 5).empty());
}

TEST_CASE("rerank_candidates is a stable permutation of its input") {
  const auto enc = test_encoder(9);
  const std::vector<std::string> context = {"the red fox"};
  const std::vector<std::string> candidates = {"lazy dog", "blue sky", "lazy dog", "rain", "fire"};

  const auto ranked = rerank_candidates(enc, context, candidates);
  REQUIRE(ranked.size() == candidates.size());

  std::vector<bool> seen(candidates.size(), false);
  for (const auto& r : ranked) {
    CHECK(!seen[r.position]);
    seen[r.position] = true;
  }
  for (std::size_t i = 0; i + 1 < ranked.size(); ++i)
    CHECK(ranked[i].score >= ranked[i + 1].score);

  // duplicate texts score identically and keep input order
  std::size_t first = 0, second = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].position == 0) first = i;
    if (ranked[i].position == 2) second = i;
  }
  CHECK(ranked[first].score == ranked[second].score);
  CHECK(first < second);
}

TEST_CASE("response store lookup by exact text") {
  const auto enc = test_encoder();
  const auto offline =
      build_offline_index(enc, responses({"red fox", "blue sky", "red fox"}), IndexBuildOptions{});
  const auto ids = offline.store.find_by_text("red fox");
  CHECK(ids == std::vector<EntryId>{0, 2});
  CHECK(offline.store.find_by_text("absent").empty());
  CHECK_THROWS_AS(offline.store.item(99), DataError);
}
