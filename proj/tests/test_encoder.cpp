#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "densedial/encoder.hpp"

using namespace densedial;

namespace {

namespace fs = std::filesystem;

Vocabulary tiny_vocab() {
  const std::vector<std::string> texts = {"alpha beta gamma delta epsilon"};
  return build_vocab(texts, 32, 1);
}

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.d_emb = 6;
  cfg.d = 4;
  cfg.max_ctx_tokens = 16;
  cfg.max_res_tokens = 8;
  return cfg;
}

bool same_params(const DualEncoder& a, const DualEncoder& b) {
  return a.ctx.embedding == b.ctx.embedding && a.ctx.projection == b.ctx.projection &&
         a.ctx.bias == b.ctx.bias && a.res.embedding == b.res.embedding &&
         a.res.projection == b.res.projection && a.res.bias == b.res.bias;
}

struct TempPath {
  fs::path path;
  explicit TempPath(const char* tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           (std::string("densedial_enc_") + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++) + ".bin");
  }
  ~TempPath() { std::error_code ec; fs::remove(path, ec); }
};

}  // namespace

TEST_CASE("init_encoder is deterministic in the seed") {
  const auto vocab = tiny_vocab();
  const auto a = init_encoder(tiny_config(), vocab, 7);
  const auto b = init_encoder(tiny_config(), vocab, 7);
  const auto c = init_encoder(tiny_config(), vocab, 8);
  CHECK(same_params(a, b));
  CHECK_FALSE(same_params(a, c));
  CHECK((a.ctx.embedding.array().abs() <= 0.05f).all());
  // decoupled towers: parameters drawn independently
  CHECK(a.ctx.embedding != a.res.embedding);
}

TEST_CASE("init_encoder rejects degenerate configs") {
  auto cfg = tiny_config();
  cfg.d = 0;
  CHECK_THROWS_AS(init_encoder(cfg, tiny_vocab(), 0), ConfigError);
}

TEST_CASE("encode_context of one single-token utterance is W*E[t] + b") {
  const auto vocab = tiny_vocab();
  const auto enc = init_encoder(tiny_config(), vocab, 3);
  const std::vector<std::string> context = {"alpha"};
  const VectorF got = encode_context(enc, context);
  const VectorF expected =
      enc.ctx.projection * enc.ctx.embedding.row(vocab.id("alpha")).transpose() + enc.ctx.bias;
  CHECK(got == expected);
}

TEST_CASE("encode_context joins utterances with SEP and mean-pools") {
  const auto vocab = tiny_vocab();
  const auto enc = init_encoder(tiny_config(), vocab, 3);
  const std::vector<std::string> context = {"alpha", "alpha"};
  const VectorF got = encode_context(enc, context);

  // direct recomputation: ids are [alpha, SEP, alpha]
  const int t = vocab.id("alpha");
  VectorF pooled = VectorF::Zero(static_cast<Eigen::Index>(enc.config.d_emb));
  pooled += enc.ctx.embedding.row(t).transpose();
  pooled += enc.ctx.embedding.row(Vocabulary::kSep).transpose();
  pooled += enc.ctx.embedding.row(t).transpose();
  pooled /= 3.0f;
  const VectorF expected = enc.ctx.projection * pooled + enc.ctx.bias;
  CHECK(got == expected);
}

TEST_CASE("context truncation keeps the most recent tokens") {
  const auto vocab = tiny_vocab();
  auto cfg = tiny_config();
  cfg.max_ctx_tokens = 4;
  const auto enc = init_encoder(cfg, vocab, 3);

  const std::vector<std::string> recent = {"beta gamma delta epsilon"};
  std::vector<std::string> longer = {"alpha alpha alpha", "beta gamma delta epsilon"};

  const auto ids_recent = context_token_ids(vocab, recent, cfg.max_ctx_tokens);
  const auto ids_longer = context_token_ids(vocab, longer, cfg.max_ctx_tokens);
  CHECK(ids_recent == ids_longer);
  CHECK(ids_recent.size() == 4);
  CHECK(encode_context(enc, recent) == encode_context(enc, longer));

  // prepending even more history when already at the cap changes nothing
  longer.insert(longer.begin(), "delta delta");
  CHECK(context_token_ids(vocab, longer, cfg.max_ctx_tokens) == ids_recent);
}

TEST_CASE("encode_context rejects an empty context") {
  const auto enc = init_encoder(tiny_config(), tiny_vocab(), 3);
  CHECK_THROWS_AS(encode_context(enc, std::span<const std::string>{}), DataError);
}

TEST_CASE("encode_response uses the res tower without SEP") {
  const auto vocab = tiny_vocab();
  const auto enc = init_encoder(tiny_config(), vocab, 3);

  const VectorF got = encode_response(enc, "beta");
  const VectorF expected =
      enc.res.projection * enc.res.embedding.row(vocab.id("beta")).transpose() + enc.res.bias;
  CHECK(got == expected);

  // all-unknown text maps to the UNK embedding
  const VectorF unk = encode_response(enc, "qqqq");
  const VectorF unk_expected =
      enc.res.projection * enc.res.embedding.row(Vocabulary::kUnk).transpose() + enc.res.bias;
  CHECK(unk == unk_expected);

  CHECK(encode_response(enc, "beta gamma") == encode_response(enc, "beta gamma"));
}

TEST_CASE("score is the inner product with strict shape checking") {
  VectorF a(2), b(2);
  a << 1.0f, 0.0f;
  b << 0.0f, 1.0f;
  CHECK(score(a, b) == 0.0f);

  VectorF c(2), d(2);
  c << 1.0f, 2.0f;
  d << 3.0f, 4.0f;
  CHECK(score(c, d) == 11.0f);
  CHECK(score(c, c) == 5.0f);

  // symmetry and homogeneity
  CHECK(score(c, d) == score(d, c));
  const VectorF c2 = 2.0f * c;
  CHECK(score(c2, d) == 2.0f * score(c, d));

  VectorF e(3);
  e << 1.0f, 2.0f, 3.0f;
  CHECK_THROWS_AS(score(c, e), ShapeError);
}

TEST_CASE("encode_batch rows equal single-item encodings") {
  const auto vocab = tiny_vocab();
  const auto enc = init_encoder(tiny_config(), vocab, 5);

  const std::vector<std::vector<std::string>> contexts = {
      {"alpha beta"}, {"gamma", "delta"}, {"alpha beta"}};
  const MatrixF ctx_rows = encode_batch(enc, contexts);
  REQUIRE(ctx_rows.rows() == 3);
  for (std::size_t i = 0; i < contexts.size(); ++i)
    CHECK(ctx_rows.row(static_cast<Eigen::Index>(i)).transpose() ==
          encode_context(enc, contexts[i]));
  // duplicated items give identical rows
  CHECK(ctx_rows.row(0) == ctx_rows.row(2));

  const std::vector<std::string> responses = {"epsilon", "alpha"};
  const MatrixF res_rows = encode_batch(enc, responses);
  CHECK(res_rows.row(0).transpose() == encode_response(enc, responses[0]));
  CHECK(res_rows.row(1).transpose() == encode_response(enc, responses[1]));

  // permuted batch permutes rows
  const std::vector<std::string> flipped = {"alpha", "epsilon"};
  const MatrixF flipped_rows = encode_batch(enc, flipped);
  CHECK(flipped_rows.row(0) == res_rows.row(1));
  CHECK(flipped_rows.row(1) == res_rows.row(0));
}

TEST_CASE("checkpoint round-trip is the identity on parameters") {
  const auto enc = init_encoder(tiny_config(), tiny_vocab(), 11);
  TempPath file("roundtrip");
  save_checkpoint(enc, file.path);
  const auto loaded = load_checkpoint(file.path);
  CHECK(same_params(enc, loaded));
  CHECK(loaded.config.d_emb == enc.config.d_emb);
  CHECK(loaded.config.d == enc.config.d);
  CHECK(loaded.config.max_ctx_tokens == enc.config.max_ctx_tokens);
  CHECK(loaded.config.max_res_tokens == enc.config.max_res_tokens);
  CHECK(loaded.vocab.tokens() == enc.vocab.tokens());
}

TEST_CASE("checkpoint loader distinguishes error cases") {
  const auto enc = init_encoder(tiny_config(), tiny_vocab(), 11);
  TempPath file("errors");
  save_checkpoint(enc, file.path);

  const auto read_all = [&]() {
    std::ifstream in(file.path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  const auto write_all = [&](const std::string& bytes) {
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out << bytes;
  };
  const std::string original = read_all();

  SUBCASE("version mismatch") {
    std::string bytes = original;
    bytes[4] = 9;  // version field follows the 4-byte magic
    write_all(bytes);
    CHECK_THROWS_AS(load_checkpoint(file.path), VersionError);
  }
  SUBCASE("truncated file") {
    write_all(original.substr(0, original.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(file.path), TruncatedError);
  }
  SUBCASE("bad magic") {
    std::string bytes = original;
    bytes[0] = 'X';
    write_all(bytes);
    CHECK_THROWS_AS(load_checkpoint(file.path), DataError);
  }
  SUBCASE("shape corruption") {
    std::string bytes = original;
    // zero out d_emb (u32 right after magic+version)
    bytes[8] = bytes[9] = bytes[10] = bytes[11] = 0;
    write_all(bytes);
    CHECK_THROWS_AS(load_checkpoint(file.path), ShapeError);
  }
  SUBCASE("trailing garbage") {
    write_all(original + "extra");
    CHECK_THROWS_AS(load_checkpoint(file.path), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
  }
}
