#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densedial/common.hpp"
#include "densedial/corpus.hpp"
#include "densedial/rng.hpp"

namespace densedial {

struct EncoderConfig {
  std::size_t d_emb = 64;           // embedding width
  std::size_t d = 64;               // output embedding dimension
  std::size_t max_ctx_tokens = 256; // context token cap, keeps the suffix
  std::size_t max_res_tokens = 64;  // response token cap
};

// One tower: mean-pooled token embeddings followed by a linear projection,
//   v = projection * mean(embedding[token ids]) + bias.
// Templated on the scalar so tests can run the identical forward/backward
// code in double precision against finite differences.
template <typename S>
struct TowerParamsT {
  Matrix<S> embedding;   // V x d_emb
  Matrix<S> projection;  // d x d_emb
  Vector<S> bias;        // d
};

// Context and response towers share the vocabulary but own disjoint
// parameter storage.
template <typename S>
struct DualEncoderT {
  EncoderConfig config;
  Vocabulary vocab;
  TowerParamsT<S> ctx;
  TowerParamsT<S> res;
};

using TowerParams = TowerParamsT<float>;
using DualEncoder = DualEncoderT<float>;

// All entries i.i.d. uniform in [-0.05, 0.05] from the seeded generator;
// draw order is fixed, so a given (config, vocab, seed) is bit-reproducible.
template <typename S>
DualEncoderT<S> init_encoder_t(const EncoderConfig& config, Vocabulary vocab, std::uint64_t seed);

DualEncoder init_encoder(const EncoderConfig& config, Vocabulary vocab, std::uint64_t seed);

// Utterances joined with SEP, tokenized, truncated to the LAST max_tokens
// ids (recent turns win). Empty context is an error.
std::vector<int> context_token_ids(const Vocabulary& vocab,
                                   std::span<const std::string> context,
                                   std::size_t max_tokens);

// No SEP joining; same suffix truncation.
std::vector<int> response_token_ids(const Vocabulary& vocab, std::string_view response,
                                    std::size_t max_tokens);

template <typename S>
Vector<S> embed_tokens(const TowerParamsT<S>& tower, std::span<const int> ids);

template <typename S>
Vector<S> encode_context(const DualEncoderT<S>& enc, std::span<const std::string> context);

template <typename S>
Vector<S> encode_response(const DualEncoderT<S>& enc, std::string_view response);

// Row i equals the single-item encoding of item i, exactly (same code path).
template <typename S>
Matrix<S> encode_batch(const DualEncoderT<S>& enc,
                       std::span<const std::vector<std::string>> contexts);
template <typename S>
Matrix<S> encode_batch(const DualEncoderT<S>& enc, std::span<const std::string> responses);

// Inner-product matching degree. Dimension mismatch raises ShapeError.
template <typename S>
S score(const Vector<S>& v_c, const Vector<S>& v_r) {
  return dot(v_c, v_r);
}

// Checkpoint file: magic "DDE1", u32 version, config block (dims, caps,
// vocabulary), then row-major little-endian f32 E/W/b per tower (ctx, res).
// Round-trips bit-exactly. Written atomically (temp file + rename).
void save_checkpoint(const DualEncoder& enc, const std::filesystem::path& path);
DualEncoder load_checkpoint(const std::filesystem::path& path);

// --- template definitions -------------------------------------------------

template <typename S>
DualEncoderT<S> init_encoder_t(const EncoderConfig& config, Vocabulary vocab, std::uint64_t seed) {
  if (config.d_emb == 0 || config.d == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (config.max_ctx_tokens == 0 || config.max_res_tokens == 0)
    throw ConfigError("token caps must be positive");
  if (vocab.size() < Vocabulary::kReserved)
    throw ConfigError("vocabulary not built");

  Rng rng(seed);
  const auto fill = [&rng](auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = static_cast<S>(rng.uniform(-0.05, 0.05));
  };

  DualEncoderT<S> enc;
  enc.config = config;
  enc.vocab = std::move(vocab);
  const auto v = static_cast<Eigen::Index>(enc.vocab.size());
  const auto d_emb = static_cast<Eigen::Index>(config.d_emb);
  const auto d = static_cast<Eigen::Index>(config.d);
  for (TowerParamsT<S>* tower : {&enc.ctx, &enc.res}) {
    tower->embedding.resize(v, d_emb);
    tower->projection.resize(d, d_emb);
    tower->bias.resize(d);
    fill(tower->embedding);
    fill(tower->projection);
    fill(tower->bias);
  }
  return enc;
}

template <typename S>
Vector<S> embed_tokens(const TowerParamsT<S>& tower, std::span<const int> ids) {
  if (ids.empty()) throw DataError("cannot embed an empty token list");
  Vector<S> pooled = Vector<S>::Zero(tower.embedding.cols());
  for (const int id : ids) pooled += tower.embedding.row(id).transpose();
  pooled /= static_cast<S>(ids.size());
  return tower.projection * pooled + tower.bias;
}

template <typename S>
Vector<S> encode_context(const DualEncoderT<S>& enc, std::span<const std::string> context) {
  const auto ids = context_token_ids(enc.vocab, context, enc.config.max_ctx_tokens);
  return embed_tokens(enc.ctx, ids);
}

template <typename S>
Vector<S> encode_response(const DualEncoderT<S>& enc, std::string_view response) {
  const auto ids = response_token_ids(enc.vocab, response, enc.config.max_res_tokens);
  return embed_tokens(enc.res, ids);
}

template <typename S>
Matrix<S> encode_batch(const DualEncoderT<S>& enc,
                       std::span<const std::vector<std::string>> contexts) {
  if (contexts.empty()) throw DataError("encode_batch: empty batch");
  Matrix<S> out(contexts.size(), enc.config.d);
  for (std::size_t i = 0; i < contexts.size(); ++i)
    out.row(i) = encode_context(enc, contexts[i]).transpose();
  return out;
}

template <typename S>
Matrix<S> encode_batch(const DualEncoderT<S>& enc, std::span<const std::string> responses) {
  if (responses.empty()) throw DataError("encode_batch: empty batch");
  Matrix<S> out(responses.size(), enc.config.d);
  for (std::size_t i = 0; i < responses.size(); ++i)
    out.row(i) = encode_response(enc, responses[i]).transpose();
  return out;
}

}  // namespace densedial
