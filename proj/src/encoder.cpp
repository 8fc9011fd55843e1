#include "densedial/encoder.hpp"

#include <fstream>

#include "densedial/serialize.hpp"

namespace densedial {

namespace {

constexpr char kMagic[4] = {'D', 'D', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

std::vector<int> truncate_to_suffix(std::vector<int> ids, std::size_t max_tokens) {
  if (ids.size() > max_tokens)
    ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(max_tokens));
  return ids;
}

}  // namespace

std::vector<int> context_token_ids(const Vocabulary& vocab,
                                   std::span<const std::string> context,
                                   std::size_t max_tokens) {
  if (context.empty()) throw DataError("context must contain at least one utterance");
  std::vector<int> ids;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i > 0) ids.push_back(Vocabulary::kSep);
    const auto utterance_ids = tokenize(context[i], vocab);
    ids.insert(ids.end(), utterance_ids.begin(), utterance_ids.end());
  }
  return truncate_to_suffix(std::move(ids), max_tokens);
}

std::vector<int> response_token_ids(const Vocabulary& vocab, std::string_view response,
                                    std::size_t max_tokens) {
  return truncate_to_suffix(tokenize(response, vocab), max_tokens);
}

DualEncoder init_encoder(const EncoderConfig& config, Vocabulary vocab, std::uint64_t seed) {
  return init_encoder_t<float>(config, std::move(vocab), seed);
}

namespace {

void write_matrix(BinaryWriter& w, const MatrixF& m) {
  w.f32_array(m.data(), static_cast<std::size_t>(m.size()));
}

void write_vector(BinaryWriter& w, const VectorF& v) {
  w.f32_array(v.data(), static_cast<std::size_t>(v.size()));
}

MatrixF read_matrix(BinaryReader& r, Eigen::Index rows, Eigen::Index cols) {
  MatrixF m(rows, cols);
  r.f32_array(m.data(), static_cast<std::size_t>(m.size()));
  return m;
}

VectorF read_vector(BinaryReader& r, Eigen::Index n) {
  VectorF v(n);
  r.f32_array(v.data(), static_cast<std::size_t>(n));
  return v;
}

}  // namespace

void save_checkpoint(const DualEncoder& enc, const std::filesystem::path& path) {
  AtomicFile file(path);
  BinaryWriter w(file.stream());
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(enc.config.d_emb));
  w.u32(static_cast<std::uint32_t>(enc.config.d));
  w.u32(static_cast<std::uint32_t>(enc.config.max_ctx_tokens));
  w.u32(static_cast<std::uint32_t>(enc.config.max_res_tokens));
  w.u32(static_cast<std::uint32_t>(enc.vocab.size()));
  for (const auto& token : enc.vocab.tokens()) w.str(token);
  for (const TowerParams* tower : {&enc.ctx, &enc.res}) {
    write_matrix(w, tower->embedding);
    write_matrix(w, tower->projection);
    write_vector(w, tower->bias);
  }
  file.commit();
}

DualEncoder load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  BinaryReader r(in);
  r.expect_magic(kMagic, "checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));

  DualEncoder enc;
  enc.config.d_emb = r.u32();
  enc.config.d = r.u32();
  enc.config.max_ctx_tokens = r.u32();
  enc.config.max_res_tokens = r.u32();
  const std::uint32_t vocab_size = r.u32();
  if (enc.config.d_emb == 0 || enc.config.d == 0 || enc.config.max_ctx_tokens == 0 ||
      enc.config.max_res_tokens == 0 || vocab_size < Vocabulary::kReserved)
    throw ShapeError("checkpoint header has invalid dimensions");

  std::vector<std::string> tokens;
  tokens.reserve(vocab_size);
  for (std::uint32_t i = 0; i < vocab_size; ++i) tokens.push_back(r.str());
  enc.vocab = Vocabulary::from_tokens(std::move(tokens));
  if (enc.vocab.size() != vocab_size) throw ShapeError("vocabulary size mismatch");

  const auto v = static_cast<Eigen::Index>(vocab_size);
  const auto d_emb = static_cast<Eigen::Index>(enc.config.d_emb);
  const auto d = static_cast<Eigen::Index>(enc.config.d);
  for (TowerParams* tower : {&enc.ctx, &enc.res}) {
    tower->embedding = read_matrix(r, v, d_emb);
    tower->projection = read_matrix(r, d, d_emb);
    tower->bias = read_vector(r, d);
  }
  if (!r.at_eof()) throw DataError("trailing data in checkpoint: " + path.string());
  return enc;
}

}  // namespace densedial
