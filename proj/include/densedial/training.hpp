#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "densedial/common.hpp"
#include "densedial/corpus.hpp"
#include "densedial/encoder.hpp"

namespace densedial {

enum class LossKind { contrastive, triplet };

struct TrainConfig {
  double learning_rate = 5e-5;
  int batch_size = 64;
  int epochs = 5;
  double grad_clip_norm = 5.0;
  double warmup_ratio = 0.0;  // 0.0 -> constant learning rate
  int fine_grained_k = 5;
  LossKind loss = LossKind::contrastive;
  double margin = 0.1;
  std::uint64_t seed = 0;
  // AdamW constants
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

// In-batch-negative contrastive loss over the matching degree matrix
// M[i][j] = score(V_c_i, V_r_j):
//   L = (1/n) sum_i -log( exp(M[i][i]) / sum_j exp(M[i][j]) )
// computed with the max-shift log-sum-exp trick. Non-finite entries raise
// DataError.
template <typename S>
S contrastive_loss(const Matrix<S>& scores);

// dL/dM[i][j] = (softmax_row_i(M)[j] - 1{i=j}) / n. Rows sum to zero and the
// diagonal is non-positive.
template <typename S>
Matrix<S> contrastive_loss_grad(const Matrix<S>& scores);

template <typename S>
struct TripletResult {
  S loss;           // sum reduction over the batch
  Matrix<S> d_vc;   // n x d
  Matrix<S> d_vr;   // n x d
};

// Hardest in-batch negative triplet margin loss on cosine similarity:
//   loss_i = max(cos(c_i, r_j*) - cos(c_i, r_i) + margin, 0)
// with j* = argmax_{j != i} cos(c_i, r_j), ties to the lowest j. The hinge
// subgradient at the kink is zero. Zero-norm embeddings raise DataError.
template <typename S>
TripletResult<S> triplet_margin_loss(const Matrix<S>& vc, const Matrix<S>& vr, S margin);

template <typename S>
struct TowerGradsT {
  Matrix<S> embedding;
  Matrix<S> projection;
  Vector<S> bias;
};

template <typename S>
struct BatchGradsT {
  S loss = 0;
  TowerGradsT<S> ctx;
  TowerGradsT<S> res;
};

using TowerGrads = TowerGradsT<float>;
using BatchGrads = BatchGradsT<float>;

// A training pair with tokenization (and truncation) already applied.
struct TokenizedPair {
  std::vector<int> ctx_ids;
  std::vector<int> res_ids;
};

// Exact analytic gradients of the chosen loss through both towers.
// Deterministic given parameters and batch; a non-finite gradient raises
// DataError naming the offending tensor.
template <typename S>
BatchGradsT<S> backprop_step(const DualEncoderT<S>& enc, std::span<const TokenizedPair> batch,
                             LossKind loss, S margin);

template <typename S>
S global_grad_norm(const BatchGradsT<S>& grads);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm; otherwise leaves them unchanged. Returns the pre-clip norm.
template <typename S>
S clip_gradients(BatchGradsT<S>& grads, S max_norm);

template <typename S>
struct AdamTensorT {
  Matrix<S> m, v;
};

template <typename S>
struct TowerAdamT {
  AdamTensorT<S> embedding, projection, bias;  // bias moments stored as d x 1
};

template <typename S>
struct OptimizerStateT {
  TowerAdamT<S> ctx, res;
  long step = 0;
};

using OptimizerState = OptimizerStateT<float>;

template <typename S>
OptimizerStateT<S> init_optimizer(const DualEncoderT<S>& enc);

// Decoupled-weight-decay Adam with bias-corrected moments.
template <typename S>
void adamw_step(DualEncoderT<S>& enc, const BatchGradsT<S>& grads, OptimizerStateT<S>& state,
                S lr, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_ms = 0.0;
  std::size_t batches = 0;
  std::size_t pairs = 0;
};

struct TrainResult {
  DualEncoder encoder;
  std::vector<EpochLog> log;
};

// Called after each epoch with the log entry and the current model; the CLI
// uses it to stream log lines and persist per-epoch checkpoints.
using EpochHook = std::function<void(const EpochLog&, const DualEncoder&)>;

// Full training loop: fine-grained augmentation, per-epoch seeded shuffle,
// fixed-size batches (the last partial batch is dropped under contrastive
// loss; under triplet loss a partial batch of at least 2 pairs is kept),
// backprop + global-norm clipping + AdamW. Deterministic given
// (sessions, configs, seed).
TrainResult train(std::span<const DialogueSession> sessions, const EncoderConfig& enc_cfg,
                  const Vocabulary& vocab, const TrainConfig& cfg, const EpochHook& hook = {});

// --- template definitions -------------------------------------------------

template <typename S>
S contrastive_loss(const Matrix<S>& scores) {
  if (scores.rows() != scores.cols()) throw ShapeError("contrastive_loss: matrix must be square");
  if (!scores.allFinite()) throw DataError("contrastive_loss: non-finite score entries");
  const Eigen::Index n = scores.rows();
  S total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const S row_max = scores.row(i).maxCoeff();
    S denom = 0;
    for (Eigen::Index j = 0; j < n; ++j) denom += std::exp(scores(i, j) - row_max);
    total += (row_max + std::log(denom)) - scores(i, i);
  }
  return total / static_cast<S>(n);
}

template <typename S>
Matrix<S> contrastive_loss_grad(const Matrix<S>& scores) {
  if (scores.rows() != scores.cols()) throw ShapeError("contrastive_loss_grad: matrix must be square");
  if (!scores.allFinite()) throw DataError("contrastive_loss_grad: non-finite score entries");
  const Eigen::Index n = scores.rows();
  Matrix<S> grad(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S row_max = scores.row(i).maxCoeff();
    S denom = 0;
    for (Eigen::Index j = 0; j < n; ++j) denom += std::exp(scores(i, j) - row_max);
    for (Eigen::Index j = 0; j < n; ++j)
      grad(i, j) = std::exp(scores(i, j) - row_max) / denom / static_cast<S>(n);
    grad(i, i) -= S(1) / static_cast<S>(n);
  }
  return grad;
}

template <typename S>
TripletResult<S> triplet_margin_loss(const Matrix<S>& vc, const Matrix<S>& vr, S margin) {
  const Eigen::Index n = vc.rows();
  if (n < 2) throw ConfigError("triplet_margin_loss: batch must have at least 2 pairs");
  if (vr.rows() != n || vr.cols() != vc.cols())
    throw ShapeError("triplet_margin_loss: shape mismatch");
  if (margin < S(0)) throw ConfigError("triplet_margin_loss: margin must be non-negative");

  Vector<S> cnorm(n), rnorm(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cnorm(i) = vc.row(i).norm();
    rnorm(i) = vr.row(i).norm();
    if (cnorm(i) == S(0) || rnorm(i) == S(0))
      throw DataError("triplet_margin_loss: zero-norm embedding, cosine undefined");
  }

  // cos(i, j) between context i and response j
  Matrix<S> cosine = vc * vr.transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cosine(i, j) /= cnorm(i) * rnorm(j);

  TripletResult<S> out;
  out.loss = 0;
  out.d_vc = Matrix<S>::Zero(n, vc.cols());
  out.d_vr = Matrix<S>::Zero(n, vc.cols());

  // d cos(a,b)/da = (b/|b| - cos*a/|a|) / |a|
  const auto add_cos_grad = [&](Eigen::Index i, Eigen::Index j, S sign) {
    const S c = cosine(i, j);
    out.d_vc.row(i) +=
        sign * (vr.row(j) / (cnorm(i) * rnorm(j)) - vc.row(i) * (c / (cnorm(i) * cnorm(i))));
    out.d_vr.row(j) +=
        sign * (vc.row(i) / (cnorm(i) * rnorm(j)) - vr.row(j) * (c / (rnorm(j) * rnorm(j))));
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index hardest = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (hardest < 0 || cosine(i, j) > cosine(i, hardest)) hardest = j;
    }
    const S term = cosine(i, hardest) - cosine(i, i) + margin;
    if (term > S(0)) {
      out.loss += term;
      add_cos_grad(i, hardest, S(1));
      add_cos_grad(i, i, S(-1));
    }
  }
  return out;
}

namespace detail {

template <typename S>
struct TowerForward {
  Matrix<S> pooled;  // n x d_emb mean-pooled embeddings
  Matrix<S> out;     // n x d projected embeddings
};

template <typename S, typename IdsOf>
TowerForward<S> forward_tower(const TowerParamsT<S>& tower, std::size_t n, const IdsOf& ids_of) {
  TowerForward<S> fwd;
  fwd.pooled = Matrix<S>::Zero(n, tower.embedding.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<int>& ids = ids_of(i);
    for (const int t : ids) fwd.pooled.row(i) += tower.embedding.row(t);
    fwd.pooled.row(i) /= static_cast<S>(ids.size());
  }
  fwd.out = fwd.pooled * tower.projection.transpose();
  fwd.out.rowwise() += tower.bias.transpose();
  return fwd;
}

// Chains dL/dV back through the linear projection and the mean pool.
template <typename S, typename IdsOf>
TowerGradsT<S> backward_tower(const TowerParamsT<S>& tower, const TowerForward<S>& fwd,
                              const Matrix<S>& d_out, std::size_t n, const IdsOf& ids_of) {
  TowerGradsT<S> g;
  g.projection = d_out.transpose() * fwd.pooled;
  g.bias = d_out.colwise().sum().transpose();
  g.embedding = Matrix<S>::Zero(tower.embedding.rows(), tower.embedding.cols());
  const Matrix<S> d_pooled = d_out * tower.projection;  // n x d_emb
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<int>& ids = ids_of(i);
    const S inv_len = S(1) / static_cast<S>(ids.size());
    for (const int t : ids) g.embedding.row(t) += d_pooled.row(i) * inv_len;
  }
  return g;
}

template <typename S>
void check_finite(const TowerGradsT<S>& g, const char* tower_name) {
  if (!g.embedding.allFinite())
    throw DataError(std::string("non-finite gradient in ") + tower_name + ".embedding");
  if (!g.projection.allFinite())
    throw DataError(std::string("non-finite gradient in ") + tower_name + ".projection");
  if (!g.bias.allFinite())
    throw DataError(std::string("non-finite gradient in ") + tower_name + ".bias");
}

}  // namespace detail

template <typename S>
BatchGradsT<S> backprop_step(const DualEncoderT<S>& enc, std::span<const TokenizedPair> batch,
                             LossKind loss, S margin) {
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("backprop_step: empty batch");
  for (const auto& p : batch)
    if (p.ctx_ids.empty() || p.res_ids.empty())
      throw DataError("backprop_step: pair with empty token list");

  const auto ctx_ids = [&](std::size_t i) -> const std::vector<int>& { return batch[i].ctx_ids; };
  const auto res_ids = [&](std::size_t i) -> const std::vector<int>& { return batch[i].res_ids; };
  const auto ctx_fwd = detail::forward_tower(enc.ctx, n, ctx_ids);
  const auto res_fwd = detail::forward_tower(enc.res, n, res_ids);

  BatchGradsT<S> out;
  Matrix<S> d_vc, d_vr;
  if (loss == LossKind::contrastive) {
    const Matrix<S> scores = ctx_fwd.out * res_fwd.out.transpose();
    out.loss = contrastive_loss(scores);
    const Matrix<S> d_scores = contrastive_loss_grad(scores);
    d_vc = d_scores * res_fwd.out;
    d_vr = d_scores.transpose() * ctx_fwd.out;
  } else {
    auto triplet = triplet_margin_loss(ctx_fwd.out, res_fwd.out, margin);
    out.loss = triplet.loss;
    d_vc = std::move(triplet.d_vc);
    d_vr = std::move(triplet.d_vr);
  }

  out.ctx = detail::backward_tower(enc.ctx, ctx_fwd, d_vc, n, ctx_ids);
  out.res = detail::backward_tower(enc.res, res_fwd, d_vr, n, res_ids);
  detail::check_finite(out.ctx, "ctx");
  detail::check_finite(out.res, "res");
  return out;
}

template <typename S>
S global_grad_norm(const BatchGradsT<S>& grads) {
  S sq = 0;
  for (const TowerGradsT<S>* t : {&grads.ctx, &grads.res}) {
    sq += t->embedding.squaredNorm();
    sq += t->projection.squaredNorm();
    sq += t->bias.squaredNorm();
  }
  return std::sqrt(sq);
}

template <typename S>
S clip_gradients(BatchGradsT<S>& grads, S max_norm) {
  if (max_norm <= S(0)) throw ConfigError("clip_gradients: max_norm must be positive");
  const S norm = global_grad_norm(grads);
  if (norm > max_norm) {
    const S scale = max_norm / norm;
    for (TowerGradsT<S>* t : {&grads.ctx, &grads.res}) {
      t->embedding *= scale;
      t->projection *= scale;
      t->bias *= scale;
    }
  }
  return norm;
}

template <typename S>
OptimizerStateT<S> init_optimizer(const DualEncoderT<S>& enc) {
  OptimizerStateT<S> st;
  const auto zero_like = [](const auto& m) { return Matrix<S>::Zero(m.rows(), m.cols()).eval(); };
  for (auto [tower, adam] : {std::pair{&enc.ctx, &st.ctx}, std::pair{&enc.res, &st.res}}) {
    adam->embedding = {zero_like(tower->embedding), zero_like(tower->embedding)};
    adam->projection = {zero_like(tower->projection), zero_like(tower->projection)};
    adam->bias = {zero_like(tower->bias), zero_like(tower->bias)};
  }
  return st;
}

namespace detail {

template <typename S, typename P, typename G>
void adamw_tensor(P& param, const G& grad, AdamTensorT<S>& mt, long t, S lr, const TrainConfig& cfg) {
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S eps = static_cast<S>(cfg.adam_eps), wd = static_cast<S>(cfg.weight_decay);
  mt.m = b1 * mt.m + (S(1) - b1) * grad;
  mt.v.array() = b2 * mt.v.array() + (S(1) - b2) * grad.array().square();
  const S corr1 = S(1) - std::pow(b1, static_cast<S>(t));
  const S corr2 = S(1) - std::pow(b2, static_cast<S>(t));
  param.array() -= lr * ((mt.m.array() / corr1) / ((mt.v.array() / corr2).sqrt() + eps) +
                         wd * param.array());
}

}  // namespace detail

template <typename S>
void adamw_step(DualEncoderT<S>& enc, const BatchGradsT<S>& grads, OptimizerStateT<S>& state,
                S lr, const TrainConfig& cfg) {
  ++state.step;
  const long t = state.step;
  detail::adamw_tensor(enc.ctx.embedding, grads.ctx.embedding, state.ctx.embedding, t, lr, cfg);
  detail::adamw_tensor(enc.ctx.projection, grads.ctx.projection, state.ctx.projection, t, lr, cfg);
  detail::adamw_tensor(enc.ctx.bias, grads.ctx.bias, state.ctx.bias, t, lr, cfg);
  detail::adamw_tensor(enc.res.embedding, grads.res.embedding, state.res.embedding, t, lr, cfg);
  detail::adamw_tensor(enc.res.projection, grads.res.projection, state.res.projection, t, lr, cfg);
  detail::adamw_tensor(enc.res.bias, grads.res.bias, state.res.bias, t, lr, cfg);
}

}  // namespace densedial
