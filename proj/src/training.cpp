#include "densedial/training.hpp"

#include <chrono>
#include <numeric>

#include "densedial/rng.hpp"

namespace densedial {

namespace {

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2 (in-batch negatives)");
  if (cfg.learning_rate <= 0) throw ConfigError("learning_rate must be positive");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.grad_clip_norm <= 0) throw ConfigError("grad_clip_norm must be positive");
  if (cfg.margin < 0) throw ConfigError("margin must be non-negative");
  if (cfg.warmup_ratio < 0 || cfg.warmup_ratio >= 1)
    throw ConfigError("warmup_ratio must be in [0, 1)");
  if (cfg.fine_grained_k < 1) throw ConfigError("fine_grained_k must be >= 1");
}

}  // namespace

TrainResult train(std::span<const DialogueSession> sessions, const EncoderConfig& enc_cfg,
                  const Vocabulary& vocab, const TrainConfig& cfg, const EpochHook& hook) {
  validate(cfg);

  const auto pairs = build_train_set(sessions, cfg.fine_grained_k);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  if (pairs.size() < batch)
    throw DataError("only " + std::to_string(pairs.size()) + " training pairs after augmentation; " +
                    "need at least batch_size=" + std::to_string(batch) +
                    " (use a smaller --batch)");

  // Tokenize (and truncate) once; batches then reference id lists only.
  std::vector<TokenizedPair> tokenized;
  tokenized.reserve(pairs.size());
  for (const auto& pair : pairs)
    tokenized.push_back({context_token_ids(vocab, pair.context, enc_cfg.max_ctx_tokens),
                         response_token_ids(vocab, pair.response, enc_cfg.max_res_tokens)});

  TrainResult result;
  result.encoder = init_encoder(enc_cfg, vocab, cfg.seed);
  auto opt_state = init_optimizer(result.encoder);

  const std::size_t full_batches = tokenized.size() / batch;
  const std::size_t steps_per_epoch =
      cfg.loss == LossKind::contrastive
          ? full_batches
          : full_batches + (tokenized.size() % batch >= 2 ? 1 : 0);
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  const std::size_t warmup_steps =
      static_cast<std::size_t>(cfg.warmup_ratio * static_cast<double>(total_steps));

  Rng shuffle_rng(mix_seed(cfg.seed, 0x51));
  std::vector<std::size_t> order(tokenized.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<TokenizedPair> scratch(batch);
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t offset = 0;
    while (offset < tokenized.size()) {
      const std::size_t size = std::min(batch, tokenized.size() - offset);
      const bool partial = size < batch;
      if (partial && (cfg.loss == LossKind::contrastive || size < 2)) break;

      scratch.resize(size);
      for (std::size_t i = 0; i < size; ++i) scratch[i] = tokenized[order[offset + i]];
      offset += size;

      auto grads = backprop_step<float>(result.encoder, scratch, cfg.loss,
                                        static_cast<float>(cfg.margin));
      clip_gradients(grads, static_cast<float>(cfg.grad_clip_norm));

      double lr = cfg.learning_rate;
      if (warmup_steps > 0 && step < warmup_steps)
        lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
      adamw_step(result.encoder, grads, opt_state, static_cast<float>(lr), cfg);

      loss_sum += static_cast<double>(grads.loss);
      ++batches;
      ++step;
    }

    const auto t1 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    log.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log.batches = batches;
    log.pairs = tokenized.size();
    result.log.push_back(log);
    if (hook) hook(log, result.encoder);
  }
  return result;
}

}  // namespace densedial
