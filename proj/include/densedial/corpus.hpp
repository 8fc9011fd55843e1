#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "densedial/common.hpp"

namespace densedial {

// One speaker turn of a multi-turn conversation. Utterances are plain text;
// non-emptiness (after trimming) is validated at load time.
struct DialogueSession {
  std::string id;
  std::vector<std::string> utterances;  // at least 1; >= 2 for paired use
};

// A single unpaired sentence, usable only as a retrieval candidate.
struct NonparallelSentence {
  std::string id;
  std::string text;
};

enum class PairOrigin { original, augmented };

// The (context, response) training unit.
struct ContextResponsePair {
  std::vector<std::string> context;  // non-empty
  std::string response;
  int label = 1;  // binary relevance
  PairOrigin origin = PairOrigin::original;
};

// Labeled candidate list for the re-rank evaluation setting. rel is binary
// {0,1} for recall/MAP/MRR/P@1 and graded (>= 0) for NDCG.
struct EvalCandidate {
  std::string text;
  double rel = 0.0;
};

struct EvalSession {
  std::string id;
  std::vector<std::string> context;
  std::vector<EvalCandidate> candidates;
};

enum class CorpusFormat { paired_jsonl, nonparallel_jsonl, eval_jsonl };

struct Corpus {
  std::vector<DialogueSession> sessions;
  std::vector<NonparallelSentence> sentences;
  std::vector<EvalSession> eval_sessions;
};

// Loads one-JSON-object-per-line files. Input order is preserved. A malformed
// line raises DataError naming the 1-based line number; an empty file raises
// DataError.
Corpus load_sessions(const std::filesystem::path& path, CorpusFormat format);

// Cuts the last k turn boundaries of a session into (context, response)
// pairs: pair j (j = 1..min(k, m-1)) has context [u_1..u_{m-j}] and response
// u_{m-j+1}. Pair j=1 is the original pair, the rest are augmented.
// Sessions with fewer than 2 utterances yield an empty list.
std::vector<ContextResponsePair> augment_fine_grained(const DialogueSession& session, int k);

struct TrainSetStats {
  std::size_t sessions_used = 0;
  std::size_t sessions_skipped = 0;  // m < 2
  std::size_t pairs = 0;
};

// Concatenation of augment_fine_grained over all sessions, in input order.
std::vector<ContextResponsePair> build_train_set(std::span<const DialogueSession> sessions,
                                                 int k, TrainSetStats* stats = nullptr);

// Lowercases and splits on whitespace. Shared by the id tokenizer and BM25.
std::vector<std::string> split_tokens(std::string_view text);

// Token -> contiguous id map with fixed reserved ids. Unseen tokens map to
// kUnk on lookup.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSep = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary();  // reserved tokens only

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }

  // All tokens in id order, reserved first. Used by checkpoint serialization.
  const std::vector<std::string>& tokens() const { return tokens_; }
  static Vocabulary from_tokens(std::vector<std::string> tokens);

 private:
  friend Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size,
                                std::size_t min_freq);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  void append(std::string token);
};

// Keeps the most frequent tokens (ties broken lexicographically) with count
// >= min_freq, up to max_size total entries including the 3 reserved ids.
Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size,
                       std::size_t min_freq);

// Lowercase-whitespace tokenization into vocabulary ids; total and never
// empty: text with no tokens maps to [kUnk].
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab);

}  // namespace densedial
