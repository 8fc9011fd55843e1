#include "densedial/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

namespace densedial {

namespace {

using nlohmann::json;

std::string trimmed(const std::string& s) {
  const auto* ws = " \t\r\n";
  const auto begin = s.find_first_not_of(ws);
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(ws);
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::string require_string(const json& j, const char* field, const std::filesystem::path& path,
                           std::size_t line) {
  if (!j.contains(field) || !j[field].is_string())
    line_error(path, line, std::string("missing or non-string field \"") + field + "\"");
  return j[field].get<std::string>();
}

std::vector<std::string> require_utterances(const json& j, const char* field,
                                            const std::filesystem::path& path, std::size_t line) {
  if (!j.contains(field) || !j[field].is_array())
    line_error(path, line, std::string("missing or non-array field \"") + field + "\"");
  std::vector<std::string> out;
  for (const auto& u : j[field]) {
    if (!u.is_string()) line_error(path, line, std::string(field) + " entries must be strings");
    std::string text = u.get<std::string>();
    if (trimmed(text).empty()) line_error(path, line, "empty utterance");
    out.push_back(std::move(text));
  }
  if (out.empty()) line_error(path, line, std::string(field) + " must be non-empty");
  return out;
}

}  // namespace

Corpus load_sessions(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());

  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  std::size_t records = 0;
  std::unordered_map<std::string, std::size_t> seen_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) line_error(path, line_no, "line is not a JSON object");

    const std::string id = require_string(j, "id", path, line_no);
    if (auto [it, inserted] = seen_ids.emplace(id, line_no); !inserted)
      line_error(path, line_no,
                 "duplicate id \"" + id + "\" (first seen at line " + std::to_string(it->second) + ")");

    switch (format) {
      case CorpusFormat::paired_jsonl:
        corpus.sessions.push_back({id, require_utterances(j, "utterances", path, line_no)});
        break;
      case CorpusFormat::nonparallel_jsonl: {
        std::string text = require_string(j, "text", path, line_no);
        if (trimmed(text).empty()) line_error(path, line_no, "empty text");
        corpus.sentences.push_back({id, std::move(text)});
        break;
      }
      case CorpusFormat::eval_jsonl: {
        EvalSession session;
        session.id = id;
        session.context = require_utterances(j, "context", path, line_no);
        if (!j.contains("candidates") || !j["candidates"].is_array() || j["candidates"].empty())
          line_error(path, line_no, "missing or empty \"candidates\" array");
        for (const auto& c : j["candidates"]) {
          if (!c.is_object()) line_error(path, line_no, "candidate entries must be objects");
          EvalCandidate cand;
          cand.text = require_string(c, "text", path, line_no);
          if (trimmed(cand.text).empty()) line_error(path, line_no, "empty candidate text");
          if (!c.contains("rel") || !c["rel"].is_number())
            line_error(path, line_no, "candidate missing numeric \"rel\"");
          cand.rel = c["rel"].get<double>();
          if (cand.rel < 0) line_error(path, line_no, "negative relevance label");
          session.candidates.push_back(std::move(cand));
        }
        corpus.eval_sessions.push_back(std::move(session));
        break;
      }
    }
    ++records;
  }

  if (records == 0) throw DataError("empty corpus file: " + path.string());
  return corpus;
}

std::vector<ContextResponsePair> augment_fine_grained(const DialogueSession& session, int k) {
  if (k < 1) throw ConfigError("fine-grained degree k must be >= 1");
  const std::size_t m = session.utterances.size();
  if (m < 2) return {};

  const std::size_t k_eff = std::min<std::size_t>(static_cast<std::size_t>(k), m - 1);
  std::vector<ContextResponsePair> pairs;
  pairs.reserve(k_eff);
  for (std::size_t j = 1; j <= k_eff; ++j) {
    ContextResponsePair pair;
    pair.context.assign(session.utterances.begin(), session.utterances.begin() + (m - j));
    pair.response = session.utterances[m - j];
    pair.label = 1;
    pair.origin = (j == 1) ? PairOrigin::original : PairOrigin::augmented;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<ContextResponsePair> build_train_set(std::span<const DialogueSession> sessions,
                                                 int k, TrainSetStats* stats) {
  std::vector<ContextResponsePair> out;
  TrainSetStats local;
  for (const auto& session : sessions) {
    auto pairs = augment_fine_grained(session, k);
    if (pairs.empty()) {
      ++local.sessions_skipped;
      continue;
    }
    ++local.sessions_used;
    local.pairs += pairs.size();
    std::move(pairs.begin(), pairs.end(), std::back_inserter(out));
  }
  if (stats) *stats = local;
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) tokens.push_back(std::move(current)), current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary() {
  append("<pad>");
  append("<unk>");
  append("<sep>");
}

void Vocabulary::append(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

int Vocabulary::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw ConfigError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary vocab;
  if (tokens.size() < kReserved || tokens[0] != "<pad>" || tokens[1] != "<unk>" ||
      tokens[2] != "<sep>")
    throw ShapeError("vocabulary token list must start with the reserved tokens");
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    if (vocab.ids_.contains(tokens[i]))
      throw ShapeError("duplicate vocabulary token: " + tokens[i]);
    vocab.append(std::move(tokens[i]));
  }
  return vocab;
}

Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size,
                       std::size_t min_freq) {
  if (max_size < Vocabulary::kReserved + 1)
    throw ConfigError("vocab max_size must be at least 4");

  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& text : texts)
    for (auto& token : split_tokens(text)) ++counts[std::move(token)];

  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(counts.size());
  for (auto& [token, count] : counts)
    if (count >= min_freq) ranked.emplace_back(token, count);

  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  const std::size_t keep = std::min(ranked.size(), max_size - Vocabulary::kReserved);
  for (std::size_t i = 0; i < keep; ++i) vocab.append(std::move(ranked[i].first));
  return vocab;
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& token : split_tokens(text)) ids.push_back(vocab.id(token));
  if (ids.empty()) ids.push_back(Vocabulary::kUnk);
  return ids;
}

}  // namespace densedial
