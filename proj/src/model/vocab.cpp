#include "lhdff/model/vocab.hpp"

#include <array>
#include <fstream>

#include "lhdff/error.hpp"

namespace lhdff::model {

namespace {
const std::array<std::string, Vocabulary::kReserved> kReservedTokens = {"<pad>", "<sos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_.assign(kReservedTokens.begin(), kReservedTokens.end());
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw VocabularyError("empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw VocabularyError("duplicate token '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  for (TokenId t : ids) {
    if (t == kPad || t == kSos || t == kEos) continue;
    words.push_back(token(t));
  }
  return words;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < kReserved) throw ParseError("vocabulary has fewer than four reserved lines", lines.size() + 1);
  for (std::size_t i = 0; i < kReserved; ++i) {
    if (lines[i] != kReservedTokens[i]) {
      throw ParseError("expected reserved token " + kReservedTokens[i] + ", found '" + lines[i] + "'", i + 1);
    }
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + kReserved, lines.end()));
}

}  // namespace lhdff::model
