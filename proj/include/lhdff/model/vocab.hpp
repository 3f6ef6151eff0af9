#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace lhdff::model {

using TokenId = std::int64_t;

// Token <-> id map with four reserved ids. The text form is UTF-8, one token
// per line, line number = id, and the first four lines are the reserved
// tokens.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kSos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  // `tokens` excludes the reserved entries and must be unique.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  // Unknown words map to kUnk.
  TokenId id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(TokenId id) const;

  std::vector<TokenId> encode(const std::vector<std::string>& words) const;
  // Drops <pad>, <sos> and <eos>.
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace lhdff::model
