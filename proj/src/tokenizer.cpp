#include "provgen/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "provgen/error.hpp"

namespace provgen {

namespace {

const char* const kReservedTokens[Vocab::kReservedCount] = {"<pad>", "<end>", "\n", "<unk>"};

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Length in bytes of the UTF-8 sequence starting at s[i].
std::size_t utf8_len(std::string_view s, std::size_t i) {
  const unsigned char b = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  if ((b & 0xE0) == 0xC0) len = 2;
  else if ((b & 0xF0) == 0xE0) len = 3;
  else if ((b & 0xF8) == 0xF0) len = 4;
  return std::min(len, s.size() - i);
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      out.emplace_back("\n");
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f') {
      ++i;
    } else if (is_ident_start(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (is_digit(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && is_digit(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      const std::size_t len = utf8_len(text, i);
      out.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t max_size) {
  if (corpus.empty()) fail(ErrorCode::CorpusEmpty, "build_vocab requires a nonempty corpus");
  if (max_size < 8) fail(ErrorCode::FormatError, "max_size must be >= 8");

  std::map<std::string, std::uint64_t> freq;
  for (const auto& text : corpus) {
    for (auto& tok : split_tokens(text)) {
      if (tok == "\n") continue;  // reserved
      ++freq[tok];
    }
  }
  for (const char* r : kReservedTokens) freq.erase(r);

  std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab vocab;
  for (const char* r : kReservedTokens) vocab.tokens.emplace_back(r);
  const std::size_t budget = max_size - Vocab::kReservedCount;
  for (std::size_t i = 0; i < ranked.size() && i < budget; ++i) {
    vocab.tokens.push_back(ranked[i].first);
  }
  for (TokenId id = 0; id < vocab.tokens.size(); ++id) vocab.id_of[vocab.tokens[id]] = id;
  return vocab;
}

TokenSeq encode(const Vocab& vocab, std::string_view text) {
  TokenSeq seq;
  for (auto& tok : split_tokens(text)) {
    if (tok == "\n") {
      seq.push_back(Vocab::kNewline);
      continue;
    }
    auto it = vocab.id_of.find(tok);
    seq.push_back(it == vocab.id_of.end() ? Vocab::kUnk : it->second);
  }
  return seq;
}

std::string decode(const Vocab& vocab, const TokenSeq& seq) {
  std::string out;
  bool prev_newline = true;  // suppress the leading separator
  bool first = true;
  for (TokenId id : seq) {
    if (id >= vocab.tokens.size()) {
      fail(ErrorCode::InvalidTokenId, "token id " + std::to_string(id) + " out of range");
    }
    const std::string& tok = vocab.tokens[id];
    const bool is_newline = (id == Vocab::kNewline);
    if (!first && !is_newline && !prev_newline) out.push_back(' ');
    out += tok;
    prev_newline = is_newline;
    first = false;
  }
  return out;
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["tokens"] = vocab.tokens;
  j["spacing"] = "simple";
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, "bad vocab file " + path.string() + ": " + e.what());
  }
  if (j.value("version", 0) != 1) fail(ErrorCode::FormatError, "unsupported vocab version");
  Vocab vocab;
  vocab.tokens = j.at("tokens").get<std::vector<std::string>>();
  if (vocab.tokens.size() < Vocab::kReservedCount) {
    fail(ErrorCode::FormatError, "vocab missing reserved tokens");
  }
  for (TokenId id = 0; id < vocab.tokens.size(); ++id) vocab.id_of[vocab.tokens[id]] = id;
  return vocab;
}

}  // namespace provgen
