#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace provgen {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

// Word/punctuation-level vocabulary with dense ids. Ids 0..3 are reserved:
// PAD, END, NEWLINE, UNK. tokens[id] is the surface string; NEWLINE decodes
// as "\n".
struct Vocab {
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kEnd = 1;
  static constexpr TokenId kNewline = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kReservedCount = 4;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, TokenId> id_of;

  std::size_t size() const { return tokens.size(); }
};

// Deterministic splitter shared by build_vocab and encode: identifiers
// ([A-Za-z_][A-Za-z0-9_]*), digit runs, "\n", and any other non-space
// character as a single token (one UTF-8 code point).
std::vector<std::string> split_tokens(std::string_view text);

// Most frequent split tokens (ties broken lexicographically ascending) plus
// the 4 reserved entries, capped at max_size total.
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t max_size);

TokenSeq encode(const Vocab& vocab, std::string_view text);

// Inverse of encode for canonically spaced text: single space between
// tokens except on either side of NEWLINE.
std::string decode(const Vocab& vocab, const TokenSeq& seq);

void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace provgen
