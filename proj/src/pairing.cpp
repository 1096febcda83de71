#include "provgen/pairing.hpp"

#include <fstream>

#include <json.hpp>

#include "provgen/error.hpp"
#include "provgen/recitation.hpp"

namespace provgen {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::vector<TrainingPair> split_pairs(const CorpusFile& file, const Vocab& vocab,
                                      std::int32_t min_prefix_lines, std::int32_t max_prefix_tokens) {
  const std::vector<std::string> lines = split_lines(file.text);
  std::vector<TrainingPair> pairs;
  if (lines.size() < static_cast<std::size_t>(min_prefix_lines) + 1) return pairs;

  // Prefix token stream grows line by line; each eligible boundary i takes
  // the tokens of lines [0, i) plus their newlines.
  TokenSeq stream;
  std::vector<std::size_t> boundary_len(lines.size() + 1, 0);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    TokenSeq line_tokens = encode(vocab, lines[i]);
    stream.insert(stream.end(), line_tokens.begin(), line_tokens.end());
    stream.push_back(Vocab::kNewline);
    boundary_len[i + 1] = stream.size();
  }

  for (std::size_t i = static_cast<std::size_t>(min_prefix_lines); i < lines.size(); ++i) {
    const std::string target = normalize_line(lines[i]);
    if (target.empty()) continue;
    if (i >= (1ULL << kPairLineBits)) break;

    const std::size_t end = boundary_len[i];
    const std::size_t take = std::min(end, static_cast<std::size_t>(max_prefix_tokens));
    TrainingPair pair;
    pair.example_id = file.example_id;
    pair.line_index = static_cast<std::uint32_t>(i);
    pair.pair_id = make_pair_id(file.example_id, i);
    pair.prefix.assign(stream.begin() + static_cast<std::ptrdiff_t>(end - take),
                       stream.begin() + static_cast<std::ptrdiff_t>(end));
    pair.target_line = target;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::string pair_snippet(const CorpusFile& file, std::uint32_t line_index) {
  const std::vector<std::string> lines = split_lines(file.text);
  if (line_index >= lines.size()) return {};
  const std::size_t first = line_index >= 3 ? line_index - 3 : 0;
  std::string snippet;
  for (std::size_t i = first; i <= line_index; ++i) {
    if (!snippet.empty()) snippet.push_back('\n');
    snippet += lines[i];
  }
  return snippet;
}

void save_corpus(const std::vector<CorpusFile>& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  for (const CorpusFile& f : corpus) {
    nlohmann::json j = {{"example_id", f.example_id}, {"source", f.source}, {"text", f.text}};
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

std::vector<CorpusFile> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<CorpusFile> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::FormatError, std::string("bad corpus line: ") + e.what());
    }
    CorpusFile f;
    f.example_id = j.at("example_id").get<std::uint64_t>();
    f.source = j.at("source").get<std::string>();
    f.text = j.at("text").get<std::string>();
    corpus.push_back(std::move(f));
  }
  if (corpus.empty()) fail(ErrorCode::CorpusEmpty, "no corpus files in " + path.string());
  return corpus;
}

}  // namespace provgen
