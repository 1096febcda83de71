#include "provgen/recitation.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "provgen/error.hpp"
#include "provgen/parallel.hpp"

namespace provgen {

namespace {

std::vector<char32_t> to_codepoints(std::string_view s) {
  std::vector<char32_t> cps;
  cps.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char b = static_cast<unsigned char>(s[i]);
    char32_t cp = b;
    std::size_t len = 1;
    if ((b & 0xE0) == 0xC0) { cp = b & 0x1F; len = 2; }
    else if ((b & 0xF0) == 0xE0) { cp = b & 0x0F; len = 3; }
    else if ((b & 0xF8) == 0xF0) { cp = b & 0x07; len = 4; }
    for (std::size_t j = 1; j < len && i + j < s.size(); ++j) {
      cp = (cp << 6) | (static_cast<unsigned char>(s[i + j]) & 0x3F);
    }
    cps.push_back(cp);
    i += std::min(len, s.size() - i);
  }
  return cps;
}

std::size_t edit_distance_cp(const std::vector<char32_t>& a, const std::vector<char32_t>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
  return edit_distance_cp(to_codepoints(a), to_codepoints(b));
}

std::string normalize_line(std::string_view line) {
  std::string out;
  out.reserve(line.size());
  bool pending_space = false;
  for (char c : line) {
    if (c == ' ' || c == '\t') {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c);
  }
  return out;
}

TrainingLineSet build_training_line_set(const std::vector<CorpusFile>& corpus,
                                        const std::vector<TrainingPair>& pairs) {
  TrainingLineSet set;
  for (const TrainingPair& pair : pairs) {
    LineInfo& info = set.lines[pair.target_line];
    auto& ids = info.pair_ids;
    if (std::find(ids.begin(), ids.end(), pair.pair_id) == ids.end()) ids.push_back(pair.pair_id);
  }
  for (auto& [line, info] : set.lines) std::sort(info.pair_ids.begin(), info.pair_ids.end());

  // Occurrence counts cover every line of every corpus file, not just pair
  // targets.
  for (const CorpusFile& file : corpus) {
    for (const std::string& raw : split_lines(file.text)) {
      const std::string norm = normalize_line(raw);
      if (norm.empty()) continue;
      auto it = set.lines.find(norm);
      if (it != set.lines.end()) ++it->second.occurrences;
    }
  }
  return set;
}

NearestLine nearest_training_line(std::string_view line, const TrainingLineSet& set) {
  if (set.empty()) fail(ErrorCode::EmptyTrainingSet, "nearest_training_line over an empty set");
  const std::string query = normalize_line(line);
  const std::vector<char32_t> query_cp = to_codepoints(query);

  bool have_best = false;
  NearestLine best;
  for (const auto& [cand, info] : set.lines) {  // lexicographic order: first hit wins ties
    const std::vector<char32_t> cand_cp = to_codepoints(cand);
    const std::size_t len_gap = query_cp.size() > cand_cp.size() ? query_cp.size() - cand_cp.size()
                                                                 : cand_cp.size() - query_cp.size();
    if (have_best && len_gap > best.distance) continue;  // cannot beat or tie the current best
    const std::size_t d = edit_distance_cp(query_cp, cand_cp);
    if (!have_best || d < best.distance) {
      best = NearestLine{cand, d, info.occurrences};
      have_best = true;
      if (d == 0) break;  // ordered iteration: the first exact match is the tie winner
    }
  }
  return best;
}

std::vector<RecitationCase> mine_recitations(const Weights& weights, const Vocab& vocab,
                                             const std::vector<TokenSeq>& test_prefixes,
                                             const TrainingLineSet& set, std::int32_t beam_width) {
  if (set.empty()) fail(ErrorCode::EmptyTrainingSet, "mine_recitations over an empty line set");

  std::vector<std::string> predicted(test_prefixes.size());
  parallel_for(test_prefixes.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const TokenSeq line = generate_line(weights, test_prefixes[i], beam_width);
      predicted[i] = normalize_line(decode(vocab, line));
    }
  });

  std::vector<RecitationCase> cases;
  for (std::size_t i = 0; i < test_prefixes.size(); ++i) {
    if (predicted[i].empty()) continue;
    const NearestLine near = nearest_training_line(predicted[i], set);
    if (near.distance != 0 || near.occurrences >= kRecitationMaxOccurrences) continue;
    RecitationCase rc;
    rc.test_prefix = test_prefixes[i];
    rc.predicted_line = predicted[i];
    rc.matched_line = near.line;
    rc.edit_distance = near.distance;
    rc.occurrences = near.occurrences;
    rc.ground_truth_pair_ids = set.lines.at(near.line).pair_ids;
    cases.push_back(std::move(rc));
  }
  return cases;
}

void save_cases(const std::vector<RecitationCase>& cases, const Vocab& vocab,
                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  for (const RecitationCase& rc : cases) {
    nlohmann::json j = {{"test_prefix_ids", rc.test_prefix},
                        {"test_prefix_text", decode(vocab, rc.test_prefix)},
                        {"predicted_line", rc.predicted_line},
                        {"matched_line", rc.matched_line},
                        {"edit_distance", rc.edit_distance},
                        {"occurrences", rc.occurrences},
                        {"ground_truth_pair_ids", rc.ground_truth_pair_ids}};
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

std::vector<RecitationCase> load_cases(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<RecitationCase> cases;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::FormatError, std::string("bad cases line: ") + e.what());
    }
    RecitationCase rc;
    rc.test_prefix = j.at("test_prefix_ids").get<TokenSeq>();
    rc.predicted_line = j.at("predicted_line").get<std::string>();
    rc.matched_line = j.at("matched_line").get<std::string>();
    rc.edit_distance = j.at("edit_distance").get<std::size_t>();
    rc.occurrences = j.at("occurrences").get<std::uint64_t>();
    rc.ground_truth_pair_ids = j.at("ground_truth_pair_ids").get<std::vector<std::uint64_t>>();
    cases.push_back(std::move(rc));
  }
  return cases;
}

}  // namespace provgen
