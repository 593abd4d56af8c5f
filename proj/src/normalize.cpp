#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <sstream>
#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <unordered_set>

#include "pheno/corpus.hpp"
#include "pheno/error.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"

namespace pheno::corpus {

namespace {

// Text under transformation. Each character remembers the raw range
// [begin, end) it was produced from.
struct Tracked {
  std::u32string text;
  std::vector<std::size_t> begin;
  std::vector<std::size_t> end;
};

class Builder {
public:
  explicit Builder(const Tracked& source) : source_(source) {}

  /// Emits c as produced by source characters [first, last).
  void emit(char32_t c, std::size_t first, std::size_t last) {
    out_.text.push_back(c);
    out_.begin.push_back(source_.begin[first]);
    out_.end.push_back(source_.end[last - 1]);
  }
  void emit(std::u32string_view s, std::size_t first, std::size_t last) {
    for (char32_t c : s) emit(c, first, last);
  }
  void copy(std::size_t i) { emit(source_.text[i], i, i + 1); }

  Tracked take() { return std::move(out_); }

private:
  const Tracked& source_;
  Tracked out_;
};

Tracked apply_nfc(const Tracked& in) {
  UErrorCode status = U_ZERO_ERROR;
  const auto* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) return in;

  Builder b(in);
  std::size_t start = 0;
  const std::size_t n = in.text.size();
  while (start < n) {
    std::size_t stop = start + 1;
    while (stop < n && !nfc->hasBoundaryBefore(static_cast<UChar32>(in.text[stop]))) ++stop;
    icu::UnicodeString segment;
    for (std::size_t i = start; i < stop; ++i) segment.append(static_cast<UChar32>(in.text[i]));
    status = U_ZERO_ERROR;
    const auto normalized = nfc->normalize(segment, status);
    if (U_FAILURE(status)) {
      for (std::size_t i = start; i < stop; ++i) b.copy(i);
    } else if (stop - start == 1 && normalized.countChar32() == 1) {
      b.emit(static_cast<char32_t>(normalized.char32At(0)), start, stop);
    } else {
      for (int32_t k = 0; k < normalized.length(); k = normalized.moveIndex32(k, 1)) {
        b.emit(static_cast<char32_t>(normalized.char32At(k)), start, stop);
      }
    }
    start = stop;
  }
  return b.take();
}

Tracked apply_lowercase(const Tracked& in) {
  Builder b(in);
  for (std::size_t i = 0; i < in.text.size(); ++i) b.emit(unicode::lower(in.text[i]), i, i + 1);
  return b.take();
}

bool at_token_start(const std::u32string& text, std::size_t i) {
  return unicode::is_word_char(text[i]) && (i == 0 || !unicode::is_word_char(text[i - 1]));
}

bool at_token_end(const std::u32string& text, std::size_t i) {
  return i == text.size() || !unicode::is_word_char(text[i]);
}

Tracked apply_acronyms(const Tracked& in, const std::vector<std::pair<std::string, std::string>>& map) {
  struct Key {
    std::u32string folded;
    std::u32string expansion;
  };
  std::vector<Key> keys;
  for (const auto& [key, value] : map) {
    Key k{{}, unicode::decode(value)};
    for (char32_t c : unicode::decode(key)) k.folded.push_back(unicode::lower_simple(c));
    if (!k.folded.empty()) keys.push_back(std::move(k));
  }
  // Longest key first; equal lengths in a fixed order.
  std::stable_sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.folded.size() != b.folded.size()) return a.folded.size() > b.folded.size();
    return a.folded < b.folded;
  });

  Builder b(in);
  const auto& text = in.text;
  std::size_t i = 0;
  while (i < text.size()) {
    const Key* hit = nullptr;
    if (at_token_start(text, i)) {
      for (const auto& key : keys) {
        const std::size_t len = key.folded.size();
        if (i + len > text.size() || !at_token_end(text, i + len)) continue;
        bool same = true;
        for (std::size_t k = 0; k < len && same; ++k) {
          same = unicode::lower_simple(text[i + k]) == key.folded[k];
        }
        if (same) {
          hit = &key;
          break;
        }
      }
    }
    if (hit) {
      b.emit(hit->expansion, i, i + hit->folded.size());
      i += hit->folded.size();
    } else {
      b.copy(i++);
    }
  }
  return b.take();
}

std::u32string_view punctuation_replacement(char32_t c) {
  switch (c) {
    case U'‘': case U'’': case U'‚': case U'‛': case U'′': case U'`': return U"'";
    case U'“': case U'”': case U'„': case U'‟': case U'″': case U'«': case U'»': return U"\"";
    case U'‐': case U'‑': case U'‒': case U'–': case U'—': case U'―': case U'−': return U"-";
    case U'…': return U"...";
    case U'！': return U"!";
    case U'？': return U"?";
    case U'，': return U",";
    case U'；': return U";";
    case U'：': return U":";
    default: return {};
  }
}

Tracked apply_punctuation(const Tracked& in) {
  // Typographic variants become ASCII, then runs of a repeated mark collapse.
  Builder mapped_builder(in);
  for (std::size_t i = 0; i < in.text.size(); ++i) {
    const auto replacement = punctuation_replacement(in.text[i]);
    if (replacement.empty()) {
      mapped_builder.copy(i);
    } else {
      mapped_builder.emit(replacement, i, i + 1);
    }
  }
  const Tracked mapped = mapped_builder.take();

  static constexpr std::u32string_view kCollapsible = U"!?,;:";
  Builder b(mapped);
  std::size_t i = 0;
  while (i < mapped.text.size()) {
    const char32_t c = mapped.text[i];
    std::size_t j = i + 1;
    if (kCollapsible.find(c) != std::u32string_view::npos) {
      while (j < mapped.text.size() && mapped.text[j] == c) ++j;
    }
    b.emit(c, i, j);
    i = j;
  }
  return b.take();
}

std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::u32string fold(std::u32string_view s) {
  std::u32string out;
  for (char32_t c : s) out.push_back(unicode::lower_simple(c));
  return out;
}

Tracked apply_spelling(const Tracked& in, const std::vector<std::string>& lexicon) {
  std::vector<std::u32string> words;
  std::unordered_set<std::u32string> known;
  for (const auto& w : lexicon) {
    words.push_back(unicode::decode(w));
    known.insert(fold(words.back()));
  }

  Builder b(in);
  const auto& text = in.text;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!at_token_start(text, i)) {
      b.copy(i++);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && unicode::is_word_char(text[j])) ++j;
    const std::u32string_view token(text.data() + i, j - i);
    const auto folded = fold(token);
    const bool numeric = std::all_of(token.begin(), token.end(), [](char32_t c) { return c < 128 && std::isdigit(static_cast<int>(c)); });

    const std::u32string* fix = nullptr;
    // Tokens under three characters are left alone.
    if (!numeric && token.size() >= 3 && !known.count(folded)) {
      for (const auto& w : words) {
        if (edit_distance(folded, fold(w)) <= 1) {
          fix = &w;
          break;
        }
      }
    }
    if (!fix) {
      for (std::size_t k = i; k < j; ++k) b.copy(k);
    } else if (fix->size() == token.size()) {
      for (std::size_t k = 0; k < fix->size(); ++k) b.emit((*fix)[k], i + k, i + k + 1);
    } else {
      b.emit(*fix, i, j);
    }
    i = j;
  }
  return b.take();
}

Tracked apply_whitespace(const Tracked& in) {
  Builder b(in);
  const auto& text = in.text;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!unicode::is_space(text[i])) {
      b.copy(i++);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && unicode::is_space(text[j])) ++j;
    if (i != 0 && j != text.size()) b.emit(U' ', i, j);
    i = j;
  }
  return b.take();
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::vector<std::string> words;
  for (const auto& line : io::read_lines(path)) {
    auto w = io::trim(line);
    if (!w.empty() && w[0] != '#') words.push_back(std::move(w));
  }
  return words;
}

}  // namespace

TextSpan NormalizedText::to_raw(TextSpan span) const {
  if (span.begin >= span.end || span.end > offset_map.size()) {
    throw ValidationError("span out of bounds for normalized text");
  }
  return {offset_map[span.begin], end_map[span.end - 1]};
}

NormalizedText normalize_text(std::string_view raw, const PreprocessConfig& config) {
  Tracked t;
  t.text = unicode::decode(raw);
  t.begin.resize(t.text.size());
  t.end.resize(t.text.size());
  for (std::size_t i = 0; i < t.text.size(); ++i) {
    t.begin[i] = i;
    t.end[i] = i + 1;
  }

  if (config.nfc) t = apply_nfc(t);
  if (config.lowercase) t = apply_lowercase(t);
  if (config.acronyms && !config.acronym_map.empty()) t = apply_acronyms(t, config.acronym_map);
  if (config.punctuation) t = apply_punctuation(t);
  if (config.spelling && !config.lexicon.empty()) t = apply_spelling(t, config.lexicon);
  if (config.whitespace) t = apply_whitespace(t);

  return {unicode::encode(t.text), std::move(t.begin), std::move(t.end)};
}

std::vector<SurveyRecord> normalize_records(std::vector<SurveyRecord> records,
                                            const PreprocessConfig& config) {
  for (auto& r : records) {
    r.question_text = normalize_text(r.question_text, config).text;
    r.answer_text = normalize_text(r.answer_text, config).text;
    for (auto& q : r.preceding_questions) q = normalize_text(q, config).text;
  }
  return records;
}

PreprocessConfig PreprocessConfig::none() {
  PreprocessConfig c;
  c.nfc = c.lowercase = c.acronyms = c.punctuation = c.spelling = c.whitespace = false;
  return c;
}

PreprocessConfig PreprocessConfig::load(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(io::read_file(path));
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(path.string() + ": " + e.message());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p; };

  PreprocessConfig config = none();
  std::vector<std::string> steps;
  const auto steps_value = tree.get<std::string>("steps", "nfc,lowercase,acronyms,punctuation,whitespace");
  boost::split(steps, steps_value, boost::is_any_of(", "), boost::token_compress_on);
  for (const auto& step : steps) {
    if (step.empty()) continue;
    if (step == "nfc") config.nfc = true;
    else if (step == "lowercase") config.lowercase = true;
    else if (step == "acronyms") config.acronyms = true;
    else if (step == "punctuation") config.punctuation = true;
    else if (step == "spelling") config.spelling = true;
    else if (step == "whitespace") config.whitespace = true;
    else throw ValidationError(path.string() + ": unknown preprocessing step \"" + step + "\"");
  }

  if (auto p = tree.get_optional<std::string>("acronym_map")) {
    const auto lines = io::read_lines(resolve(*p));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (io::trim(lines[i]).empty() || lines[i][0] == '#') continue;
      const auto tab = lines[i].find('\t');
      if (tab == std::string::npos) {
        throw ValidationError(*p + ": line " + std::to_string(i + 1) + ": expected acronym<TAB>expansion");
      }
      config.acronym_map.emplace_back(io::trim(lines[i].substr(0, tab)), io::trim(lines[i].substr(tab + 1)));
    }
  }
  if (auto p = tree.get_optional<std::string>("lexicon")) config.lexicon = read_word_list(resolve(*p));
  if (auto p = tree.get_optional<std::string>("disease_keywords")) {
    config.disease_keywords = read_word_list(resolve(*p));
  }
  return config;
}

}  // namespace pheno::corpus
