#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace codemix {

enum class Language : unsigned char { A = 0, B = 1 };

std::string_view language_name(Language lang);
Language parse_language(std::string_view name);
inline Language other(Language lang) {
  return lang == Language::A ? Language::B : Language::A;
}

// Per-language symbol inventory. Entry layout:
//   [0, n)       plain graphemes
//   [n, 2n)      word-initial "B_" variants, same order
//   2n           noise/filler symbol
//   2n + 1       blank
class SymbolTable {
 public:
  SymbolTable(Language language, std::vector<std::string> graphemes);

  Language language() const { return language_; }
  const std::vector<std::string>& graphemes() const { return graphemes_; }
  const std::vector<std::string>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_graphemes() const { return graphemes_.size(); }

  std::size_t blank() const { return entries_.size() - 1; }
  std::size_t noise() const { return entries_.size() - 2; }
  std::size_t plain(std::size_t grapheme) const { return grapheme; }
  std::size_t word_initial(std::size_t grapheme) const {
    return graphemes_.size() + grapheme;
  }
  bool is_word_initial(std::size_t index) const {
    return index >= graphemes_.size() && index < 2 * graphemes_.size();
  }
  bool is_grapheme(std::size_t index) const { return index < 2 * graphemes_.size(); }
  // Grapheme number behind a plain or B_ entry.
  std::size_t grapheme_of(std::size_t index) const {
    return index < graphemes_.size() ? index : index - graphemes_.size();
  }

  std::optional<std::size_t> find(std::string_view entry) const;

 private:
  Language language_;
  std::vector<std::string> graphemes_;
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::string_view kBlankName = "<blank>";

// Raises ConfigError on empty or duplicate graphemes.
SymbolTable build_symbol_table(std::vector<std::string> graphemes, Language language);

// Default synthetic alphabets: Latin lowercase for A, Greek lowercase for B,
// bracketed names past the end of either alphabet.
std::vector<std::string> default_graphemes(Language language, std::size_t count);

// Both languages in one index space: A's non-blank entries, then B's
// non-blank entries, then a single shared blank at the last index.
class CombinedTable {
 public:
  CombinedTable(SymbolTable a, SymbolTable b);

  const SymbolTable& table(Language lang) const { return lang == Language::A ? a_ : b_; }
  std::size_t size() const { return a_.size() + b_.size() - 1; }
  std::size_t blank() const { return size() - 1; }

  // First combined index of a language's segment and its length (non-blank).
  std::size_t segment_begin(Language lang) const {
    return lang == Language::A ? 0 : a_.size() - 1;
  }
  std::size_t segment_size(Language lang) const { return table(lang).size() - 1; }

  std::size_t to_combined(Language lang, std::size_t local) const;
  struct Local {
    Language language;
    std::size_t index;
  };
  // The blank maps to nullopt; it belongs to both languages.
  std::optional<Local> to_local(std::size_t combined) const;
  std::optional<Language> language_of(std::size_t combined) const;

  std::string name(std::size_t combined) const;

 private:
  SymbolTable a_;
  SymbolTable b_;
};

// Raises ConfigError when the grapheme sets overlap or both tables carry
// the same language id.
CombinedTable build_combined(SymbolTable a, SymbolTable b);

}  // namespace codemix
