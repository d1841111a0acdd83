#include "codemix/corpus/symbols.hpp"

#include <set>

#include "codemix/errors.hpp"

namespace codemix {

std::string_view language_name(Language lang) {
  return lang == Language::A ? "A" : "B";
}

Language parse_language(std::string_view name) {
  if (name == "A") return Language::A;
  if (name == "B") return Language::B;
  throw DataError("unknown language tag '" + std::string(name) + "'");
}

SymbolTable::SymbolTable(Language language, std::vector<std::string> graphemes)
    : language_(language), graphemes_(std::move(graphemes)) {
  const std::string lang(language_name(language_));
  for (const auto& g : graphemes_) entries_.push_back(g);
  for (const auto& g : graphemes_) entries_.push_back("B_" + g);
  entries_.push_back("<noise_" + lang + ">");
  entries_.push_back(std::string(kBlankName));
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i], i);
}

std::optional<std::size_t> SymbolTable::find(std::string_view entry) const {
  auto it = index_.find(std::string(entry));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SymbolTable build_symbol_table(std::vector<std::string> graphemes, Language language) {
  if (graphemes.empty()) throw ConfigError("symbol table needs at least one grapheme");
  std::set<std::string> seen;
  for (const auto& g : graphemes) {
    if (g.empty()) throw ConfigError("empty grapheme name");
    if (g.rfind("B_", 0) == 0 || g.front() == '<')
      throw ConfigError("grapheme '" + g + "' collides with reserved symbol names");
    if (!seen.insert(g).second) throw ConfigError("duplicate grapheme '" + g + "'");
  }
  return SymbolTable(language, std::move(graphemes));
}

std::vector<std::string> default_graphemes(Language language, std::size_t count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (language == Language::A && i < 26) {
      out.emplace_back(1, static_cast<char>('a' + i));
    } else if (language == Language::B && i < 24) {
      // Greek alpha..omega, skipping final sigma (U+03C2).
      unsigned cp = 0x3B1 + static_cast<unsigned>(i);
      if (cp >= 0x3C2) ++cp;
      std::string s;
      s += static_cast<char>(0xC0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3F));
      out.push_back(s);
    } else {
      out.push_back("{" + std::string(language_name(language)) + std::to_string(i) + "}");
    }
  }
  return out;
}

CombinedTable::CombinedTable(SymbolTable a, SymbolTable b) : a_(std::move(a)), b_(std::move(b)) {}

CombinedTable build_combined(SymbolTable a, SymbolTable b) {
  if (a.language() == b.language())
    throw ConfigError("combined table needs one table per language");
  if (a.language() == Language::B) std::swap(a, b);
  std::set<std::string> ga(a.graphemes().begin(), a.graphemes().end());
  for (const auto& g : b.graphemes()) {
    if (ga.count(g)) throw ConfigError("grapheme '" + g + "' appears in both languages");
  }
  return CombinedTable(std::move(a), std::move(b));
}

std::size_t CombinedTable::to_combined(Language lang, std::size_t local) const {
  const SymbolTable& t = table(lang);
  if (local >= t.size()) {
    throw DimensionError("symbol " + std::to_string(local) + " out of range for table " +
                         std::string(language_name(lang)));
  }
  if (local == t.blank()) return blank();
  return segment_begin(lang) + local;
}

std::optional<CombinedTable::Local> CombinedTable::to_local(std::size_t combined) const {
  if (combined >= size()) {
    throw DimensionError("combined symbol " + std::to_string(combined) + " out of range");
  }
  if (combined == blank()) return std::nullopt;
  const std::size_t b_begin = segment_begin(Language::B);
  if (combined < b_begin) return Local{Language::A, combined};
  return Local{Language::B, combined - b_begin};
}

std::optional<Language> CombinedTable::language_of(std::size_t combined) const {
  auto l = to_local(combined);
  if (!l) return std::nullopt;
  return l->language;
}

std::string CombinedTable::name(std::size_t combined) const {
  auto l = to_local(combined);
  if (!l) return std::string(kBlankName);
  return table(l->language).entries()[l->index];
}

}  // namespace codemix
