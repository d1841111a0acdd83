#include "codemix/trainer/eval.hpp"

#include <cmath>
#include <cstdio>

#include "codemix/errors.hpp"

namespace codemix {

double ErrorCounts::rate() const {
  return reference_words == 0 ? 0.0
                              : static_cast<double>(errors()) / static_cast<double>(reference_words);
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_words += o.reference_words;
  return *this;
}

ErrorCounts align_counts(std::span<const std::string> ref, std::span<const std::string> hyp) {
  struct Cell {
    std::size_t cost = 0, sub = 0, ins = 0, del = 0;
  };
  // Lower cost first, then more substitutions.
  auto better = [](const Cell& a, const Cell& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.sub > b.sub;
  };
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 1; j <= m; ++j) prev[j] = Cell{j, 0, j, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = Cell{i, 0, 0, i};
    for (std::size_t j = 1; j <= m; ++j) {
      Cell diag = prev[j - 1];
      if (ref[i - 1] != hyp[j - 1]) {
        ++diag.cost;
        ++diag.sub;
      }
      Cell del = prev[j];
      ++del.cost;
      ++del.del;
      Cell ins = cur[j - 1];
      ++ins.cost;
      ++ins.ins;
      Cell best = diag;
      if (better(del, best)) best = del;
      if (better(ins, best)) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& c = prev[m];
  return ErrorCounts{c.sub, c.ins, c.del, n};
}

ErrorCounts wer(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty()) throw DataError("wer: empty reference");
  return align_counts(reference, hypothesis);
}

double werr(double base, double candidate) {
  if (!(base > 0.0)) throw ConfigError("werr: baseline WER must be positive");
  return (base - candidate) / base;
}

const ConditionReport& EvalReport::at(Condition c) const {
  for (const auto& r : conditions)
    if (r.condition == c) return r;
  throw DataError("report has no " + std::string(condition_name(c)) + " entry");
}

namespace {

std::vector<std::string> texts(const std::vector<Word>& words, std::optional<Language> only) {
  std::vector<std::string> out;
  for (const Word& w : words)
    if (!only || w.language == *only) out.push_back(w.text);
  return out;
}

constexpr Condition kConditions[] = {Condition::MonoA, Condition::MonoB, Condition::Mixed};

}  // namespace

EvalReport evaluate(const Dataset& dataset, const Transcriber& transcribe) {
  EvalReport report;
  for (Condition c : kConditions) {
    ConditionReport cr;
    cr.condition = c;
    if (c == Condition::Mixed) cr.per_language = std::map<Language, ErrorCounts>{};
    for (const Utterance& u : dataset.test(c)) {
      const std::vector<Word> hyp = transcribe(u);
      cr.counts += wer(texts(u.words, std::nullopt), texts(hyp, std::nullopt));
      if (cr.per_language) {
        for (Language l : {Language::A, Language::B})
          (*cr.per_language)[l] += align_counts(texts(u.words, l), texts(hyp, l));
      }
      ++cr.utterances;
    }
    report.conditions.push_back(std::move(cr));
  }
  return report;
}

EvalReport evaluate(const Model& model, const Dataset& dataset, const DecodeOptions& options) {
  options.validate();
  EvalReport r = evaluate(dataset, [&](const Utterance& u) {
    const DecodeResult d = beam_search(model, u.features, options);
    std::vector<Word> words;
    for (const DecodedWord& w : words_with_spans(model.table(), d.best())) words.push_back(w.word);
    return words;
  });
  r.label = std::string(architecture_name(model.architecture()));
  r.beam_width = options.beam_width;
  r.look_ahead = model.config().attention ? look_ahead_string(model.look_ahead()) : "none";
  return r;
}

PosteriorGrid oracle_grid(std::size_t vocab, std::size_t frames,
                          std::span<const std::size_t> labels, double confidence) {
  if (vocab < 2 || frames == 0) throw DimensionError("oracle_grid: need vocab >= 2 and frames >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("oracle_grid: confidence in (0, 1)");
  const std::size_t P = labels.size() + 1;
  const double rest = std::log((1.0 - confidence) / static_cast<double>(vocab - 1));
  PosteriorGrid g;
  g.frames = frames;
  g.positions = P;
  g.log_probs = Tensor({frames * P, vocab}, rest);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t u = 0; u < P; ++u)
      g.log_probs.at(t * P + u, u < labels.size() ? labels[u] : vocab - 1) = std::log(confidence);
  return g;
}

Transcriber oracle_transcriber(const CombinedTable& table, const DecodeOptions& options) {
  options.validate();
  return [&table, options](const Utterance& u) {
    const PosteriorGrid g = oracle_grid(table.size(), u.features.rows(), u.labels);
    std::vector<Word> words;
    for (const DecodedWord& w : words_with_spans(table, beam_search(g, options).best()))
      words.push_back(w.word);
    return words;
  };
}

void attach_werr(EvalReport& report, const EvalReport& baseline) {
  std::map<Condition, double> out;
  for (const ConditionReport& c : report.conditions) {
    const double base = baseline.at(c.condition).counts.rate();
    if (base > 0.0) out[c.condition] = werr(base, c.counts.rate());
  }
  report.werr = std::move(out);
}

namespace {

Json counts_json(const ErrorCounts& c) {
  return {{"wer", c.rate()},
          {"substitutions", c.substitutions},
          {"insertions", c.insertions},
          {"deletions", c.deletions},
          {"reference_words", c.reference_words}};
}

ErrorCounts counts_from_json(const Json& j) {
  ErrorCounts c;
  c.substitutions = j.at("substitutions").get<std::size_t>();
  c.insertions = j.at("insertions").get<std::size_t>();
  c.deletions = j.at("deletions").get<std::size_t>();
  c.reference_words = j.at("reference_words").get<std::size_t>();
  return c;
}

}  // namespace

Json to_json(const EvalReport& r) {
  Json j;
  j["label"] = r.label;
  j["beam_width"] = r.beam_width;
  j["look_ahead"] = r.look_ahead;
  Json conds = Json::array();
  for (const ConditionReport& c : r.conditions) {
    Json cj = counts_json(c.counts);
    cj["condition"] = std::string(condition_name(c.condition));
    cj["utterances"] = c.utterances;
    if (c.per_language) {
      for (const auto& [lang, counts] : *c.per_language)
        cj["per_language"][std::string(language_name(lang))] = counts_json(counts);
    }
    if (r.werr) {
      auto it = r.werr->find(c.condition);
      if (it != r.werr->end()) cj["werr"] = it->second;
    }
    conds.push_back(std::move(cj));
  }
  j["conditions"] = std::move(conds);
  return j;
}

EvalReport eval_report_from_json(const Json& j) {
  try {
    EvalReport r;
    r.label = j.value("label", "");
    r.beam_width = j.value("beam_width", std::size_t{0});
    r.look_ahead = j.value("look_ahead", "");
    for (const Json& cj : j.at("conditions")) {
      ConditionReport c;
      c.condition = parse_condition(cj.at("condition").get<std::string>());
      c.utterances = cj.value("utterances", std::size_t{0});
      c.counts = counts_from_json(cj);
      if (cj.contains("per_language")) {
        c.per_language = std::map<Language, ErrorCounts>{};
        for (const auto& [name, v] : cj.at("per_language").items())
          (*c.per_language)[parse_language(name)] = counts_from_json(v);
      }
      if (cj.contains("werr")) {
        if (!r.werr) r.werr = std::map<Condition, double>{};
        (*r.werr)[c.condition] = cj.at("werr").get<double>();
      }
      r.conditions.push_back(std::move(c));
    }
    return r;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed eval report: ") + e.what());
  }
}

std::string to_csv(const EvalReport& r) {
  std::string out = "condition,language,wer,substitutions,insertions,deletions,reference_words,werr\n";
  char buf[256];
  auto row = [&](const ConditionReport& c, const std::string& lang, const ErrorCounts& k,
                 bool with_werr) {
    std::string werr_field;
    if (with_werr && r.werr) {
      auto it = r.werr->find(c.condition);
      if (it != r.werr->end()) {
        char w[32];
        std::snprintf(w, sizeof w, "%.6f", it->second);
        werr_field = w;
      }
    }
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%zu,%zu,%zu,%zu,%s\n",
                  std::string(condition_name(c.condition)).c_str(), lang.c_str(), k.rate(),
                  k.substitutions, k.insertions, k.deletions, k.reference_words,
                  werr_field.c_str());
    out += buf;
  };
  for (const ConditionReport& c : r.conditions) {
    row(c, "all", c.counts, true);
    if (c.per_language)
      for (const auto& [lang, counts] : *c.per_language)
        row(c, std::string(language_name(lang)), counts, false);
  }
  return out;
}

}  // namespace codemix
