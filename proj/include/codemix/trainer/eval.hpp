#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codemix/corpus/corpus.hpp"
#include "codemix/decoder/decoder.hpp"

namespace codemix {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_words = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  // (S + I + D) / N; 0 when there are no reference words.
  double rate() const;
  ErrorCounts& operator+=(const ErrorCounts& o);
  friend bool operator==(const ErrorCounts&, const ErrorCounts&) = default;
};

// Unit-cost Levenshtein alignment. Among minimum-cost alignments the one with
// the most substitutions is reported. Throws DataError on an empty reference.
ErrorCounts wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);
// Same alignment without the non-empty precondition.
ErrorCounts align_counts(std::span<const std::string> reference,
                         std::span<const std::string> hypothesis);

// (base - candidate) / base. Throws ConfigError unless base > 0.
double werr(double base, double candidate);

struct ConditionReport {
  Condition condition = Condition::MonoA;
  std::size_t utterances = 0;
  ErrorCounts counts;
  // Within code-mixed utterances: words of each language scored separately.
  std::optional<std::map<Language, ErrorCounts>> per_language;
};

struct EvalReport {
  std::string label;
  std::size_t beam_width = 0;
  std::string look_ahead;
  std::vector<ConditionReport> conditions;  // test_A, test_B, test_mixed
  // WER relative reduction against a baseline report, per condition.
  std::optional<std::map<Condition, double>> werr;

  const ConditionReport& at(Condition c) const;
};

// Words the system produced for one utterance.
using Transcriber = std::function<std::vector<Word>(const Utterance&)>;

EvalReport evaluate(const Dataset& dataset, const Transcriber& transcribe);
// Beam search with `options` on every test utterance.
EvalReport evaluate(const Model& model, const Dataset& dataset, const DecodeOptions& options);

// Grid that puts `confidence` on the reference label at every (t, u < U)
// and on blank at u = U, spreading the rest evenly.
PosteriorGrid oracle_grid(std::size_t vocab, std::size_t frames,
                          std::span<const std::size_t> labels, double confidence = 0.999);
// Decodes each utterance's oracle grid: a perfect system for plumbing checks.
Transcriber oracle_transcriber(const CombinedTable& table, const DecodeOptions& options = {});

// Adds WERR columns against `baseline`. Conditions with a zero baseline WER
// get no entry.
void attach_werr(EvalReport& report, const EvalReport& baseline);

Json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const Json& j);
// One row per condition (and per language within mixed).
std::string to_csv(const EvalReport& r);

}  // namespace codemix
