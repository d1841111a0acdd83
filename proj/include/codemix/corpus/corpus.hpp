#pragma once
// Synthetic bilingual corpus: two disjoint grapheme alphabets, each grapheme
// rendered as a fixed random embedding plus Gaussian noise, stacked and
// subsampled into encoder frames.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codemix/corpus/symbols.hpp"
#include "codemix/json_util.hpp"
#include "codemix/numerics/tensor.hpp"

namespace codemix {

enum class Condition : unsigned char { MonoA = 0, MonoB = 1, Mixed = 2 };

std::string_view condition_name(Condition c);
Condition parse_condition(std::string_view name);

struct CorpusConfig {
  std::array<std::size_t, 2> graphemes_per_language{10, 10};
  std::size_t raw_dim = 8;
  std::size_t frames_per_grapheme = 3;
  std::size_t frame_jitter = 0;
  double noise_stddev = 0.1;
  std::array<std::size_t, 2> words_per_utterance{2, 5};
  std::array<std::size_t, 2> graphemes_per_word{2, 4};
  double switch_probability = 0.5;
  std::size_t stack = 3;
  std::size_t skip = 3;
  std::size_t train_size = 600;
  // Share of mono-A, mono-B and mixed utterances in the training split.
  std::array<double, 3> train_proportions{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::size_t test_a_size = 40;
  std::size_t test_b_size = 40;
  std::size_t test_mixed_size = 40;
  std::uint64_t seed = 1;

  // Raises ConfigError on out-of-range values.
  void validate() const;
  std::size_t feature_dim() const { return stack * raw_dim; }
};

Json to_json(const CorpusConfig& c);
CorpusConfig corpus_config_from_json(const Json& j);

struct Word {
  std::string text;
  Language language;
  std::vector<std::size_t> graphemes;  // per-language grapheme numbers
};

struct Utterance {
  std::string id;
  Condition condition = Condition::MonoA;
  std::uint64_t seed = 0;
  Tensor features;                 // T x feature_dim
  std::vector<Word> words;
  std::vector<std::size_t> labels;  // combined indices, never blank

  std::size_t num_frames() const { return features.rows(); }
  std::vector<std::string> transcript() const;
};

// The synthetic "acoustics": one embedding per grapheme per language and a
// word-onset offset added to the embedding of B_ symbols. A pure function of
// the corpus seed.
class Acoustics {
 public:
  explicit Acoustics(const CorpusConfig& config);
  // Embedding of a per-language table entry (plain or B_ grapheme).
  std::vector<double> embedding(Language lang, std::size_t entry) const;

 private:
  std::array<std::vector<std::vector<double>>, 2> grapheme_;
  std::vector<double> onset_;
  std::array<std::size_t, 2> num_graphemes_;
};

CombinedTable make_tables(const CorpusConfig& config);

// Stacks `stack` consecutive raw frames starting every `skip` frames;
// T = ceil(T0 / skip), tail zero-padded.
Tensor stack_subsample(const Tensor& raw, std::size_t stack, std::size_t skip);

// Raw (pre-stacking) frames and the transcript, for inspection and tests.
struct RawUtterance {
  Tensor raw;  // T0 x raw_dim
  std::vector<Word> words;
  std::vector<std::size_t> labels;
};
RawUtterance synth_raw(const CorpusConfig& config, const CombinedTable& table,
                       const Acoustics& acoustics, Condition mode, std::uint64_t seed);

Utterance synth_utterance(const CorpusConfig& config, Condition mode, std::uint64_t seed);
Utterance synth_utterance(const CorpusConfig& config, const CombinedTable& table,
                          const Acoustics& acoustics, Condition mode, std::uint64_t seed);

// Splits the label sequence into words at B_ symbols. Noise symbols are
// dropped; a word's language is the language of its first symbol.
std::vector<Word> detokenize(const CombinedTable& table, const std::vector<std::size_t>& labels);

struct Dataset {
  CorpusConfig config;
  std::vector<Utterance> train;
  std::vector<Utterance> test_a;
  std::vector<Utterance> test_b;
  std::vector<Utterance> test_mixed;

  const std::vector<Utterance>& test(Condition c) const;
};

inline constexpr std::array<std::string_view, 4> kSplitNames{"train", "test_A", "test_B",
                                                             "test_mixed"};

Dataset make_dataset(const CorpusConfig& config);

// One JSON-lines file per split plus manifest.json.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

Json utterance_to_json(const Utterance& u);
Utterance utterance_from_json(const Json& j);

}  // namespace codemix
