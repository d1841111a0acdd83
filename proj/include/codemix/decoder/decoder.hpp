#pragma once
// Beam search over the combined symbol set, greedy decoding, and a streaming
// session honouring the attention look-ahead.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codemix/corpus/corpus.hpp"
#include "codemix/model/model.hpp"

namespace codemix {

struct DecodeOptions {
  std::size_t beam_width = 4;
  std::size_t max_symbols_per_frame = 5;
  // Impose fixed language weights instead of the model's own.
  ForcedWeights forced;
  // Causal EMA over the attention weights before they scale the posteriors.
  std::optional<double> smoothing_alpha;

  void validate() const;
};

struct Hypothesis {
  std::vector<std::size_t> labels;  // combined indices, blank-free
  std::vector<std::size_t> frames;  // emission frame of each label
  double score = 0.0;
};

struct DecodedWord {
  Word word;
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;
};

// Groups labels into words at word-initial symbols and records the frame span
// over which each word was emitted.
std::vector<DecodedWord> words_with_spans(const CombinedTable& table, const Hypothesis& h);

struct DecodeResult {
  std::vector<Hypothesis> nbest;  // best first
  std::optional<AttentionTrajectory> trajectory;

  const Hypothesis& best() const { return nbest.front(); }
};

// Supplies per-node log-probs to the search. A state stands for a label
// prefix; its PredictorState.length is the prefix length.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t vocab() const = 0;
  virtual std::shared_ptr<const PredictorState> initial() = 0;
  virtual std::shared_ptr<const PredictorState> advance(const PredictorState& s,
                                                        std::size_t label) = 0;
  virtual std::vector<double> log_probs(std::size_t t, const PredictorState& s) = 0;
};

// Reads a fixed grid: node (t, u) for a prefix of length u, clamped to the
// last label position.
class GridScorer final : public Scorer {
 public:
  explicit GridScorer(const PosteriorGrid& grid) : grid_(grid) {}
  std::size_t vocab() const override { return grid_.vocab(); }
  std::shared_ptr<const PredictorState> initial() override;
  std::shared_ptr<const PredictorState> advance(const PredictorState& s, std::size_t) override;
  std::vector<double> log_probs(std::size_t t, const PredictorState& s) override;

 private:
  const PosteriorGrid& grid_;
};

// One frame of beam search. Owns the beam between frames.
class BeamSearch {
 public:
  BeamSearch(Scorer& scorer, const DecodeOptions& options);
  void step(std::size_t t);
  std::vector<Hypothesis> nbest() const;
  std::size_t frames_done() const { return frames_done_; }

 private:
  struct Entry {
    Hypothesis hyp;
    std::shared_ptr<const PredictorState> state;
  };
  Scorer& scorer_;
  DecodeOptions options_;
  std::vector<Entry> beam_;
  std::size_t frames_done_ = 0;
};

// Beam search over every frame of a grid or scorer.
DecodeResult beam_search(Scorer& scorer, std::size_t frames, const DecodeOptions& options);
DecodeResult beam_search(const PosteriorGrid& grid, const DecodeOptions& options);
// Argmax per node; blank wins ties, then the lower index.
Hypothesis greedy_decode(Scorer& scorer, std::size_t frames, std::size_t max_symbols_per_frame = 5);
Hypothesis greedy_decode(const PosteriorGrid& grid, std::size_t max_symbols_per_frame = 5);

// Model decoding. Offline entry points accept an infinite look-ahead.
DecodeResult beam_search(const Model& model, const Tensor& features, const DecodeOptions& options);
DecodeResult greedy_decode(const Model& model, const Tensor& features,
                           const DecodeOptions& options = {});

// Frame-synchronous decoding: frame t is searched once frame t + L has been
// pushed, where L is the model's look-ahead (0 without attention). finish()
// flushes the remaining frames.
class StreamSession {
 public:
  StreamSession(const Model& model, const DecodeOptions& options);
  ~StreamSession();
  StreamSession(const StreamSession&) = delete;
  StreamSession& operator=(const StreamSession&) = delete;

  void push(std::span<const double> frame);
  DecodeResult finish();

  std::size_t frames_received() const;
  std::size_t frames_decoded() const;
  // Best hypothesis over the frames decoded so far.
  Hypothesis partial() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

DecodeResult stream_decode(const Model& model, const Tensor& features,
                           const DecodeOptions& options);

// One JSON object per n-best entry.
std::vector<Json> nbest_json(const std::string& utterance_id, const CombinedTable& table,
                             const DecodeResult& result);

}  // namespace codemix
