#include "codemix/decoder/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "codemix/errors.hpp"
#include "codemix/numerics/logmath.hpp"

namespace codemix {

void DecodeOptions::validate() const {
  if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
  if (max_symbols_per_frame < 1) throw ConfigError("max_symbols_per_frame must be >= 1");
  if (smoothing_alpha && !(*smoothing_alpha >= 0.0 && *smoothing_alpha <= 1.0))
    throw ConfigError("smoothing alpha must lie in [0, 1]");
  if (forced) {
    const auto& w = *forced;
    if (!(w[0] >= 0.0 && w[0] <= 1.0 && w[1] >= 0.0 && w[1] <= 1.0) ||
        std::abs(w[0] + w[1] - 1.0) > 1e-9)
      throw ConfigError("forced language weights must lie in [0, 1] and sum to 1");
  }
}

std::vector<DecodedWord> words_with_spans(const CombinedTable& table, const Hypothesis& h) {
  std::vector<DecodedWord> out;
  for (std::size_t i = 0; i < h.labels.size(); ++i) {
    const auto local = table.to_local(h.labels[i]);
    if (!local) continue;
    const SymbolTable& st = table.table(local->language);
    if (!st.is_grapheme(local->index)) continue;
    const std::size_t g = st.grapheme_of(local->index);
    const std::size_t f = i < h.frames.size() ? h.frames[i] : 0;
    if (st.is_word_initial(local->index) || out.empty()) {
      out.push_back(DecodedWord{Word{"", local->language, {}}, f, f});
    }
    out.back().word.text += st.graphemes()[g];
    out.back().word.graphemes.push_back(g);
    out.back().last_frame = f;
  }
  return out;
}

// --- grid scorer -----------------------------------------------------------

std::shared_ptr<const PredictorState> GridScorer::initial() {
  return std::make_shared<PredictorState>();
}

std::shared_ptr<const PredictorState> GridScorer::advance(const PredictorState& s, std::size_t) {
  auto next = std::make_shared<PredictorState>();
  next->length = s.length + 1;
  return next;
}

std::vector<double> GridScorer::log_probs(std::size_t t, const PredictorState& s) {
  const std::size_t u = std::min(s.length, grid_.positions - 1);
  const auto row = grid_.slice(t, u);
  return {row.begin(), row.end()};
}

// --- beam search -----------------------------------------------------------

namespace {

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.labels.size() != b.labels.size()) return a.labels.size() < b.labels.size();
  return a.labels < b.labels;
}

struct Candidate {
  Hypothesis hyp;
  bool blank;
  std::shared_ptr<const PredictorState> state;  // own state when blank, parent's otherwise
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.hyp.score != b.hyp.score) return a.hyp.score > b.hyp.score;
  if (a.hyp.labels.size() != b.hyp.labels.size())
    return a.hyp.labels.size() < b.hyp.labels.size();
  if (a.hyp.labels != b.hyp.labels) return a.hyp.labels < b.hyp.labels;
  return a.blank && !b.blank;
}

// Log-adds b into a, keeping the alignment frames of the likelier side.
void merge_into(Hypothesis& a, const Hypothesis& b) {
  if (b.score > a.score) a.frames = b.frames;
  a.score = log_add(a.score, b.score);
}

}  // namespace

BeamSearch::BeamSearch(Scorer& scorer, const DecodeOptions& options)
    : scorer_(scorer), options_(options) {
  options_.validate();
  beam_.push_back(Entry{Hypothesis{}, scorer_.initial()});
}

void BeamSearch::step(std::size_t t) {
  const std::size_t V = scorer_.vocab();
  const std::size_t blank = V - 1;
  const std::size_t width = options_.beam_width;
  std::map<std::vector<std::size_t>, Entry> finished;
  auto finish = [&](Candidate&& c) {
    auto it = finished.find(c.hyp.labels);
    if (it == finished.end()) {
      std::vector<std::size_t> key = c.hyp.labels;
      finished.emplace(std::move(key), Entry{std::move(c.hyp), std::move(c.state)});
    } else {
      merge_into(it->second.hyp, c.hyp);
    }
  };

  std::vector<Entry> active = std::move(beam_);
  for (std::size_t n = 0; !active.empty(); ++n) {
    const bool capped = n == options_.max_symbols_per_frame;
    std::vector<Candidate> pool;
    std::map<std::vector<std::size_t>, std::size_t> emitted;
    for (const Entry& e : active) {
      const std::vector<double> lp = scorer_.log_probs(t, *e.state);
      if (lp.size() != V) throw DimensionError("scorer returned a vector of the wrong size");
      const double sb = e.hyp.score + lp[blank];
      if (sb != kLogZero) pool.push_back(Candidate{Hypothesis{e.hyp.labels, e.hyp.frames, sb}, true, e.state});
      if (capped) continue;
      for (std::size_t k = 0; k < blank; ++k) {
        const double s = e.hyp.score + lp[k];
        if (s == kLogZero) continue;
        Hypothesis h{e.hyp.labels, e.hyp.frames, s};
        h.labels.push_back(k);
        h.frames.push_back(t);
        auto it = emitted.find(h.labels);
        if (it != emitted.end()) {
          merge_into(pool[it->second].hyp, h);
        } else {
          emitted.emplace(h.labels, pool.size());
          pool.push_back(Candidate{std::move(h), false, e.state});
        }
      }
    }
    active.clear();
    if (capped) {
      for (Candidate& c : pool) finish(std::move(c));
      break;
    }
    const std::size_t keep = std::min(width, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + keep, pool.end(), candidate_before);
    for (std::size_t i = 0; i < keep; ++i) {
      Candidate& c = pool[i];
      if (c.blank) {
        finish(std::move(c));
      } else {
        auto state = scorer_.advance(*c.state, c.hyp.labels.back());
        active.push_back(Entry{std::move(c.hyp), std::move(state)});
      }
    }
  }

  for (auto& [labels, e] : finished) beam_.push_back(std::move(e));
  std::sort(beam_.begin(), beam_.end(),
            [](const Entry& a, const Entry& b) { return ranks_before(a.hyp, b.hyp); });
  if (beam_.size() > width) beam_.resize(width);
  ++frames_done_;
}

std::vector<Hypothesis> BeamSearch::nbest() const {
  std::vector<Hypothesis> out;
  for (const Entry& e : beam_) out.push_back(e.hyp);
  if (out.empty()) out.push_back(Hypothesis{{}, {}, kLogZero});
  return out;
}

DecodeResult beam_search(Scorer& scorer, std::size_t frames, const DecodeOptions& options) {
  BeamSearch search(scorer, options);
  for (std::size_t t = 0; t < frames; ++t) search.step(t);
  return DecodeResult{search.nbest(), std::nullopt};
}

DecodeResult beam_search(const PosteriorGrid& grid, const DecodeOptions& options) {
  GridScorer scorer(grid);
  return beam_search(scorer, grid.frames, options);
}

Hypothesis greedy_decode(Scorer& scorer, std::size_t frames, std::size_t max_symbols_per_frame) {
  if (max_symbols_per_frame < 1) throw ConfigError("max_symbols_per_frame must be >= 1");
  const std::size_t blank = scorer.vocab() - 1;
  Hypothesis h;
  auto state = scorer.initial();
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t n = 0;; ++n) {
      const std::vector<double> lp = scorer.log_probs(t, *state);
      if (lp.size() != blank + 1) throw DimensionError("scorer returned a vector of the wrong size");
      std::size_t best = blank;
      double best_score = h.score + lp[blank];
      if (n < max_symbols_per_frame) {
        for (std::size_t k = 0; k < blank; ++k) {
          const double s = h.score + lp[k];
          if (s > best_score) {
            best = k;
            best_score = s;
          }
        }
      }
      h.score = best_score;
      if (best == blank) break;
      h.labels.push_back(best);
      h.frames.push_back(t);
      state = scorer.advance(*state, best);
    }
  }
  return h;
}

Hypothesis greedy_decode(const PosteriorGrid& grid, std::size_t max_symbols_per_frame) {
  GridScorer scorer(grid);
  return greedy_decode(scorer, grid.frames, max_symbols_per_frame);
}

// --- model decoding ----------------------------------------------------------

namespace {

class ModelScorer final : public Scorer {
 public:
  explicit ModelScorer(const Model& model) : model_(model) {}
  std::size_t vocab() const override { return model_.table().size(); }
  std::shared_ptr<const PredictorState> initial() override {
    return std::make_shared<PredictorState>(model_.initial_predictor_state());
  }
  std::shared_ptr<const PredictorState> advance(const PredictorState& s,
                                                std::size_t label) override {
    return std::make_shared<PredictorState>(model_.advance(s, label));
  }
  std::vector<double> log_probs(std::size_t t, const PredictorState& s) override {
    return model_.joint_step(frames[t], s, log_weights[t]);
  }

  std::vector<EncoderFrame> frames;
  std::vector<std::array<double, 2>> log_weights;

 private:
  const Model& model_;
};

class FrameDecoder {
 public:
  const Model& model;
  DecodeOptions options;
  std::size_t look_ahead;
  LstmState encoder_state;
  ModelScorer scorer;
  BeamSearch search;
  AttentionTrajectory trajectory;
  std::optional<std::array<double, 2>> smoothed;

  FrameDecoder(const Model& m, const DecodeOptions& o)
      : model(m),
        options(o),
        look_ahead(m.look_ahead()),
        encoder_state(m.initial_encoder_state()),
        scorer(m),
        search(scorer, o) {
    if (options.forced && m.architecture() == Architecture::Vanilla)
      throw ConfigError("forced language weights need a multi-softmax architecture");
  }

  bool attention() const { return model.architecture() == Architecture::MultiSoftmaxAttn; }

  void add_frame(std::span<const double> frame) {
    scorer.frames.push_back(model.encoder_step(encoder_state, frame));
  }

  // Language weights of the next frame from the projections of frames
  // [0, visible).
  void weigh_next(std::size_t visible) {
    const std::size_t t = scorer.log_weights.size();
    std::array<double, 2> lw{std::log(0.5), std::log(0.5)};
    if (attention()) {
      lw = model.attention_log_weights(scorer.frames, t, visible);
      if (options.smoothing_alpha) {
        std::array<double, 2> w{std::exp(lw[0]), std::exp(lw[1])};
        if (smoothed) {
          const double a = *options.smoothing_alpha;
          w[0] = a * w[0] + (1.0 - a) * (*smoothed)[0];
          w[1] = 1.0 - w[0];
        }
        smoothed = w;
        lw = {std::log(w[0]), std::log(w[1])};
      }
      trajectory.w_a.push_back(std::exp(lw[0]));
      trajectory.w_b.push_back(std::exp(lw[1]));
    }
    if (options.forced) lw = {std::log((*options.forced)[0]), std::log((*options.forced)[1])};
    scorer.log_weights.push_back(lw);
  }

  void decode_next(std::size_t visible) {
    weigh_next(visible);
    search.step(search.frames_done());
  }

  std::size_t visible_for(std::size_t t, std::size_t total) const {
    if (look_ahead == kInfiniteLookAhead) return total;
    return std::min(total, t + look_ahead + 1);
  }

  DecodeResult result() const {
    DecodeResult r{search.nbest(), std::nullopt};
    if (attention()) r.trajectory = trajectory;
    return r;
  }
};

}  // namespace

struct StreamSession::Impl : FrameDecoder {
  using FrameDecoder::FrameDecoder;
};

StreamSession::StreamSession(const Model& model, const DecodeOptions& options)
    : impl_(std::make_unique<Impl>(model, options)) {
  if (impl_->look_ahead == kInfiniteLookAhead)
    throw ConfigError("streaming needs a finite look-ahead");
}

StreamSession::~StreamSession() = default;

void StreamSession::push(std::span<const double> frame) {
  Impl& s = *impl_;
  s.add_frame(frame);
  const std::size_t received = s.scorer.frames.size();
  while (s.search.frames_done() + s.look_ahead < received)
    s.decode_next(s.search.frames_done() + s.look_ahead + 1);
}

DecodeResult StreamSession::finish() {
  Impl& s = *impl_;
  const std::size_t total = s.scorer.frames.size();
  if (total == 0) throw DataError("stream ended before any frame arrived");
  while (s.search.frames_done() < total) s.decode_next(s.visible_for(s.search.frames_done(), total));
  return s.result();
}

std::size_t StreamSession::frames_received() const { return impl_->scorer.frames.size(); }
std::size_t StreamSession::frames_decoded() const { return impl_->search.frames_done(); }
Hypothesis StreamSession::partial() const { return impl_->search.nbest().front(); }

namespace {

void check_features(const Model& model, const Tensor& features) {
  if (features.rank() != 2 || features.rows() == 0)
    throw DataError("decode: features must be a non-empty T x D matrix");
  if (features.cols() != model.config().input_dim)
    throw DimensionError("decode: feature dim " + std::to_string(features.cols()) +
                         " does not match model input_dim " +
                         std::to_string(model.config().input_dim));
}

}  // namespace

DecodeResult beam_search(const Model& model, const Tensor& features, const DecodeOptions& options) {
  check_features(model, features);
  FrameDecoder s(model, options);
  const std::size_t T = features.rows();
  for (std::size_t t = 0; t < T; ++t) s.add_frame(features.row(t));
  for (std::size_t t = 0; t < T; ++t) s.decode_next(s.visible_for(t, T));
  return s.result();
}

DecodeResult greedy_decode(const Model& model, const Tensor& features,
                           const DecodeOptions& options) {
  DecodeOptions one = options;
  one.beam_width = 1;
  check_features(model, features);
  FrameDecoder s(model, one);
  const std::size_t T = features.rows();
  for (std::size_t t = 0; t < T; ++t) s.add_frame(features.row(t));
  for (std::size_t t = 0; t < T; ++t) s.weigh_next(s.visible_for(t, T));
  DecodeResult r;
  r.nbest = {greedy_decode(s.scorer, T, one.max_symbols_per_frame)};
  if (s.attention()) r.trajectory = s.trajectory;
  return r;
}

DecodeResult stream_decode(const Model& model, const Tensor& features,
                           const DecodeOptions& options) {
  check_features(model, features);
  StreamSession session(model, options);
  for (std::size_t t = 0; t < features.rows(); ++t) session.push(features.row(t));
  return session.finish();
}

std::vector<Json> nbest_json(const std::string& utterance_id, const CombinedTable& table,
                             const DecodeResult& result) {
  std::vector<Json> out;
  for (std::size_t rank = 0; rank < result.nbest.size(); ++rank) {
    const Hypothesis& h = result.nbest[rank];
    Json j;
    j["utterance"] = utterance_id;
    j["rank"] = rank + 1;
    j["score"] = std::isfinite(h.score) ? Json(h.score) : Json(nullptr);
    std::string transcript;
    Json words = Json::array();
    for (const DecodedWord& w : words_with_spans(table, h)) {
      if (!transcript.empty()) transcript += ' ';
      transcript += w.word.text;
      words.push_back({{"word", w.word.text},
                       {"language", std::string(language_name(w.word.language))},
                       {"first_frame", w.first_frame},
                       {"last_frame", w.last_frame}});
    }
    j["transcript"] = transcript;
    j["words"] = std::move(words);
    j["labels"] = h.labels;
    if (result.trajectory) {
      j["attention"] = {{"w_A", result.trajectory->w_a}, {"w_B", result.trajectory->w_b}};
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace codemix
