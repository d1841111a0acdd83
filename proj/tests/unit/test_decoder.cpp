#include <cmath>

#include "codemix/decoder/decoder.hpp"
#include "codemix/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace codemix;
using testutil::random_tensor;

namespace {

ModelConfig tiny(Architecture arch, std::size_t look_ahead = 2) {
  ModelConfig c;
  c.input_dim = 6;
  c.encoder_layers = 1;
  c.encoder_hidden = 8;
  c.prediction_hidden = 8;
  c.joint_hidden = 8;
  c.graphemes = {default_graphemes(Language::A, 3), default_graphemes(Language::B, 3)};
  c.attention = AttentionConfig{4, 4, look_ahead};
  return c.with_architecture(arch);
}

CombinedTable small_table() {
  return build_combined(build_symbol_table(default_graphemes(Language::A, 3), Language::A),
                        build_symbol_table(default_graphemes(Language::B, 3), Language::B));
}

// Grid whose every node puts `hot` probability on one symbol chosen by pick(t, u).
template <class F>
PosteriorGrid peaked_grid(std::size_t T, std::size_t P, std::size_t V, F pick, double hot = 0.9) {
  PosteriorGrid g;
  g.frames = T;
  g.positions = P;
  g.log_probs = Tensor({T * P, V}, std::log((1.0 - hot) / double(V - 1)));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u < P; ++u) g.log_probs.at(t * P + u, pick(t, u)) = std::log(hot);
  return g;
}

std::string text_of(const CombinedTable& t, const Hypothesis& h) {
  std::string s;
  for (const DecodedWord& w : words_with_spans(t, h)) s += (s.empty() ? "" : " ") + w.word.text;
  return s;
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("options validation") {
  DecodeOptions o;
  o.beam_width = 0;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o = DecodeOptions{};
  o.forced = std::array<double, 2>{0.7, 0.7};
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o = DecodeOptions{};
  o.smoothing_alpha = 1.5;
  CHECK_THROWS_AS(o.validate(), ConfigError);
}

TEST_CASE("all mass on blank gives an empty transcript") {
  const CombinedTable t = small_table();
  const PosteriorGrid g = peaked_grid(4, 1, t.size(), [&](auto, auto) { return t.blank(); });
  CHECK(greedy_decode(g).labels.empty());
  CHECK(beam_search(g, DecodeOptions{}).best().labels.empty());
}

TEST_CASE("forced argmax path a, blank, blank") {
  const CombinedTable t = small_table();
  const std::size_t a = t.to_combined(Language::A, t.table(Language::A).word_initial(0));
  const PosteriorGrid g =
      peaked_grid(2, 2, t.size(), [&](std::size_t, std::size_t u) { return u == 0 ? a : t.blank(); });
  const Hypothesis h = greedy_decode(g);
  CHECK(h.labels == std::vector<std::size_t>{a});
  CHECK(text_of(t, h) == "a");
  CHECK(h.frames == std::vector<std::size_t>{0});
}

TEST_CASE("greedy tie-break prefers blank, then the lower index") {
  PosteriorGrid g;
  g.frames = 1;
  g.positions = 1;
  g.log_probs = Tensor({1, 4}, std::log(0.25));
  CHECK(greedy_decode(g).labels.empty());
  g.log_probs = Tensor::matrix(1, 4, {std::log(0.3), std::log(0.3), std::log(0.3), std::log(0.1)});
  g.positions = 1;
  // position clamps, so the same row repeats until the cap
  const Hypothesis h = greedy_decode(g, 2);
  CHECK(h.labels == std::vector<std::size_t>{0, 0});
}

TEST_CASE("symbols-per-frame cap") {
  const CombinedTable t = small_table();
  const PosteriorGrid g = peaked_grid(3, 1, t.size(), [](auto, auto) { return std::size_t{1}; });
  CHECK(greedy_decode(g, 5).labels.size() == 15);
  CHECK(greedy_decode(g, 2).labels.size() == 6);
  DecodeOptions o;
  o.max_symbols_per_frame = 2;
  for (const Hypothesis& h : beam_search(g, o).nbest) CHECK(h.labels.size() <= 6);
}

TEST_CASE("beam of one equals greedy on random grids") {
  Rng rng(1);
  for (int rep = 0; rep < 30; ++rep) {
    PosteriorGrid g;
    g.frames = 5;
    g.positions = 8;
    g.log_probs = testutil::random_log_probs(40, 6, rng);
    // blank-heavy so the searches terminate with short prefixes
    for (std::size_t r = 0; r < 40; ++r) g.log_probs.at(r, 5) += 1.0;
    for (std::size_t r = 0; r < 40; ++r) {
      double z = 0.0;
      for (std::size_t k = 0; k < 6; ++k) z += std::exp(g.log_probs.at(r, k));
      for (std::size_t k = 0; k < 6; ++k) g.log_probs.at(r, k) -= std::log(z);
    }
    DecodeOptions o;
    o.beam_width = 1;
    const Hypothesis b = beam_search(g, o).best();
    const Hypothesis gr = greedy_decode(g);
    CHECK(b.labels == gr.labels);
    CHECK(std::abs(b.score - gr.score) < 1e-12);
  }
}

TEST_CASE("n-best scores are sorted and dominate greedy") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    PosteriorGrid g;
    g.frames = 4;
    g.positions = 6;
    g.log_probs = testutil::random_log_probs(24, 5, rng);
    DecodeOptions o;
    o.beam_width = 4;
    const DecodeResult r = beam_search(g, o);
    REQUIRE_FALSE(r.nbest.empty());
    CHECK(r.nbest.size() <= 4);
    for (std::size_t i = 1; i < r.nbest.size(); ++i) CHECK(r.nbest[i - 1].score >= r.nbest[i].score);
    CHECK(r.best().score >= greedy_decode(g).score - 1e-12);
    // no duplicate prefixes
    for (std::size_t i = 0; i < r.nbest.size(); ++i)
      for (std::size_t j = i + 1; j < r.nbest.size(); ++j)
        CHECK(r.nbest[i].labels != r.nbest[j].labels);
    // deterministic
    const DecodeResult again = beam_search(g, o);
    for (std::size_t i = 0; i < r.nbest.size(); ++i) CHECK(again.nbest[i].labels == r.nbest[i].labels);
  }
}

TEST_CASE("constructed grid switches languages mid-hypothesis") {
  const CombinedTable t = small_table();
  const auto& ta = t.table(Language::A);
  const auto& tb = t.table(Language::B);
  const std::vector<std::size_t> seq{t.to_combined(Language::A, ta.word_initial(0)),
                                     t.to_combined(Language::A, ta.plain(1)),
                                     t.to_combined(Language::B, tb.word_initial(2)),
                                     t.to_combined(Language::B, tb.plain(0))};
  const PosteriorGrid g = peaked_grid(4, 5, t.size(), [&](std::size_t ti, std::size_t u) {
    return u == ti ? seq[u] : t.blank();
  });
  const Hypothesis h = beam_search(g, DecodeOptions{}).best();
  CHECK(h.labels == seq);
  bool a = false, b = false;
  for (std::size_t k : h.labels) (t.language_of(k) == Language::A ? a : b) = true;
  CHECK(a);
  CHECK(b);
  const auto words = words_with_spans(t, h);
  REQUIRE(words.size() == 2);
  CHECK(words[0].word.language == Language::A);
  CHECK(words[1].word.language == Language::B);
  CHECK(words[1].first_frame == 2);
  CHECK(words[1].last_frame == 3);
}

TEST_CASE("forced (1, 0) keeps B symbols out of the output") {
  Rng rng(3);
  const Model m(tiny(Architecture::MultiSoftmaxAttn), 4);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor f = random_tensor({6, 6}, rng, 2.0);
    DecodeOptions o;
    o.forced = std::array<double, 2>{1.0, 0.0};
    for (const Hypothesis& h : beam_search(m, f, o).nbest)
      for (std::size_t k : h.labels) CHECK(m.table().language_of(k) == Language::A);
  }
  const Model v(tiny(Architecture::Vanilla), 4);
  DecodeOptions o;
  o.forced = std::array<double, 2>{1.0, 0.0};
  CHECK_THROWS_AS(beam_search(v, random_tensor({3, 6}, rng), o), ConfigError);
}

TEST_CASE("model beam of one equals model greedy") {
  Rng rng(4);
  for (Architecture arch : {Architecture::Vanilla, Architecture::MultiSoftmax,
                            Architecture::MultiSoftmaxAttn}) {
    const Model m(tiny(arch), 5);
    for (int rep = 0; rep < 5; ++rep) {
      const Tensor f = random_tensor({7, 6}, rng, 2.0);
      DecodeOptions o;
      o.beam_width = 1;
      const DecodeResult b = beam_search(m, f, o);
      const DecodeResult g = greedy_decode(m, f, o);
      CHECK(b.best().labels == g.best().labels);
      CHECK(b.trajectory.has_value() == (arch == Architecture::MultiSoftmaxAttn));
    }
  }
}

TEST_CASE("streaming equals offline for finite look-ahead") {
  Rng rng(5);
  for (std::size_t L : {0u, 3u, 10u}) {
    const Model m(tiny(Architecture::MultiSoftmaxAttn, L), 6);
    for (int rep = 0; rep < 4; ++rep) {
      const Tensor f = random_tensor({static_cast<std::size_t>(uniform_int(rng, 1, 14)), 6}, rng, 2.0);
      const DecodeResult off = beam_search(m, f, DecodeOptions{});
      const DecodeResult on = stream_decode(m, f, DecodeOptions{});
      REQUIRE(on.nbest.size() == off.nbest.size());
      for (std::size_t i = 0; i < on.nbest.size(); ++i) {
        CHECK(on.nbest[i].labels == off.nbest[i].labels);
        CHECK(on.nbest[i].score == off.nbest[i].score);
      }
      CHECK(on.trajectory->w_a == off.trajectory->w_a);
    }
  }
}

TEST_CASE("stream session waits for the look-ahead") {
  const Model m(tiny(Architecture::MultiSoftmaxAttn, 3), 7);
  Rng rng(6);
  const Tensor f = random_tensor({8, 6}, rng);
  StreamSession s(m, DecodeOptions{});
  for (std::size_t t = 0; t < 8; ++t) {
    s.push(f.row(t));
    CHECK(s.frames_received() == t + 1);
    CHECK(s.frames_decoded() == (t + 1 > 3 ? t + 1 - 3 : 0));
  }
  (void)s.partial();
  const DecodeResult r = s.finish();
  CHECK(r.trajectory->size() == 8);

  // fewer frames than the look-ahead: everything happens at the flush
  const Model wide(tiny(Architecture::MultiSoftmaxAttn, 10), 7);
  StreamSession short_s(wide, DecodeOptions{});
  for (std::size_t t = 0; t < 4; ++t) short_s.push(f.row(t));
  CHECK(short_s.frames_decoded() == 0);
  const DecodeResult sr = short_s.finish();
  const DecodeResult off = beam_search(wide, Tensor({4, 6}, std::vector<double>(f.data(), f.data() + 24)),
                                       DecodeOptions{});
  CHECK(sr.best().labels == off.best().labels);

  const Model inf(tiny(Architecture::MultiSoftmaxAttn, kInfiniteLookAhead), 7);
  CHECK_THROWS_AS(StreamSession(inf, DecodeOptions{}), ConfigError);
  CHECK_NOTHROW(beam_search(inf, f, DecodeOptions{}));

  StreamSession empty(m, DecodeOptions{});
  CHECK_THROWS_AS(empty.finish(), DataError);
}

TEST_CASE("smoothing changes the weights used for decoding only when enabled") {
  const Model m(tiny(Architecture::MultiSoftmaxAttn, 2), 8);
  Rng rng(7);
  const Tensor f = random_tensor({9, 6}, rng, 3.0);
  DecodeOptions o;
  const DecodeResult plain = beam_search(m, f, o);
  o.smoothing_alpha = 1.0;
  const DecodeResult ident = beam_search(m, f, o);
  CHECK(ident.trajectory->w_a == plain.trajectory->w_a);
  CHECK(ident.best().labels == plain.best().labels);
  o.smoothing_alpha = 0.0;
  const DecodeResult flat = beam_search(m, f, o);
  for (double w : flat.trajectory->w_a) CHECK(w == doctest::Approx(plain.trajectory->w_a[0]));
  o.smoothing_alpha = 0.5;
  CHECK(stream_decode(m, f, o).best().labels == beam_search(m, f, o).best().labels);
}

TEST_CASE("n-best JSON lines") {
  const CombinedTable t = small_table();
  const std::size_t a = t.to_combined(Language::A, t.table(Language::A).word_initial(0));
  const PosteriorGrid g =
      peaked_grid(2, 2, t.size(), [&](std::size_t, std::size_t u) { return u == 0 ? a : t.blank(); });
  DecodeResult r = beam_search(g, DecodeOptions{});
  r.trajectory = AttentionTrajectory{{0.9, 0.8}, {0.1, 0.2}};
  const auto lines = nbest_json("utt-1", t, r);
  REQUIRE(lines.size() == r.nbest.size());
  const Json& top = lines.front();
  CHECK(top["utterance"] == "utt-1");
  CHECK(top["rank"] == 1);
  CHECK(top["transcript"] == "a");
  CHECK(top["words"][0]["language"] == "A");
  CHECK(top["words"][0]["first_frame"] == 0);
  CHECK(top["attention"]["w_A"].size() == 2);
  CHECK(top["labels"].size() == 1);
}

}
