#include "codemix/corpus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "codemix/errors.hpp"
#include "codemix/numerics/random.hpp"

namespace codemix {

std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::MonoA: return "mono_A";
    case Condition::MonoB: return "mono_B";
    case Condition::Mixed: return "mixed";
  }
  return "?";
}

Condition parse_condition(std::string_view name) {
  if (name == "mono_A" || name == "A") return Condition::MonoA;
  if (name == "mono_B" || name == "B") return Condition::MonoB;
  if (name == "mixed") return Condition::Mixed;
  throw ConfigError("unknown condition '" + std::string(name) + "'");
}

void CorpusConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("corpus config: " + m); };
  if (graphemes_per_language[0] < 1 || graphemes_per_language[1] < 1)
    fail("graphemes_per_language must be >= 1");
  if (raw_dim < 1) fail("raw_dim must be >= 1");
  if (frames_per_grapheme < 1) fail("frames_per_grapheme must be >= 1");
  if (frame_jitter != 0 && frame_jitter >= frames_per_grapheme)
    fail("frame_jitter must be smaller than frames_per_grapheme");
  if (!(noise_stddev >= 0.0) || !std::isfinite(noise_stddev)) fail("noise_stddev must be >= 0");
  if (words_per_utterance[0] < 1 || words_per_utterance[1] < words_per_utterance[0])
    fail("words_per_utterance must be a range [lo, hi] with lo >= 1");
  if (graphemes_per_word[0] < 1 || graphemes_per_word[1] < graphemes_per_word[0])
    fail("graphemes_per_word must be a range [lo, hi] with lo >= 1");
  if (!(switch_probability >= 0.0 && switch_probability <= 1.0))
    fail("switch_probability must lie in [0, 1]");
  if (stack < 1 || skip < 1) fail("stack and skip must be >= 1");
  double total = 0.0;
  for (double p : train_proportions) {
    if (!(p >= 0.0 && p <= 1.0)) fail("train_proportions must lie in [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("train_proportions must sum to 1");
  if (test_a_size == 0 || test_b_size == 0 || test_mixed_size == 0)
    fail("every test split needs at least one utterance");
}

Json to_json(const CorpusConfig& c) {
  Json j;
  j["graphemes_per_language"] = c.graphemes_per_language;
  j["raw_dim"] = c.raw_dim;
  j["frames_per_grapheme"] = c.frames_per_grapheme;
  j["frame_jitter"] = c.frame_jitter;
  j["noise_stddev"] = c.noise_stddev;
  j["words_per_utterance"] = c.words_per_utterance;
  j["graphemes_per_word"] = c.graphemes_per_word;
  j["switch_probability"] = c.switch_probability;
  j["stack"] = c.stack;
  j["skip"] = c.skip;
  j["train_size"] = c.train_size;
  j["train_proportions"] = c.train_proportions;
  j["test_a_size"] = c.test_a_size;
  j["test_b_size"] = c.test_b_size;
  j["test_mixed_size"] = c.test_mixed_size;
  j["seed"] = c.seed;
  return j;
}

CorpusConfig corpus_config_from_json(const Json& j) {
  CorpusConfig c;
  StrictObject o(j, "corpus");
  o.read("graphemes_per_language", c.graphemes_per_language);
  o.read("raw_dim", c.raw_dim);
  o.read("frames_per_grapheme", c.frames_per_grapheme);
  o.read("frame_jitter", c.frame_jitter);
  o.read("noise_stddev", c.noise_stddev);
  o.read("words_per_utterance", c.words_per_utterance);
  o.read("graphemes_per_word", c.graphemes_per_word);
  o.read("switch_probability", c.switch_probability);
  o.read("stack", c.stack);
  o.read("skip", c.skip);
  o.read("train_size", c.train_size);
  o.read("train_proportions", c.train_proportions);
  o.read("test_a_size", c.test_a_size);
  o.read("test_b_size", c.test_b_size);
  o.read("test_mixed_size", c.test_mixed_size);
  o.read("seed", c.seed);
  o.finish();
  c.validate();
  return c;
}

std::vector<std::string> Utterance::transcript() const {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(w.text);
  return out;
}

Acoustics::Acoustics(const CorpusConfig& config)
    : num_graphemes_(config.graphemes_per_language) {
  Rng rng(derive_seed(config.seed, "acoustics"));
  for (int l = 0; l < 2; ++l) {
    grapheme_[l].resize(config.graphemes_per_language[l]);
    for (auto& e : grapheme_[l]) {
      e.resize(config.raw_dim);
      for (double& v : e) v = standard_normal(rng);
    }
  }
  onset_.resize(config.raw_dim);
  for (double& v : onset_) v = standard_normal(rng);
}

std::vector<double> Acoustics::embedding(Language lang, std::size_t entry) const {
  const auto l = static_cast<std::size_t>(lang);
  const std::size_t n = num_graphemes_[l];
  if (entry >= 2 * n) throw DimensionError("no acoustic embedding for entry " + std::to_string(entry));
  std::vector<double> e = grapheme_[l][entry % n];
  if (entry >= n)
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += onset_[i];
  return e;
}

CombinedTable make_tables(const CorpusConfig& config) {
  return build_combined(
      build_symbol_table(default_graphemes(Language::A, config.graphemes_per_language[0]),
                         Language::A),
      build_symbol_table(default_graphemes(Language::B, config.graphemes_per_language[1]),
                         Language::B));
}

Tensor stack_subsample(const Tensor& raw, std::size_t stack, std::size_t skip) {
  if (stack < 1 || skip < 1) throw ConfigError("stack_subsample: stack and skip must be >= 1");
  if (raw.rank() != 2 || raw.rows() == 0 || raw.cols() == 0)
    throw DataError("stack_subsample: empty input " + shape_string(raw.shape()));
  const std::size_t t0 = raw.rows(), d = raw.cols();
  const std::size_t T = (t0 + skip - 1) / skip;
  Tensor out({T, stack * d});
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t s = 0; s < stack; ++s) {
      const std::size_t src = i * skip + s;
      if (src >= t0) break;
      std::copy_n(raw.data() + src * d, d, out.data() + i * stack * d + s * d);
    }
  }
  return out;
}

namespace {

std::vector<Language> word_languages(const CorpusConfig& config, Condition mode,
                                     std::size_t n_words, Rng& rng) {
  std::vector<Language> langs(n_words);
  if (mode == Condition::MonoA || mode == Condition::MonoB) {
    std::fill(langs.begin(), langs.end(),
              mode == Condition::MonoA ? Language::A : Language::B);
    return langs;
  }
  // n_words >= 2 is guaranteed by the caller. A draw without any switch gets
  // its last word flipped so both languages are present.
  langs[0] = uniform01(rng) < 0.5 ? Language::A : Language::B;
  for (std::size_t i = 1; i < n_words; ++i)
    langs[i] = uniform01(rng) < config.switch_probability ? other(langs[i - 1]) : langs[i - 1];
  if (std::find(langs.begin(), langs.end(), other(langs[0])) == langs.end())
    langs.back() = other(langs[0]);
  return langs;
}

}  // namespace

RawUtterance synth_raw(const CorpusConfig& config, const CombinedTable& table,
                       const Acoustics& acoustics, Condition mode, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t lo = config.words_per_utterance[0];
  if (mode == Condition::Mixed) lo = std::max<std::size_t>(lo, 2);
  const std::size_t hi = std::max(lo, config.words_per_utterance[1]);
  const auto n_words = static_cast<std::size_t>(uniform_int(rng, lo, hi));
  const std::vector<Language> langs = word_languages(config, mode, n_words, rng);

  RawUtterance out;
  std::vector<double> frames;
  std::size_t t0 = 0;
  for (Language lang : langs) {
    const SymbolTable& st = table.table(lang);
    Word w;
    w.language = lang;
    const auto len = static_cast<std::size_t>(uniform_int(
        rng, config.graphemes_per_word[0], config.graphemes_per_word[1]));
    for (std::size_t g = 0; g < len; ++g) {
      const auto gi = static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<std::int64_t>(st.num_graphemes()) - 1));
      w.graphemes.push_back(gi);
      w.text += st.graphemes()[gi];
      const std::size_t entry = g == 0 ? st.word_initial(gi) : st.plain(gi);
      out.labels.push_back(table.to_combined(lang, entry));

      const auto jitter = static_cast<std::int64_t>(config.frame_jitter);
      const std::int64_t n = static_cast<std::int64_t>(config.frames_per_grapheme) +
                             (jitter > 0 ? uniform_int(rng, -jitter, jitter) : 0);
      const std::vector<double> emb = acoustics.embedding(lang, entry);
      for (std::int64_t f = 0; f < n; ++f) {
        for (double e : emb) {
          const double noise =
              config.noise_stddev > 0.0 ? config.noise_stddev * standard_normal(rng) : 0.0;
          frames.push_back(e + noise);
        }
        ++t0;
      }
    }
    out.words.push_back(std::move(w));
  }
  out.raw = Tensor({t0, config.raw_dim}, std::move(frames));
  return out;
}

Utterance synth_utterance(const CorpusConfig& config, const CombinedTable& table,
                          const Acoustics& acoustics, Condition mode, std::uint64_t seed) {
  RawUtterance raw = synth_raw(config, table, acoustics, mode, seed);
  Utterance u;
  u.condition = mode;
  u.seed = seed;
  u.features = stack_subsample(raw.raw, config.stack, config.skip);
  u.words = std::move(raw.words);
  u.labels = std::move(raw.labels);
  return u;
}

Utterance synth_utterance(const CorpusConfig& config, Condition mode, std::uint64_t seed) {
  config.validate();
  return synth_utterance(config, make_tables(config), Acoustics(config), mode, seed);
}

std::vector<Word> detokenize(const CombinedTable& table, const std::vector<std::size_t>& labels) {
  std::vector<Word> words;
  for (std::size_t label : labels) {
    const auto local = table.to_local(label);
    if (!local) continue;
    const SymbolTable& st = table.table(local->language);
    if (!st.is_grapheme(local->index)) continue;
    const std::size_t g = st.grapheme_of(local->index);
    if (st.is_word_initial(local->index) || words.empty()) {
      words.push_back(Word{"", local->language, {}});
    }
    words.back().text += st.graphemes()[g];
    words.back().graphemes.push_back(g);
  }
  return words;
}

const std::vector<Utterance>& Dataset::test(Condition c) const {
  switch (c) {
    case Condition::MonoA: return test_a;
    case Condition::MonoB: return test_b;
    case Condition::Mixed: return test_mixed;
  }
  return test_mixed;
}

Dataset make_dataset(const CorpusConfig& config) {
  config.validate();
  const CombinedTable table = make_tables(config);
  const Acoustics acoustics(config);
  Dataset ds;
  ds.config = config;

  auto build = [&](std::string_view split, Condition mode, std::size_t index) {
    const std::uint64_t seed = derive_seed(derive_seed(config.seed, split), index);
    Utterance u = synth_utterance(config, table, acoustics, mode, seed);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", index);
    u.id = std::string(split) + "-" + buf;
    return u;
  };

  const std::size_t n_a =
      static_cast<std::size_t>(std::llround(config.train_size * config.train_proportions[0]));
  const std::size_t n_b = std::min(
      config.train_size - std::min(n_a, config.train_size),
      static_cast<std::size_t>(std::llround(config.train_size * config.train_proportions[1])));
  for (std::size_t i = 0; i < config.train_size; ++i) {
    const Condition mode = i < n_a ? Condition::MonoA
                           : i < n_a + n_b ? Condition::MonoB
                                           : Condition::Mixed;
    ds.train.push_back(build("train", mode, i));
  }
  for (std::size_t i = 0; i < config.test_a_size; ++i)
    ds.test_a.push_back(build("test_A", Condition::MonoA, i));
  for (std::size_t i = 0; i < config.test_b_size; ++i)
    ds.test_b.push_back(build("test_B", Condition::MonoB, i));
  for (std::size_t i = 0; i < config.test_mixed_size; ++i)
    ds.test_mixed.push_back(build("test_mixed", Condition::Mixed, i));
  return ds;
}

Json utterance_to_json(const Utterance& u) {
  Json j;
  j["id"] = u.id;
  j["condition"] = std::string(condition_name(u.condition));
  j["seed"] = u.seed;
  Json langs = Json::array();
  Json words = Json::array();
  Json graphemes = Json::array();
  for (const auto& w : u.words) {
    langs.push_back(std::string(language_name(w.language)));
    words.push_back(w.text);
    graphemes.push_back(w.graphemes);
  }
  j["languages"] = langs;
  j["transcript"] = words;
  j["word_graphemes"] = graphemes;
  j["labels"] = u.labels;
  Json feats = Json::array();
  for (std::size_t t = 0; t < u.features.rows(); ++t) {
    auto r = u.features.row(t);
    feats.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["features"] = feats;
  return j;
}

Utterance utterance_from_json(const Json& j) {
  try {
    Utterance u;
    u.id = j.at("id").get<std::string>();
    u.condition = parse_condition(j.at("condition").get<std::string>());
    u.seed = j.at("seed").get<std::uint64_t>();
    const auto langs = j.at("languages").get<std::vector<std::string>>();
    const auto words = j.at("transcript").get<std::vector<std::string>>();
    const auto graphemes = j.at("word_graphemes").get<std::vector<std::vector<std::size_t>>>();
    if (langs.size() != words.size() || words.size() != graphemes.size())
      throw DataError("utterance " + u.id + ": transcript fields disagree in length");
    for (std::size_t i = 0; i < words.size(); ++i)
      u.words.push_back(Word{words[i], parse_language(langs[i]), graphemes[i]});
    u.labels = j.at("labels").get<std::vector<std::size_t>>();
    const auto feats = j.at("features").get<std::vector<std::vector<double>>>();
    if (feats.empty()) throw DataError("utterance " + u.id + ": no feature frames");
    const std::size_t d = feats.front().size();
    std::vector<double> flat;
    flat.reserve(feats.size() * d);
    for (const auto& r : feats) {
      if (r.size() != d) throw DataError("utterance " + u.id + ": ragged feature rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    u.features = Tensor({feats.size(), d}, std::move(flat));
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed utterance record: ") + e.what());
  }
}

namespace {

template <class D>
auto& split_ref(D& ds, std::size_t i) {
  switch (i) {
    case 0: return ds.train;
    case 1: return ds.test_a;
    case 2: return ds.test_b;
    default: return ds.test_mixed;
  }
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json manifest;
  manifest["format"] = "codemix-dataset";
  manifest["version"] = 1;
  manifest["corpus"] = to_json(dataset.config);
  Json splits = Json::object();
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    const auto& utts = split_ref(dataset, i);
    const std::string name(kSplitNames[i]);
    std::ofstream out(dir / (name + ".jsonl"), std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / (name + ".jsonl")).string());
    Json seeds = Json::array();
    for (const auto& u : utts) {
      out << canonical_dump(utterance_to_json(u)) << '\n';
      seeds.push_back(u.seed);
    }
    splits[name] = {{"file", name + ".jsonl"}, {"count", utts.size()}, {"seeds", seeds}};
  }
  manifest["splits"] = splits;
  std::ofstream m(dir / "manifest.json", std::ios::binary);
  if (!m) throw DataError("cannot write " + (dir / "manifest.json").string());
  m << canonical_dump(manifest, 2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.json");
  if (!m) throw DataError("dataset manifest not found under " + dir.string());
  Json manifest;
  try {
    manifest = Json::parse(m);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt dataset manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "codemix-dataset")
    throw DataError("not a dataset manifest: " + (dir / "manifest.json").string());
  Dataset ds;
  ds.config = corpus_config_from_json(manifest.at("corpus"));
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    const std::string name(kSplitNames[i]);
    const auto& info = manifest.at("splits").at(name);
    std::ifstream in(dir / info.at("file").get<std::string>());
    if (!in) throw DataError("missing split file for " + name);
    auto& utts = split_ref(ds, i);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        utts.push_back(utterance_from_json(Json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt record in " + name + ": " + e.what());
      }
    }
    if (utts.size() != info.at("count").get<std::size_t>())
      throw DataError("split " + name + " has " + std::to_string(utts.size()) +
                      " records, manifest says " + std::to_string(info.at("count").get<std::size_t>()));
  }
  return ds;
}

}  // namespace codemix
