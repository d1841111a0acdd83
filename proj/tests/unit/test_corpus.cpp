#include <algorithm>
#include <filesystem>
#include <set>

#include "codemix/corpus/corpus.hpp"
#include "codemix/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace codemix;

namespace {

CorpusConfig small_config() {
  CorpusConfig c;
  c.train_size = 30;
  c.test_a_size = 5;
  c.test_b_size = 5;
  c.test_mixed_size = 5;
  return c;
}

std::vector<std::string> letters(std::size_t n, char first) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(std::string(1, static_cast<char>(first + i)));
  return v;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("symbol table sizes") {
  CHECK(build_symbol_table(letters(10, 'a'), Language::A).size() == 22);
  const SymbolTable one = build_symbol_table({"a"}, Language::A);
  CHECK(one.size() == 4);
  CHECK(one.entries()[0] == "a");
  CHECK(one.entries()[1] == "B_a");
  CHECK(one.blank() == 3);
  CHECK(one.noise() == 2);
  CHECK(one.find("B_a") == 1u);
  CHECK_THROWS_AS(build_symbol_table({"a", "b", "a"}, Language::A), ConfigError);
  CHECK_THROWS_AS(build_symbol_table({}, Language::A), ConfigError);
}

TEST_CASE("symbol table indices are dense and unique") {
  const SymbolTable t = build_symbol_table(letters(6, 'a'), Language::A);
  std::set<std::string> names(t.entries().begin(), t.entries().end());
  CHECK(names.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.find(t.entries()[i]) == i);
  CHECK(std::count(t.entries().begin(), t.entries().end(), std::string(kBlankName)) == 1);
}

TEST_CASE("combined table layout") {
  const CombinedTable c = build_combined(build_symbol_table(letters(10, 'a'), Language::A),
                                         build_symbol_table(letters(10, 'k'), Language::B));
  CHECK(c.size() == 43);
  CHECK(c.to_combined(Language::A, c.table(Language::A).blank()) == 42);
  CHECK(c.to_combined(Language::B, c.table(Language::B).blank()) == 42);
  CHECK(c.blank() == 42);
  CHECK(c.segment_begin(Language::B) == 21);
  CHECK_FALSE(c.to_local(42).has_value());
  for (Language l : {Language::A, Language::B}) {
    const SymbolTable& t = c.table(l);
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      const std::size_t k = c.to_combined(l, i);
      const auto back = c.to_local(k);
      REQUIRE(back.has_value());
      CHECK(back->language == l);
      CHECK(back->index == i);
      CHECK(c.language_of(k) == l);
    }
  }
  CHECK_THROWS_AS(build_combined(build_symbol_table(letters(3, 'a'), Language::A),
                                 build_symbol_table(letters(3, 'c'), Language::B)),
                  ConfigError);
}

TEST_CASE("stack_subsample shapes") {
  Rng rng(1);
  const Tensor raw9 = testutil::random_tensor({9, 2}, rng);
  const Tensor s9 = stack_subsample(raw9, 3, 3);
  CHECK(s9.rows() == 3);
  CHECK(s9.cols() == 6);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(s9.at(i, j) == raw9[i * 6 + j]);

  const Tensor raw10 = testutil::random_tensor({10, 2}, rng);
  const Tensor s10 = stack_subsample(raw10, 3, 3);
  CHECK(s10.rows() == 4);
  CHECK(s10.at(3, 0) == raw10.at(9, 0));
  for (std::size_t j = 2; j < 6; ++j) CHECK(s10.at(3, j) == 0.0);

  CHECK(stack_subsample(raw10, 1, 1) == raw10);
  CHECK_THROWS_AS(stack_subsample(Tensor({0, 2}), 3, 3), DataError);
  CHECK_THROWS_AS(stack_subsample(raw10, 0, 3), ConfigError);
}

TEST_CASE("stack_subsample closed form over a sweep") {
  Rng rng(2);
  for (std::size_t t0 = 1; t0 <= 13; ++t0)
    for (std::size_t stack = 1; stack <= 4; ++stack)
      for (std::size_t skip = 1; skip <= 4; ++skip) {
        const Tensor out = stack_subsample(testutil::random_tensor({t0, 3}, rng), stack, skip);
        CHECK(out.rows() == (t0 + skip - 1) / skip);
        CHECK(out.cols() == 3 * stack);
      }
}

TEST_CASE("noise-free utterances repeat the grapheme embeddings") {
  CorpusConfig c = small_config();
  c.noise_stddev = 0.0;
  c.frame_jitter = 0;
  const CombinedTable table = make_tables(c);
  const Acoustics ac(c);
  const RawUtterance r = synth_raw(c, table, ac, Condition::MonoA, 77);
  CHECK(r.raw.rows() == r.labels.size() * c.frames_per_grapheme);
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    const auto local = table.to_local(r.labels[i]);
    REQUIRE(local.has_value());
    const std::vector<double> e = ac.embedding(local->language, local->index);
    for (std::size_t f = 0; f < c.frames_per_grapheme; ++f)
      for (std::size_t d = 0; d < c.raw_dim; ++d)
        CHECK(r.raw.at(i * c.frames_per_grapheme + f, d) == e[d]);
  }
}

TEST_CASE("mono utterances stay in their language segment") {
  const CorpusConfig c = small_config();
  const CombinedTable table = make_tables(c);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (Condition mode : {Condition::MonoA, Condition::MonoB}) {
      const Language l = mode == Condition::MonoA ? Language::A : Language::B;
      const Utterance u = synth_utterance(c, mode, seed);
      CHECK(u.num_frames() >= 1);
      for (const Word& w : u.words) CHECK(w.language == l);
      for (std::size_t k : u.labels) {
        CHECK(k != table.blank());
        CHECK(table.language_of(k) == l);
      }
    }
  }
}

TEST_CASE("word onsets use B_ symbols and detokenize round-trips") {
  const CorpusConfig c = small_config();
  const CombinedTable table = make_tables(c);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Utterance u = synth_utterance(c, Condition::Mixed, seed);
    const std::vector<Word> words = detokenize(table, u.labels);
    REQUIRE(words.size() == u.words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      CHECK(words[i].text == u.words[i].text);
      CHECK(words[i].language == u.words[i].language);
    }
  }
}

TEST_CASE("synthesis is deterministic") {
  const CorpusConfig c = small_config();
  const Utterance a = synth_utterance(c, Condition::Mixed, 5);
  const Utterance b = synth_utterance(c, Condition::Mixed, 5);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.transcript() == b.transcript());
}

TEST_CASE("make_dataset split sizes, ids and mixing") {
  CorpusConfig c;
  c.train_size = 100;
  c.test_a_size = c.test_b_size = c.test_mixed_size = 20;
  const Dataset d = make_dataset(c);
  CHECK(d.train.size() == 100);
  CHECK(d.test_a.size() == 20);
  CHECK(d.test_b.size() == 20);
  CHECK(d.test_mixed.size() == 20);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const auto* s : {&d.train, &d.test_a, &d.test_b, &d.test_mixed})
    for (const Utterance& u : *s) {
      ids.insert(u.id);
      ++total;
    }
  CHECK(ids.size() == total);
  for (const Utterance& u : d.test_mixed) {
    bool a = false, b = false;
    for (const Word& w : u.words) (w.language == Language::A ? a : b) = true;
    CHECK(a);
    CHECK(b);
  }
  std::set<Condition> train_modes;
  for (const Utterance& u : d.train) train_modes.insert(u.condition);
  CHECK(train_modes.size() == 3);

  c.test_b_size = 0;
  CHECK_THROWS_AS(make_dataset(c), ConfigError);
}

TEST_CASE("config validation") {
  CorpusConfig c;
  c.switch_probability = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = CorpusConfig{};
  c.raw_dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(corpus_config_from_json(Json{{"bogus", 1}}), ConfigError);
  const CorpusConfig d;
  CHECK(to_json(corpus_config_from_json(to_json(d))) == to_json(d));
}

TEST_CASE("dataset save and load round-trip") {
  const Dataset d = make_dataset(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "codemix_corpus_roundtrip";
  std::filesystem::remove_all(dir);
  save_dataset(d, dir);
  const Dataset back = load_dataset(dir);
  REQUIRE(back.train.size() == d.train.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    CHECK(back.train[i].id == d.train[i].id);
    CHECK(back.train[i].features == d.train[i].features);
    CHECK(back.train[i].labels == d.train[i].labels);
  }
  CHECK(to_json(back.config) == to_json(d.config));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), DataError);
}

}
