#include <filesystem>
#include <fstream>
#include <sstream>

#include "codemix/cli/cli.hpp"
#include "codemix/cli/run_config.hpp"
#include "codemix/errors.hpp"
#include "codemix/numerics/random.hpp"
#include "doctest.h"

using namespace codemix;
namespace fs = std::filesystem;

namespace {

Json small_config(const fs::path& root) {
  Json j;
  j["seed"] = 5;
  j["paths"] = {{"dataset", (root / "data").string()},
                {"checkpoints", (root / "ckpt").string()},
                {"output", (root / "out").string()}};
  j["corpus"] = {{"graphemes_per_language", {3, 3}}, {"raw_dim", 2},
                 {"words_per_utterance", {1, 2}}, {"graphemes_per_word", {1, 2}},
                 {"train_size", 12}, {"test_a_size", 2}, {"test_b_size", 2},
                 {"test_mixed_size", 3}, {"seed", 5}};
  j["model"] = {{"architecture", "multisoftmax_attn"}, {"input_dim", 6},
                {"encoder_layers", 1}, {"encoder_hidden", 6}, {"prediction_hidden", 6},
                {"joint_hidden", 6}, {"attention", {{"key_dim", 3}, {"ffn_hidden", 3}, {"look_ahead", 1}}},
                {"graphemes", {{"A", default_graphemes(Language::A, 3)},
                               {"B", default_graphemes(Language::B, 3)}}}};
  j["stages"] = Json::array({{{"stage", 1}, {"steps", 3}, {"batch_size", 2}},
                             {{"stage", 2}, {"steps", 3}, {"batch_size", 2}},
                             {{"stage", 3}, {"steps", 3}, {"batch_size", 2}}});
  j["beam_width"] = 2;
  return j;
}

struct Sandbox {
  fs::path root;
  fs::path config;
  explicit Sandbox(const std::string& name, Json j = {}) {
    root = fs::temp_directory_path() / ("codemix_cli_" + name);
    fs::remove_all(root);
    fs::create_directories(root);
    config = root / "config.json";
    std::ofstream(config) << (j.is_null() ? small_config(root) : j).dump(2);
  }
  ~Sandbox() { fs::remove_all(root); }

  int run(std::vector<std::string> args, std::string* text = nullptr) const {
    args.insert(args.begin(), {"--config", config.string()});
    std::ostringstream out, err;
    const int rc = cli_main(args, out, err);
    if (text) *text = out.str() + err.str();
    return rc;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run config round-trips and is strict") {
  const RunConfig d = default_run_config();
  CHECK(to_json(run_config_from_json(to_json(d))) == to_json(d));
  CHECK_THROWS_AS(run_config_from_json(Json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(Json{{"beam_width", 0}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(Json{{"decode_split", "dev"}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(Json{{"smoothing_alpha", 2.0}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(Json{{"corpus", {{"raw_dim", 4}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(Json{{"stages", Json::array({{{"steps", 3}}})}}), ConfigError);
  CHECK_THROWS_AS(
      run_config_from_json(Json{{"stages", Json::array({{{"stage", 2}}, {{"stage", 1}}})}}),
      ConfigError);
  const RunConfig s = run_config_from_json(Json{{"seed", 9}, {"look_ahead", "inf"}});
  CHECK(s.stages[0].train.seed == derive_seed(9, "stage-1"));
  CHECK(s.look_ahead == kInfiniteLookAhead);
}

TEST_CASE("synth, train, eval, decode, analyze") {
  Sandbox box("pipeline");
  std::string text;
  REQUIRE(box.run({"synth"}, &text) == kExitOk);
  CHECK(fs::exists(box.root / "data" / "manifest.json"));
  CHECK(fs::exists(box.root / "data" / "provenance.json"));
  const std::string manifest = slurp(box.root / "data" / "manifest.json");
  CHECK(box.run({"synth"}) == kExitConfig);
  CHECK(box.run({"synth", "--force"}) == kExitOk);
  CHECK(slurp(box.root / "data" / "manifest.json") == manifest);

  CHECK(box.run({"train", "--stages", "3"}, &text) == kExitConfig);
  CHECK(box.run({"train", "--stages", "1", "3"}) == kExitConfig);
  REQUIRE(box.run({"train"}, &text) == kExitOk);
  for (int n = 1; n <= 3; ++n) {
    CHECK(fs::exists(box.root / "ckpt" / ("stage" + std::to_string(n) + ".ckpt")));
    CHECK(fs::exists(box.root / "ckpt" / ("stage" + std::to_string(n) + "_loss.csv")));
  }
  const std::string ck3 = slurp(box.root / "ckpt" / "stage3.ckpt");
  REQUIRE(box.run({"train", "--stages", "3"}) == kExitOk);
  CHECK(slurp(box.root / "ckpt" / "stage3.ckpt") == ck3);

  REQUIRE(box.run({"eval", "--oracle"}, &text) == kExitOk);
  CHECK(text.find("oracle_beam2_lanone") != std::string::npos);
  const fs::path eval = box.root / "out" / "eval";
  CHECK(slurp(eval / "oracle_beam2_lanone.csv").find(",0,") != std::string::npos);

  REQUIRE(box.run({"eval", "--look-ahead", "0", "--look-ahead", "inf"}, &text) == kExitOk);
  std::size_t reports = 0;
  for (const auto& e : fs::directory_iterator(eval))
    if (e.path().extension() == ".json" && e.path().filename() != "provenance.json") ++reports;
  CHECK(reports == 3);
  const Json prov = Json::parse(slurp(eval / "provenance.json"));
  CHECK(prov.at("artifacts").size() == 3);

  REQUIRE(box.run({"decode", "--split", "test_mixed"}) == kExitOk);
  const std::string nbest = slurp(box.root / "out" / "decode" / "test_mixed.nbest.jsonl");
  std::size_t best = 0;
  std::istringstream lines(nbest);
  for (std::string line; std::getline(lines, line);)
    if (Json::parse(line).at("rank") == 1) ++best;
  CHECK(best == 3);
  REQUIRE(box.run({"decode", "--split", "test_mixed", "--stream"}) == kExitOk);
  CHECK(slurp(box.root / "out" / "decode" / "test_mixed.nbest.jsonl") == nbest);

  REQUIRE(box.run({"analyze"}, &text) == kExitOk);
  const fs::path an = box.root / "out" / "analysis";
  CHECK(fs::exists(an / "gmm.csv"));
  CHECK(fs::exists(an / "density.csv"));
  CHECK(fs::exists(an / "populations.json"));
  std::size_t trajectories = 0;
  for (const auto& e : fs::directory_iterator(an))
    if (e.path().filename().string().rfind("trajectory_", 0) == 0) ++trajectories;
  CHECK(trajectories == 3);

  CHECK(box.run({"decode", "--ids", "no-such-id"}) == kExitData);
  CHECK(box.run({"eval", "--checkpoint", (box.root / "missing.ckpt").string()}) == kExitData);
  CHECK(box.run({"analyze", "--checkpoint", (box.root / "ckpt" / "stage2.ckpt").string()}) ==
        kExitConfig);
}

TEST_CASE("exit codes") {
  Sandbox box("codes");
  CHECK(box.run({"frobnicate"}) == kExitConfig);
  CHECK(box.run({"eval", "--oracle"}) == kExitData);
  std::ostringstream out, err;
  CHECK(cli_main({"--help"}, out, err) == kExitOk);
  CHECK(out.str().find("synth") != std::string::npos);

  Json bad = small_config(box.root);
  bad["model"]["input_dim"] = 5;
  Sandbox broken("broken", bad);
  CHECK(broken.run({"synth"}) == kExitConfig);
  std::ofstream(broken.config) << "{not json";
  CHECK(broken.run({"synth"}) == kExitConfig);
}

}
