#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "codemix/corpus/corpus.hpp"
#include "codemix/model/config.hpp"
#include "codemix/trainer/train.hpp"

namespace codemix {

struct RunPaths {
  std::filesystem::path dataset = "data";
  std::filesystem::path checkpoints = "checkpoints";
  std::filesystem::path output = "out";
};

struct RunConfig {
  RunPaths paths;
  CorpusConfig corpus;
  ModelConfig model;
  std::vector<StageConfig> stages;
  std::size_t beam_width = 4;
  std::size_t max_symbols_per_frame = 5;
  // Replaces the model's attention look-ahead at decode time.
  std::optional<std::size_t> look_ahead;
  std::optional<double> smoothing_alpha;
  std::uint64_t seed = 1;
  // Utterance ids for decode/analyze; empty means a per-command default.
  std::vector<std::string> utterances;
  std::string decode_split = "test_mixed";
  std::size_t gmm_components = 2;

  // Training stages get derive_seed(seed, "stage-<n>") unless their JSON
  // names a seed.
  void apply_seed(std::uint64_t seed);
  void validate() const;
};

// Every key is optional; unknown keys raise ConfigError.
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& c);

RunConfig default_run_config();

}  // namespace codemix
