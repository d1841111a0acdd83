#pragma once
// Three-stage curriculum:
//   1  multisoftmax on the mono-A and mono-B training utterances
//   2  multisoftmax on all training utterances, starting from stage 1
//   3  multisoftmax_attn on all training utterances; trunk and joints from
//      stage 2, attention freshly initialised, everything trainable

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "codemix/corpus/corpus.hpp"
#include "codemix/trainer/adam.hpp"
#include "codemix/trainer/checkpoint.hpp"

namespace codemix {

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  AdamConfig adam{};
  // Rescale the summed gradient when its global L2 norm exceeds this; 0 disables.
  double clip_norm = 0.0;
  std::uint64_t seed = 1;
  std::size_t log_every = 50;

  void validate() const;
};

struct StageConfig {
  int stage = 1;
  TrainConfig train{};

  void validate() const;
};

Json to_json(const StageConfig& s);
StageConfig stage_config_from_json(const Json& j);

struct LossPoint {
  std::size_t step;  // 1-based; loss of the batch before the update
  double loss;       // mean per-utterance nll
};

struct TrainResult {
  std::vector<LossPoint> curve;
};

// Mean transducer nll of a batch; gradients accumulate into the params.
double batch_loss_and_grad(Model& model, std::span<const Utterance* const> batch);

// Runs `config.steps` Adam steps over utterances drawn in shuffled epochs.
// Throws NumericError on a non-finite loss.
TrainResult train_model(Model& model, std::span<const Utterance> data, const TrainConfig& config);

// Training utterances a stage sees.
std::vector<Utterance> stage_data(const Dataset& dataset, int stage);

// Model a stage starts from. Stage 1 may start fresh (from `base` with the
// multisoftmax architecture) or from `init`; stages 2 and 3 require the
// previous stage's checkpoint and throw ConfigError otherwise.
Model stage_initial_model(int stage, const ModelConfig& base, const std::optional<Checkpoint>& init,
                          std::uint64_t seed);

struct StageResult {
  Checkpoint checkpoint;
  TrainResult training;
};

StageResult train_stage(const Dataset& dataset, const ModelConfig& base, const StageConfig& stage,
                        const std::optional<Checkpoint>& init);

// Loss rows with step % every == 0, plus the last step.
void write_loss_csv(const TrainResult& result, std::size_t every, const std::filesystem::path& path);

}  // namespace codemix
