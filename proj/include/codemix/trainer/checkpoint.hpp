#pragma once
// Single-file checkpoints:
//
//   bytes 0..7    magic "CDMXCKPT"
//   bytes 8..15   manifest length n, uint64 little-endian
//   next n bytes  JSON manifest (format, version, model config, tensor table,
//                 provenance); compact, keys sorted
//   remainder     every tensor's values as little-endian float64, in
//                 manifest order

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codemix/model/model.hpp"

namespace codemix {

inline constexpr int kCheckpointVersion = 1;

struct TrainingProvenance {
  int stage = 0;  // 0 for a model that never went through the curriculum
  std::size_t step = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainingProvenance&, const TrainingProvenance&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedTensor> tensors;
  TrainingProvenance provenance;

  static Checkpoint from_model(const Model& model, TrainingProvenance provenance);
  // Rebuilds the model; throws ConfigError if the tensors do not match the
  // config's parameter manifest.
  Model to_model() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every parameter into `model`. Throws ConfigError when the
// checkpoint's config differs from the model's.
void load_into(Model& model, const Checkpoint& ckpt);

}  // namespace codemix
