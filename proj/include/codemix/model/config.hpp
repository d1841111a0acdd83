#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "codemix/corpus/symbols.hpp"
#include "codemix/json_util.hpp"

namespace codemix {

enum class Architecture : unsigned char { Vanilla, MultiSoftmax, MultiSoftmaxAttn };

std::string_view architecture_name(Architecture a);
Architecture parse_architecture(std::string_view name);

// Look-ahead value meaning "every frame of the utterance".
inline constexpr std::size_t kInfiniteLookAhead = std::numeric_limits<std::size_t>::max();

Json look_ahead_to_json(std::size_t look_ahead);
std::size_t look_ahead_from_json(const Json& j);
std::string look_ahead_string(std::size_t look_ahead);

struct AttentionConfig {
  std::size_t key_dim = 32;
  std::size_t ffn_hidden = 32;
  std::size_t look_ahead = 10;

  friend bool operator==(const AttentionConfig&, const AttentionConfig&) = default;
};

struct ModelConfig {
  Architecture architecture = Architecture::MultiSoftmaxAttn;
  std::size_t input_dim = 24;
  std::size_t encoder_layers = 2;
  std::size_t encoder_hidden = 64;
  std::size_t prediction_layers = 1;
  std::size_t prediction_hidden = 64;
  std::size_t joint_hidden = 64;
  // Present iff architecture == MultiSoftmaxAttn.
  std::optional<AttentionConfig> attention = AttentionConfig{};
  std::array<std::vector<std::string>, 2> graphemes{default_graphemes(Language::A, 10),
                                                    default_graphemes(Language::B, 10)};

  void validate() const;
  CombinedTable table() const;

  // Copy with a different architecture; attention config added or dropped.
  ModelConfig with_architecture(Architecture a) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);

}  // namespace codemix
