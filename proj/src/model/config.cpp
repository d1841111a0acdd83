#include "codemix/model/config.hpp"

#include "codemix/errors.hpp"

namespace codemix {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::Vanilla: return "vanilla";
    case Architecture::MultiSoftmax: return "multisoftmax";
    case Architecture::MultiSoftmaxAttn: return "multisoftmax_attn";
  }
  return "?";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "vanilla") return Architecture::Vanilla;
  if (name == "multisoftmax") return Architecture::MultiSoftmax;
  if (name == "multisoftmax_attn") return Architecture::MultiSoftmaxAttn;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

Json look_ahead_to_json(std::size_t look_ahead) {
  if (look_ahead == kInfiniteLookAhead) return "inf";
  return look_ahead;
}

std::size_t look_ahead_from_json(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinite" || s == "INFINITE") return kInfiniteLookAhead;
    throw ConfigError("look_ahead must be a non-negative integer or \"inf\", got \"" + s + "\"");
  }
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return j.get<std::size_t>();
  throw ConfigError("look_ahead must be a non-negative integer or \"inf\"");
}

std::string look_ahead_string(std::size_t look_ahead) {
  return look_ahead == kInfiniteLookAhead ? "inf" : std::to_string(look_ahead);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (input_dim == 0) fail("input_dim must be >= 1");
  if (encoder_layers == 0 || encoder_hidden == 0) fail("encoder needs >= 1 layer of width >= 1");
  if (prediction_layers == 0 || prediction_hidden == 0)
    fail("prediction network needs >= 1 layer of width >= 1");
  if (joint_hidden == 0) fail("joint_hidden must be >= 1");
  const bool attn = architecture == Architecture::MultiSoftmaxAttn;
  if (attn != attention.has_value())
    fail("attention settings must be present exactly for multisoftmax_attn");
  if (attention && (attention->key_dim == 0 || attention->ffn_hidden == 0))
    fail("attention key_dim and ffn_hidden must be >= 1");
  (void)table();
}

CombinedTable ModelConfig::table() const {
  return build_combined(build_symbol_table(graphemes[0], Language::A),
                        build_symbol_table(graphemes[1], Language::B));
}

ModelConfig ModelConfig::with_architecture(Architecture a) const {
  ModelConfig c = *this;
  c.architecture = a;
  if (a == Architecture::MultiSoftmaxAttn) {
    if (!c.attention) c.attention = AttentionConfig{};
  } else {
    c.attention.reset();
  }
  return c;
}

Json to_json(const ModelConfig& c) {
  Json j;
  j["architecture"] = std::string(architecture_name(c.architecture));
  j["input_dim"] = c.input_dim;
  j["encoder_layers"] = c.encoder_layers;
  j["encoder_hidden"] = c.encoder_hidden;
  j["prediction_layers"] = c.prediction_layers;
  j["prediction_hidden"] = c.prediction_hidden;
  j["joint_hidden"] = c.joint_hidden;
  if (c.attention) {
    j["attention"] = {{"key_dim", c.attention->key_dim},
                      {"ffn_hidden", c.attention->ffn_hidden},
                      {"look_ahead", look_ahead_to_json(c.attention->look_ahead)}};
  }
  j["graphemes"] = {{"A", c.graphemes[0]}, {"B", c.graphemes[1]}};
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  StrictObject o(j, "model");
  std::string arch = std::string(architecture_name(c.architecture));
  o.read("architecture", arch);
  c.architecture = parse_architecture(arch);
  o.read("input_dim", c.input_dim);
  o.read("encoder_layers", c.encoder_layers);
  o.read("encoder_hidden", c.encoder_hidden);
  o.read("prediction_layers", c.prediction_layers);
  o.read("prediction_hidden", c.prediction_hidden);
  o.read("joint_hidden", c.joint_hidden);
  if (o.has("attention")) {
    StrictObject a(o.child("attention"), "model.attention");
    AttentionConfig ac;
    a.read("key_dim", ac.key_dim);
    a.read("ffn_hidden", ac.ffn_hidden);
    if (a.has("look_ahead")) ac.look_ahead = look_ahead_from_json(a.child("look_ahead"));
    a.finish();
    c.attention = ac;
  } else if (c.architecture == Architecture::MultiSoftmaxAttn) {
    c.attention = AttentionConfig{};
  } else {
    c.attention.reset();
  }
  if (c.architecture != Architecture::MultiSoftmaxAttn && c.attention)
    throw ConfigError("model: attention settings given for architecture " + arch);
  if (o.has("graphemes")) {
    StrictObject g(o.child("graphemes"), "model.graphemes");
    g.read("A", c.graphemes[0]);
    g.read("B", c.graphemes[1]);
    g.finish();
  }
  o.finish();
  c.validate();
  return c;
}

}  // namespace codemix
