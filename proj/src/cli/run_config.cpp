#include "codemix/cli/run_config.hpp"

#include "codemix/errors.hpp"
#include "codemix/numerics/random.hpp"

namespace codemix {

namespace {

StageConfig default_stage(int n, std::uint64_t seed) {
  StageConfig s;
  s.stage = n;
  s.train.steps = 1000;
  s.train.batch_size = 8;
  s.train.adam.learning_rate = 3e-3;
  s.train.seed = derive_seed(seed, "stage-" + std::to_string(n));
  return s;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  for (int n = 1; n <= 3; ++n) c.stages.push_back(default_stage(n, c.seed));
  return c;
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  for (StageConfig& st : stages) st.train.seed = derive_seed(s, "stage-" + std::to_string(st.stage));
}

void RunConfig::validate() const {
  corpus.validate();
  model.validate();
  if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
  if (max_symbols_per_frame < 1) throw ConfigError("max_symbols_per_frame must be >= 1");
  if (gmm_components < 1) throw ConfigError("gmm_components must be >= 1");
  if (smoothing_alpha && !(*smoothing_alpha >= 0.0 && *smoothing_alpha <= 1.0))
    throw ConfigError("smoothing_alpha must lie in [0, 1]");
  if (model.input_dim != corpus.feature_dim())
    throw ConfigError("model.input_dim " + std::to_string(model.input_dim) +
                      " does not match the corpus feature dim " +
                      std::to_string(corpus.feature_dim()));
  const CombinedTable mt = model.table(), ct = make_tables(corpus);
  bool same = mt.size() == ct.size();
  for (std::size_t i = 0; same && i < mt.size(); ++i) same = mt.name(i) == ct.name(i);
  if (!same) throw ConfigError("model graphemes do not match the corpus alphabets");
  int previous = 0;
  for (const StageConfig& s : stages) {
    s.validate();
    if (s.stage <= previous) throw ConfigError("stages must be listed in increasing order");
    previous = s.stage;
  }
  bool known = false;
  for (auto name : kSplitNames) known = known || name == decode_split;
  if (!known) throw ConfigError("unknown split '" + decode_split + "'");
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c = default_run_config();
  StrictObject o(j, "config");
  o.read("seed", c.seed);
  c.apply_seed(c.seed);
  if (o.has("paths")) {
    StrictObject p(o.child("paths"), "config.paths");
    if (p.has("dataset")) c.paths.dataset = p.require<std::string>("dataset");
    if (p.has("checkpoints")) c.paths.checkpoints = p.require<std::string>("checkpoints");
    if (p.has("output")) c.paths.output = p.require<std::string>("output");
    p.finish();
  }
  if (o.has("corpus")) c.corpus = corpus_config_from_json(o.child("corpus"));
  if (o.has("model")) c.model = model_config_from_json(o.child("model"));
  if (o.has("stages")) {
    const Json& arr = o.child("stages");
    if (!arr.is_array()) throw ConfigError("config.stages must be an array");
    c.stages.clear();
    for (const Json& sj : arr) {
      if (!sj.is_object() || !sj.contains("stage") || !sj.at("stage").is_number_integer())
        throw ConfigError("each stage needs an integer \"stage\"");
      Json merged = to_json(default_stage(sj.at("stage").get<int>(), c.seed));
      for (const auto& [k, v] : sj.items()) merged[k] = v;
      c.stages.push_back(stage_config_from_json(merged));
    }
  }
  o.read("beam_width", c.beam_width);
  o.read("max_symbols_per_frame", c.max_symbols_per_frame);
  if (o.has("look_ahead")) {
    const Json& la = o.child("look_ahead");
    if (!la.is_null()) c.look_ahead = look_ahead_from_json(la);
  }
  if (o.has("smoothing_alpha")) {
    const Json& a = o.child("smoothing_alpha");
    if (!a.is_null()) {
      if (!a.is_number()) throw ConfigError("smoothing_alpha must be a number or null");
      c.smoothing_alpha = a.get<double>();
    }
  }
  o.read("utterances", c.utterances);
  o.read("decode_split", c.decode_split);
  o.read("gmm_components", c.gmm_components);
  o.finish();
  c.validate();
  return c;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["paths"] = {{"dataset", c.paths.dataset.generic_string()},
                {"checkpoints", c.paths.checkpoints.generic_string()},
                {"output", c.paths.output.generic_string()}};
  j["corpus"] = to_json(c.corpus);
  j["model"] = to_json(c.model);
  j["stages"] = Json::array();
  for (const StageConfig& s : c.stages) j["stages"].push_back(to_json(s));
  j["beam_width"] = c.beam_width;
  j["max_symbols_per_frame"] = c.max_symbols_per_frame;
  j["look_ahead"] = c.look_ahead ? look_ahead_to_json(*c.look_ahead) : Json(nullptr);
  j["smoothing_alpha"] = c.smoothing_alpha ? Json(*c.smoothing_alpha) : Json(nullptr);
  j["utterances"] = c.utterances;
  j["decode_split"] = c.decode_split;
  j["gmm_components"] = c.gmm_components;
  return j;
}

}  // namespace codemix
