#include "codemix/trainer/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "codemix/errors.hpp"
#include "codemix/loss/transducer.hpp"
#include "codemix/numerics/random.hpp"

namespace codemix {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (log_every == 0) throw ConfigError("train: log_every must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be >= 0");
  adam.validate();
}

void StageConfig::validate() const {
  if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2 or 3");
  train.validate();
}

Json to_json(const StageConfig& s) {
  return {{"stage", s.stage},
          {"steps", s.train.steps},
          {"batch_size", s.train.batch_size},
          {"learning_rate", s.train.adam.learning_rate},
          {"beta1", s.train.adam.beta1},
          {"beta2", s.train.adam.beta2},
          {"eps", s.train.adam.eps},
          {"clip_norm", s.train.clip_norm},
          {"seed", s.train.seed},
          {"log_every", s.train.log_every}};
}

StageConfig stage_config_from_json(const Json& j) {
  StageConfig s;
  StrictObject o(j, "stage");
  s.stage = o.require<int>("stage");
  o.read("steps", s.train.steps);
  o.read("batch_size", s.train.batch_size);
  o.read("learning_rate", s.train.adam.learning_rate);
  o.read("beta1", s.train.adam.beta1);
  o.read("beta2", s.train.adam.beta2);
  o.read("eps", s.train.adam.eps);
  o.read("clip_norm", s.train.clip_norm);
  o.read("seed", s.train.seed);
  o.read("log_every", s.train.log_every);
  o.finish();
  s.validate();
  return s;
}

double batch_loss_and_grad(Model& model, std::span<const Utterance* const> batch) {
  if (batch.empty()) throw DataError("empty training batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Utterance* u : batch) {
    Tape tape;
    Model::Bound b(tape, model);
    const Model::Forward f = model.forward(b, u->features, u->labels);
    Var loss = ops::scale(transducer_loss(f.grid, u->features.rows(), u->labels), scale);
    if (!std::isfinite(loss.value()[0]))
      throw NumericError("non-finite loss on utterance " + u->id);
    tape.backward(loss);
    total += loss.value()[0];
  }
  return total;
}

namespace {

void clip_gradients(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter& p : params)
    for (double g : p.grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (Parameter& p : params)
    for (double& g : p.grad.values()) g *= f;
}

}  // namespace

TrainResult train_model(Model& model, std::span<const Utterance> data, const TrainConfig& config) {
  config.validate();
  TrainResult result;
  if (config.steps == 0) return result;
  if (data.empty()) throw DataError("no training utterances");
  Rng rng(derive_seed(config.seed, "batches"));
  Adam adam(config.adam);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  std::vector<const Utterance*> batch;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
          const auto j = static_cast<std::size_t>(uniform_int(rng, 0, std::int64_t(i) - 1));
          std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    model.params().zero_grad();
    const double loss = batch_loss_and_grad(model, batch);
    if (config.clip_norm > 0.0) clip_gradients(model.params(), config.clip_norm);
    adam.step(model.params());
    result.curve.push_back(LossPoint{step, loss});
  }
  model.params().zero_grad();
  return result;
}

std::vector<Utterance> stage_data(const Dataset& dataset, int stage) {
  std::vector<Utterance> out;
  for (const Utterance& u : dataset.train)
    if (stage != 1 || u.condition != Condition::Mixed) out.push_back(u);
  return out;
}

Model stage_initial_model(int stage, const ModelConfig& base, const std::optional<Checkpoint>& init,
                          std::uint64_t seed) {
  const ModelConfig plain = base.with_architecture(Architecture::MultiSoftmax);
  auto require_previous = [&](int previous) -> const Checkpoint& {
    if (!init)
      throw ConfigError("stage " + std::to_string(stage) + " needs the stage " +
                        std::to_string(previous) + " checkpoint");
    if (init->provenance.stage != previous)
      throw ConfigError("stage " + std::to_string(stage) + " must start from a stage " +
                        std::to_string(previous) + " checkpoint, got stage " +
                        std::to_string(init->provenance.stage));
    if (!(init->config == plain))
      throw ConfigError("stage " + std::to_string(previous) +
                        " checkpoint does not match the configured model");
    return *init;
  };
  switch (stage) {
    case 1: {
      if (!init) return Model(plain, derive_seed(seed, "init"));
      Model m = Model::zeros(plain);
      load_into(m, *init);
      return m;
    }
    case 2: {
      Model m = Model::zeros(plain);
      load_into(m, require_previous(1));
      return m;
    }
    case 3: {
      const Checkpoint& prev = require_previous(2);
      Model m(base.with_architecture(Architecture::MultiSoftmaxAttn), derive_seed(seed, "attention"));
      for (const NamedTensor& t : prev.tensors) {
        Parameter* p = m.params().find(t.name);
        if (!p || p->value.shape() != t.value.shape())
          throw ConfigError("stage 2 tensor '" + t.name + "' has no counterpart in stage 3");
        p->value = t.value;
      }
      return m;
    }
    default:
      throw ConfigError("stage must be 1, 2 or 3");
  }
}

StageResult train_stage(const Dataset& dataset, const ModelConfig& base, const StageConfig& stage,
                        const std::optional<Checkpoint>& init) {
  stage.validate();
  Model model = stage_initial_model(stage.stage, base, init, stage.train.seed);
  const std::vector<Utterance> data = stage_data(dataset, stage.stage);
  StageResult r;
  r.training = train_model(model, data, stage.train);
  r.checkpoint = Checkpoint::from_model(
      model, TrainingProvenance{stage.stage, stage.train.steps, stage.train.seed});
  return r;
}

void write_loss_csv(const TrainResult& result, std::size_t every, const std::filesystem::path& path) {
  if (every == 0) throw ConfigError("loss csv interval must be >= 1");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < result.curve.size(); ++i) {
    const LossPoint& p = result.curve[i];
    if (p.step % every != 0 && i + 1 != result.curve.size()) continue;
    std::snprintf(buf, sizeof buf, "%zu,%.12g\n", p.step, p.loss);
    out << buf;
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace codemix
