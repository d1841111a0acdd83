#include "codemix/model/model.hpp"

#include <cmath>
#include <limits>

#include "codemix/errors.hpp"
#include "codemix/numerics/random.hpp"

namespace codemix {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

void add_lstm(std::vector<ManifestEntry>& out, const std::string& prefix, std::size_t in,
              std::size_t hidden) {
  out.push_back({prefix + ".wx", {in, 4 * hidden}, in});
  out.push_back({prefix + ".wh", {hidden, 4 * hidden}, hidden});
  out.push_back({prefix + ".bias", {4 * hidden}, hidden});
}

void add_head(std::vector<ManifestEntry>& out, const std::string& prefix, const ModelConfig& c,
              std::size_t vocab) {
  out.push_back({prefix + ".enc_proj", {c.encoder_hidden, c.joint_hidden}, c.encoder_hidden});
  out.push_back({prefix + ".pred_proj", {c.prediction_hidden, c.joint_hidden}, c.prediction_hidden});
  out.push_back({prefix + ".bias", {c.joint_hidden}, c.joint_hidden});
  out.push_back({prefix + ".out", {c.joint_hidden, vocab}, c.joint_hidden});
  out.push_back({prefix + ".out_bias", {vocab}, c.joint_hidden});
}

std::vector<ManifestEntry> manifest(const ModelConfig& c) {
  const CombinedTable table = c.table();
  std::vector<ManifestEntry> out;
  for (std::size_t l = 0; l < c.encoder_layers; ++l)
    add_lstm(out, "encoder." + std::to_string(l), l == 0 ? c.input_dim : c.encoder_hidden,
             c.encoder_hidden);
  out.push_back({"prediction.embedding", {table.size() - 1, c.prediction_hidden}, c.prediction_hidden});
  out.push_back({"prediction.start", {1, c.prediction_hidden}, c.prediction_hidden});
  for (std::size_t l = 0; l < c.prediction_layers; ++l)
    add_lstm(out, "prediction." + std::to_string(l), c.prediction_hidden, c.prediction_hidden);
  if (c.architecture == Architecture::Vanilla) {
    add_head(out, "joint", c, table.size());
  } else {
    add_head(out, "joint_A", c, table.table(Language::A).size());
    add_head(out, "joint_B", c, table.table(Language::B).size());
  }
  if (c.attention) {
    const auto& a = *c.attention;
    out.push_back({"attention.query", {c.encoder_hidden, a.key_dim}, c.encoder_hidden});
    out.push_back({"attention.key", {c.encoder_hidden, a.key_dim}, c.encoder_hidden});
    out.push_back({"attention.value", {c.encoder_hidden, a.key_dim}, c.encoder_hidden});
    out.push_back({"attention.ffn.w1", {a.key_dim, a.ffn_hidden}, a.key_dim});
    out.push_back({"attention.ffn.b1", {a.ffn_hidden}, a.key_dim});
    out.push_back({"attention.ffn.w2", {a.ffn_hidden, 2}, a.ffn_hidden});
    out.push_back({"attention.ffn.b2", {2}, a.ffn_hidden});
  }
  return out;
}

Tensor row_tensor(std::span<const double> v) {
  return Tensor({1, v.size()}, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

// --- ParameterSet ------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.emplace_back(std::move(name), std::move(value));
  return params_.size() - 1;
}

Parameter* ParameterSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return it->second;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

// --- construction ------------------------------------------------------

std::vector<std::pair<std::string, Shape>> Model::parameter_manifest(const ModelConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  for (auto& e : manifest(c)) out.emplace_back(e.name, e.shape);
  return out;
}

Model::Model(ModelConfig config, std::nullptr_t)
    : config_(std::move(config)), table_(config_.table()) {
  config_.validate();
}

Model::Model(ModelConfig config, std::uint64_t seed) : Model(std::move(config), nullptr) {
  for (const auto& e : manifest(config_)) {
    Rng rng(derive_seed(seed, e.name));
    params_.add(e.name, uniform_init(e.shape, e.fan_in, rng));
  }
  build_ids();
}

Model Model::zeros(ModelConfig config) {
  Model m(std::move(config), nullptr);
  for (const auto& e : manifest(m.config_)) m.params_.add(e.name, Tensor(e.shape));
  m.build_ids();
  return m;
}

void Model::build_ids() {
  auto id = [&](const std::string& n) { return params_.index_of(n); };
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    encoder_ids_.push_back({id(p + ".wx"), id(p + ".wh"), id(p + ".bias")});
  }
  embedding_id_ = id("prediction.embedding");
  start_id_ = id("prediction.start");
  for (std::size_t l = 0; l < config_.prediction_layers; ++l) {
    const std::string p = "prediction." + std::to_string(l);
    prediction_ids_.push_back({id(p + ".wx"), id(p + ".wh"), id(p + ".bias")});
  }
  auto head = [&](const std::string& p) {
    return HeadIds{id(p + ".enc_proj"), id(p + ".pred_proj"), id(p + ".bias"), id(p + ".out"),
                   id(p + ".out_bias")};
  };
  if (config_.architecture == Architecture::Vanilla) {
    head_ids_.push_back(head("joint"));
  } else {
    head_ids_.push_back(head("joint_A"));
    head_ids_.push_back(head("joint_B"));
  }
  if (config_.attention) {
    attn_ids_ = AttnIds{id("attention.query"),  id("attention.key"),    id("attention.value"),
                        id("attention.ffn.w1"), id("attention.ffn.b1"), id("attention.ffn.w2"),
                        id("attention.ffn.b2")};
  }
}

std::size_t Model::look_ahead() const {
  return config_.attention ? config_.attention->look_ahead : 0;
}

void Model::set_look_ahead(std::size_t look_ahead) {
  if (!config_.attention) throw ConfigError("look-ahead applies only to multisoftmax_attn models");
  config_.attention->look_ahead = look_ahead;
}

// --- Bound ---------------------------------------------------------------

Model::Bound::Bound(Tape& tape, Model& model)
    : tape_(tape), model_(model), mutable_model_(&model), vars_(model.params_.size()) {}

Model::Bound::Bound(Tape& tape, const Model& model)
    : tape_(tape), model_(model), vars_(model.params_.size()) {}

Var Model::Bound::operator[](std::size_t i) {
  if (!vars_[i].valid()) {
    if (mutable_model_ && tape_.grad_enabled())
      vars_[i] = tape_.parameter(mutable_model_->params_[i]);
    else
      vars_[i] = tape_.view(model_.params_[i].value);
  }
  return vars_[i];
}

// --- tape path -----------------------------------------------------------

Var Model::run_lstm(Bound& b, Var inputs, const std::vector<LstmIds>& layers) const {
  Tape& tape = b.tape();
  Var x = inputs;
  const std::size_t T = inputs.value().rows();
  for (const auto& ids : layers) {
    const std::size_t H = b[ids.wh].value().rows();
    Var proj = ops::add_bias(ops::matmul(x, b[ids.wx]), b[ids.bias]);
    Var h = tape.constant(Tensor({1, H}));
    Var c = tape.constant(Tensor({1, H}));
    std::vector<Var> outs;
    outs.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      std::tie(h, c) = ops::lstm_cell_projected(ops::row(proj, t), h, c, b[ids.wh]);
      outs.push_back(h);
    }
    x = ops::concat_rows(outs);
  }
  return x;
}

Var Model::encode(Bound& b, const Tensor& features) const {
  if (features.rank() != 2 || features.rows() == 0)
    throw DimensionError("encode: expected T x " + std::to_string(config_.input_dim) +
                         " features with T >= 1, got " + shape_string(features.shape()));
  if (features.cols() != config_.input_dim)
    throw DimensionError("encode: feature dim " + std::to_string(features.cols()) +
                         " does not match model input_dim " + std::to_string(config_.input_dim));
  return run_lstm(b, b.tape().view(features), encoder_ids_);
}

Var Model::predict(Bound& b, std::span<const std::size_t> labels) const {
  std::vector<Var> rows;
  rows.reserve(labels.size() + 1);
  rows.push_back(b[start_id_]);
  for (std::size_t y : labels) {
    if (y >= table_.blank())
      throw DataError(y == table_.blank() ? "predict: labels must not contain the blank"
                                          : "predict: label " + std::to_string(y) + " out of range");
    rows.push_back(ops::row(b[embedding_id_], y));
  }
  return run_lstm(b, ops::concat_rows(rows), prediction_ids_);
}

Var Model::joint_head(Bound& b, std::size_t head, Var enc, Var pred) const {
  const HeadIds& ids = head_ids_.at(head);
  Var e = ops::matmul(enc, b[ids.enc_proj]);
  Var p = ops::matmul(pred, b[ids.pred_proj]);
  Var z = ops::tanh(ops::add_bias(ops::outer_add_rows(e, p), b[ids.bias]));
  return ops::log_softmax(ops::add_bias(ops::matmul(z, b[ids.out]), b[ids.out_bias]));
}

Var Model::attention_log_weights(Bound& b, Var enc, std::size_t look_ahead) const {
  if (!attn_ids_) throw ConfigError("attention weights requested from a model without attention");
  const AttnIds& a = *attn_ids_;
  Var q = ops::matmul(enc, b[a.query]);
  Var k = ops::matmul(enc, b[a.key]);
  Var v = ops::matmul(enc, b[a.value]);
  Var s = ops::scale(ops::matmul_nt(q, k), 1.0 / std::sqrt(double(config_.attention->key_dim)));
  if (look_ahead != kInfiniteLookAhead) s = ops::mask_future(s, look_ahead);
  Var ctx = ops::matmul(ops::softmax(s), v);
  Var hidden = ops::tanh(ops::add_bias(ops::matmul(ctx, b[a.w1]), b[a.b1]));
  return ops::log_softmax(ops::add_bias(ops::matmul(hidden, b[a.w2]), b[a.b2]));
}

Var Model::combine(Bound& b, Var logp_a, Var logp_b, Var log_w,
                   std::size_t rows_per_weight) const {
  (void)b;
  return combine_log_posteriors(table_, logp_a, logp_b, log_w, rows_per_weight);
}

namespace {

Tensor forced_log_weights(const std::array<double, 2>& w, std::size_t rows) {
  if (!(w[0] >= 0.0 && w[0] <= 1.0 && w[1] >= 0.0 && w[1] <= 1.0) ||
      std::abs(w[0] + w[1] - 1.0) > 1e-9)
    throw ConfigError("forced language weights must lie in [0, 1] and sum to 1");
  Tensor out({rows, 2});
  for (std::size_t r = 0; r < rows; ++r) {
    out.at(r, 0) = std::log(w[0]);
    out.at(r, 1) = std::log(w[1]);
  }
  return out;
}

}  // namespace

Model::Forward Model::forward(Bound& b, const Tensor& features,
                              std::span<const std::size_t> labels,
                              const ForcedWeights& forced) const {
  Forward f;
  f.encoder = encode(b, features);
  f.prediction = predict(b, labels);
  const std::size_t T = features.rows();
  const std::size_t P = labels.size() + 1;
  if (config_.architecture == Architecture::Vanilla) {
    if (forced) throw ConfigError("forced language weights need a multi-softmax architecture");
    f.grid = joint_head(b, 0, f.encoder, f.prediction);
    return f;
  }
  Var la = joint_head(b, 0, f.encoder, f.prediction);
  Var lb = joint_head(b, 1, f.encoder, f.prediction);
  Var log_w;
  if (forced) {
    log_w = b.tape().constant(forced_log_weights(*forced, T));
  } else if (config_.architecture == Architecture::MultiSoftmax) {
    log_w = b.tape().constant(forced_log_weights({0.5, 0.5}, T));
  } else {
    log_w = attention_log_weights(b, f.encoder, config_.attention->look_ahead);
  }
  f.log_weights = log_w;
  f.grid = combine(b, la, lb, log_w, P);
  return f;
}

// --- incremental path ----------------------------------------------------

LstmState Model::initial_encoder_state() const {
  LstmState s;
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    s.h.emplace_back(Shape{1, config_.encoder_hidden});
    s.c.emplace_back(Shape{1, config_.encoder_hidden});
  }
  return s;
}

EncoderFrame Model::encoder_step(LstmState& state, std::span<const double> frame) const {
  if (frame.size() != config_.input_dim)
    throw DimensionError("encoder_step: frame dim " + std::to_string(frame.size()) +
                         " does not match input_dim " + std::to_string(config_.input_dim));
  Tape tape(false);
  Bound b(tape, *this);
  Var x = tape.constant(row_tensor(frame));
  for (std::size_t l = 0; l < encoder_ids_.size(); ++l) {
    const LstmIds& ids = encoder_ids_[l];
    Var proj = ops::add_bias(ops::matmul(x, b[ids.wx]), b[ids.bias]);
    auto [h, c] = ops::lstm_cell_projected(ops::row(proj, 0), tape.view(state.h[l]),
                                           tape.view(state.c[l]), b[ids.wh]);
    state.h[l] = h.value();
    state.c[l] = c.value();
    x = h;
  }
  EncoderFrame f;
  f.output = x.value();
  for (const HeadIds& ids : head_ids_) f.joint_proj.push_back(ops::matmul(x, b[ids.enc_proj]).value());
  if (attn_ids_) {
    f.query = ops::matmul(x, b[attn_ids_->query]).value();
    f.key = ops::matmul(x, b[attn_ids_->key]).value();
    f.value = ops::matmul(x, b[attn_ids_->value]).value();
  }
  return f;
}

PredictorState Model::initial_predictor_state() const {
  PredictorState s;
  s.length = 0;
  for (std::size_t l = 0; l < config_.prediction_layers; ++l) {
    s.lstm.h.emplace_back(Shape{1, config_.prediction_hidden});
    s.lstm.c.emplace_back(Shape{1, config_.prediction_hidden});
  }
  // Consume the start embedding.
  Tape tape(false);
  Bound b(tape, *this);
  Var x = ops::concat_rows({b[start_id_]});
  for (std::size_t l = 0; l < prediction_ids_.size(); ++l) {
    const LstmIds& ids = prediction_ids_[l];
    Var proj = ops::add_bias(ops::matmul(x, b[ids.wx]), b[ids.bias]);
    auto [h, c] = ops::lstm_cell_projected(ops::row(proj, 0), tape.view(s.lstm.h[l]),
                                           tape.view(s.lstm.c[l]), b[ids.wh]);
    s.lstm.h[l] = h.value();
    s.lstm.c[l] = c.value();
    x = h;
  }
  s.output = x.value();
  for (const HeadIds& ids : head_ids_) s.joint_proj.push_back(ops::matmul(x, b[ids.pred_proj]).value());
  return s;
}

PredictorState Model::advance(const PredictorState& state, std::size_t label) const {
  if (label >= table_.blank())
    throw DataError("advance: label must be a non-blank combined symbol");
  PredictorState s;
  s.length = state.length + 1;
  s.lstm = state.lstm;
  Tape tape(false);
  Bound b(tape, *this);
  Var x = ops::concat_rows({ops::row(b[embedding_id_], label)});
  for (std::size_t l = 0; l < prediction_ids_.size(); ++l) {
    const LstmIds& ids = prediction_ids_[l];
    Var proj = ops::add_bias(ops::matmul(x, b[ids.wx]), b[ids.bias]);
    auto [h, c] = ops::lstm_cell_projected(ops::row(proj, 0), tape.view(s.lstm.h[l]),
                                           tape.view(s.lstm.c[l]), b[ids.wh]);
    s.lstm.h[l] = h.value();
    s.lstm.c[l] = c.value();
    x = h;
  }
  s.output = x.value();
  for (const HeadIds& ids : head_ids_) s.joint_proj.push_back(ops::matmul(x, b[ids.pred_proj]).value());
  return s;
}

std::array<double, 2> Model::attention_log_weights(const std::vector<EncoderFrame>& frames,
                                                   std::size_t t, std::size_t visible) const {
  if (!attn_ids_) throw ConfigError("attention weights requested from a model without attention");
  if (t >= frames.size() || visible > frames.size() || visible <= t)
    throw DimensionError("attention_log_weights: frame " + std::to_string(t) +
                         " with " + std::to_string(visible) + " visible of " +
                         std::to_string(frames.size()));
  Tape tape(false);
  Bound b(tape, *this);
  std::vector<Var> keys, values;
  keys.reserve(visible);
  values.reserve(visible);
  for (std::size_t s = 0; s < visible; ++s) {
    keys.push_back(tape.view(frames[s].key));
    values.push_back(tape.view(frames[s].value));
  }
  Var q = tape.view(frames[t].query);
  Var s = ops::scale(ops::matmul_nt(q, ops::concat_rows(keys)),
                     1.0 / std::sqrt(double(config_.attention->key_dim)));
  Var ctx = ops::matmul(ops::softmax(s), ops::concat_rows(values));
  const AttnIds& a = *attn_ids_;
  Var hidden = ops::tanh(ops::add_bias(ops::matmul(ctx, b[a.w1]), b[a.b1]));
  const Tensor lw = ops::log_softmax(ops::add_bias(ops::matmul(hidden, b[a.w2]), b[a.b2])).value();
  return {lw[0], lw[1]};
}

std::vector<double> Model::joint_step(const EncoderFrame& frame, const PredictorState& state,
                                      const std::array<double, 2>& log_weights) const {
  Tape tape(false);
  Bound b(tape, *this);
  auto head = [&](std::size_t h) {
    const HeadIds& ids = head_ids_[h];
    Var z = ops::tanh(ops::add_bias(
        ops::outer_add_rows(tape.view(frame.joint_proj[h]), tape.view(state.joint_proj[h])),
        b[ids.bias]));
    return ops::log_softmax(ops::add_bias(ops::matmul(z, b[ids.out]), b[ids.out_bias]));
  };
  if (config_.architecture == Architecture::Vanilla) {
    const Tensor& v = head(0).value();
    return {v.data(), v.data() + v.numel()};
  }
  Var lw = tape.constant(Tensor({1, 2}, std::vector<double>{log_weights[0], log_weights[1]}));
  const Tensor& v = combine_log_posteriors(table_, head(0), head(1), lw, 1).value();
  return {v.data(), v.data() + v.numel()};
}

Var Model::joint_node(Bound& b, std::size_t head, const Tensor& h_enc_t,
                      const Tensor& h_pred_u) const {
  if (h_enc_t.numel() != config_.encoder_hidden || h_pred_u.numel() != config_.prediction_hidden)
    throw DimensionError("joint: latent sizes " + shape_string(h_enc_t.shape()) + " and " +
                         shape_string(h_pred_u.shape()) + " do not match the config");
  Tape& tape = b.tape();
  Var e = tape.constant(row_tensor(h_enc_t.values()));
  Var p = tape.constant(row_tensor(h_pred_u.values()));
  return joint_head(b, head, e, p);
}

std::vector<double> Model::joint_vanilla(const Tensor& h_enc_t, const Tensor& h_pred_u) const {
  if (config_.architecture != Architecture::Vanilla)
    throw ConfigError("joint_vanilla called on a " +
                      std::string(architecture_name(config_.architecture)) + " model");
  Tape tape(false);
  Bound b(tape, *this);
  const Tensor& v = joint_node(b, 0, h_enc_t, h_pred_u).value();
  return {v.data(), v.data() + v.numel()};
}

std::vector<double> Model::joint_language(const Tensor& h_enc_t, const Tensor& h_pred_u,
                                          Language lang) const {
  if (config_.architecture == Architecture::Vanilla)
    throw ConfigError("joint_language called on a vanilla model");
  Tape tape(false);
  Bound b(tape, *this);
  const Tensor& v = joint_node(b, lang == Language::A ? 0 : 1, h_enc_t, h_pred_u).value();
  return {v.data(), v.data() + v.numel()};
}

std::array<double, 2> Model::attention_weights(const Tensor& enc, std::size_t t,
                                               std::size_t look_ahead) const {
  if (enc.rank() != 2 || t >= enc.rows())
    throw DimensionError("attention_weights: frame " + std::to_string(t) + " outside " +
                         shape_string(enc.shape()));
  Tape tape(false);
  Bound b(tape, *this);
  const Tensor& lw = attention_log_weights(b, tape.view(enc), look_ahead).value();
  return {std::exp(lw.at(t, 0)), std::exp(lw.at(t, 1))};
}

// --- combination -----------------------------------------------------------

Var combine_log_posteriors(const CombinedTable& table, Var logp_a, Var logp_b, Var log_w,
                           std::size_t rows_per_weight) {
  const Tensor& a = logp_a.value();
  const Tensor& bb = logp_b.value();
  const Tensor& w = log_w.value();
  const std::size_t na = table.table(Language::A).size();
  const std::size_t nb = table.table(Language::B).size();
  const std::size_t rows = a.rows();
  if (a.cols() != na || bb.cols() != nb || bb.rows() != rows || w.cols() != 2 ||
      rows_per_weight == 0 || w.rows() * rows_per_weight != rows) {
    throw DimensionError("combine: inconsistent shapes " + shape_string(a.shape()) + ", " +
                         shape_string(bb.shape()) + ", weights " + shape_string(w.shape()) +
                         " x " + std::to_string(rows_per_weight));
  }
  const std::size_t V = table.size();
  const std::size_t seg_b = table.segment_begin(Language::B);
  const std::size_t blank = table.blank();
  Tensor out({rows, V});
  for (std::size_t r = 0; r < rows; ++r) {
    const double wa = w.at(r / rows_per_weight, 0);
    const double wb = w.at(r / rows_per_weight, 1);
    double* o = out.data() + r * V;
    const double* ar = a.data() + r * na;
    const double* br = bb.data() + r * nb;
    for (std::size_t k = 0; k + 1 < na; ++k) o[k] = wa + ar[k];
    for (std::size_t k = 0; k + 1 < nb; ++k) o[seg_b + k] = wb + br[k];
    const double x = wa + ar[na - 1];
    const double y = wb + br[nb - 1];
    const double m = std::max(x, y);
    o[blank] = m == kNegInf ? m : m + std::log1p(std::exp(-std::abs(x - y)));
  }
  const std::size_t ia = logp_a.id(), ib = logp_b.id(), iw = log_w.id();
  return logp_a.tape().record(
      std::move(out), {logp_a, logp_b, log_w},
      [ia, ib, iw, na, nb, V, seg_b, blank, rows, rows_per_weight](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& o = t.value(self);
        const Tensor& a = t.value(ia);
        const Tensor& bb = t.value(ib);
        const Tensor& w = t.value(iw);
        const bool ga_on = t.requires_grad(ia), gb_on = t.requires_grad(ib),
                   gw_on = t.requires_grad(iw);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t wr = r / rows_per_weight;
          const double* gr = g.data() + r * V;
          const double ob = o.at(r, blank);
          double share_a = 0.0, share_b = 0.0;
          if (ob != kNegInf) {
            share_a = std::exp(w.at(wr, 0) + a.at(r, na - 1) - ob);
            share_b = std::exp(w.at(wr, 1) + bb.at(r, nb - 1) - ob);
          }
          const double gblank = gr[blank];
          if (ga_on) {
            Tensor& gA = t.grad_buffer(ia);
            for (std::size_t k = 0; k + 1 < na; ++k) gA.at(r, k) += gr[k];
            gA.at(r, na - 1) += gblank * share_a;
          }
          if (gb_on) {
            Tensor& gB = t.grad_buffer(ib);
            for (std::size_t k = 0; k + 1 < nb; ++k) gB.at(r, k) += gr[seg_b + k];
            gB.at(r, nb - 1) += gblank * share_b;
          }
          if (gw_on) {
            Tensor& gW = t.grad_buffer(iw);
            double sa = 0.0, sb = 0.0;
            for (std::size_t k = 0; k + 1 < na; ++k) sa += gr[k];
            for (std::size_t k = 0; k + 1 < nb; ++k) sb += gr[seg_b + k];
            gW.at(wr, 0) += sa + gblank * share_a;
            gW.at(wr, 1) += sb + gblank * share_b;
          }
        }
      });
}

std::vector<double> combine_posteriors(const CombinedTable& table,
                                       std::span<const double> logp_a,
                                       std::span<const double> logp_b, double w_a, double w_b) {
  if (!(w_a >= 0.0 && w_a <= 1.0) || !(w_b >= 0.0 && w_b <= 1.0))
    throw ConfigError("combine_posteriors: weights must lie in [0, 1]");
  if (std::abs(w_a + w_b - 1.0) > 1e-9)
    throw ConfigError("combine_posteriors: weights must sum to 1");
  Tape tape(false);
  Var a = tape.constant(row_tensor(logp_a));
  Var b = tape.constant(row_tensor(logp_b));
  Var w = tape.constant(Tensor({1, 2}, std::vector<double>{std::log(w_a), std::log(w_b)}));
  const Tensor& v = combine_log_posteriors(table, a, b, w, 1).value();
  return {v.data(), v.data() + v.numel()};
}

GridResult posterior_grid(const Model& model, const Tensor& features,
                          std::span<const std::size_t> labels, const ForcedWeights& forced) {
  Tape tape(false);
  Model::Bound b(tape, model);
  const Model::Forward f = model.forward(b, features, labels, forced);
  GridResult r;
  r.grid.frames = features.rows();
  r.grid.positions = labels.size() + 1;
  r.grid.log_probs = f.grid.value();
  if (model.architecture() == Architecture::MultiSoftmaxAttn && f.log_weights) {
    AttentionTrajectory traj;
    const Tensor& lw = f.log_weights->value();
    for (std::size_t t = 0; t < lw.rows(); ++t) {
      traj.w_a.push_back(std::exp(lw.at(t, 0)));
      traj.w_b.push_back(std::exp(lw.at(t, 1)));
    }
    r.trajectory = std::move(traj);
  }
  return r;
}

}  // namespace codemix
