#pragma once
// Bilingual transducer: shared LSTM encoder and prediction network with one
// of three output configurations.
//
//   vanilla            one joint + softmax over the combined symbol set
//   multisoftmax       one joint per language; posteriors scaled by 0.5 and
//                      concatenated (shared blank summed)
//   multisoftmax_attn  as multisoftmax, but the per-frame language weights
//                      come from self-attention over encoder frames
//
// Frames and label positions are 0-based throughout: t in [0, T), u in [0, U].

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "codemix/model/config.hpp"
#include "codemix/numerics/ops.hpp"
#include "codemix/numerics/tape.hpp"

namespace codemix {

// Named parameters in a fixed order. Addresses are stable for the lifetime
// of the set, so tapes may hold pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = default;
  ParameterSet& operator=(const ParameterSet&) = default;

  std::size_t add(std::string name, Tensor value);
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t num_scalars() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-frame language weights.
struct AttentionTrajectory {
  std::vector<double> w_a;
  std::vector<double> w_b;
  std::size_t size() const { return w_a.size(); }
};

// log p[t][u][k] stored as rows t * (U + 1) + u.
struct PosteriorGrid {
  std::size_t frames = 0;     // T
  std::size_t positions = 0;  // U + 1
  Tensor log_probs;           // [T (U+1) x V]

  std::size_t vocab() const { return log_probs.cols(); }
  double at(std::size_t t, std::size_t u, std::size_t k) const {
    return log_probs.at(t * positions + u, k);
  }
  std::span<const double> slice(std::size_t t, std::size_t u) const {
    return log_probs.row(t * positions + u);
  }
};

// Language weights to impose instead of the architecture's own.
using ForcedWeights = std::optional<std::array<double, 2>>;

// Recurrent state of a stack of LSTM layers.
struct LstmState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

// Prediction network state after consuming a label prefix, plus the joint
// projections of its output (one per output head).
struct PredictorState {
  std::size_t length = 0;
  LstmState lstm;
  Tensor output;                    // [1 x prediction_hidden]
  std::vector<Tensor> joint_proj;   // per head, [1 x joint_hidden]
};

// Encoder-side per-frame quantities the joint and attention consume.
struct EncoderFrame {
  Tensor output;                    // [1 x encoder_hidden]
  std::vector<Tensor> joint_proj;   // per head, [1 x joint_hidden]
  Tensor query, key, value;         // attention projections; empty without attention
};

class Model {
 public:
  // Parameters drawn uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from `seed`.
  Model(ModelConfig config, std::uint64_t seed);
  // All parameters set to zero.
  static Model zeros(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const CombinedTable& table() const { return table_; }
  Architecture architecture() const { return config_.architecture; }
  std::size_t num_heads() const {
    return config_.architecture == Architecture::Vanilla ? 1 : 2;
  }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Names of the parameters this configuration owns, in manifest order.
  static std::vector<std::pair<std::string, Shape>> parameter_manifest(const ModelConfig& c);

  // --- tape (training / analysis) path -------------------------------

  // Binds parameters to a tape: tracked when the tape records gradients,
  // borrowed read-only otherwise.
  class Bound {
   public:
    Bound(Tape& tape, Model& model);
    Bound(Tape& tape, const Model& model);
    Var operator[](std::size_t param_index);
    Tape& tape() { return tape_; }

   private:
    Tape& tape_;
    const Model& model_;
    Model* mutable_model_ = nullptr;
    std::vector<Var> vars_;
  };

  // [T x encoder_hidden]; row t depends on features[0..t] only.
  Var encode(Bound& b, const Tensor& features) const;
  // [(U + 1) x prediction_hidden]; row u depends on labels[0..u) only.
  Var predict(Bound& b, std::span<const std::size_t> labels) const;
  // Per-row log-probs of one output head over its vocabulary; rows are
  // t * P + u for enc [T x H] and pred [P x H].
  Var joint_head(Bound& b, std::size_t head, Var enc, Var pred) const;
  // [T x 2] log language weights.
  Var attention_log_weights(Bound& b, Var enc, std::size_t look_ahead) const;

  struct Forward {
    Var encoder;
    Var prediction;
    Var grid;                        // [T (U+1) x |combined|]
    std::optional<Var> log_weights;  // [T x 2] for multisoftmax(_attn)
  };
  Forward forward(Bound& b, const Tensor& features, std::span<const std::size_t> labels,
                  const ForcedWeights& forced = std::nullopt) const;

  // --- incremental (decoding) path -----------------------------------
  // Each step reproduces the corresponding row of the tape path bit for bit.

  LstmState initial_encoder_state() const;
  EncoderFrame encoder_step(LstmState& state, std::span<const double> frame) const;

  PredictorState initial_predictor_state() const;
  PredictorState advance(const PredictorState& state, std::size_t label) const;

  // Log weights for frame t from the projections of frames [0, visible).
  std::array<double, 2> attention_log_weights(const std::vector<EncoderFrame>& frames,
                                              std::size_t t, std::size_t visible) const;

  // Combined log-probs at one lattice node. log_weights is ignored for vanilla.
  std::vector<double> joint_step(const EncoderFrame& frame, const PredictorState& state,
                                 const std::array<double, 2>& log_weights) const;

  // Single-node joints on raw latent rows. joint_vanilla requires the vanilla
  // architecture; joint_language requires one of the multi-softmax ones.
  std::vector<double> joint_vanilla(const Tensor& h_enc_t, const Tensor& h_pred_u) const;
  std::vector<double> joint_language(const Tensor& h_enc_t, const Tensor& h_pred_u,
                                     Language lang) const;

  // Linear (w_A, w_B) for frame t of an encoder output [T x H].
  std::array<double, 2> attention_weights(const Tensor& enc, std::size_t t,
                                          std::size_t look_ahead) const;

  // Look-ahead from the attention config, or 0 without attention.
  std::size_t look_ahead() const;
  // Changes the attention look-ahead; ConfigError without attention.
  void set_look_ahead(std::size_t look_ahead);

 private:
  struct LstmIds {
    std::size_t wx, wh, bias;
  };
  struct HeadIds {
    std::size_t enc_proj, pred_proj, bias, out, out_bias;
  };
  struct AttnIds {
    std::size_t query, key, value, w1, b1, w2, b2;
  };

  Model(ModelConfig config, std::nullptr_t);
  void build_ids();
  Var run_lstm(Bound& b, Var inputs, const std::vector<LstmIds>& layers) const;
  Var joint_node(Bound& b, std::size_t head, const Tensor& h_enc_t, const Tensor& h_pred_u) const;
  Var combine(Bound& b, Var logp_a, Var logp_b, Var log_w, std::size_t rows_per_weight) const;

  ModelConfig config_;
  CombinedTable table_;
  ParameterSet params_;
  std::vector<LstmIds> encoder_ids_;
  std::vector<LstmIds> prediction_ids_;
  std::size_t embedding_id_ = 0, start_id_ = 0;
  std::vector<HeadIds> head_ids_;
  std::optional<AttnIds> attn_ids_;
};

// Fused weighted concatenation on the tape:
//   combined[seg_A + k] = log_w[r][0] + logp_a[r][k]   (k non-blank in A)
//   combined[seg_B + k] = log_w[r][1] + logp_b[r][k]   (k non-blank in B)
//   combined[blank]     = logaddexp(log_w0 + logp_a[blank], log_w1 + logp_b[blank])
// with weight row r / rows_per_weight for output row r.
Var combine_log_posteriors(const CombinedTable& table, Var logp_a, Var logp_b, Var log_w,
                           std::size_t rows_per_weight);

// Linear-domain convenience over one node: weights must lie in [0, 1] and
// sum to 1. Returns combined log-probs.
std::vector<double> combine_posteriors(const CombinedTable& table,
                                       std::span<const double> logp_a,
                                       std::span<const double> logp_b, double w_a, double w_b);

// Full T x (U + 1) grid and, with attention, the weight trajectory.
struct GridResult {
  PosteriorGrid grid;
  std::optional<AttentionTrajectory> trajectory;
};
GridResult posterior_grid(const Model& model, const Tensor& features,
                          std::span<const std::size_t> labels,
                          const ForcedWeights& forced = std::nullopt);

}  // namespace codemix
