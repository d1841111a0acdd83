#pragma once
// Language-weight analytics: per-utterance trajectories with word spans,
// pooled weight populations, 1-D Gaussian mixture fits and EMA smoothing.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "codemix/decoder/decoder.hpp"

namespace codemix {

struct TrajectoryReport {
  AttentionTrajectory weights;
  std::vector<DecodedWord> words;  // decoded words with their emission frame spans
};

// Decodes with `options` and pairs the weights with the decoded words.
// Throws ConfigError unless the model is multisoftmax_attn.
TrajectoryReport trajectory(const Model& model, const Tensor& features,
                            const DecodeOptions& options = {});

// w_A over every frame of every utterance.
std::vector<double> weight_population(const Model& model, std::span<const Utterance> utterances);

struct GmmComponent {
  double mean = 0.0;
  double variance = 1.0;
  double weight = 1.0;
};

struct GmmFit {
  std::vector<GmmComponent> components;  // sorted by mean
  std::vector<double> log_likelihood;    // at the initial parameters, then after each M step
  std::size_t iterations = 0;
  std::uint64_t seed = 0;

  double pdf(double x) const;
};

inline constexpr double kVarianceFloor = 1e-6;

// EM from means at the (k + 0.5) / K quantiles, equal weights and the sample
// variance. Stops when the log-likelihood gains less than 1e-8 or after 500
// iterations. Throws DataError when data.size() < K or K == 0. The
// initialisation is deterministic; `seed` is recorded for provenance.
GmmFit fit_gmm(std::span<const double> data, std::size_t components, std::uint64_t seed = 0);

// s[0] = w[0]; s[t] = alpha w[t] + (1 - alpha) s[t-1], applied to w_A with
// w_B = 1 - w_A. Throws ConfigError for alpha outside [0, 1].
AttentionTrajectory smooth_trajectory(const AttentionTrajectory& traj, double alpha);

// Evaluation points for density exports: [-0.1, 1.1] in steps of 1/2000.
std::vector<double> density_grid();

// frame,w_A,w_B,word
void write_trajectory_csv(const TrajectoryReport& report, const std::filesystem::path& path);
// x,<condition>... with one pdf column per fit.
void write_density_csv(const std::map<Condition, GmmFit>& fits, const std::filesystem::path& path);
// Component table: condition,component,mean,variance,weight
void write_gmm_csv(const std::map<Condition, GmmFit>& fits, const std::filesystem::path& path);

}  // namespace codemix
