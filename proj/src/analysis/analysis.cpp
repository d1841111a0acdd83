#include "codemix/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "codemix/errors.hpp"
#include "codemix/numerics/logmath.hpp"

namespace codemix {

TrajectoryReport trajectory(const Model& model, const Tensor& features,
                            const DecodeOptions& options) {
  if (model.architecture() != Architecture::MultiSoftmaxAttn)
    throw ConfigError("trajectories need a multisoftmax_attn model");
  const DecodeResult d = beam_search(model, features, options);
  return TrajectoryReport{*d.trajectory, words_with_spans(model.table(), d.best())};
}

std::vector<double> weight_population(const Model& model, std::span<const Utterance> utterances) {
  if (model.architecture() != Architecture::MultiSoftmaxAttn)
    throw ConfigError("weight populations need a multisoftmax_attn model");
  std::vector<double> out;
  for (const Utterance& u : utterances) {
    Tape tape(false);
    Model::Bound b(tape, model);
    Var enc = model.encode(b, u.features);
    const Tensor& lw = model.attention_log_weights(b, enc, model.look_ahead()).value();
    for (std::size_t t = 0; t < lw.rows(); ++t) out.push_back(std::exp(lw.at(t, 0)));
  }
  return out;
}

namespace {

double log_normal(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return sorted[lo] + f * (sorted[hi] - sorted[lo]);
}

}  // namespace

double GmmFit::pdf(double x) const {
  double p = 0.0;
  for (const GmmComponent& c : components)
    p += c.weight * std::exp(log_normal(x, c.mean, c.variance));
  return p;
}

GmmFit fit_gmm(std::span<const double> data, std::size_t K, std::uint64_t seed) {
  if (K == 0) throw DataError("fit_gmm: need at least one component");
  if (data.size() < K)
    throw DataError("fit_gmm: " + std::to_string(data.size()) + " points cannot support " +
                    std::to_string(K) + " components");
  for (double x : data)
    if (!std::isfinite(x)) throw DataError("fit_gmm: non-finite data point");
  const std::size_t N = data.size();
  std::vector<double> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double x : data) mean += x;
  mean /= static_cast<double>(N);
  double var = 0.0;
  for (double x : data) var += (x - mean) * (x - mean);
  var = std::max(var / static_cast<double>(N), kVarianceFloor);

  GmmFit fit;
  fit.seed = seed;
  for (std::size_t k = 0; k < K; ++k)
    fit.components.push_back(GmmComponent{
        quantile(sorted, (static_cast<double>(k) + 0.5) / static_cast<double>(K)), var,
        1.0 / static_cast<double>(K)});

  std::vector<double> resp(N * K);
  double previous = kLogZero;
  for (std::size_t it = 0; it < 500; ++it) {
    // E step; the log-likelihood is that of the parameters entering this step.
    double ll = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double total = kLogZero;
      for (std::size_t k = 0; k < K; ++k) {
        const GmmComponent& c = fit.components[k];
        resp[i * K + k] = std::log(c.weight) + log_normal(data[i], c.mean, c.variance);
        total = log_add(total, resp[i * K + k]);
      }
      for (std::size_t k = 0; k < K; ++k) resp[i * K + k] = std::exp(resp[i * K + k] - total);
      ll += total;
    }
    fit.log_likelihood.push_back(ll);
    if (it > 0 && ll - previous < 1e-8) break;
    previous = ll;
    // M step.
    for (std::size_t k = 0; k < K; ++k) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        nk += resp[i * K + k];
        sx += resp[i * K + k] * data[i];
      }
      GmmComponent& c = fit.components[k];
      if (nk <= 0.0) {
        c.weight = 0.0;
        continue;
      }
      c.mean = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < N; ++i) sv += resp[i * K + k] * (data[i] - c.mean) * (data[i] - c.mean);
      c.variance = std::max(sv / nk, kVarianceFloor);
      c.weight = nk / static_cast<double>(N);
    }
    ++fit.iterations;
  }
  std::sort(fit.components.begin(), fit.components.end(),
            [](const GmmComponent& a, const GmmComponent& b) { return a.mean < b.mean; });
  return fit;
}

AttentionTrajectory smooth_trajectory(const AttentionTrajectory& traj, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("smoothing alpha must lie in [0, 1]");
  AttentionTrajectory out;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const double w = t == 0 ? traj.w_a[0] : alpha * traj.w_a[t] + (1.0 - alpha) * out.w_a[t - 1];
    out.w_a.push_back(w);
    out.w_b.push_back(1.0 - w);
  }
  return out;
}

std::vector<double> density_grid() {
  std::vector<double> xs;
  for (int i = -200; i <= 2200; ++i) xs.push_back(i / 2000.0);
  return xs;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_trajectory_csv(const TrajectoryReport& report, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "frame,w_A,w_B,word\n";
  char buf[96];
  for (std::size_t t = 0; t < report.weights.size(); ++t) {
    std::string word;
    for (const DecodedWord& w : report.words)
      if (t >= w.first_frame && t <= w.last_frame) word = w.word.text;
    std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,", t, report.weights.w_a[t], report.weights.w_b[t]);
    out << buf << word << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

void write_density_csv(const std::map<Condition, GmmFit>& fits, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "x";
  for (const auto& [c, fit] : fits) out << ',' << condition_name(c);
  out << '\n';
  char buf[48];
  for (double x : density_grid()) {
    std::snprintf(buf, sizeof buf, "%.4f", x);
    out << buf;
    for (const auto& [c, fit] : fits) {
      std::snprintf(buf, sizeof buf, ",%.9g", fit.pdf(x));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

void write_gmm_csv(const std::map<Condition, GmmFit>& fits, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "condition,component,mean,variance,weight\n";
  char buf[128];
  for (const auto& [c, fit] : fits) {
    for (std::size_t k = 0; k < fit.components.size(); ++k) {
      const GmmComponent& g = fit.components[k];
      std::snprintf(buf, sizeof buf, ",%zu,%.9f,%.9g,%.9f\n", k, g.mean, g.variance, g.weight);
      out << condition_name(c) << buf;
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace codemix
