#include <cmath>
#include <filesystem>
#include <fstream>

#include "codemix/analysis/analysis.hpp"
#include "codemix/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace codemix;

namespace {

ModelConfig tiny_attn() {
  ModelConfig c;
  c.input_dim = 6;
  c.encoder_layers = 1;
  c.encoder_hidden = 8;
  c.prediction_hidden = 7;
  c.joint_hidden = 9;
  c.graphemes = {default_graphemes(Language::A, 3), default_graphemes(Language::B, 3)};
  c.attention = AttentionConfig{4, 5, 2};
  return c.with_architecture(Architecture::MultiSoftmaxAttn);
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("gmm: one component is the sample mean and variance") {
  const std::vector<double> x{0.1, 0.4, 0.35, 0.9, 0.2};
  const GmmFit f = fit_gmm(x, 1);
  REQUIRE(f.components.size() == 1);
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v / 5.0;
  for (double v : x) var += (v - mean) * (v - mean) / 5.0;
  CHECK(f.components[0].mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(f.components[0].variance == doctest::Approx(var).epsilon(1e-9));
  CHECK(f.components[0].weight == doctest::Approx(1.0));
}

TEST_CASE("gmm: two separated clusters") {
  const std::vector<double> x{0, 0, 0, 1, 1, 1};
  const GmmFit f = fit_gmm(x, 2, 11);
  REQUIRE(f.components.size() == 2);
  CHECK(f.components[0].mean == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(f.components[1].mean == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(f.components[0].weight == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(f.components[1].variance >= kVarianceFloor);
  CHECK(f.seed == 11);
}

TEST_CASE("gmm: log-likelihood never decreases") {
  Rng rng(5);
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) x.push_back(i % 3 == 0 ? 0.2 + 0.1 * standard_normal(rng) : 0.8 + 0.05 * standard_normal(rng));
  const GmmFit f = fit_gmm(x, 3);
  REQUIRE(f.log_likelihood.size() >= 2);
  for (std::size_t i = 1; i < f.log_likelihood.size(); ++i)
    CHECK(f.log_likelihood[i] >= f.log_likelihood[i - 1] - 1e-9);
  CHECK(f.iterations <= 500);
  for (std::size_t k = 1; k < f.components.size(); ++k)
    CHECK(f.components[k - 1].mean <= f.components[k].mean);
  CHECK_THROWS_AS(fit_gmm(std::vector<double>{0.5}, 2), DataError);
  CHECK_THROWS_AS(fit_gmm(x, 0), DataError);
}

TEST_CASE("gmm pdf integrates to one over the density grid") {
  const std::vector<double> x{0.1, 0.15, 0.2, 0.8, 0.85, 0.9, 0.5};
  const GmmFit f = fit_gmm(x, 2);
  const std::vector<double> g = density_grid();
  CHECK(g.front() == doctest::Approx(-0.1));
  CHECK(g.back() == doctest::Approx(1.1));
  CHECK(g.size() == 2401);
  double area = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(f.pdf(g[i]) >= 0.0);
    if (i > 0) area += 0.5 * (f.pdf(g[i]) + f.pdf(g[i - 1])) * (g[i] - g[i - 1]);
  }
  CHECK(std::abs(area - 1.0) < 0.02);
}

TEST_CASE("smoothing") {
  AttentionTrajectory t{{0.8, 0.2, 0.9, 0.1}, {0.2, 0.8, 0.1, 0.9}};
  const AttentionTrajectory id = smooth_trajectory(t, 1.0);
  CHECK(id.w_a == t.w_a);
  const AttentionTrajectory flat = smooth_trajectory(t, 0.0);
  for (double v : flat.w_a) CHECK(v == 0.8);
  const AttentionTrajectory half = smooth_trajectory(t, 0.5);
  const double want[] = {0.8, 0.5, 0.7, 0.4};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(half.w_a[i] == doctest::Approx(want[i]));
    CHECK(half.w_a[i] + half.w_b[i] == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(smooth_trajectory(t, 1.5), ConfigError);
}

TEST_CASE("trajectory export") {
  const Model m(tiny_attn(), 2);
  Rng rng(3);
  const Tensor f = testutil::random_tensor({13, 6}, rng);
  const TrajectoryReport r = trajectory(m, f);
  CHECK(r.weights.size() == 13);
  const auto p = std::filesystem::temp_directory_path() / "codemix_traj.csv";
  write_trajectory_csv(r, p);
  CHECK(count_lines(p) == 14);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  CHECK(header == "frame,w_A,w_B,word");
  std::filesystem::remove(p);

  Model z(tiny_attn(), 2);
  for (Parameter& q : z.params())
    if (q.name.rfind("attention.ffn.", 0) == 0) q.value = Tensor(q.value.shape());
  for (double w : trajectory(z, f).weights.w_a) CHECK(w == doctest::Approx(0.5));

  ModelConfig plain = tiny_attn().with_architecture(Architecture::MultiSoftmax);
  CHECK_THROWS_AS(trajectory(Model(plain, 2), f), ConfigError);
}

TEST_CASE("density and gmm tables") {
  std::map<Condition, GmmFit> fits;
  fits[Condition::MonoA] = fit_gmm(std::vector<double>{0.9, 0.95, 0.8, 0.85}, 2);
  fits[Condition::Mixed] = fit_gmm(std::vector<double>{0.1, 0.9, 0.2, 0.8}, 2);
  const auto dir = std::filesystem::temp_directory_path();
  write_density_csv(fits, dir / "codemix_density.csv");
  write_gmm_csv(fits, dir / "codemix_gmm.csv");
  CHECK(count_lines(dir / "codemix_density.csv") == 2402);
  CHECK(count_lines(dir / "codemix_gmm.csv") == 5);
  std::filesystem::remove(dir / "codemix_density.csv");
  std::filesystem::remove(dir / "codemix_gmm.csv");
}

}
