#include <cmath>

#include "codemix/kernels/kernels.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace codemix;
namespace k = codemix::kernels;

namespace {

std::vector<double> randv(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

// Naive triple loop.
std::vector<double> gemm_ref(std::size_t m, std::size_t n, std::size_t kk,
                             const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) c[i * n + j] += a[i * kk + p] * b[p * n + j];
  return c;
}

double maxdiff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar gemm variants agree with the triple loop") {
  Rng rng(11);
  const auto& s = k::scalar_table();
  for (auto [m, n, kk] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {8, 13, 17}, {2, 33, 9}}) {
    auto a = randv(m * kk, rng), b = randv(kk * n, rng);
    auto ref = gemm_ref(m, n, kk, a, b);
    std::vector<double> c(m * n, 0.0);
    s.gemm_nn(m, n, kk, a.data(), kk, b.data(), n, c.data(), n, false);
    CHECK(maxdiff(c, ref) < 1e-12);
    // B^T stored as [n x k]
    std::vector<double> bt(n * kk);
    for (std::size_t p = 0; p < kk; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];
    std::vector<double> c2(m * n, 0.0);
    s.gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, c2.data(), n, false);
    CHECK(maxdiff(c2, ref) < 1e-12);
    // A^T stored as [k x m]
    std::vector<double> at(kk * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < kk; ++p) at[p * m + i] = a[i * kk + p];
    std::vector<double> c3(m * n, 1.0);
    s.gemm_tn(m, n, kk, at.data(), m, b.data(), n, c3.data(), n, true);
    for (double& x : c3) x -= 1.0;
    CHECK(maxdiff(c3, ref) < 1e-12);
  }
}

TEST_CASE("avx2 kernels match the scalar reference") {
  const k::KernelTable* v = k::avx2_table();
  if (!v) {
    MESSAGE("AVX2 variant unavailable on this machine; equivalence not exercised");
    return;
  }
  const auto& s = k::scalar_table();
  Rng rng(12);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 15u, 64u, 129u}) {
    auto x = randv(n, rng), y = randv(n, rng), z = randv(n, rng);
    CHECK(std::abs(s.dot(n, x.data(), y.data()) - v->dot(n, x.data(), y.data())) < 1e-12);
    auto y1 = y, y2 = y;
    s.axpy(n, 0.7, x.data(), y1.data());
    v->axpy(n, 0.7, x.data(), y2.data());
    CHECK(maxdiff(y1, y2) < 1e-14);
    std::vector<double> o1(n), o2(n);
    s.add(n, x.data(), y.data(), o1.data());
    v->add(n, x.data(), y.data(), o2.data());
    CHECK(o1 == o2);
    s.mul(n, x.data(), y.data(), o1.data());
    v->mul(n, x.data(), y.data(), o2.data());
    CHECK(o1 == o2);
    y1 = y;
    y2 = y;
    s.mul_acc(n, x.data(), z.data(), y1.data());
    v->mul_acc(n, x.data(), z.data(), y2.data());
    CHECK(maxdiff(y1, y2) < 1e-14);
    y1 = y;
    y2 = y;
    s.scale(n, -1.3, y1.data());
    v->scale(n, -1.3, y2.data());
    CHECK(y1 == y2);

    auto p1 = x, p2 = x, m1 = y, m2 = y;
    std::vector<double> v1(n, 0.1), v2(n, 0.1);
    s.adam_update(n, p1.data(), z.data(), m1.data(), v1.data(), 0.9, 0.999, 1e-3, 0.01, 1e-8);
    v->adam_update(n, p2.data(), z.data(), m2.data(), v2.data(), 0.9, 0.999, 1e-3, 0.01, 1e-8);
    CHECK(maxdiff(p1, p2) < 1e-14);
    CHECK(maxdiff(m1, m2) < 1e-14);
    CHECK(maxdiff(v1, v2) < 1e-14);
  }
  for (auto [m, n, kk] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {8, 13, 17}, {5, 64, 33}}) {
    auto a = randv(m * kk, rng), b = randv(kk * n, rng), bt = randv(n * kk, rng),
         at = randv(kk * m, rng);
    std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
    s.gemm_nn(m, n, kk, a.data(), kk, b.data(), n, c1.data(), n, true);
    v->gemm_nn(m, n, kk, a.data(), kk, b.data(), n, c2.data(), n, true);
    CHECK(maxdiff(c1, c2) < 1e-12);
    s.gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, c1.data(), n, false);
    v->gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, c2.data(), n, false);
    CHECK(maxdiff(c1, c2) < 1e-12);
    s.gemm_tn(m, n, kk, at.data(), m, b.data(), n, c1.data(), n, false);
    v->gemm_tn(m, n, kk, at.data(), m, b.data(), n, c2.data(), n, false);
    CHECK(maxdiff(c1, c2) < 1e-12);
  }
}

TEST_CASE("a batched gemm row equals the row computed alone") {
  Rng rng(13);
  std::vector<const k::KernelTable*> tables{&k::scalar_table()};
  if (k::avx2_table()) tables.push_back(k::avx2_table());
  for (const k::KernelTable* t : tables) {
    const std::size_t m = 6, n = 19, kk = 11;
    auto a = randv(m * kk, rng), b = randv(kk * n, rng), bt = randv(n * kk, rng);
    std::vector<double> all(m * n), one(n);
    t->gemm_nn(m, n, kk, a.data(), kk, b.data(), n, all.data(), n, false);
    t->gemm_nn(1, n, kk, a.data() + 4 * kk, kk, b.data(), n, one.data(), n, false);
    CHECK(std::equal(one.begin(), one.end(), all.begin() + 4 * n));
    t->gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, all.data(), n, false);
    t->gemm_nt(1, n, kk, a.data() + 2 * kk, kk, bt.data(), kk, one.data(), n, false);
    CHECK(std::equal(one.begin(), one.end(), all.begin() + 2 * n));
  }
}

TEST_CASE("set_active switches the table") {
  const k::KernelTable& before = k::active();
  k::set_active(k::scalar_table());
  CHECK(k::active().name == k::scalar_table().name);
  k::set_active(before);
  CHECK(k::active().name == before.name);
}

}
