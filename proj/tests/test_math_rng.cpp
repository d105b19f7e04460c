#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "cidml/math_util.hpp"
#include "cidml/rng.hpp"
#include "oracles.hpp"

using oracle::mp;

TEST_CASE("pairwise_sum matches a 100-digit reference on hostile inputs") {
  cidml::Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_index(400));
    std::vector<double> v(static_cast<std::size_t>(n));
    mp exact = 0;
    for (auto& x : v) {
      // Mix magnitudes so naive left-to-right summation loses digits.
      const double mag = std::pow(10.0, rng.uniform() * 16.0 - 8.0);
      x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * mag * rng.uniform();
      exact += mp(x);
    }
    const double got = cidml::pairwise_sum(v);
    CHECK(oracle::rel_err(got, exact) < 1e-12);
  }
}

TEST_CASE("pairwise_sum edge sizes") {
  CHECK(cidml::pairwise_sum(std::vector<double>{}) == 0.0);
  CHECK(cidml::pairwise_sum(std::vector<double>{3.5}) == 3.5);
  CHECK(cidml::pairwise_sum(std::vector<double>{1.0, 2.0}) == 3.0);
}

TEST_CASE("mean and sample_variance match direct formulas") {
  cidml::Rng rng(77);
  std::vector<double> v(257);
  mp s = 0;
  for (auto& x : v) {
    x = rng.normal() * 5 + 1;
    s += mp(x);
  }
  const mp mu = s / v.size();
  mp ss = 0;
  for (double x : v) ss += (mp(x) - mu) * (mp(x) - mu);
  CHECK(oracle::rel_err(cidml::mean(v), mu) < 1e-13);
  CHECK(oracle::rel_err(cidml::sample_variance(v), ss / (v.size() - 1)) <
        1e-12);
}

TEST_CASE("quantile_sorted follows the interpolating (type 7) convention") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(cidml::quantile_sorted(v, 0.0) == 1.0);
  CHECK(cidml::quantile_sorted(v, 1.0) == 4.0);
  CHECK(cidml::quantile_sorted(v, 0.5) == doctest::Approx(2.5).epsilon(1e-15));
  // q = 1/3 lands exactly on the second order statistic: h = (n-1)q = 1.
  CHECK(cidml::quantile_sorted(v, 1.0 / 3.0) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(cidml::quantile_sorted(v, 0.25) ==
        doctest::Approx(1.75).epsilon(1e-15));
  CHECK(cidml::quantile_sorted(std::vector<double>{7.0}, 0.9) == 7.0);
}

TEST_CASE("normal quantile and cdf are consistent inverses") {
  // Reference values for the standard normal quantile function.
  CHECK(cidml::normal_quantile(0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(cidml::normal_quantile(0.995) ==
        doctest::Approx(2.5758293035489004).epsilon(1e-12));
  CHECK(cidml::normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  for (double p : {0.001, 0.01, 0.2, 0.5, 0.77, 0.99, 0.9999}) {
    CHECK(cidml::normal_cdf(cidml::normal_quantile(p)) ==
          doctest::Approx(p).epsilon(1e-9));
  }
  CHECK(cidml::normal_critical_value(0.95) ==
        doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(cidml::normal_critical_value(0.99) ==
        doctest::Approx(2.5758293035489004).epsilon(1e-12));
}

TEST_CASE("binomial_half_cdf matches exact multiprecision sums") {
  for (int n : {1, 2, 5, 13, 40, 200}) {
    mp total = boost::multiprecision::pow(mp(2), n);
    mp run = 0;
    mp binom = 1;  // C(n, 0)
    for (int k = 0; k <= n; ++k) {
      run += binom;
      const mp expect = run / total;
      CHECK(oracle::rel_err(cidml::binomial_half_cdf(k, n), expect) < 1e-12);
      binom = binom * (n - k) / (k + 1);
    }
  }
  CHECK(cidml::binomial_half_cdf(5, 5) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("derive_seed separates streams deterministically") {
  CHECK(cidml::derive_seed(42, 0) == cidml::derive_seed(42, 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 100; ++s) seen.insert(cidml::derive_seed(7, s));
  CHECK(seen.size() == 100);
  CHECK(cidml::derive_seed(1, 0) != cidml::derive_seed(2, 0));
}

TEST_CASE("Rng draws are reproducible and in range") {
  cidml::Rng a(9), b(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  cidml::Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t idx = c.uniform_index(17);
    CHECK(idx < 17);
  }
}

TEST_CASE("Rng shuffle is a permutation") {
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
  cidml::Rng rng(5);
  auto w = v;
  rng.shuffle(w);
  CHECK(w != v);  // 1/100! chance of failing honestly
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}

TEST_CASE("Rng normal has roughly standard moments") {
  cidml::Rng rng(123);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.03);
}
