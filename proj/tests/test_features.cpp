#include <cmath>
#include <random>

#include "doctest.h"
#include "spkbal/features.hpp"

using namespace spkbal;

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(1127.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.17687).epsilon(1e-7));
  CHECK(hz_to_mel(200.0) < hz_to_mel(300.0));
  CHECK_THROWS_AS(hz_to_mel(-1.0), ValidationError);
  CHECK(mel_to_hz(hz_to_mel(123.4)) == doctest::Approx(123.4).epsilon(1e-12));
}

TEST_CASE("F0 quantization boundaries") {
  const FeatureConfig cfg;
  CHECK(quantize_f0(std::nullopt, cfg) == kUnvoicedClass);
  CHECK(quantize_f0(cfg.f0_min, cfg) == 1);
  CHECK(quantize_f0(cfg.f0_max, cfg) == cfg.n_f0_bins);
  CHECK(quantize_f0(10.0, cfg) == 1);
  CHECK(quantize_f0(5000.0, cfg) == cfg.n_f0_bins);
  CHECK_FALSE(dequantize_f0(0, cfg).has_value());
  CHECK_THROWS_AS(dequantize_f0(-1, cfg), ValidationError);
  CHECK_THROWS_AS(dequantize_f0(cfg.n_f0_bins + 1, cfg), ValidationError);

  const double first = *dequantize_f0(1, cfg);
  CHECK(first > cfg.f0_min);
  CHECK(first < cfg.f0_max);
}

TEST_CASE("F0 class of 200 Hz matches a linear scan over bin edges") {
  FeatureConfig cfg;
  cfg.f0_min = 50.0;
  cfg.f0_max = 500.0;
  cfg.n_f0_bins = 511;
  // Scan oracle: edges computed independently from the mel endpoints.
  const double lo = 1127.0 * std::log(1.0 + 50.0 / 700.0);
  const double hi = 1127.0 * std::log(1.0 + 500.0 / 700.0);
  const double m = 1127.0 * std::log(1.0 + 200.0 / 700.0);
  int scanned = -1;
  for (int b = 0; b < 511; ++b) {
    const double e0 = lo + (hi - lo) * b / 511.0;
    const double e1 = lo + (hi - lo) * (b + 1) / 511.0;
    if (m >= e0 && m < e1) scanned = b + 1;
  }
  REQUIRE(scanned > 0);
  CHECK(quantize_f0(200.0, cfg) == scanned);
  CHECK(scanned == 199);
}

TEST_CASE("quantization properties over random voiced values") {
  const FeatureConfig cfg;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(cfg.f0_min, cfg.f0_max);
  int prev_class = 0;
  double prev = 0.0;
  std::vector<double> values;
  for (int i = 0; i < 1000; ++i) values.push_back(u(rng));
  std::sort(values.begin(), values.end());
  for (double v : values) {
    const int c = quantize_f0(v, cfg);
    const F0 back = dequantize_f0(c, cfg);
    REQUIRE(back.has_value());
    CHECK(quantize_f0(back, cfg) == c);
    const HzInterval edges = f0_bin_edges(c, cfg);
    CHECK(v >= edges.lo - 1e-9);
    CHECK(v <= edges.hi + 1e-9);
    if (v > prev) CHECK(c >= prev_class);
    prev_class = c;
    prev = v;
  }
}
