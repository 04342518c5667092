// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: spkbal_acceptance [criterion ...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spkbal/ensemble.hpp"
#include "spkbal/evaluation.hpp"
#include "spkbal/harness.hpp"
#include "spkbal/train.hpp"
#include "test_util.hpp"

using namespace spkbal;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0: no runtime limit
  std::function<Outcome()> check;
};

struct Stats {
  double sum = 0.0;
  double sum_sq = 0.0;
  int n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return sum / n; }
  double sd() const { return std::sqrt(std::max(0.0, (sum_sq - sum * sum / n) / (n - 1))); }
};

// ---------------------------------------------------------------------------

Outcome bootstrap_vs_table() {
  const std::vector<std::vector<int>> sessions = {
      {728, 938, 1227, 1341, 1444, 1901, 2088, 2179, 2320, 2532},
      {729, 955, 1214, 1340, 1442, 1892, 2074, 2185, 2312, 2516},
      {722, 944, 1242, 1329, 1418, 1916, 2122, 2186, 2325, 2554}};
  const std::vector<int> union_row = {735, 994, 1391, 1559, 1742, 2869, 3541, 3807, 4424, 5630};
  const std::size_t draws = 3000;
  const Corpus corpus = test_util::reference_corpus();
  const std::size_t K = test_util::kReferenceTrain.size();

  std::vector<Stats> single(K);
  std::vector<Stats> joint(K);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<TrainingSet> sets;
    for (std::uint64_t s = 0; s < 3; ++s) {
      sets.push_back(build_bootstrap(corpus, draws, 1000 * seed + s));
      for (std::size_t k = 0; k < K; ++k) single[k].add(static_cast<double>(sets.back().unique_counts[k]));
    }
    const std::vector<std::size_t> u = union_unique(sets);
    for (std::size_t k = 0; k < K; ++k) joint[k].add(static_cast<double>(u[k]));
  }

  Outcome o{true, {}};
  double worst_rel = 0.0;
  double worst_z = 0.0;
  std::string worst_z_at;
  for (std::size_t k = 0; k < K; ++k) {
    const double n = test_util::kReferenceTrain[k];
    const double e1 = oracle::expected_unique(n, 3000.0);
    const double e3 = oracle::expected_unique(n, 9000.0);
    worst_rel = std::max({worst_rel, std::abs(single[k].mean() - e1) / e1, std::abs(joint[k].mean() - e3) / e3});
    const auto z_of = [](double observed, const Stats& s) {
      const double diff = std::abs(observed - s.mean());
      if (s.sd() == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
      return diff / s.sd();
    };
    for (std::size_t r = 0; r < 3; ++r) {
      const double z = z_of(sessions[r][k], single[k]);
      if (z > worst_z) {
        worst_z = z;
        worst_z_at = test_util::kReferenceIds[k] + "/session" + std::to_string(r + 1);
      }
    }
    const double z = z_of(union_row[k], joint[k]);
    if (z > worst_z) {
      worst_z = z;
      worst_z_at = test_util::kReferenceIds[k] + "/union";
    }
  }
  o.pass = worst_rel <= 0.015 && worst_z <= 3.0;
  std::ostringstream d;
  d << "max |mean-closed form|/closed form = " << worst_rel << " (<= 0.015); max |table-mean|/sd = " << worst_z
    << " at " << worst_z_at << " (<= 3)";
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------------------

Outcome set_sizes() {
  const auto dir = test_util::temp_dir("acceptance_sizes");
  save_corpus(test_util::reference_corpus(), dir);
  const Corpus corpus = load_corpus(dir, true);
  const std::size_t un = build_undersampled(corpus, 1).size();
  const std::size_t mu = build_pooled(corpus).size();
  const std::size_t ov = build_oversampled(corpus, 1).size();
  std::set<std::size_t> e;
  for (std::uint64_t s = 1; s <= 3; ++s) e.insert(build_bootstrap(corpus, 3000, s).size());
  Outcome o;
  o.pass = un == 7350 && mu == 32076 && ov == 87500 && e == std::set<std::size_t>{30000};
  std::ostringstream d;
  d << "UN=" << un << " MU=" << mu << " OV=" << ov << " E=" << *e.begin() << (e.size() == 1 ? "" : " (varies)");
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------------------

NetworkTopology random_topology(std::mt19937_64& rng, Variant v) {
  const auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const auto even = [&](int lo, int hi) { return 2 * pick(lo / 2, hi / 2); };
  NetworkTopology t;
  t.variant = v;
  t.input_dim = pick(1, 6);
  t.n_speakers = pick(0, 4);
  t.layers = {{LayerKind::FeedForward, pick(1, 16)}, {LayerKind::FeedForward, pick(1, 16)},
              {LayerKind::Bidirectional, even(2, 16)}};
  if (v == Variant::SAR) {
    t.layers.push_back({LayerKind::Bidirectional, even(2, 16)});
    t.output_dim = pick(1, 6);
  } else {
    t.layers.push_back({LayerKind::Feedback, pick(1, 16)});
    t.output_dim = pick(2, 8);
    t.feedback_embed_dim = pick(1, 4);
  }
  t.validate();
  return t;
}

Outcome gradients() {
  std::mt19937_64 rng(20240601);
  Index params = 0;
  Index failed = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    for (Variant v : {Variant::SAR, Variant::DAR}) {
      const NetworkTopology topo = random_topology(rng, v);
      AcousticNetwork<double> net(topo);
      net.initialize(rng());
      const Index T = std::uniform_int_distribution<Index>(1, 8)(rng);
      const int speaker = topo.n_speakers > 0 ? std::uniform_int_distribution<int>(0, topo.n_speakers - 1)(rng) : 0;
      std::normal_distribution<double> n(0.0, 1.0);
      Matrix X(topo.input_dim, T);
      for (Index i = 0; i < X.size(); ++i) X.data()[i] = n(rng);
      const MatrixX<long double> Xl = X.cast<long double>();
      const AcousticNetwork<long double> wide = net.cast<long double>();
      Vector analytic;
      VectorX<long double> numeric;
      if (v == Variant::SAR) {
        Matrix target(topo.output_dim, T);
        for (Index i = 0; i < target.size(); ++i) target.data()[i] = n(rng);
        const MatrixX<long double> Tl = target.cast<long double>();
        analytic = sar_gradient(net, X, speaker, target).gradient;
        numeric = oracle::finite_difference_gradient<long double>(
            wide, [&](const AcousticNetwork<long double>& m) { return sar_loss(m, Xl, speaker, Tl); }, 1e-6L);
      } else {
        std::vector<int> target(static_cast<std::size_t>(T));
        for (int& c : target) c = std::uniform_int_distribution<int>(0, topo.output_dim - 1)(rng);
        analytic = dar_gradient(net, X, speaker, std::span<const int>(target)).gradient;
        numeric = oracle::finite_difference_gradient<long double>(
            wide,
            [&](const AcousticNetwork<long double>& m) {
              return dar_loss<long double>(m, Xl, speaker, std::span<const int>(target));
            },
            1e-6L);
      }
      const oracle::GradientCheck c = oracle::compare_gradients(analytic, numeric.cast<double>(), 1e-4);
      params += c.n_params;
      failed += c.n_failed;
      worst = std::max(worst, c.max_relative_error);
    }
  }
  std::ostringstream d;
  d << "40 networks, " << params << " parameters, " << failed << " above tolerance; max relative error " << worst
    << " (< 1e-4)";
  return {failed == 0 && worst < 1e-4, d.str()};
}

// ---------------------------------------------------------------------------

Outcome speaker_bias() {
  const NetworkTopology topo = NetworkTopology::sar(265, 10, 127, 1);
  AcousticNetwork<double> net(topo);
  net.initialize(7);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vector> inputs;
  for (int i = 0; i < 100; ++i) {
    Vector x(topo.input_dim);
    for (Index j = 0; j < x.size(); ++j) x(j) = n(rng);
    inputs.push_back(x);
  }
  std::vector<std::vector<Vector>> pre(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (int k = 0; k < topo.n_speakers; ++k) pre[i].push_back(first_layer_preactivation(net, inputs[i], k));
  double worst = 0.0;
  for (int k1 = 0; k1 < topo.n_speakers; ++k1)
    for (int k2 = k1 + 1; k2 < topo.n_speakers; ++k2) {
      const Vector first = pre[0][k1] - pre[0][k2];
      for (std::size_t i = 1; i < inputs.size(); ++i)
        worst = std::max(worst, ((pre[i][k1] - pre[i][k2]) - first).cwiseAbs().maxCoeff());
    }
  std::ostringstream d;
  d << "45 speaker pairs x 100 inputs, max deviation " << worst << " (<= 1e-10)";
  return {worst <= 1e-10, d.str()};
}

// ---------------------------------------------------------------------------

Outcome ensemble_contraction() {
  ExperimentPlan plan;
  plan.generator.train_counts = {20, 24, 28, 32, 36, 40, 44, 48, 52, 56};
  plan.generator.test_count = 10;
  plan.strategies = {"E1", "E2", "E3", "EN"};
  plan.bootstrap_draws = 40;
  plan.training.n_epochs = 5;
  plan.ab_pairs.clear();
  plan.out = test_util::temp_dir("acceptance_ensemble");
  const RunResult result = run(plan);

  // Independent recheck from the stored checkpoints.
  const Corpus corpus = load_corpus(plan.out / "corpus");
  std::vector<std::pair<TrainedModel, TrainedModel>> subsystems;
  for (const char* key : {"E1", "E2", "E3"})
    subsystems.emplace_back(load_model(plan.out / "models" / (std::string(key) + "_sar.ckpt")),
                            load_model(plan.out / "models" / (std::string(key) + "_dar.ckpt")));
  double worst = -INFINITY;
  std::size_t frames = 0;
  for (int k = 0; k < corpus.n_speakers(); ++k)
    for (const Utterance& u : corpus.utterances(Split::Test, k)) {
      std::vector<AcousticSequence> outs;
      for (const auto& [sar, dar] : subsystems) outs.push_back(synthesize(sar, dar, u.linguistic, k));
      const AcousticSequence en = combine_sequences(outs);
      for (Index t = 0; t < u.linguistic.cols(); ++t) {
        const Index d = corpus.features.d_mgc - 1;
        double mean_err = 0.0;
        for (const AcousticSequence& s : outs)
          mean_err += (s.mgc.col(t).tail(d) - u.acoustic.mgc.col(t).tail(d)).norm() / 3.0;
        worst = std::max(worst, (en.mgc.col(t).tail(d) - u.acoustic.mgc.col(t).tail(d)).norm() - mean_err);
        ++frames;
      }
    }

  int speakers_ok = 0;
  for (const Speaker& s : corpus.speakers) {
    const double mean = (result.report.at("E1", s.id).mcd_db + result.report.at("E2", s.id).mcd_db +
                         result.report.at("E3", s.id).mcd_db) / 3.0;
    if (result.report.at("EN", s.id).mcd_db <= mean + 1e-12) ++speakers_ok;
  }
  const bool flag = result.ensemble_contraction.value_or(false);
  std::ostringstream d;
  d << frames << " frames, max (EN error - mean subsystem error) = " << worst << " (<= 1e-12); EN MCD <= mean on "
    << speakers_ok << "/" << corpus.n_speakers() << " speakers; run flag " << (flag ? "true" : "false");
  return {worst <= 1e-12 && speakers_ok == corpus.n_speakers() && flag, d.str()};
}

// ---------------------------------------------------------------------------

Outcome f0_combiner() {
  int table_ok = 0;
  const double values[3] = {110.0, 180.0, 260.0};
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<F0> votes;
    double sum = 0.0;
    int voiced = 0;
    for (int i = 0; i < 3; ++i) {
      if (mask >> i & 1) {
        votes.emplace_back(values[i]);
        sum += values[i];
        ++voiced;
      } else {
        votes.emplace_back(std::nullopt);
      }
    }
    const F0 out = combine_f0(std::span<const F0>(votes));
    const bool ok = voiced >= 2 ? (out && std::abs(*out - sum / voiced) <= 1e-12 * sum) : !out;
    if (ok) ++table_ok;
  }

  // Round trip: the bin's mel half-width times the largest Hz-per-mel slope inside the bin.
  const FeatureConfig cfg;
  const auto mel = [](double hz) { return 1127.0 * std::log1p(hz / 700.0); };
  const double mel_width = (mel(cfg.f0_max) - mel(cfg.f0_min)) / cfg.n_f0_bins;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> hz(cfg.f0_min, cfg.f0_max);
  int round_ok = 0;
  double worst_ratio = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double v = hz(rng);
    const int c = quantize_f0(v, cfg);
    const F0 back = dequantize_f0(c, cfg);
    const double hi = mel_to_hz(mel(cfg.f0_min) + c * mel_width);
    const double half_width = (700.0 + hi) / 1127.0 * mel_width / 2.0;
    if (back && c >= 1) {
      const double ratio = std::abs(*back - v) / half_width;
      worst_ratio = std::max(worst_ratio, ratio);
      if (ratio <= 1.0) ++round_ok;
    }
  }
  std::ostringstream d;
  d << "truth table " << table_ok << "/8; round trip " << round_ok << "/1000 within half local bin width (max ratio "
    << worst_ratio << ")";
  return {table_ok == 8 && round_ok == 1000, d.str()};
}

// ---------------------------------------------------------------------------

Outcome binomial() {
  double worst = 0.0;
  int cases = 0;
  for (int n = 1; n <= 20; ++n)
    for (int a = 0; a <= n; ++a) {
      const long double expected = oracle::binomial_p_bruteforce(a, n - a);
      worst = std::max(worst, static_cast<double>(std::abs(exact_binomial_test(a, n - a) - expected)));
      ++cases;
    }
  const double p82 = exact_binomial_test(8, 2);
  std::ostringstream d;
  d << cases << " cases, max |p - brute force| = " << worst << " (<= 1e-12); p(8,2) = " << p82;
  return {worst <= 1e-12 && std::abs(p82 - 0.109375) <= 1e-12, d.str()};
}

// ---------------------------------------------------------------------------

double test_mcd(const Corpus& corpus, const TrainedModel& sar, int speaker) {
  double sum = 0.0;
  Index frames = 0;
  for (const Utterance& u : corpus.utterances(Split::Test, speaker)) {
    sum += frame_mcd(predict_spectra(sar, u.linguistic, speaker), u.acoustic.mgc).sum();
    frames += u.linguistic.cols();
  }
  return sum / static_cast<double>(frames);
}

Outcome multi_speaker_benefit() {
  const ExperimentPlan defaults;
  int wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GeneratorConfig g = defaults.generator;
    g.master_seed = seed;
    const Corpus corpus = generate_corpus(g).corpus;
    TrainingConfig cfg = defaults.training;
    cfg.init_seed = seed;
    cfg.shuffle_seed = seed;
    const TrainedModel mu = train(corpus, build_pooled(corpus),
                                  NetworkTopology::sar(corpus.d_lin, corpus.n_speakers(), corpus.features.d_mgc,
                                                       defaults.width_divisor),
                                  cfg);
    bool both = true;
    d << (seed == 1 ? "" : "; ") << "seed " << seed << ":";
    for (int k = 0; k < 2; ++k) {
      const TrainedModel sd = train(
          corpus, build_sd(corpus, corpus.speakers[k].id),
          NetworkTopology::sar(corpus.d_lin, 0, corpus.features.d_mgc, defaults.width_divisor), cfg);
      const double m = test_mcd(corpus, mu, k);
      const double s = test_mcd(corpus, sd, k);
      both = both && m < s;
      char buf[64];
      std::snprintf(buf, sizeof buf, " %s MU %.3f SD %.3f", corpus.speakers[k].id.c_str(), m, s);
      d << buf;
    }
    if (both) ++wins;
  }
  std::ostringstream head;
  head << "MU below SD for XS01 and XS02 in " << wins << "/10 seeds (>= 8); " << d.str();
  return {wins >= 8, head.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "bootstrap unique counts vs reference counts", 10.0, bootstrap_vs_table},
      {2, "training-set size formulas", 0.0, set_sizes},
      {3, "gradient correctness", 60.0, gradients},
      {4, "speaker-bias contract", 1.0, speaker_bias},
      {5, "ensemble contraction", 0.0, ensemble_contraction},
      {6, "F0 combiner truth table and round trip", 0.0, f0_combiner},
      {7, "exact binomial oracle", 0.0, binomial},
      {8, "multi-speaker benefit for the smallest speakers", 600.0, multi_speaker_benefit},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream timing;
    timing.precision(2);
    timing << std::fixed << secs << " s";
    if (c.budget_s > 0) {
      timing << " / budget " << c.budget_s << " s";
      if (secs > c.budget_s) {
        o.pass = false;
        o.detail += "; over time budget";
      }
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << "  " << c.name << "  [" << timing.str() << "]  "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
