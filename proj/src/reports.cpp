#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spkbal/evaluation.hpp"

namespace spkbal {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  return out;
}

struct Accumulator {
  double mcd_sum = 0.0;
  std::size_t frames = 0;
  std::size_t vuv_wrong = 0;
  std::vector<F0> predicted_f0;
  std::vector<F0> reference_f0;

  void add(const AcousticSequence& predicted, const AcousticSequence& reference) {
    mcd_sum += frame_mcd(predicted.mgc, reference.mgc).sum();
    frames += static_cast<std::size_t>(reference.n_frames());
    vuv_wrong += static_cast<std::size_t>(
        std::llround(vuv_error_rate(predicted.f0, reference.f0) * static_cast<double>(reference.f0.size())));
    predicted_f0.insert(predicted_f0.end(), predicted.f0.begin(), predicted.f0.end());
    reference_f0.insert(reference_f0.end(), reference.f0.begin(), reference.f0.end());
  }

  void merge(const Accumulator& o) {
    mcd_sum += o.mcd_sum;
    frames += o.frames;
    vuv_wrong += o.vuv_wrong;
    predicted_f0.insert(predicted_f0.end(), o.predicted_f0.begin(), o.predicted_f0.end());
    reference_f0.insert(reference_f0.end(), o.reference_f0.begin(), o.reference_f0.end());
  }

  MetricRow row(std::string strategy, std::string speaker, int rank) const {
    MetricRow r;
    r.strategy = std::move(strategy);
    r.speaker = std::move(speaker);
    r.display_rank = rank;
    r.n_frames_scored = frames;
    r.mcd_db = mcd_sum / static_cast<double>(frames);
    r.vuv_error_rate = static_cast<double>(vuv_wrong) / static_cast<double>(frames);
    try {
      r.f0_corr = f0_correlation(predicted_f0, reference_f0);
    } catch (const UndefinedMetric&) {
      r.f0_corr.reset();
    }
    return r;
  }
};

const AcousticSequence& lookup(const UtteranceOutputs& outputs, const std::string& utt_id,
                               std::string_view strategy) {
  const auto it = outputs.find(utt_id);
  if (it == outputs.end())
    throw ValidationError("strategy " + std::string(strategy) + " has no output for " + utt_id);
  return it->second;
}

}  // namespace

const MetricRow& MetricReport::at(std::string_view strategy, std::string_view speaker) const {
  for (const MetricRow& r : rows)
    if (r.strategy == strategy && r.speaker == speaker) return r;
  throw ValidationError("report has no row " + std::string(strategy) + "/" + std::string(speaker));
}

MetricReport build_metric_report(const Corpus& corpus, const StrategyOutputs& outputs) {
  // Coverage first, so a gap is reported as a whole rather than at the first miss.
  std::vector<std::string> gaps;
  for (const auto& [strategy, outs] : outputs)
    for (int k = 0; k < corpus.n_speakers(); ++k)
      for (const Utterance& u : corpus.utterances(Split::Test, k))
        if (!outs.contains(u.utt_id)) gaps.push_back(strategy + ":" + u.utt_id);
  if (!gaps.empty()) {
    std::string msg = "missing test outputs (" + std::to_string(gaps.size()) + "):";
    for (std::size_t i = 0; i < std::min<std::size_t>(gaps.size(), 20); ++i) msg += " " + gaps[i];
    throw ValidationError(msg);
  }

  MetricReport report;
  for (const auto& [strategy, outs] : outputs) {
    Accumulator overall;
    for (int k = 0; k < corpus.n_speakers(); ++k) {
      Accumulator acc;
      for (const Utterance& u : corpus.utterances(Split::Test, k))
        acc.add(lookup(outs, u.utt_id, strategy), u.acoustic);
      if (acc.frames == 0) continue;
      report.rows.push_back(acc.row(strategy, corpus.speakers[k].id, corpus.speakers[k].display_rank));
      overall.merge(acc);
    }
    if (overall.frames == 0) throw ValidationError("test split is empty");
    report.rows.push_back(overall.row(strategy, std::string(kOverallRow), -1));
  }
  return report;
}

void MetricReport::write_csv(const std::filesystem::path& file) const {
  std::ofstream out = open_out(file);
  out << "strategy,speaker,metric,value,n_frames\n";
  for (const MetricRow& r : rows) {
    const std::string prefix = r.strategy + "," + r.speaker + ",";
    const std::string suffix = "," + std::to_string(r.n_frames_scored) + "\n";
    out << prefix << "mcd_db," << fmt(r.mcd_db) << suffix;
    out << prefix << "f0_corr," << (r.f0_corr ? fmt(*r.f0_corr) : "NA") << suffix;
    out << prefix << "vuv_error_rate," << fmt(r.vuv_error_rate) << suffix;
  }
}

void MetricReport::write_plot_data(const std::filesystem::path& dir) const {
  std::vector<std::string> strategies;
  std::vector<std::pair<int, std::string>> speakers;
  for (const MetricRow& r : rows) {
    if (std::find(strategies.begin(), strategies.end(), r.strategy) == strategies.end())
      strategies.push_back(r.strategy);
    if (r.speaker != kOverallRow &&
        std::find(speakers.begin(), speakers.end(), std::pair{r.display_rank, r.speaker}) == speakers.end())
      speakers.emplace_back(r.display_rank, r.speaker);
  }
  std::sort(speakers.begin(), speakers.end());

  const auto write = [&](const std::string& name, auto value) {
    std::ofstream out = open_out(dir / name);
    out << "display_rank,speaker";
    for (const std::string& s : strategies) out << ',' << s;
    out << '\n';
    for (const auto& [rank, speaker] : speakers) {
      out << rank << ',' << speaker;
      for (const std::string& s : strategies) {
        out << ',';
        for (const MetricRow& r : rows)
          if (r.strategy == s && r.speaker == speaker) out << value(r);
      }
      out << '\n';
    }
  };
  write("plot_mcd.csv", [](const MetricRow& r) { return fmt(r.mcd_db); });
  write("plot_f0_corr.csv", [](const MetricRow& r) { return r.f0_corr ? fmt(*r.f0_corr) : std::string("NA"); });
}

nlohmann::json MetricReport::summary() const {
  nlohmann::json j = nlohmann::json::array();
  for (const MetricRow& r : rows) {
    j.push_back({{"strategy", r.strategy},
                 {"speaker", r.speaker},
                 {"mcd_db", r.mcd_db},
                 {"f0_corr", r.f0_corr ? nlohmann::json(*r.f0_corr) : nlohmann::json(nullptr)},
                 {"vuv_error_rate", r.vuv_error_rate},
                 {"n_frames", r.n_frames_scored}});
  }
  return j;
}

double PreferenceCounts::p_value() const {
  return exact_binomial_test(static_cast<std::int64_t>(wins_a), static_cast<std::int64_t>(wins_b));
}

PreferenceCounts PreferenceTally::overall() const {
  PreferenceCounts sum;
  for (const PreferenceCounts& c : per_speaker) {
    sum.wins_a += c.wins_a;
    sum.wins_b += c.wins_b;
  }
  return sum;
}

void PreferenceTally::write_csv(const std::filesystem::path& file) const {
  std::ofstream out = open_out(file);
  out << "pair,speaker,wins_a,wins_b,preference_a,p_value,significant\n";
  const auto row = [&](const std::string& speaker, const PreferenceCounts& c) {
    if (c.total() == 0) return;
    const double p = c.p_value();
    out << label << ',' << speaker << ',' << c.wins_a << ',' << c.wins_b << ','
        << fmt(static_cast<double>(c.wins_a) / static_cast<double>(c.total())) << ',' << fmt(p) << ','
        << (significant(p) ? 1 : 0) << '\n';
  };
  for (std::size_t i = 0; i < speakers.size(); ++i) row(speakers[i], per_speaker[i]);
  row(std::string(kOverallRow), overall());
}

nlohmann::json PreferenceTally::summary() const {
  const PreferenceCounts all = overall();
  nlohmann::json j{{"pair", label}, {"wins_a", all.wins_a}, {"wins_b", all.wins_b}};
  if (all.total() > 0) j["p_value"] = all.p_value();
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    const PreferenceCounts& c = per_speaker[i];
    per[speakers[i]] = {{"wins_a", c.wins_a}, {"wins_b", c.wins_b},
                        {"p_value", c.total() > 0 ? c.p_value() : 1.0}};
  }
  j["per_speaker"] = per;
  return j;
}

PreferenceTally simulate_preference(const Corpus& corpus, const UtteranceOutputs& a,
                                    const UtteranceOutputs& b, std::string label, double judge_noise,
                                    std::uint64_t seed) {
  if (judge_noise < 0.0) throw ValidationError("judge noise must be >= 0");
  PreferenceTally tally;
  tally.label = std::move(label);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int k = 0; k < corpus.n_speakers(); ++k) {
    PreferenceCounts counts;
    for (const Utterance& u : corpus.utterances(Split::Test, k)) {
      const double score_a = mcd(lookup(a, u.utt_id, "A").mgc, u.acoustic.mgc) + judge_noise * noise(rng);
      const double score_b = mcd(lookup(b, u.utt_id, "B").mgc, u.acoustic.mgc) + judge_noise * noise(rng);
      const bool prefer_a = score_a == score_b ? coin(rng) : score_a < score_b;
      ++(prefer_a ? counts.wins_a : counts.wins_b);
    }
    tally.speakers.push_back(corpus.speakers[k].id);
    tally.per_speaker.push_back(counts);
  }
  return tally;
}

}  // namespace spkbal
