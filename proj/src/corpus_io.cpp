#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spkbal/corpus.hpp"

#include "binary_io.hpp"

namespace spkbal {

using binary::get_f32;
using binary::get_u32;
using binary::put_f32;
using binary::put_u32;

namespace {

constexpr char kRecordMagic[4] = {'S', 'P', 'K', 'R'};
constexpr std::uint32_t kRecordVersion = 1;
constexpr int kManifestVersion = 1;

void check_safe_id(const std::string& id) {
  if (id.empty()) throw ValidationError("empty identifier");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) throw ValidationError("identifier '" + id + "' has characters unsafe for file names");
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

nlohmann::json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << j.dump(1) << '\n';
}

}  // namespace

void write_record(const std::filesystem::path& file, const Matrix& linguistic,
                  const AcousticSequence& acoustic) {
  const Index n = acoustic.n_frames();
  if (linguistic.rows() > 0 && linguistic.cols() != n)
    throw ValidationError("write_record: linguistic and acoustic frame counts differ");
  if (static_cast<Index>(acoustic.f0.size()) != n)
    throw ValidationError("write_record: F0 track length differs from spectral frames");
  std::ofstream os(file, std::ios::binary);
  if (!os) throw Error("cannot write " + file.string());
  os.write(kRecordMagic, 4);
  put_u32(os, kRecordVersion);
  put_u32(os, static_cast<std::uint32_t>(n));
  put_u32(os, static_cast<std::uint32_t>(linguistic.rows()));
  put_u32(os, static_cast<std::uint32_t>(acoustic.mgc.rows()));
  for (Index t = 0; t < n && linguistic.rows() > 0; ++t)
    for (Index i = 0; i < linguistic.rows(); ++i) put_f32(os, linguistic(i, t));
  for (Index t = 0; t < n; ++t)
    for (Index i = 0; i < acoustic.mgc.rows(); ++i) put_f32(os, acoustic.mgc(i, t));
  for (const F0& f : acoustic.f0) put_f32(os, f ? *f : 0.0);
  for (const F0& f : acoustic.f0) put_f32(os, f ? 1.0 : 0.0);
  if (!os) throw Error("failed writing " + file.string());
}

void read_record(const std::filesystem::path& file, Matrix& linguistic, AcousticSequence& acoustic) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ValidationError("cannot open record " + file.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kRecordMagic))
    throw ValidationError(file.string() + ": not a record file");
  if (const auto version = get_u32(is); version != kRecordVersion)
    throw ValidationError(file.string() + ": unsupported record version " + std::to_string(version));
  const Index n = get_u32(is);
  const Index d_lin = get_u32(is);
  const Index d_mgc = get_u32(is);
  linguistic.resize(d_lin, d_lin > 0 ? n : 0);
  for (Index t = 0; t < n && d_lin > 0; ++t)
    for (Index i = 0; i < d_lin; ++i) linguistic(i, t) = get_f32(is);
  acoustic.mgc.resize(d_mgc, n);
  for (Index t = 0; t < n; ++t)
    for (Index i = 0; i < d_mgc; ++i) acoustic.mgc(i, t) = get_f32(is);
  std::vector<double> values(static_cast<std::size_t>(n));
  for (double& v : values) v = get_f32(is);
  acoustic.f0.assign(static_cast<std::size_t>(n), std::nullopt);
  for (std::size_t t = 0; t < values.size(); ++t)
    if (get_f32(is) != 0.0) acoustic.f0[t] = values[t];
}

void write_acoustic(const std::filesystem::path& file, const AcousticSequence& acoustic) {
  write_record(file, Matrix(0, 0), acoustic);
}

AcousticSequence read_acoustic(const std::filesystem::path& file) {
  Matrix linguistic;
  AcousticSequence acoustic;
  read_record(file, linguistic, acoustic);
  return acoustic;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  corpus.validate();
  std::filesystem::create_directories(dir);
  if (!corpus.metadata_only) std::filesystem::create_directories(dir / "records");

  nlohmann::json manifest;
  manifest["format"] = "spkbal-corpus";
  manifest["version"] = kManifestVersion;
  manifest["d_lin"] = corpus.d_lin;
  manifest["metadata_only"] = corpus.metadata_only;
  manifest["features"] = corpus.features;
  for (const Speaker& s : corpus.speakers) {
    check_safe_id(s.id);
    manifest["speakers"].push_back({{"id", s.id}, {"display_rank", s.display_rank}});
  }
  nlohmann::json utts = nlohmann::json::array();
  for (Split split : {Split::Train, Split::Validation, Split::Test}) {
    for (int k = 0; k < corpus.n_speakers(); ++k) {
      for (const Utterance& u : corpus.utterances(split, k)) {
        check_safe_id(u.utt_id);
        nlohmann::json entry{{"id", u.utt_id},
                             {"speaker", corpus.speakers[k].id},
                             {"split", to_string(split)}};
        if (!corpus.metadata_only) {
          const std::string rel = "records/" + u.utt_id + ".rec";
          entry["file"] = rel;
          write_record(dir / rel, u.linguistic, u.acoustic);
        }
        utts.push_back(std::move(entry));
      }
    }
  }
  manifest["utterances"] = std::move(utts);
  write_json(dir / "manifest.json", manifest);
}

Corpus load_corpus(const std::filesystem::path& dir, bool metadata_only) {
  const nlohmann::json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", "") != "spkbal-corpus")
    throw ValidationError(dir.string() + ": not a corpus manifest");
  if (manifest.value("version", 0) != kManifestVersion)
    throw ValidationError(dir.string() + ": unsupported manifest version");

  Corpus corpus;
  try {
    corpus.d_lin = manifest.at("d_lin").get<int>();
    corpus.features = manifest.at("features").get<FeatureConfig>();
    corpus.metadata_only = metadata_only || manifest.value("metadata_only", false);
    for (const auto& s : manifest.at("speakers"))
      corpus.speakers.push_back({s.at("id").get<std::string>(), s.at("display_rank").get<int>()});
    corpus.reset_splits();
    for (const auto& entry : manifest.at("utterances")) {
      const std::string split_name = entry.at("split").get<std::string>();
      Split split;
      if (split_name == "train") split = Split::Train;
      else if (split_name == "validation") split = Split::Validation;
      else if (split_name == "test") split = Split::Test;
      else throw ValidationError("unknown split '" + split_name + "'");
      Utterance u;
      u.utt_id = entry.at("id").get<std::string>();
      u.speaker = corpus.speaker_index(entry.at("speaker").get<std::string>());
      if (!corpus.metadata_only)
        read_record(dir / entry.at("file").get<std::string>(), u.linguistic, u.acoustic);
      corpus.utterances(split, u.speaker).push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(dir.string() + "/manifest.json: " + e.what());
  }
  corpus.validate();
  return corpus;
}

void save_training_set(const Corpus& corpus, const TrainingSet& set,
                       const std::filesystem::path& file) {
  nlohmann::json j;
  j["format"] = "spkbal-training-set";
  j["corpus_fingerprint"] = hex64(set.corpus_fingerprint);
  j["recipe"] = set.recipe;
  j["size"] = set.size();
  nlohmann::json unique = nlohmann::json::object();
  for (int k = 0; k < corpus.n_speakers(); ++k) unique[corpus.speakers[k].id] = set.unique_counts.at(k);
  j["unique_counts"] = unique;
  nlohmann::json items = nlohmann::json::array();
  for (const UtteranceRef& r : set.items)
    items.push_back({corpus.speakers.at(r.speaker).id,
                     corpus.utterances(Split::Train, r.speaker).at(r.index).utt_id});
  j["items"] = std::move(items);
  write_json(file, j);
}

TrainingSet load_training_set(const Corpus& corpus, const std::filesystem::path& file) {
  const nlohmann::json j = read_json(file);
  if (j.value("format", "") != "spkbal-training-set")
    throw ValidationError(file.string() + ": not a training-set file");
  TrainingSet set;
  set.corpus_fingerprint = corpus.fingerprint();
  if (j.value("corpus_fingerprint", "") != hex64(set.corpus_fingerprint))
    throw ValidationError(file.string() + ": training set was built from a different corpus");
  set.recipe = j.at("recipe").get<TrainingSetRecipe>();
  std::map<std::string, UtteranceRef, std::less<>> lookup;
  for (int k = 0; k < corpus.n_speakers(); ++k) {
    const auto& list = corpus.utterances(Split::Train, k);
    for (int i = 0; i < static_cast<int>(list.size()); ++i) lookup[list[i].utt_id] = {k, i};
  }
  for (const auto& item : j.at("items")) {
    const auto it = lookup.find(item.at(1).get<std::string>());
    if (it == lookup.end())
      throw ValidationError("training set references unknown utterance " + item.at(1).dump());
    set.items.push_back(it->second);
  }
  set.unique_counts.assign(corpus.speakers.size(), 0);
  std::vector<UtteranceRef> distinct = set.items;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (const UtteranceRef& r : distinct) ++set.unique_counts[static_cast<std::size_t>(r.speaker)];
  return set;
}

}  // namespace spkbal
