#include <fstream>

#include <nlohmann/json.hpp>

#include "spkbal/train.hpp"

#include "binary_io.hpp"

namespace spkbal {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'K', 'M'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& file) {
  nlohmann::json meta;
  meta["topology"] = model.network.topology();
  meta["recipe"] = model.recipe;
  meta["features"] = model.features;
  meta["best_epoch"] = model.best_epoch;
  nlohmann::json log = nlohmann::json::array();
  for (const EpochLog& e : model.log) log.push_back({e.epoch, e.train_loss, e.val_loss});
  meta["log"] = log;
  const std::string header = meta.dump();

  std::ofstream os(file, std::ios::binary);
  if (!os) throw Error("cannot write " + file.string());
  os.write(kMagic, 4);
  binary::put_u32(os, kVersion);
  binary::put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  const ParameterLayout& layout = model.network.layout();
  binary::put_u32(os, static_cast<std::uint32_t>(layout.slots.size()));
  for (std::size_t i = 0; i < layout.slots.size(); ++i) {
    const TensorSlot& s = layout.slots[i];
    binary::put_u32(os, static_cast<std::uint32_t>(s.name.size()));
    os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    binary::put_u32(os, static_cast<std::uint32_t>(s.rows));
    binary::put_u32(os, static_cast<std::uint32_t>(s.cols));
    const auto t = model.network.tensor(static_cast<int>(i));
    for (Index c = 0; c < s.cols; ++c)
      for (Index r = 0; r < s.rows; ++r) binary::put_f32(os, t(r, c));
  }
  if (!os) throw Error("failed writing " + file.string());
}

TrainedModel load_model(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + file.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw ValidationError(file.string() + ": not a checkpoint");
  if (binary::get_u32(is) != kVersion) throw ValidationError(file.string() + ": unsupported checkpoint version");
  std::string header(binary::get_u32(is), '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(header.size())))
    throw ValidationError(file.string() + ": truncated header");

  TrainedModel model;
  try {
    const nlohmann::json meta = nlohmann::json::parse(header);
    model.network = AcousticNetwork<double>(meta.at("topology").get<NetworkTopology>());
    model.recipe = meta.at("recipe").get<TrainingSetRecipe>();
    model.features = meta.at("features").get<FeatureConfig>();
    model.best_epoch = meta.at("best_epoch").get<int>();
    for (const auto& e : meta.at("log"))
      model.log.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }

  const ParameterLayout& layout = model.network.layout();
  if (binary::get_u32(is) != layout.slots.size())
    throw ValidationError(file.string() + ": tensor count does not match topology");
  for (std::size_t i = 0; i < layout.slots.size(); ++i) {
    std::string name(binary::get_u32(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    const Index rows = binary::get_u32(is);
    const Index cols = binary::get_u32(is);
    const TensorSlot& s = layout.slots[i];
    if (name != s.name || rows != s.rows || cols != s.cols)
      throw ValidationError(file.string() + ": tensor '" + name + "' does not match topology");
    auto t = model.network.tensor(static_cast<int>(i));
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) t(r, c) = binary::get_f32(is);
  }
  return model;
}

}  // namespace spkbal
