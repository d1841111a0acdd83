#include "codemix/trainer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "codemix/errors.hpp"

namespace codemix {
namespace {

constexpr char kMagic[8] = {'C', 'D', 'M', 'X', 'C', 'K', 'P', 'T'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(x >> (8 * i)));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= std::uint64_t{p[i]} << (8 * i);
  return x;
}

void check_manifest(const ModelConfig& config, const std::vector<NamedTensor>& tensors) {
  const auto expected = Model::parameter_manifest(config);
  if (expected.size() != tensors.size())
    throw ConfigError("checkpoint holds " + std::to_string(tensors.size()) +
                      " tensors, the config expects " + std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].first != tensors[i].name || expected[i].second != tensors[i].value.shape())
      throw ConfigError("checkpoint tensor " + std::to_string(i) + " is '" + tensors[i].name +
                        "' " + shape_string(tensors[i].value.shape()) + ", expected '" +
                        expected[i].first + "' " + shape_string(expected[i].second));
  }
}

}  // namespace

Checkpoint Checkpoint::from_model(const Model& model, TrainingProvenance provenance) {
  Checkpoint c;
  c.config = model.config();
  for (const Parameter& p : model.params()) c.tensors.push_back(NamedTensor{p.name, p.value});
  c.provenance = provenance;
  return c;
}

Model Checkpoint::to_model() const {
  check_manifest(config, tensors);
  Model m = Model::zeros(config);
  for (std::size_t i = 0; i < tensors.size(); ++i) m.params()[i].value = tensors[i].value;
  return m;
}

void load_into(Model& model, const Checkpoint& ckpt) {
  if (!(model.config() == ckpt.config))
    throw ConfigError("checkpoint config (" +
                      std::string(architecture_name(ckpt.config.architecture)) +
                      ") does not match the model config (" +
                      std::string(architecture_name(model.architecture())) + ")");
  check_manifest(ckpt.config, ckpt.tensors);
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i)
    model.params()[i].value = ckpt.tensors[i].value;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  check_manifest(ckpt.config, ckpt.tensors);
  Json manifest;
  manifest["format"] = "codemix-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["config"] = to_json(ckpt.config);
  manifest["provenance"] = {{"stage", ckpt.provenance.stage},
                            {"step", ckpt.provenance.step},
                            {"seed", ckpt.provenance.seed}};
  Json table = Json::array();
  std::size_t offset = 0;
  for (const NamedTensor& t : ckpt.tensors) {
    table.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset},
                     {"count", t.value.numel()}});
    offset += t.value.numel();
  }
  manifest["tensors"] = std::move(table);
  const std::string text = manifest.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 8 * offset);
  for (const NamedTensor& t : ckpt.tensors)
    for (double x : t.value.values()) put_u64(out, std::bit_cast<std::uint64_t>(x));
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw DataError("not a codemix checkpoint (bad magic)");
  const std::uint64_t n = get_u64(bytes.data() + 8);
  if (n > bytes.size() - 16) throw DataError("corrupt checkpoint: manifest truncated");
  Json manifest;
  try {
    manifest = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(n));
  } catch (const Json::exception& e) {
    throw DataError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  try {
    if (manifest.at("format") != "codemix-checkpoint")
      throw DataError("checkpoint manifest has an unknown format tag");
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.config = model_config_from_json(manifest.at("config"));
    const Json& p = manifest.at("provenance");
    c.provenance.stage = p.at("stage").get<int>();
    c.provenance.step = p.at("step").get<std::size_t>();
    c.provenance.seed = p.at("seed").get<std::uint64_t>();
    const std::size_t payload_begin = 16 + n;
    const std::size_t payload_values = (bytes.size() - payload_begin) / 8;
    if ((bytes.size() - payload_begin) % 8 != 0)
      throw DataError("corrupt checkpoint: payload is not a whole number of float64 values");
    std::size_t expected_offset = 0;
    for (const Json& t : manifest.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t count = t.at("count").get<std::size_t>();
      if (offset != expected_offset || count != shape_numel(shape) ||
          offset + count > payload_values)
        throw DataError("corrupt checkpoint: tensor table does not match the payload");
      std::vector<double> data(count);
      const unsigned char* src = bytes.data() + payload_begin + 8 * offset;
      for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<double>(get_u64(src + 8 * i));
      c.tensors.push_back(NamedTensor{t.at("name").get<std::string>(), Tensor(shape, std::move(data))});
      expected_offset += count;
    }
    if (expected_offset != payload_values)
      throw DataError("corrupt checkpoint: trailing payload bytes");
    check_manifest(c.config, c.tensors);
    return c;
  } catch (const Json::exception& e) {
    throw DataError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace codemix
