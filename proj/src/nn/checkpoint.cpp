#include "ddppo/nn/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "ddppo/common/bytes.hpp"
#include "ddppo/common/error.hpp"

namespace ddppo::nn {

void to_json(nlohmann::json& j, const NetSpec& spec) {
  j = nlohmann::json{{"obs_dim", spec.obs_dim},
                     {"hidden_dims", spec.hidden_dims},
                     {"num_actions", spec.num_actions},
                     {"activation", "tanh"}};
}

void from_json(const nlohmann::json& j, NetSpec& spec) {
  spec.obs_dim = j.at("obs_dim").get<std::size_t>();
  spec.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  spec.num_actions = j.at("num_actions").get<std::size_t>();
  if (j.contains("activation") && j.at("activation") != "tanh") {
    throw ConfigError("unsupported activation " + j.at("activation").dump());
  }
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  check_params(ckpt.spec, ckpt.params);
  Bytes out;
  ByteWriter w(out);
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put_le<std::uint16_t>(kCheckpointVersion);
  w.put_le<std::uint64_t>(ckpt.params.layout.hash());
  w.put_le<std::uint64_t>(ckpt.params.size());
  for (double v : ckpt.params.values) w.put_f64(v);
  const nlohmann::json trailer{
      {"net", ckpt.spec}, {"train_step", ckpt.train_step}, {"rng_state", ckpt.rng_state}};
  w.put_bytes(trailer.dump());
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes,
                             const std::optional<NetSpec>& expected) {
  try {
    ByteReader r(bytes);
    const auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
      throw ConfigError("checkpoint: bad magic");
    }
    const auto version = r.get_le<std::uint16_t>();
    if (version != kCheckpointVersion) {
      throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto layout_hash = r.get_le<std::uint64_t>();
    const auto count = r.get_le<std::uint64_t>();
    if (expected && Layout(*expected).hash() != layout_hash) {
      throw ConfigError("checkpoint: layout hash does not match the requested network");
    }
    if (r.remaining() / 8 < count) throw ConfigError("checkpoint: truncated parameter block");

    std::vector<double> values(count);
    for (auto& v : values) v = r.get_f64();
    const auto tail = r.rest();
    const auto trailer = nlohmann::json::parse(tail.begin(), tail.end());

    Checkpoint ckpt;
    ckpt.spec = trailer.at("net").get<NetSpec>();
    ckpt.train_step = trailer.value("train_step", std::int64_t{0});
    ckpt.rng_state = trailer.value("rng_state", std::string{});
    Layout layout(ckpt.spec);
    if (layout.hash() != layout_hash || layout.num_params() != count) {
      throw ConfigError("checkpoint: header layout hash disagrees with trailer net spec");
    }
    ckpt.params.layout = std::move(layout);
    ckpt.params.values = std::move(values);
    return ckpt;
  } catch (const ProtocolError& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint trailer: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot open " + tmp + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ConfigError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<NetSpec>& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected);
}

}  // namespace ddppo::nn
