#include "json.hpp"

#include "iddm/denoiser.hpp"
#include "iddm/serialize.hpp"

namespace iddm {

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const DenoiserState& state, const std::string& path) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["arch"] = {{"height", state.arch.height},       {"width", state.arch.width},
               {"channels", state.arch.channels},   {"hidden", state.arch.hidden},
               {"hidden_layers", state.arch.hidden_layers},
               {"time_dim", state.arch.time_dim}};
  j["cond_vocab"] = state.cond_vocab;
  j["params"] = doubles_to_b64(state.params);
  j["crc32"] = crc32_doubles(state.params);
  write_text_file(path, j.dump(2) + "\n");
}

DenoiserState load_checkpoint(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  if (!j.contains("version") || j["version"].get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint version mismatch: " + path);
  }
  DenoiserState s;
  const auto& a = j.at("arch");
  s.arch.height = a.at("height").get<int>();
  s.arch.width = a.at("width").get<int>();
  s.arch.channels = a.at("channels").get<int>();
  s.arch.hidden = a.at("hidden").get<int>();
  s.arch.hidden_layers = a.at("hidden_layers").get<int>();
  s.arch.time_dim = a.at("time_dim").get<int>();
  s.cond_vocab = j.at("cond_vocab").get<std::vector<std::string>>();
  s.params = b64_to_doubles(j.at("params").get<std::string>());
  if (s.params.size() != denoiser_param_count(s.arch, s.cond_vocab.size())) {
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  }
  std::uint32_t want = j.at("crc32").get<std::uint32_t>();
  if (crc32_doubles(s.params) != want) {
    throw std::runtime_error("checkpoint checksum mismatch: " + path);
  }
  return s;
}

}  // namespace iddm
