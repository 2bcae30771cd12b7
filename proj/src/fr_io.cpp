#include "json.hpp"

#include "iddm/fr.hpp"
#include "iddm/serialize.hpp"

namespace iddm {

namespace {
constexpr int kRegistryVersion = 1;
}

void save_registry(const EncoderRegistry& reg, const std::string& path) {
  nlohmann::json j;
  j["version"] = kRegistryVersion;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : reg.encoders) {
    nlohmann::json je;
    je["name"] = e->name();
    je["arch"] = {{"input_res", e->arch().input_res},
                  {"channels", e->arch().channels},
                  {"hidden", e->arch().hidden},
                  {"embed_dim", e->arch().embed_dim}};
    je["params"] = doubles_to_b64(e->params());
    je["crc32"] = crc32_doubles(e->params());
    arr.push_back(std::move(je));
  }
  j["encoders"] = std::move(arr);
  write_text_file(path, j.dump(2) + "\n");
}

EncoderRegistry load_registry(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  if (!j.contains("version") || j["version"].get<int>() != kRegistryVersion) {
    throw std::runtime_error("encoder registry version mismatch: " + path);
  }
  EncoderRegistry reg;
  for (const auto& je : j.at("encoders")) {
    EncoderArch a;
    a.input_res = je.at("arch").at("input_res").get<int>();
    a.channels = je.at("arch").at("channels").get<int>();
    a.hidden = je.at("arch").at("hidden").get<int>();
    a.embed_dim = je.at("arch").at("embed_dim").get<int>();
    std::vector<double> params = b64_to_doubles(je.at("params").get<std::string>());
    if (crc32_doubles(params) != je.at("crc32").get<std::uint32_t>()) {
      throw std::runtime_error("encoder registry checksum mismatch in " + path);
    }
    reg.encoders.push_back(std::make_unique<ConvEncoder>(je.at("name").get<std::string>(), a,
                                                         std::move(params)));
  }
  return reg;
}

// Prototype store: encoder name -> base64 embedding + source count.
void save_prototypes(const std::vector<IdentityPrototype>& protos, const std::string& path) {
  nlohmann::json j;
  j["version"] = kRegistryVersion;
  nlohmann::json m = nlohmann::json::object();
  for (const IdentityPrototype& p : protos) {
    m[p.encoder_name] = {{"e", doubles_to_b64(p.e)}, {"source_count", p.source_count}};
  }
  j["prototypes"] = std::move(m);
  write_text_file(path, j.dump(2) + "\n");
}

std::vector<IdentityPrototype> load_prototypes(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  std::vector<IdentityPrototype> out;
  for (const auto& [name, v] : j.at("prototypes").items()) {
    IdentityPrototype p;
    p.encoder_name = name;
    p.e = b64_to_doubles(v.at("e").get<std::string>());
    p.source_count = v.at("source_count").get<int>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace iddm
