#include "blindpaint/network.hpp"

#include "json.hpp"

namespace blindpaint::model {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoNetD: return "no_netd";
    case Variant::PlainNetD64: return "plain_netd64";
    case Variant::NoGP: return "no_gp";
    case Variant::L2Loss: return "l2_loss";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no_netd") return Variant::NoNetD;
  if (s == "plain_netd64") return Variant::PlainNetD64;
  if (s == "no_gp") return Variant::NoGP;
  if (s == "l2_loss") return Variant::L2Loss;
  throw Error(ErrorKind::InvalidConfig, "unknown variant '" + s + "'");
}

std::string NetworkConfig::to_json_string() const {
  json j;
  j["variant"] = to_string(variant);
  j["base_width"] = base_width;
  j["input_channels"] = input_channels;
  return j.dump();
}

NetworkConfig NetworkConfig::from_json_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::InvalidConfig, "network config is not valid JSON");
  }
  NetworkConfig cfg;
  if (j.contains("variant")) cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("base_width")) cfg.base_width = j.at("base_width").get<std::int64_t>();
  if (j.contains("input_channels")) {
    cfg.input_channels = j.at("input_channels").get<std::int64_t>();
  }
  cfg.validate();
  return cfg;
}

}  // namespace blindpaint::model
