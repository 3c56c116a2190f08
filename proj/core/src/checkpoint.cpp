#include "blindpaint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian; big-endian hosts are unsupported");

namespace blindpaint::train {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'B', 'I', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  const Shape s = t.shape();
  write_u32(os, static_cast<std::uint32_t>(s.n));
  write_u32(os, static_cast<std::uint32_t>(s.c));
  write_u32(os, static_cast<std::uint32_t>(s.h));
  write_u32(os, static_cast<std::uint32_t>(s.w));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

void read_tensor_into(std::istream& is, Tensor& t, const std::string& name,
                      const std::string& path) {
  const std::int64_t n = read_u32(is), c = read_u32(is), h = read_u32(is), w = read_u32(is);
  if (!(Shape{n, c, h, w} == t.shape())) {
    throw Error(ErrorKind::IncompatibleCheckpoint,
                path + ": parameter " + name + " has shape " + Shape{n, c, h, w}.str() +
                    ", expected " + t.shape().str());
  }
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::string& path, model::Network<float>& net,
                     const nn::AdamState<float>* adam, CheckpointMeta meta) {
  meta.has_adam = adam != nullptr;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write checkpoint " + path);

  json header;
  header["config"] = json::parse(net.config().to_json_string());
  header["rng_algorithm"] = meta.rng_algorithm;
  header["step"] = meta.step;
  header["epoch"] = meta.epoch;
  header["has_adam"] = meta.has_adam;
  header["loss"] = nn::to_string(meta.loss);
  const std::string header_text = header.dump();

  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(header_text.size()));
  os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  auto params = net.params();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_tensor(os, *p.value);
  }
  if (adam) {
    const std::uint64_t t = static_cast<std::uint64_t>(adam->t);
    os.write(reinterpret_cast<const char*>(&t), sizeof(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      write_tensor(os, adam->m[i]);
      write_tensor(os, adam->v[i]);
    }
  }
  if (!os) throw Error(ErrorKind::IoError, "short write to checkpoint " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, model::Network<float>& net,
                               nn::AdamState<float>* adam) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot read checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::IncompatibleCheckpoint, path + " is not a blindpaint checkpoint");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw Error(ErrorKind::IncompatibleCheckpoint,
                path + " has format version " + std::to_string(version) + ", expected " +
                    std::to_string(kVersion));
  }
  const std::uint32_t header_len = read_u32(is);
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), header_len);
  if (!is) throw Error(ErrorKind::IncompatibleCheckpoint, path + " has a truncated header");
  json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded()) {
    throw Error(ErrorKind::IncompatibleCheckpoint, path + " has a corrupt JSON header");
  }

  CheckpointMeta meta;
  meta.config = model::NetworkConfig::from_json_string(header.at("config").dump());
  meta.rng_algorithm = header.at("rng_algorithm").get<std::string>();
  meta.step = header.at("step").get<std::int64_t>();
  meta.epoch = header.at("epoch").get<std::int64_t>();
  meta.has_adam = header.at("has_adam").get<bool>();
  meta.loss = nn::loss_kind_from_string(header.at("loss").get<std::string>());

  if (!(meta.config == net.config())) {
    throw Error(ErrorKind::IncompatibleCheckpoint,
                path + " was written for config " + meta.config.to_json_string() +
                    ", network has " + net.config().to_json_string());
  }

  auto params = net.params();
  const std::uint32_t count = read_u32(is);
  if (count != params.size()) {
    throw Error(ErrorKind::IncompatibleCheckpoint,
                path + " stores " + std::to_string(count) + " parameters, network has " +
                    std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (name != p.name) {
      throw Error(ErrorKind::IncompatibleCheckpoint,
                  path + ": parameter order mismatch, got '" + name + "', expected '" + p.name +
                      "'");
    }
    read_tensor_into(is, *p.value, name, path);
  }
  if (adam) {
    if (!meta.has_adam) {
      throw Error(ErrorKind::IncompatibleCheckpoint, path + " has no optimizer state to resume");
    }
    adam->init(params);
    std::uint64_t t = 0;
    is.read(reinterpret_cast<char*>(&t), sizeof(t));
    adam->t = static_cast<std::int64_t>(t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      read_tensor_into(is, adam->m[i], params[i].name + ".adam_m", path);
      read_tensor_into(is, adam->v[i], params[i].name + ".adam_v", path);
    }
  }
  if (!is) throw Error(ErrorKind::IncompatibleCheckpoint, path + " is truncated");
  return meta;
}

LoadedCheckpoint open_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot read checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::IncompatibleCheckpoint, path + " is not a blindpaint checkpoint");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw Error(ErrorKind::IncompatibleCheckpoint,
                path + " has format version " + std::to_string(version));
  }
  const std::uint32_t header_len = read_u32(is);
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), header_len);
  json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded()) {
    throw Error(ErrorKind::IncompatibleCheckpoint, path + " has a corrupt JSON header");
  }
  is.close();

  const auto config = model::NetworkConfig::from_json_string(header.at("config").dump());
  Rng rng(0);  // parameters are overwritten by the load below
  LoadedCheckpoint out{CheckpointMeta{}, model::Network<float>::build(config, rng)};
  out.meta = load_checkpoint(path, out.network, nullptr);
  return out;
}

}  // namespace blindpaint::train
