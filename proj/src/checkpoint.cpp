#include "stec/checkpoint.hpp"

#include "stec/iobits.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace stec::model {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'T', 'E', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json shape_json(const grad::Shape& s) {
  json j = json::array();
  for (auto d : s) j.push_back(static_cast<long>(d));
  return j;
}

grad::Shape shape_from(const json& j) {
  grad::Shape s;
  for (const auto& d : j) s.push_back(d.get<long>());
  return s;
}

void append_tensor(std::vector<double>& blob, const grad::Tensor& t) {
  blob.insert(blob.end(), t.data.data(), t.data.data() + t.numel());
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path,
                     std::uint64_t config_hash, long step,
                     const std::string& config_text) {
  json entries = json::array();
  std::vector<double> blob;

  for (const auto& name : store.names()) {
    const auto& t = store.tensor(name);
    const auto& f = store.flags(name);
    entries.push_back({{"section", "param"},
                       {"name", name},
                       {"shape", shape_json(t.shape)},
                       {"learnable", f.learnable},
                       {"no_weight_decay", f.no_weight_decay},
                       {"exclude_from_lars", f.exclude_from_lars}});
    append_tensor(blob, t);
  }
  for (const auto& [name, t] : store.shadow_map()) {
    entries.push_back({{"section", "ema"},
                       {"name", name},
                       {"shape", shape_json(t.shape)}});
    append_tensor(blob, t);
  }
  for (const auto& [name, t] : store.momentum_map()) {
    entries.push_back({{"section", "momentum"},
                       {"name", name},
                       {"shape", shape_json(t.shape)}});
    append_tensor(blob, t);
  }

  to_little_endian(blob);
  json manifest;
  manifest["version"] = kVersion;
  manifest["dtype"] = "f64";
  manifest["step"] = step;
  manifest["config_hash"] = hex64(config_hash);
  if (!config_text.empty()) manifest["config"] = config_text;
  manifest["blob_checksum"] =
      hex64(fnv1a64(blob.data(), blob.size() * sizeof(double)));
  manifest["entries"] = std::move(entries);
  const std::string mtext = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  std::uint32_t ver = kVersion;
  std::uint64_t mlen = mtext.size();
  f.write(reinterpret_cast<const char*>(&ver), sizeof ver);
  f.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
  f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  f.write(reinterpret_cast<const char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t ver = 0;
  std::uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof ver);
  f.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
  if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
  if (ver != kVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(ver) +
                             " is not supported (expected " +
                             std::to_string(kVersion) + ")");
  std::string mtext(mlen, '\0');
  f.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("checkpoint: truncated manifest in " + path);
  json manifest = json::parse(mtext);

  std::size_t total = 0;
  for (const auto& e : manifest.at("entries"))
    total += static_cast<std::size_t>(
        grad::shape_numel(shape_from(e.at("shape"))));
  std::vector<double> blob(total);
  f.read(reinterpret_cast<char*>(blob.data()),
         static_cast<std::streamsize>(total * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: truncated blob in " + path);
  if (hex64(fnv1a64(blob.data(), blob.size() * sizeof(double))) !=
      manifest.at("blob_checksum").get<std::string>())
    throw std::runtime_error("checkpoint: blob checksum mismatch in " + path);
  from_little_endian(blob);

  Checkpoint ck;
  ck.step = manifest.at("step").get<long>();
  ck.config_hash =
      std::stoull(manifest.at("config_hash").get<std::string>(), nullptr, 16);

  std::size_t off = 0;
  for (const auto& e : manifest.at("entries")) {
    const grad::Shape shape = shape_from(e.at("shape"));
    const auto n = static_cast<std::size_t>(grad::shape_numel(shape));
    grad::Arr data(static_cast<Eigen::Index>(n));
    std::memcpy(data.data(), blob.data() + off, n * sizeof(double));
    off += n;
    grad::Tensor t(shape, std::move(data));
    const std::string section = e.at("section").get<std::string>();
    const std::string name = e.at("name").get<std::string>();
    if (section == "param") {
      ParamFlags flags;
      flags.learnable = e.at("learnable").get<bool>();
      flags.no_weight_decay = e.at("no_weight_decay").get<bool>();
      flags.exclude_from_lars = e.at("exclude_from_lars").get<bool>();
      ck.store.add(name, std::move(t), flags);
    } else if (section == "ema") {
      ck.store.shadow_map()[name] = std::move(t);
    } else if (section == "momentum") {
      ck.store.momentum_map()[name] = std::move(t);
    } else {
      throw std::runtime_error("checkpoint: unknown section '" + section + "'");
    }
  }
  return ck;
}

}  // namespace stec::model
