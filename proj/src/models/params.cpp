#include "sinessl/models/params.hpp"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "sinessl/errors.hpp"
#include "sinessl/numerics/tnsr.hpp"

namespace sinessl {

Tensor& ModelParams::add(const std::string& path, Tensor value) {
  auto [it, inserted] = entries_.emplace(path, std::move(value));
  if (!inserted) throw ContractError("duplicate parameter path '" + path + "'");
  return it->second;
}

Tensor& ModelParams::at(const std::string& path) {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw ContractError("unknown parameter path '" + path + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw ContractError("unknown parameter path '" + path + "'");
  return it->second;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

std::vector<std::string> ModelParams::paths() const {
  std::vector<std::string> out;
  for (const auto& [p, _] : entries_) out.push_back(p);
  return out;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& [_, t] : entries_) out.push_back(&t);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [p, t] : entries_) {
    Tensor copy(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
    copy.set_requires_grad(t.requires_grad());
    out.entries_.emplace(p, std::move(copy));
  }
  return out;
}

void ModelParams::set_requires_grad(bool on) {
  for (auto& [_, t] : entries_) t.set_requires_grad(on);
}

void ModelParams::ema_update(ModelParams& target, const ModelParams& source, double decay) {
  if (target.size() != source.size()) throw ContractError("EMA parameter sets differ in size");
  for (auto& [p, t] : target.entries_) {
    const Tensor& s = source.at(p);
    if (s.shape() != t.shape()) throw DimensionError("EMA shape mismatch at '" + p + "'");
    auto d = t.data();
    auto v = s.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = decay * d[i] + (1.0 - decay) * v[i];
  }
}

namespace {

std::string file_name_for(const std::string& path) {
  std::string name = path;
  for (auto& ch : name) {
    if (ch == '/') ch = '.';
  }
  return name + ".tnsr";
}

void fnv1a(std::uint64_t& h, const std::string& bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const std::string& kind,
                     const nlohmann::json& config) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = kind;
  manifest["config"] = config;
  manifest["params"] = nlohmann::json::object();
  for (const auto& [path, t] : params) {
    const std::string file = file_name_for(path);
    save_tnsr(dir / file, t);
    manifest["params"][path] = file;
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(slurp(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  Checkpoint ck;
  ck.kind = manifest.value("kind", "");
  ck.config = manifest.value("config", nlohmann::json::object());
  for (const auto& [path, file] : manifest.at("params").items()) {
    ck.params.add(path, load_tnsr(dir / file.get<std::string>()));
  }
  return ck;
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::string manifest = slurp(dir / "manifest.json");
  fnv1a(h, manifest);
  const auto j = nlohmann::json::parse(manifest);
  for (const auto& [path, file] : j.at("params").items()) fnv1a(h, slurp(dir / file.get<std::string>()));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace sinessl
