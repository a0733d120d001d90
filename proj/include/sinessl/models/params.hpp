#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

/// Named parameter tensors keyed by path ("stage1/block0/conv2").
/// Iteration is in path order, which fixes the optimizer's parameter order.
class ModelParams {
 public:
  Tensor& add(const std::string& path, Tensor value);
  Tensor& at(const std::string& path);
  const Tensor& at(const std::string& path) const;
  bool contains(const std::string& path) const { return entries_.count(path) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  std::vector<std::string> paths() const;
  std::vector<Tensor*> tensors();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Deep copy of values only (no gradient buffers).
  ModelParams clone() const;
  void set_requires_grad(bool on);

  /// target <- decay * target + (1 - decay) * source, path by path.
  static void ema_update(ModelParams& target, const ModelParams& source, double decay);

 private:
  std::map<std::string, Tensor> entries_;
};

/// Checkpoint directory: one ".tnsr" per parameter plus "manifest.json"
/// mapping paths to files and recording the model config.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const std::string& kind,
                     const nlohmann::json& config);

struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  ModelParams params;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a over the manifest and every parameter file, as hex.
std::string checkpoint_hash(const std::filesystem::path& dir);

}  // namespace sinessl
