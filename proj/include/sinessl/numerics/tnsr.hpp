#pragma once

#include <filesystem>
#include <iosfwd>

#include "sinessl/numerics/tensor.hpp"

namespace sinessl {

// ".tnsr" files: one JSON header line
//   {"shape":[...],"dtype":"f32","order":"row-major"}\n
// followed by the little-endian float32 payload. Values are narrowed to
// float32 on save and widened back to double on load.

void write_tnsr(std::ostream& os, const Tensor& t);
Tensor read_tnsr(std::istream& is);

void save_tnsr(const std::filesystem::path& path, const Tensor& t);
Tensor load_tnsr(const std::filesystem::path& path);

}  // namespace sinessl
