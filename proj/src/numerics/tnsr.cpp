#include "sinessl/numerics/tnsr.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinessl/errors.hpp"

namespace sinessl {
namespace {

constexpr double kF32Max = static_cast<double>(std::numeric_limits<float>::max());

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_tnsr(std::ostream& os, const Tensor& t) {
  nlohmann::json header;
  header["shape"] = t.shape();
  header["dtype"] = "f32";
  header["order"] = "row-major";
  std::vector<std::uint32_t> payload(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double v = t[i];
    if (!std::isfinite(v) || std::fabs(v) > kF32Max) {
      throw IoError("value " + std::to_string(v) + " at index " + std::to_string(i) + " is not representable as f32");
    }
    payload[i] = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  os << header.dump() << '\n';
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
  if (!os) throw IoError("failed writing tensor payload");
}

Tensor read_tnsr(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("missing .tnsr header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed .tnsr header: ") + e.what());
  }
  if (!header.contains("shape") || !header["shape"].is_array()) throw IoError(".tnsr header lacks a shape array");
  if (header.value("dtype", "") != "f32") throw IoError(".tnsr dtype must be f32");
  if (header.value("order", "") != "row-major") throw IoError(".tnsr order must be row-major");
  Shape shape;
  for (const auto& d : header["shape"]) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) throw IoError(".tnsr shape entries must be positive integers");
    shape.push_back(d.get<std::size_t>());
  }
  const std::size_t n = shape_numel(shape);
  std::vector<std::uint32_t> payload(n);
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(is.gcount()) != n * 4) {
    throw IoError(".tnsr payload truncated: expected " + std::to_string(n * 4) + " bytes");
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float f = std::bit_cast<float>(to_le(payload[i]));
    if (!std::isfinite(f)) throw IoError(".tnsr payload holds a non-finite value at index " + std::to_string(i));
    values[i] = static_cast<double>(f);
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_tnsr(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_tnsr(os, t);
}

Tensor load_tnsr(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return read_tnsr(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace sinessl
