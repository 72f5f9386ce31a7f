#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "attukan/numerics/tensor.hpp"

namespace attukan::data {

/// Malformed or truncated image data. `offset` is the byte position at which
/// decoding failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary PGM (P5) gives [H,W]; binary PPM (P6) gives [3,H,W]. Values are
/// byte / maxval, maxval <= 255.
Tensor decode_pnm(std::span<const std::uint8_t> bytes);
/// [H,W] or [1,H,W] encode as P5, [3,H,W] as P6, with maxval 255. Values are
/// clamped to [0,1] and rounded to the nearest byte.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);

Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& image);

}  // namespace attukan::data
