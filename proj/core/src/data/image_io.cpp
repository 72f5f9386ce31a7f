#include "attukan/data/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace attukan::data {

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> b, std::size_t start) : b_(b), pos_(start) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size()) throw ParseError(std::string("truncated header, expected ") + what, pos_);
    if (!std::isdigit(b_[pos_])) throw ParseError(std::string("expected ") + what, pos_);
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) throw ParseError(std::string(what) + " is too large", pos_);
      ++pos_;
    }
    return v;
  }

  void single_whitespace() {
    if (pos_ >= b_.size()) throw ParseError("truncated header", pos_);
    if (!std::isspace(b_[pos_])) throw ParseError("expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_;
};

}  // namespace

Tensor decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw ParseError("truncated magic number", bytes.size());
  if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("unsupported magic number (expected P5 or P6)", 0);
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader r(bytes, 2);
  const std::size_t w = r.number("width");
  const std::size_t h = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (w == 0 || h == 0) throw ParseError("zero image dimension", r.pos());
  if (maxval == 0 || maxval > 255) throw ParseError("maxval must be in 1..255", r.pos());
  r.single_whitespace();
  const std::size_t start = r.pos();
  const std::size_t need = w * h * channels;
  if (bytes.size() - start < need)
    throw ParseError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                     std::to_string(bytes.size() - start),
                     bytes.size());

  const double scale = static_cast<double>(maxval);
  if (channels == 1) {
    Tensor t({h, w});
    for (std::size_t i = 0; i < need; ++i) {
      if (bytes[start + i] > maxval) throw ParseError("sample exceeds maxval", start + i);
      t[i] = bytes[start + i] / scale;
    }
    return t;
  }
  Tensor t({3, h, w});
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t off = start + i * 3 + c;
      if (bytes[off] > maxval) throw ParseError("sample exceeds maxval", off);
      t[c * plane + i] = bytes[off] / scale;
    }
  return t;
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  std::size_t channels, h, w;
  if (image.rank() == 2) {
    channels = 1, h = image.dim(0), w = image.dim(1);
  } else if (image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3)) {
    channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  } else {
    throw DimensionError("encode_pnm expects [H,W], [1,H,W] or [3,H,W], got " + to_string(image.shape()));
  }
  const std::string header =
      std::string(channels == 1 ? "P5" : "P6") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + h * w * channels);
  auto byte = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < channels; ++c) out.push_back(byte(image[c * plane + i]));
  return out;
}

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace attukan::data
