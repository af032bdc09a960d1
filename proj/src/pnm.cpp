#include "midfea/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace midfea {

namespace {

class Scanner {
 public:
  Scanner(const std::string& bytes, std::size_t start) : b_(bytes), pos_(start) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      const char c = b_[pos_];
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint32_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      throw PnmError(std::string("expected ") + what);
    }
    std::uint64_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::uint64_t>(b_[pos_++] - '0');
      if (v > 0xFFFFFFFFu) throw PnmError(std::string(what) + " too large");
    }
    return static_cast<std::uint32_t>(v);
  }

  // Exactly one whitespace byte separates the header from binary samples.
  void single_space() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw PnmError("missing whitespace after header");
    }
    ++pos_;
  }

  std::size_t remaining() const { return b_.size() - pos_; }
  unsigned char take() { return static_cast<unsigned char>(b_[pos_++]); }

 private:
  const std::string& b_;
  std::size_t pos_;
};

}  // namespace

PnmImage decode_pnm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw PnmError("not a netpbm file");
  const char kind = bytes[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    throw PnmError(std::string("unsupported netpbm variant P") + kind);
  }
  Scanner s(bytes, 2);
  PnmImage img;
  img.channels = (kind == '3' || kind == '6') ? 3 : 1;
  img.width = s.number("width");
  img.height = s.number("height");
  img.maxval = s.number("maxval");
  if (img.width == 0 || img.height == 0) throw PnmError("zero image dimension");
  if (img.maxval == 0 || img.maxval > 65535) throw PnmError("maxval must lie in 1..65535");
  if (img.width > (1u << 16) || img.height > (1u << 16)) throw PnmError("image dimensions too large");

  const std::size_t count = img.width * img.height * img.channels;
  img.samples.resize(count);
  if (kind == '5' || kind == '6') {
    s.single_space();
    const std::size_t bytes_per = img.maxval > 255 ? 2 : 1;
    if (s.remaining() < count * bytes_per) throw PnmError("truncated pixel data");
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t v = s.take();
      if (bytes_per == 2) v = (v << 8) | s.take();  // big-endian
      if (v > img.maxval) throw PnmError("sample exceeds maxval");
      img.samples[i] = static_cast<std::uint16_t>(v);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t v = s.number("sample");
      if (v > img.maxval) throw PnmError("sample exceeds maxval");
      img.samples[i] = static_cast<std::uint16_t>(v);
    }
  }
  return img;
}

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PnmError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_pnm(ss.str());
  } catch (const PnmError& e) {
    throw PnmError(path.string() + ": " + e.what());
  }
}

GrayImage to_gray(const PnmImage& img) {
  const double scale = 1.0 / static_cast<double>(img.maxval);
  std::vector<double> px(img.width * img.height);
  for (std::size_t i = 0; i < px.size(); ++i) {
    double v;
    if (img.channels == 1) {
      v = img.samples[i] * scale;
    } else {
      const double r = img.samples[3 * i] * scale;
      const double g = img.samples[3 * i + 1] * scale;
      const double b = img.samples[3 * i + 2] * scale;
      v = 0.299 * r + 0.587 * g + 0.114 * b;
    }
    px[i] = std::clamp(v, 0.0, 1.0);
  }
  return GrayImage(img.height, img.width, std::move(px));
}

GrayImage load_gray(const std::filesystem::path& path) { return to_gray(read_pnm(path)); }

std::string encode_pgm(const Matrix& values) {
  std::string out = "P5\n" + std::to_string(values.cols()) + " " + std::to_string(values.rows()) + "\n255\n";
  out.reserve(out.size() + values.size());
  for (double v : values.data()) {
    const double c = std::clamp(std::round(v), 0.0, 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(c)));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Matrix& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PnmError(path.string() + ": cannot write");
  const std::string bytes = encode_pgm(values);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace midfea
