#include "midfea/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace midfea {

namespace {

constexpr const char* kMatrixMagic = "MFEA-MAT 1";
constexpr const char* kTensorMagic = "MFEA-TEN 1";
// Upper bound on element count accepted from a header (8 GiB of payload).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

using Kind = FormatError::Kind;

void append_doubles(std::string& out, std::span<const double> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 8);
  char* dst = out.data() + start;
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(dst, &bits, 8);
    dst += 8;
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::string line(const char* what) {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) throw FormatError(Kind::MalformedHeader, std::string("missing ") + what + " line");
    std::string s = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return s;
  }

  std::vector<double> doubles(std::uint64_t count) {
    const std::size_t avail = bytes_.size() - pos_;
    if (avail < count * 8) {
      throw FormatError(Kind::TruncatedPayload, "payload holds " + std::to_string(avail / 8) +
                                                    " values, header advertises " +
                                                    std::to_string(count));
    }
    if (avail > count * 8) {
      throw FormatError(Kind::TrailingData,
                        std::to_string(avail - count * 8) + " unexpected bytes after payload");
    }
    std::vector<double> out(count);
    const char* src = bytes_.data() + pos_;
    for (std::uint64_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, src + 8 * i, 8);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      out[i] = std::bit_cast<double>(bits);
    }
    pos_ += count * 8;
    return out;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint64_t> parse_dims(const std::string& header, std::size_t expected) {
  std::vector<std::uint64_t> dims;
  const char* p = header.data();
  const char* end = p + header.size();
  while (p < end) {
    if (*p == ' ') {
      ++p;
      continue;
    }
    std::uint64_t v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec == std::errc::result_out_of_range) {
      throw FormatError(Kind::DimensionOverflow, "dimension does not fit in 64 bits: '" + header + "'");
    }
    if (ec != std::errc() || (next < end && *next != ' ')) {
      throw FormatError(Kind::MalformedHeader, "bad dimension line: '" + header + "'");
    }
    dims.push_back(v);
    p = next;
  }
  if (dims.size() != expected) {
    throw FormatError(Kind::MalformedHeader, "expected " + std::to_string(expected) +
                                                 " dimensions, got '" + header + "'");
  }
  std::uint64_t total = 1;
  for (auto d : dims) {
    if (d != 0 && total > kMaxElements / d) {
      throw FormatError(Kind::DimensionOverflow, "dimensions too large: '" + header + "'");
    }
    total *= d;
  }
  return dims;
}

void check_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw FormatError(Kind::NonFinite, "payload holds a non-finite value");
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(Kind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(Kind::Io, "short write to " + path.string());
}

}  // namespace

std::string encode_matrix(const Matrix& m) {
  std::string out = std::string(kMatrixMagic) + "\n" + std::to_string(m.rows()) + " " +
                    std::to_string(m.cols()) + "\n";
  append_doubles(out, m.data());
  return out;
}

Matrix decode_matrix(const std::string& bytes) {
  Reader r(bytes);
  if (r.line("magic") != kMatrixMagic) throw FormatError(Kind::BadMagic, "not a matrix file");
  const auto dims = parse_dims(r.line("dimension"), 2);
  auto values = r.doubles(dims[0] * dims[1]);
  check_finite(values);
  return Matrix(dims[0], dims[1], std::move(values));
}

std::string encode_tensor(const Tensor3& t) {
  std::string out = std::string(kTensorMagic) + "\n" + std::to_string(t.height()) + " " +
                    std::to_string(t.width()) + " " + std::to_string(t.depth()) + "\n";
  append_doubles(out, t.data());
  return out;
}

Tensor3 decode_tensor(const std::string& bytes) {
  Reader r(bytes);
  if (r.line("magic") != kTensorMagic) throw FormatError(Kind::BadMagic, "not a tensor file");
  const auto dims = parse_dims(r.line("dimension"), 3);
  auto values = r.doubles(dims[0] * dims[1] * dims[2]);
  check_finite(values);
  return Tensor3(dims[0], dims[1], dims[2], std::move(values));
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) { spill(path, encode_matrix(m)); }

Matrix read_matrix(const std::filesystem::path& path) {
  try {
    return decode_matrix(slurp(path));
  } catch (const FormatError& e) {
    if (e.kind() == Kind::Io) throw;
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

void write_tensor(const std::filesystem::path& path, const Tensor3& t) { spill(path, encode_tensor(t)); }

Tensor3 read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor(slurp(path));
  } catch (const FormatError& e) {
    if (e.kind() == Kind::Io) throw;
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace midfea
