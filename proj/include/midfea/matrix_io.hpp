#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "midfea/matrix.hpp"

namespace midfea {

/// Failure to decode a numeric file. `kind()` tells the cases apart.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, MalformedHeader, DimensionOverflow, TruncatedPayload, TrailingData, NonFinite };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Matrix file:  "MFEA-MAT 1\n" "<rows> <cols>\n" then rows*cols little-endian
// IEEE-754 doubles, row-major.
// Tensor file:  "MFEA-TEN 1\n" "<height> <width> <depth>\n" then the values
// with depth fastest-varying.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor3& t);
Tensor3 read_tensor(const std::filesystem::path& path);

// Same formats on in-memory byte strings.
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(const std::string& bytes);
std::string encode_tensor(const Tensor3& t);
Tensor3 decode_tensor(const std::string& bytes);

}  // namespace midfea
