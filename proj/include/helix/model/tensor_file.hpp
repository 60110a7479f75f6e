#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "helix/numerics/matrix.hpp"

namespace helix::model {

using numerics::Matrix;

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Layout: "HLXP", u32 version, u32 count, then per tensor u32 name length,
/// name bytes, u64 rows, u64 cols, u64 byte offset into the data section;
/// then the data section of row-major little-endian f64 values. All integers
/// little-endian.
inline constexpr std::uint32_t kTensorFileVersion = 1;

class TensorFileError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_version, truncated, malformed, missing_tensor, unexpected_tensor, shape_mismatch };
  TensorFileError(Kind kind, const std::string& message, std::string tensor = {});
  Kind kind() const noexcept { return kind_; }
  /// Offending tensor name, empty when not tied to one.
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  Kind kind_;
  std::string tensor_;
};

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);
void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

}  // namespace helix::model
