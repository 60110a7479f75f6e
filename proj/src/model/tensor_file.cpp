#include "helix/model/tensor_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>

namespace helix::model {

namespace {

using Kind = TensorFileError::Kind;

template <class T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t size() const noexcept { return data_.size(); }
  const std::string& data() const noexcept { return data_; }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw TensorFileError(Kind::truncated, std::string("tensor file truncated in ") + what);
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

TensorFileError::TensorFileError(Kind kind, const std::string& message, std::string tensor)
    : std::runtime_error(message), kind_(kind), tensor_(std::move(tensor)) {}

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  std::string buf = "HLXP";
  put_le<std::uint32_t>(buf, kTensorFileVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  std::set<std::string> seen;
  for (const auto& t : tensors) {
    if (!seen.insert(t.name).second) throw TensorFileError(Kind::malformed, "duplicate tensor " + t.name, t.name);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    put_le<std::uint64_t>(buf, t.value.rows());
    put_le<std::uint64_t>(buf, t.value.cols());
    put_le<std::uint64_t>(buf, offset);
    offset += t.value.size() * 8;
  }
  for (const auto& t : tensors)
    for (double x : t.value.values()) put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(x));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw TensorFileError(Kind::io, "tensor file write failed");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  if (r.size() < 4 || r.data().compare(0, 4, "HLXP") != 0) throw TensorFileError(Kind::bad_magic, "not a tensor file (bad magic)");
  r.bytes(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorFileVersion)
    throw TensorFileError(Kind::bad_version, "unsupported tensor file version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("header");
  struct Entry {
    std::string name;
    std::uint64_t rows, cols, offset;
  };
  std::vector<Entry> dir;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>("directory");
    Entry e{r.bytes(len, "directory"), 0, 0, 0};
    e.rows = r.get<std::uint64_t>("directory");
    e.cols = r.get<std::uint64_t>("directory");
    e.offset = r.get<std::uint64_t>("directory");
    if (!seen.insert(e.name).second) throw TensorFileError(Kind::malformed, "duplicate tensor " + e.name, e.name);
    if (e.rows != 0 && e.cols > (UINT64_MAX / 8) / e.rows)
      throw TensorFileError(Kind::malformed, "tensor " + e.name + " has an impossible shape", e.name);
    dir.push_back(std::move(e));
  }
  const std::size_t base = r.pos();
  const std::size_t avail = r.size() - base;
  std::vector<NamedTensor> out;
  for (const auto& e : dir) {
    const std::uint64_t bytes = e.rows * e.cols * 8;
    if (e.offset > avail || bytes > avail - e.offset)
      throw TensorFileError(Kind::truncated, "tensor file truncated in data of " + e.name, e.name);
    Matrix m(e.rows, e.cols);
    const char* p = r.data().data() + base + e.offset;
    auto vals = m.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      std::uint64_t bits = 0;
      for (std::size_t b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i * 8 + b])) << (8 * b);
      vals[i] = std::bit_cast<double>(bits);
    }
    out.push_back({e.name, std::move(m)});
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorFileError(Kind::io, "cannot write " + path.string());
  write_tensors(out, tensors);
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorFileError(Kind::io, "cannot open " + path.string());
  return read_tensors(in);
}

}  // namespace helix::model
