#include "pifnet/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pifnet/errors.hpp"

namespace pifnet {

namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'I', 'F', 'T'};
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("PIFT truncated while reading ") + what, pos_);
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> bytes() const { return bytes_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_pift(const Tensor& t) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(8 + 4 * t.rank() + 8 * t.size());
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor decode_pift(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad PIFT magic", 0);
  }
  r.skip(4);
  const std::size_t rank_pos = r.pos();
  const std::uint32_t rank = r.u32("rank");
  if (rank == 0 || rank > kMaxRank) {
    throw FormatError("invalid PIFT rank " + std::to_string(rank), rank_pos);
  }
  Shape shape;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::size_t dim_pos = r.pos();
    const std::uint32_t d = r.u32("dims");
    if (d == 0) {
      throw FormatError("zero PIFT dimension on axis " + std::to_string(i), dim_pos);
    }
    shape.push_back(d);
    count *= d;
  }
  if (r.remaining() / 8 < count) {
    throw FormatError("PIFT truncated: expected " + std::to_string(count) + " values", r.pos());
  }
  std::vector<double> data(count);
  for (auto& v : data) v = std::bit_cast<double>(r.u64("data"));
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after PIFT payload", r.pos());
  }
  return Tensor::from_data(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string() + " for reading");
  }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

void write_pift(const std::filesystem::path& path, const Tensor& t) {
  write_file_bytes(path, encode_pift(t));
}

Tensor read_pift(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_pift(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.byte_offset());
  }
}

}  // namespace pifnet
