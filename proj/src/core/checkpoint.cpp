#include "lhdff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "lhdff/error.hpp"

namespace lhdff::checkpoint {

namespace {

constexpr char kMagic[4] = {'L', 'H', 'D', 'F'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DecodeError("checkpoint truncated", pos_);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const std::vector<Record>& records) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const Record& r : records) {
    if (r.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("parameter name too long");
    if (r.shape.empty() || r.shape.size() > 255) throw ContractError("unsupported rank for " + r.name);
    if (shape_numel(r.shape) != r.data.size()) throw DimensionError("record " + r.name + " shape/data mismatch");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.shape.size()));
    for (std::size_t extent : r.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
    for (double v : r.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<Record> decode(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.get_string(4) != std::string(kMagic, 4)) throw DecodeError("bad checkpoint magic", 0);
  const auto version = in.get_le<std::uint32_t>();
  if (version != kFormatVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto count = in.get_le<std::uint32_t>();
  std::vector<Record> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    const auto name_len = in.get_le<std::uint16_t>();
    r.name = in.get_string(name_len);
    const std::size_t rank_at = in.offset();
    const auto rank = in.get_le<std::uint8_t>();
    if (rank == 0) throw DecodeError("zero-rank record " + r.name, rank_at);
    for (std::uint8_t a = 0; a < rank; ++a) {
      const auto extent = in.get_le<std::uint32_t>();
      if (extent == 0) throw DecodeError("zero extent in record " + r.name, in.offset() - 4);
      r.shape.push_back(extent);
    }
    r.data.resize(shape_numel(r.shape));
    for (double& v : r.data) v = std::bit_cast<double>(in.get_le<std::uint64_t>());
    records.push_back(std::move(r));
  }
  if (!in.done()) throw DecodeError("trailing bytes after last checkpoint record", in.offset());
  return records;
}

void write_file(const std::filesystem::path& path, const std::vector<Record>& records) {
  const auto bytes = encode(records);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

std::vector<Record> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

const Record* find(const std::vector<Record>& records, const std::string& name) {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

}  // namespace lhdff::checkpoint
