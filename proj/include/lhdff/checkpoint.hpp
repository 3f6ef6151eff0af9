#pragma once

// Weight checkpoint file, little-endian:
//
//   "LHDF"            4 bytes magic
//   version           u32
//   record count      u32
//   per record:
//     name length     u16
//     name            UTF-8 bytes
//     rank            u8
//     extents         rank x u32
//     data            product(extents) x f64 (IEEE-754 binary64)

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lhdff/tensor.hpp"

namespace lhdff::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Record {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

std::vector<std::uint8_t> encode(const std::vector<Record>& records);
std::vector<Record> decode(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, const std::vector<Record>& records);
std::vector<Record> read_file(const std::filesystem::path& path);

const Record* find(const std::vector<Record>& records, const std::string& name);

}  // namespace lhdff::checkpoint
