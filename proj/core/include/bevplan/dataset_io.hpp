#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevplan/scene.hpp"

namespace bevplan {

// CRC-32 (IEEE 802.3, reflected).
uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

// Little-endian byte buffer helpers shared by the binary file formats.
class ByteWriter {
 public:
  void u8(uint8_t v);
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const uint8_t* p, size_t n);
  const std::vector<uint8_t>& buffer() const { return buf_; }
  std::vector<uint8_t>& buffer() { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t len, size_t global_offset = 0)
      : data_(data), len_(len), global_offset_(global_offset) {}
  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  void bytes(uint8_t* out, size_t n);
  size_t remaining() const { return len_ - pos_; }
  size_t offset() const { return global_offset_ + pos_; }

 private:
  void need(size_t n);
  const uint8_t* data_;
  size_t len_;
  size_t pos_ = 0;
  size_t global_offset_;
};

// Dataset container, magic "DRLB": header (version, grid metadata, master
// seed, scene count, producing config digest) followed by length-prefixed,
// CRC-protected scene records. Byte layout documented in docs/formats.md.
struct DatasetHeader {
  uint16_t version = 1;
  uint16_t grid_size = kGridSize;
  float cell_size = static_cast<float>(kCellSize);
  uint64_t master_seed = 0;
  uint32_t scene_count = 0;
  uint64_t config_digest = 0;
};

void write_dataset(const std::string& path, const std::vector<SceneSample>& scenes,
                   uint64_t master_seed, uint64_t config_digest);

std::vector<SceneSample> read_dataset(const std::string& path, DatasetHeader* header = nullptr);

// Streaming reader for memory-light sequential passes.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  const DatasetHeader& header() const { return header_; }
  // False at end of file; throws IoError on corruption.
  bool next(SceneSample& out);

 private:
  std::vector<uint8_t> bytes_;
  DatasetHeader header_;
  size_t pos_ = 0;
  uint32_t record_index_ = 0;
};

}  // namespace bevplan
