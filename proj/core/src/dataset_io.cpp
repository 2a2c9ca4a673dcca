#include "bevplan/dataset_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace bevplan {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'L', 'B'};
constexpr uint16_t kVersion = 1;

std::array<uint32_t, 256> make_crc_table() {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

}  // namespace

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
  static const std::array<uint32_t, 256> table = make_crc_table();
  uint32_t c = seed ^ 0xffffffffu;
  for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void ByteWriter::u8(uint8_t v) { buf_.push_back(v); }
void ByteWriter::u16(uint16_t v) {
  buf_.push_back(static_cast<uint8_t>(v));
  buf_.push_back(static_cast<uint8_t>(v >> 8));
}
void ByteWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void ByteWriter::f32(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}
void ByteWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}
void ByteWriter::bytes(const uint8_t* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }

void ByteReader::need(size_t n) {
  if (pos_ + n > len_)
    throw IoError("truncated data: need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(offset()),
                  static_cast<long long>(offset()));
}
uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}
uint16_t ByteReader::u16() {
  need(2);
  uint16_t v = static_cast<uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}
uint32_t ByteReader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}
uint64_t ByteReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}
float ByteReader::f32() {
  const uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}
double ByteReader::f64() {
  const uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}
void ByteReader::bytes(uint8_t* out, size_t n) {
  need(n);
  std::memcpy(out, data_ + pos_, n);
  pos_ += n;
}

namespace {

void write_plane_bits(ByteWriter& w, const RasterPlane& plane) {
  // 64 x 64 cells bit-packed row-major, LSB first: 512 bytes.
  uint8_t byte = 0;
  int nbits = 0;
  for (size_t i = 0; i < plane.cells.size(); ++i) {
    if (plane.cells[i]) byte |= static_cast<uint8_t>(1u << nbits);
    if (++nbits == 8) {
      w.u8(byte);
      byte = 0;
      nbits = 0;
    }
  }
}

void read_plane_bits(ByteReader& r, RasterPlane& plane) {
  for (size_t i = 0; i < plane.cells.size(); i += 8) {
    const uint8_t byte = r.u8();
    for (int b = 0; b < 8; ++b) plane.cells[i + static_cast<size_t>(b)] = (byte >> b) & 1u;
  }
}

void write_polyline(ByteWriter& w, const Polyline& line) {
  w.u16(static_cast<uint16_t>(line.size()));
  for (const Vec2& p : line) {
    w.f64(p.x);
    w.f64(p.y);
  }
}

Polyline read_polyline(ByteReader& r) {
  const uint16_t n = r.u16();
  Polyline line(n);
  for (auto& p : line) {
    p.x = r.f64();
    p.y = r.f64();
  }
  return line;
}

void encode_scene(ByteWriter& w, const SceneSample& s) {
  w.u64(s.seed);
  w.u8(static_cast<uint8_t>(s.family));
  w.f64(s.ego.speed);
  w.f64(s.ego.accel);
  w.u8(static_cast<uint8_t>(s.ego.command));
  for (const RasterPlane& plane : s.raster.planes) write_plane_bits(w, plane);
  w.u8(static_cast<uint8_t>(s.agents.size()));
  for (const AgentState& a : s.agents) {
    w.f64(a.pos.x);
    w.f64(a.pos.y);
    w.f64(a.heading);
    w.f64(a.speed);
    w.f64(a.length);
    w.f64(a.width);
    w.u8(static_cast<uint8_t>(a.cls));
  }
  write_polyline(w, s.route);
  w.u8(static_cast<uint8_t>(s.centerlines.size()));
  for (const Polyline& line : s.centerlines) write_polyline(w, line);
  for (const auto& pt : s.expert.points) {
    w.f64(pt.x);
    w.f64(pt.y);
    w.f64(pt.heading);
  }
  w.u8(s.expert_blocked ? 1 : 0);
}

SceneSample decode_scene(ByteReader& r) {
  SceneSample s;
  s.seed = r.u64();
  s.family = static_cast<SceneFamily>(r.u8());
  s.ego.speed = r.f64();
  s.ego.accel = r.f64();
  s.ego.command = static_cast<NavCommand>(r.u8());
  for (RasterPlane& plane : s.raster.planes) read_plane_bits(r, plane);
  const uint8_t n_agents = r.u8();
  s.agents.resize(n_agents);
  for (AgentState& a : s.agents) {
    a.pos.x = r.f64();
    a.pos.y = r.f64();
    a.heading = r.f64();
    a.speed = r.f64();
    a.length = r.f64();
    a.width = r.f64();
    a.cls = static_cast<AgentClass>(r.u8());
  }
  s.route = read_polyline(r);
  const uint8_t n_lines = r.u8();
  s.centerlines.resize(n_lines);
  for (Polyline& line : s.centerlines) line = read_polyline(r);
  for (auto& pt : s.expert.points) {
    pt.x = r.f64();
    pt.y = r.f64();
    pt.heading = r.f64();
  }
  s.expert_blocked = r.u8() != 0;
  return s;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

DatasetHeader decode_header(ByteReader& r, const std::string& path) {
  char magic[4];
  r.bytes(reinterpret_cast<uint8_t*>(magic), 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad magic in " + path + " (expected DRLB)", 0);
  DatasetHeader h;
  h.version = r.u16();
  if (h.version != kVersion)
    throw IoError("unsupported dataset version " + std::to_string(h.version) + " in " + path, 4);
  h.grid_size = r.u16();
  h.cell_size = r.f32();
  h.master_seed = r.u64();
  h.scene_count = r.u32();
  h.config_digest = r.u64();
  if (h.grid_size != kGridSize)
    throw IoError("dataset grid size " + std::to_string(h.grid_size) +
                      " does not match build (" + std::to_string(kGridSize) + ")",
                  6);
  return h;
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<SceneSample>& scenes,
                   uint64_t master_seed, uint64_t config_digest) {
  ByteWriter w;
  w.bytes(reinterpret_cast<const uint8_t*>(kMagic), 4);
  w.u16(kVersion);
  w.u16(kGridSize);
  w.f32(static_cast<float>(kCellSize));
  w.u64(master_seed);
  w.u32(static_cast<uint32_t>(scenes.size()));
  w.u64(config_digest);
  for (const SceneSample& s : scenes) {
    ByteWriter record;
    encode_scene(record, s);
    w.u32(static_cast<uint32_t>(record.buffer().size()));
    w.bytes(record.buffer().data(), record.buffer().size());
    w.u32(crc32(record.buffer().data(), record.buffer().size()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path);
}

DatasetReader::DatasetReader(const std::string& path) : bytes_(read_file(path)) {
  ByteReader r(bytes_.data(), bytes_.size());
  header_ = decode_header(r, path);
  pos_ = r.offset();
}

bool DatasetReader::next(SceneSample& out) {
  if (record_index_ >= header_.scene_count) return false;
  ByteReader r(bytes_.data() + pos_, bytes_.size() - pos_, pos_);
  const uint32_t len = r.u32();
  if (r.remaining() < len + 4)
    throw IoError("truncated record " + std::to_string(record_index_),
                  static_cast<long long>(r.offset()), record_index_);
  const size_t payload_off = pos_ + 4;
  const uint32_t stored = crc32(bytes_.data() + payload_off, len);
  ByteReader payload(bytes_.data() + payload_off, len, payload_off);
  ByteReader crc_reader(bytes_.data() + payload_off + len, 4, payload_off + len);
  const uint32_t expected = crc_reader.u32();
  if (stored != expected)
    throw IoError("checksum mismatch in record " + std::to_string(record_index_),
                  static_cast<long long>(payload_off), record_index_);
  out = decode_scene(payload);
  pos_ = payload_off + len + 4;
  ++record_index_;
  return true;
}

std::vector<SceneSample> read_dataset(const std::string& path, DatasetHeader* header) {
  DatasetReader reader(path);
  if (header != nullptr) *header = reader.header();
  std::vector<SceneSample> scenes;
  scenes.reserve(reader.header().scene_count);
  SceneSample s;
  while (reader.next(s)) scenes.push_back(s);
  return scenes;
}

}  // namespace bevplan
