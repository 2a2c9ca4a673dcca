#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bevplan/dataset_io.hpp"
#include "doctest.h"

using namespace bevplan;
namespace fs = std::filesystem;

namespace {

std::vector<SceneSample> make_scenes(int n) {
  GenConfig cfg;
  std::vector<SceneSample> scenes;
  for (int i = 0; i < n; ++i) scenes.push_back(generate_scene(static_cast<uint64_t>(i), cfg));
  return scenes;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (fs::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("dataset roundtrip is exact over 100 scenes") {
  auto scenes = make_scenes(100);
  TempFile f("bevplan_ds_roundtrip.bin");
  write_dataset(f.path, scenes, 7, 0xabcdef);
  DatasetHeader header;
  auto back = read_dataset(f.path, &header);
  CHECK(header.master_seed == 7);
  CHECK(header.config_digest == 0xabcdef);
  CHECK(header.scene_count == 100);
  REQUIRE(back.size() == scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) CHECK(scenes[i] == back[i]);
}

TEST_CASE("corrupting one byte names the record index") {
  auto scenes = make_scenes(5);
  TempFile f("bevplan_ds_corrupt.bin");
  write_dataset(f.path, scenes, 1, 0);
  // Flip a byte inside the third record's payload.
  std::fstream io(f.path, std::ios::binary | std::ios::in | std::ios::out);
  std::vector<char> bytes{std::istreambuf_iterator<char>(io), std::istreambuf_iterator<char>()};
  // Walk: header is 4+2+2+4+8+4+8 = 32 bytes, then len-prefixed records.
  size_t pos = 32;
  for (int skip = 0; skip < 2; ++skip) {
    uint32_t len = 0;
    for (int b = 0; b < 4; ++b) len |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos + static_cast<size_t>(b)])) << (8 * b);
    pos += 4 + len + 4;
  }
  io.seekp(static_cast<std::streamoff>(pos + 4 + 100));
  char flip = static_cast<char>(bytes[pos + 4 + 100] ^ 0x40);
  io.write(&flip, 1);
  io.close();

  bool threw = false;
  try {
    read_dataset(f.path);
  } catch (const IoError& e) {
    threw = true;
    CHECK(e.record == 2);
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("empty dataset roundtrips") {
  TempFile f("bevplan_ds_empty.bin");
  write_dataset(f.path, {}, 3, 0);
  auto back = read_dataset(f.path);
  CHECK(back.empty());
}

TEST_CASE("truncated file reports an offset") {
  auto scenes = make_scenes(2);
  TempFile f("bevplan_ds_trunc.bin");
  write_dataset(f.path, scenes, 1, 0);
  auto size = fs::file_size(f.path);
  fs::resize_file(f.path, size - 10);
  CHECK_THROWS_AS(read_dataset(f.path), IoError);
}

TEST_CASE("bad magic and version are rejected") {
  TempFile f("bevplan_ds_magic.bin");
  {
    std::ofstream out(f.path, std::ios::binary);
    out.write("NOPE", 4);
    out.write(std::string(28, '\0').c_str(), 28);
  }
  CHECK_THROWS_AS(read_dataset(f.path), IoError);
}

TEST_CASE("dataset bytes are a pure function of seed and config") {
  auto read_bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  };
  TempFile f1("bevplan_ds_det1.bin"), f2("bevplan_ds_det2.bin");
  write_dataset(f1.path, make_scenes(20), 5, 42);
  write_dataset(f2.path, make_scenes(20), 5, 42);
  CHECK(read_bytes(f1.path) == read_bytes(f2.path));
}
