#include "bevplan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "bevplan/dataset_io.hpp"

namespace bevplan {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'C', 'K'};
constexpr uint16_t kVersion = 1;

void write_vocab(ByteWriter& w, const AnchorVocabulary& vocab) {
  w.u16(static_cast<uint16_t>(vocab.k));
  w.u16(kHorizonSteps);
  w.u64(vocab.seed);
  w.f64(vocab.inertia);
  for (int c = 0; c < vocab.k; ++c) w.u32(vocab.member_counts.empty() ? 0 : vocab.member_counts[static_cast<size_t>(c)]);
  for (int c = 0; c < vocab.k; ++c)
    for (const Vec2& p : vocab.anchors[static_cast<size_t>(c)]) {
      w.f32(static_cast<float>(p.x));
      w.f32(static_cast<float>(p.y));
    }
}

AnchorVocabulary read_vocab(ByteReader& r) {
  AnchorVocabulary vocab;
  vocab.k = r.u16();
  const uint16_t t_f = r.u16();
  if (t_f != kHorizonSteps)
    throw IoError("checkpoint vocabulary horizon " + std::to_string(t_f) +
                  " does not match build");
  vocab.requested_k = vocab.k;
  vocab.seed = r.u64();
  vocab.inertia = r.f64();
  vocab.member_counts.resize(static_cast<size_t>(vocab.k));
  for (auto& c : vocab.member_counts) c = r.u32();
  vocab.anchors.resize(static_cast<size_t>(vocab.k));
  for (int c = 0; c < vocab.k; ++c)
    for (auto& p : vocab.anchors[static_cast<size_t>(c)]) {
      p.x = static_cast<double>(r.f32());
      p.y = static_cast<double>(r.f32());
    }
  return vocab;
}

}  // namespace

void save_checkpoint(const std::string& path, const Planner& planner, const RunConfig& config,
                     const AdamW* optimizer) {
  ByteWriter w;
  w.bytes(reinterpret_cast<const uint8_t*>(kMagic), 4);
  w.u16(kVersion);
  w.u64(config.digest());
  const std::string text = config.canonical_text();
  w.u32(static_cast<uint32_t>(text.size()));
  w.bytes(reinterpret_cast<const uint8_t*>(text.data()), text.size());
  const auto& cfg = planner.config();
  w.u16(static_cast<uint16_t>(cfg.diffusion_steps));
  w.f64(cfg.beta_lo);
  w.f64(cfg.beta_hi);
  write_vocab(w, planner.vocab());

  const auto& params = planner.params().all();
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.u16(static_cast<uint16_t>(name.size()));
    w.bytes(reinterpret_cast<const uint8_t*>(name.data()), name.size());
    w.u8(static_cast<uint8_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
    for (double v : t.data()) w.f32(static_cast<float>(v));
  }

  if (optimizer != nullptr) {
    w.u8(1);
    w.u64(static_cast<uint64_t>(optimizer->step_count()));
    for (const auto& [name, t] : params) {
      auto it = optimizer->moments().find(name);
      const bool present = it != optimizer->moments().end();
      w.u8(present ? 1 : 0);
      if (!present) continue;
      for (double v : it->second.m) w.f64(v);
      for (double v : it->second.v) w.f64(v);
    }
  } else {
    w.u8(0);
  }

  w.u32(crc32(w.buffer().data() + 4, w.buffer().size() - 4));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("bad magic in " + path + " (expected DRCK)", 0);
  {
    const uint32_t stored_at_end =
        static_cast<uint32_t>(bytes[bytes.size() - 4]) |
        (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
        (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
        (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
    const uint32_t actual = crc32(bytes.data() + 4, bytes.size() - 8);
    if (stored_at_end != actual)
      throw IoError("checkpoint checksum mismatch in " + path,
                    static_cast<long long>(bytes.size() - 4));
  }
  ByteReader r(bytes.data() + 4, bytes.size() - 8, 4);

  LoadedCheckpoint result;
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  result.config_digest = r.u64();
  const uint32_t text_len = r.u32();
  std::string text(text_len, '\0');
  r.bytes(reinterpret_cast<uint8_t*>(text.data()), text_len);
  result.config = RunConfig::from_text(text);
  if (result.config.digest() != result.config_digest)
    throw IoError("checkpoint config text does not match its recorded digest in " + path);

  const uint16_t steps = r.u16();
  const double beta_lo = r.f64();
  const double beta_hi = r.f64();
  AnchorVocabulary vocab = read_vocab(r);

  ModelConfig model = result.config.model();
  if (model.diffusion_steps != steps || model.beta_lo != beta_lo || model.beta_hi != beta_hi)
    throw IoError("checkpoint schedule parameters disagree with its config text in " + path);
  result.planner = std::make_unique<Planner>(model, std::move(vocab), /*init_seed=*/0);

  auto& params = result.planner->params().all();
  const uint32_t tensor_count = r.u32();
  if (tensor_count != params.size())
    throw IoError("checkpoint tensor count " + std::to_string(tensor_count) +
                  " does not match model (" + std::to_string(params.size()) + ")");
  for (uint32_t i = 0; i < tensor_count; ++i) {
    const uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.bytes(reinterpret_cast<uint8_t*>(name.data()), name_len);
    auto it = params.find(name);
    if (it == params.end()) throw IoError("checkpoint tensor " + name + " unknown to the model");
    const uint8_t ndim = r.u8();
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    if (shape != it->second.shape())
      throw IoError("checkpoint tensor " + name + " shape mismatch: file " + shape_str(shape) +
                    " vs model " + shape_str(it->second.shape()));
    auto& data = it->second.mutable_data();
    for (auto& v : data) v = static_cast<double>(r.f32());
  }

  result.has_optimizer = r.u8() != 0;
  if (result.has_optimizer) {
    result.optimizer_steps = static_cast<int64_t>(r.u64());
    for (const auto& [name, t] : params) {
      if (r.u8() == 0) continue;
      AdamW::Moments m;
      m.m.resize(static_cast<size_t>(t.numel()));
      m.v.resize(static_cast<size_t>(t.numel()));
      for (auto& v : m.m) v = r.f64();
      for (auto& v : m.v) v = r.f64();
      result.moments.emplace(name, std::move(m));
    }
  }
  return result;
}

}  // namespace bevplan
