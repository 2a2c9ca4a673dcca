#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "bevplan/config.hpp"
#include "bevplan/optimizer.hpp"
#include "bevplan/planner.hpp"

namespace bevplan {

// Checkpoint container, magic "DRCK": version, producing config digest and
// canonical config text, schedule parameters, the anchor vocabulary, the
// named-tensor map (32-bit little-endian payloads), and optional optimizer
// state. CRC-protected. Byte layout documented in docs/formats.md.
void save_checkpoint(const std::string& path, const Planner& planner, const RunConfig& config,
                     const AdamW* optimizer = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<Planner> planner;
  RunConfig config = RunConfig::defaults();
  uint64_t config_digest = 0;
  bool has_optimizer = false;
  int64_t optimizer_steps = 0;
  std::map<std::string, AdamW::Moments> moments;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace bevplan
